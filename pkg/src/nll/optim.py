"""ADAM / SGD and the epoch loop used to train the level-set network."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import loss as losses
from .loss import Batch, LossSpec

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN/inf loss; ``trace`` holds the epochs so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class Adam:
    """Bias-corrected ADAM. ``step`` returns the parameter increments."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        delta = {}
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            delta[k] = -self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return delta


class SGD:
    def __init__(self, lr=1e-2):
        self.lr = lr

    def step(self, grads):
        return {k: -self.lr * g for k, g in grads.items()}


def make_optimizer(name, lr):
    name = name.lower()
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {name!r}")


def apply_delta(params: dict[str, np.ndarray], delta):
    for k, d in delta.items():
        params[k] += d


@dataclass
class TrainConfig:
    epochs: int = 5000
    lr: float = 0.003
    optimizer: str = "adam"
    validation_size: int = 500
    seed: int = 0
    loss: LossSpec = field(default_factory=LossSpec)
    log_every: int = 10
    batch_size: int | None = None  # None: full batch

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass
class TrainTrace:
    epoch: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    best_epoch: int = 0
    best_valid: float = np.inf

    def record(self, epoch, train, valid):
        self.epoch.append(epoch)
        self.train_loss.append(train)
        self.valid_loss.append(valid)

    @staticmethod
    def _rel(values):
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return v
        if v[0] == 0:
            # an already-minimal start stays at 100%
            return np.where(v == 0, 100.0, np.inf)
        return v / v[0] * 100.0

    @property
    def train_rel_pct(self):
        return self._rel(self.train_loss)

    @property
    def valid_rel_pct(self):
        return self._rel(self.valid_loss)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "valid_loss", "train_rel_pct", "valid_rel_pct"])
        for row in zip(self.epoch, self.train_loss, self.valid_loss,
                       self.train_rel_pct, self.valid_rel_pct):
            w.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        return buf.getvalue()


def train(params, train_batch: Batch, valid_batch: Batch | None, config: TrainConfig):
    """Gradient descent on ``config.loss``; returns ``(params, trace, best)``.

    ``params`` is updated in place and is the final-epoch network. ``best``
    is a copy of the network with the lowest logged validation loss (the
    final network when no validation batch is given). Epoch 0 in the trace
    is the untrained network.
    """
    if len(train_batch) == 0:
        raise ValueError("empty training batch")
    spec = config.loss
    opt = make_optimizer(config.optimizer, config.lr)
    rng = np.random.default_rng(config.seed)
    trace = TrainTrace()
    has_valid = valid_batch is not None and len(valid_batch) > 0
    best = params.copy()

    def note(epoch, tr):
        nonlocal best
        va = losses.loss_value(params, valid_batch, spec) if has_valid else np.nan
        trace.record(epoch, tr, va)
        if not np.isfinite(tr):
            raise NonFiniteLossError(f"non-finite training loss {tr} at epoch {epoch}", trace)
        if va < trace.best_valid:
            trace.best_valid, trace.best_epoch = va, epoch
            best = params.copy()

    S = len(train_batch)
    full = config.batch_size is None or config.batch_size >= S
    for epoch in range(config.epochs):
        if full:
            value, grad = losses.loss_and_gradient(params, train_batch, spec)
            # value is the loss after `epoch` updates
            if epoch % config.log_every == 0:
                note(epoch, value)
            params.apply_update(opt.step(grad))
        else:
            if epoch == 0:
                note(0, losses.loss_value(params, train_batch, spec))
            order = rng.permutation(S)
            for start in range(0, S, config.batch_size):
                sub = train_batch.subset(order[start:start + config.batch_size])
                params.apply_update(opt.step(losses.loss_gradient(params, sub, spec)))
            if (epoch + 1) % config.log_every == 0 and epoch + 1 < config.epochs:
                note(epoch + 1, losses.loss_value(params, train_batch, spec))
        if (epoch + 1) % max(1, config.epochs // 10) == 0:
            log.debug("epoch %d", epoch + 1)
    note(config.epochs, losses.loss_value(params, train_batch, spec))
    if not has_valid:
        best = params.copy()
    return params, trace, best

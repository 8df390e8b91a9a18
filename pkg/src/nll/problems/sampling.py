"""Uniform sampling of (x, f(x), grad f(x)) records and their file format."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SamplingError(RuntimeError):
    def __init__(self, message, theta):
        super().__init__(f"{message} at theta = {np.asarray(theta).tolist()}")
        self.theta = theta


@dataclass(frozen=True)
class DomainBox:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D and of equal length")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper in every coordinate")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @classmethod
    def cube(cls, n, lo=0.0, hi=1.0):
        return cls((lo,) * n, (hi,) * n)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = np.asarray(pairs, dtype=float)
        return cls(tuple(pairs[:, 0]), tuple(pairs[:, 1]))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.asarray(self.lower)

    @property
    def hi(self):
        return np.asarray(self.upper)

    def contains(self, x):
        x = np.atleast_2d(x)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    # affine map onto [-1, 1]^n; gradients scale by the chain rule
    def to_unit(self, x):
        return 2.0 * (np.asarray(x) - self.lo) / (self.hi - self.lo) - 1.0

    def from_unit(self, xn):
        return self.lo + 0.5 * (np.asarray(xn) + 1.0) * (self.hi - self.lo)

    def grad_to_unit(self, g):
        return np.asarray(g) * 0.5 * (self.hi - self.lo)


@dataclass
class SampleSet:
    """Samples in original units, with the box used for normalization."""

    x: np.ndarray
    f: np.ndarray
    grad: np.ndarray
    box: DomainBox
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.box.dim
        self.x = np.asarray(self.x, dtype=float).reshape(-1, n)
        self.grad = np.asarray(self.grad, dtype=float).reshape(-1, n)
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        if not (self.x.shape[0] == self.grad.shape[0] == self.f.shape[0]):
            raise ValueError("row counts differ")

    def __len__(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.box.dim

    @property
    def xn(self):
        return self.box.to_unit(self.x)

    @property
    def gradn(self):
        return self.box.grad_to_unit(self.grad)

    def head(self, count) -> "SampleSet":
        return SampleSet(self.x[:count], self.f[:count], self.grad[:count], self.box, dict(self.meta))

    # -- files ---------------------------------------------------------------
    def header(self):
        n = self.dim
        return [f"x{i + 1}" for i in range(n)] + ["f"] + [f"g{i + 1}" for i in range(n)]

    def save(self, path):
        """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (box sidecar)."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for xi, fi, gi in zip(self.x, self.f, self.grad):
                w.writerow([repr(float(v)) for v in (*xi, fi, *gi)])
        sidecar = {
            "lower": list(self.box.lower),
            "upper": list(self.box.upper),
            "normalization": "affine to [-1, 1] per coordinate",
            "meta": self.meta,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SampleSet":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        box = DomainBox(tuple(side["lower"]), tuple(side["upper"]))
        n = box.dim
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows[0]) != 2 * n + 1:
            raise ValueError(f"{path}: expected {2 * n + 1} columns")
        data = np.array(rows[1:], dtype=float).reshape(-1, 2 * n + 1)
        return cls(data[:, :n], data[:, n], data[:, n + 1:], box, side.get("meta", {}))


def sample_uniform(box: DomainBox, count: int, seed, qoi) -> SampleSet:
    """Draw ``count`` i.i.d. uniform points in ``box`` and evaluate ``qoi``.

    ``qoi`` maps an ``(S, n)`` array to ``(values, gradients)``.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(box.lo, box.hi, size=(count, box.dim))
    if count == 0:
        return SampleSet(x, np.empty(0), np.empty((0, box.dim)), box)
    try:
        f, g = qoi(x)
    except Exception as exc:
        # locate the offending point
        for row in x:
            try:
                qoi(row[None, :])
            except Exception as inner:
                raise SamplingError(f"evaluator failed: {inner}", row) from inner
        raise SamplingError(f"evaluator failed: {exc}", x) from exc
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    bad = ~(np.isfinite(f) & np.all(np.isfinite(g), axis=1))
    if np.any(bad):
        raise SamplingError("non-finite value or gradient", x[np.argmax(bad)])
    return SampleSet(x, f, g, box)

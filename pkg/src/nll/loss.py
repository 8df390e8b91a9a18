"""Training functionals for the level-set network and their weight gradients.

Three losses are available:

``new``
    mean over samples of ``sum_{i not active} <grad f(x), h_i(z)>^2``, the
    squared derivative of ``f o h`` orthogonal to the active coordinates.
``old_hat``
    ``sum_s sum_i omega_i <J_i, grad f>^2 + lam * sum_s (det J - 1)^2`` with
    ``J`` the column-normalized Jacobian of ``h``.
``old_tilde``
    ``sqrt(Lhat_1) / |S| + lam * prod_s (det J - 1)``.

All gradients are exact: they differentiate through the cotangent sweep of
:mod:`nll.revnet`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import revnet

KINDS = ("new", "old_hat", "old_tilde")

# magnitude cap for the product regularizer of old_tilde
PRODUCT_CLAMP = 1e12


@dataclass
class LossSpec:
    kind: str = "new"
    omega: np.ndarray | None = None
    lam: float = 1.0
    active_count: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.active_count < 1:
            raise ValueError("active_count must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")

    def weights(self, n: int) -> np.ndarray:
        """Per-coordinate weights; inactive coordinates get 1, active ones 0."""
        if self.omega is not None:
            omega = np.asarray(self.omega, dtype=float)
            if omega.shape == (n - 1,):
                # padded network: the appended coordinate is treated as inactive
                omega = np.append(omega, 1.0)
            if omega.shape != (n,):
                raise ValueError(f"omega has shape {omega.shape}, expected ({n},)")
            return omega
        omega = np.ones(n)
        omega[: self.active_count] = 0.0
        return omega


@dataclass
class Batch:
    xs: np.ndarray
    grads: np.ndarray

    def __post_init__(self):
        self.xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        self.grads = np.atleast_2d(np.asarray(self.grads, dtype=float))
        if self.xs.shape != self.grads.shape:
            raise ValueError("xs and grads must have the same shape")
        if not (np.isfinite(self.xs).all() and np.isfinite(self.grads).all()):
            raise ValueError("batch contains non-finite entries")

    def __len__(self):
        return self.xs.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(self.xs[idx], self.grads[idx])


def _check(batch: Batch):
    if len(batch) == 0:
        raise ValueError("empty batch")


def _prepare(params, batch, tape):
    _check(batch)
    xs = revnet.pad_points(params, batch.xs)
    gs = revnet.pad_points(params, batch.grads)
    if tape is None:
        _, tape = revnet.forward_with_tape(params, xs)
    else:
        tape.check(params)
        if tape.x.shape != xs.shape:
            raise ValueError("tape was recorded for a different batch")
    return tape, gs


# -- new loss -----------------------------------------------------------------

def _new(params, batch, active_count, tape=None, need_grad=True):
    tape, gs = _prepare(params, batch, tape)
    W, ctape = revnet.cotangent_sweep(params, tape, gs[:, None, :])
    inactive = W[:, 0, active_count:]
    S = len(batch)
    value = float(np.sum(inactive * inactive) / S)
    if not need_grad:
        return value, None
    W_bar = np.zeros_like(W)
    W_bar[:, 0, active_count:] = 2.0 * inactive / S
    return value, revnet.cotangent_sweep_backward(params, tape, ctape, W_bar)


def new_nll_loss(params, batch: Batch, active_count: int = 1) -> float:
    return _new(params, batch, active_count, need_grad=False)[0]


# -- old losses -------------------------------------------------------------

@dataclass
class _JacobianTerms:
    J: np.ndarray  # (S, n, n), column i is h_i
    r: np.ndarray  # column norms
    e: np.ndarray  # <J_i, grad f> with normalized columns
    det: np.ndarray  # determinant of the normalized Jacobian


def _jacobian_terms(params, tape, gs):
    S, n = gs.shape
    eye = np.broadcast_to(np.eye(n), (S, n, n))
    J, ctape = revnet.cotangent_sweep(params, tape, eye)
    r = np.linalg.norm(J, axis=1)
    c = np.einsum("sa,sai->si", gs, J)
    e = c / r
    det = np.linalg.det(J) / np.prod(r, axis=1)
    return _JacobianTerms(J, r, e, det), ctape


def _lhat1_bar(terms, gs, omega, scale):
    # d/dJ of scale * sum_s sum_i omega_i e_i^2
    coef = scale * 2.0 * omega * terms.e / terms.r  # (S, n)
    return coef[:, None, :] * (gs[:, :, None] - terms.J * (terms.e / terms.r)[:, None, :])


def _det_bar(terms, coef):
    # d/dJ of sum_s coef_s * det_s
    Jinv_T = np.swapaxes(np.linalg.inv(terms.J), 1, 2)
    inner = Jinv_T - terms.J / (terms.r**2)[:, None, :]
    return (coef * terms.det)[:, None, None] * inner


def _old_hat(params, batch, spec, tape=None, need_grad=True):
    tape, gs = _prepare(params, batch, tape)
    terms, ctape = _jacobian_terms(params, tape, gs)
    omega = spec.weights(params.n)
    l1 = float(np.sum(omega * terms.e**2))
    dm1 = terms.det - 1.0
    l2 = float(np.sum(dm1**2))
    value = l1 + spec.lam * l2
    if not need_grad:
        return value, None
    J_bar = _lhat1_bar(terms, gs, omega, 1.0) + _det_bar(terms, spec.lam * 2.0 * dm1)
    return value, revnet.cotangent_sweep_backward(params, tape, ctape, J_bar)


def signed_product(factors) -> tuple[float, np.ndarray]:
    """Product of ``factors`` and its partial derivatives, in log-magnitude.

    The product is clamped to ``[-PRODUCT_CLAMP, PRODUCT_CLAMP]``; on the
    clamp its derivative is zero.
    """
    f = np.asarray(factors, dtype=float)
    zero = f == 0.0
    nz = int(zero.sum())
    grad = np.zeros_like(f)
    if nz >= 2:
        return 0.0, grad
    if nz == 1:
        others = f[~zero]
        sign = np.prod(np.sign(others))
        logmag = np.sum(np.log(np.abs(others)))
        val = sign * np.exp(min(logmag, np.log(PRODUCT_CLAMP)))
        if logmag < np.log(PRODUCT_CLAMP):
            grad[zero] = val
        return 0.0, grad
    sign = np.prod(np.sign(f))
    logabs = np.log(np.abs(f))
    logmag = np.sum(logabs)
    if logmag > np.log(PRODUCT_CLAMP):
        return float(sign * PRODUCT_CLAMP), grad
    value = sign * np.exp(logmag)
    # d/df_s prod = prod / f_s, evaluated without dividing tiny numbers
    grad = sign * np.sign(f) * np.exp(logmag - logabs)
    return float(value), grad


def _old_tilde(params, batch, spec, tape=None, need_grad=True):
    tape, gs = _prepare(params, batch, tape)
    terms, ctape = _jacobian_terms(params, tape, gs)
    omega = spec.weights(params.n)
    S = len(batch)
    l1 = float(np.sum(omega * terms.e**2))
    root = np.sqrt(l1)
    prod, dprod = signed_product(terms.det - 1.0)
    value = root / S + spec.lam * prod
    if not need_grad:
        return value, None
    # the square root is not differentiable at 0; take the zero subgradient
    scale = 1.0 / (2.0 * root * S) if root > 0 else 0.0
    J_bar = _lhat1_bar(terms, gs, omega, scale) + _det_bar(terms, spec.lam * dprod)
    return value, revnet.cotangent_sweep_backward(params, tape, ctape, J_bar)


def old_nll_loss_hat(params, batch: Batch, spec: LossSpec) -> float:
    return _old_hat(params, batch, spec, need_grad=False)[0]


def old_nll_loss_tilde(params, batch: Batch, spec: LossSpec) -> float:
    return _old_tilde(params, batch, spec, need_grad=False)[0]


_DISPATCH = {
    "new": lambda p, b, s, t, g: _new(p, b, s.active_count, t, g),
    "old_hat": _old_hat,
    "old_tilde": _old_tilde,
}


def loss_value(params, batch: Batch, spec: LossSpec) -> float:
    return _DISPATCH[spec.kind](params, batch, spec, None, False)[0]


def loss_and_gradient(params, batch: Batch, spec: LossSpec, tape=None):
    """Loss value and its gradient w.r.t. every weight array.

    A ``tape`` from :func:`nll.revnet.forward_with_tape` on ``batch.xs`` may
    be passed in; it must have been recorded under the current parameters.
    """
    return _DISPATCH[spec.kind](params, batch, spec, tape, True)


def loss_gradient(params, batch: Batch, spec: LossSpec, tape=None) -> dict:
    return loss_and_gradient(params, batch, spec, tape)[1]

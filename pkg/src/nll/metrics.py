"""Coordinate sensitivities of f o h and relative regression errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import activesub, revnet


@dataclass
class SensitivityReport:
    percent: np.ndarray
    count: int
    method: str = ""

    def active(self, k=1) -> float:
        """Share of the leading ``k`` coordinates, in percent."""
        return float(np.sum(self.percent[:k]))


def sensitivity_from_gradients(W, method="", convention="abs") -> SensitivityReport:
    """Percentages from push-forward gradients ``W`` of shape (S, n).

    ``convention="abs"`` averages |d(f o h)/dz^i|; ``"sq"`` averages squares.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] == 0:
        raise ValueError("no samples")
    if convention == "abs":
        s = np.mean(np.abs(W), axis=0)
    elif convention == "sq":
        s = np.mean(W * W, axis=0)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    total = s.sum()
    if total == 0:
        raise ValueError("all gradients vanish; sensitivities undefined")
    return SensitivityReport(100.0 * s / total, W.shape[0], method)


def coordinate_sensitivities(transform, xs, grads, convention="abs", method=None) -> SensitivityReport:
    """Sensitivity of f o h to each transformed coordinate.

    ``transform`` is a trained :class:`~nll.revnet.RevNetParams` (uses the
    exact cotangent sweep) or an :class:`~nll.activesub.ASModel` (uses
    ``W^T grad f``). ``xs`` and ``grads`` are in the coordinates the
    transform was fitted in.
    """
    if isinstance(transform, activesub.ASModel):
        W = activesub.pushforward_gradients(transform, grads)
        tag = f"AS {transform.k}-D"
    elif isinstance(transform, revnet.RevNetParams):
        W = revnet.pushforward_gradients(transform, xs, grads)
        tag = "NLL"
    elif transform is None:
        W = np.atleast_2d(grads)
        tag = "identity"
    else:
        raise TypeError(f"unsupported transform {type(transform).__name__}")
    return sensitivity_from_gradients(W, method or tag, convention)


def _pair(f_true, f_pred):
    a = np.asarray(f_true, dtype=float).ravel()
    b = np.asarray(f_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("length mismatch")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def rrmse(f_true, f_pred) -> float:
    a, b = _pair(f_true, f_pred)
    spread = a.max() - a.min()
    if spread <= 0:
        raise ValueError("RRMSE undefined for constant true values")
    return float(np.linalg.norm(a - b) / spread / np.sqrt(a.size))


def rl1(f_true, f_pred) -> float:
    a, b = _pair(f_true, f_pred)
    den = np.sum(np.abs(a))
    if den == 0:
        raise ValueError("relative l1 error undefined for zero true values")
    return float(np.sum(np.abs(a - b)) / den)


def rl2(f_true, f_pred) -> float:
    a, b = _pair(f_true, f_pred)
    den = np.linalg.norm(a)
    if den == 0:
        raise ValueError("relative l2 error undefined for zero true values")
    return float(np.linalg.norm(a - b) / den)


def error_summary(f_true, f_pred) -> dict:
    return {"rrmse": rrmse(f_true, f_pred), "rl1": rl1(f_true, f_pred), "rl2": rl2(f_true, f_pred)}

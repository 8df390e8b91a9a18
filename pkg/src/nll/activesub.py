"""Active subspaces: gradient covariance, its eigenbasis, and linear projection."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


def covariance(grads) -> np.ndarray:
    """Monte Carlo estimate of E[grad f grad f^T]."""
    G = np.atleast_2d(np.asarray(grads, dtype=float))
    if G.shape[0] == 0:
        raise ValueError("need at least one gradient sample")
    C = G.T @ G / G.shape[0]
    # exact symmetry
    return 0.5 * (C + C.T)


def sym_eig(C, tol=1e-12, max_sweeps=100):
    """Eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns; each eigenvector is signed so that its
    largest-magnitude entry is positive.
    """
    A = np.array(C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("C must be square")
    n = A.shape[0]
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-8:
        raise ValueError("C is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = np.linalg.norm(A)

    offdiag = ~np.eye(n, dtype=bool)

    def off(M):
        return np.linalg.norm(M[offdiag])

    for _ in range(max_sweeps):
        if off(A) <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- R^T A R with the rotation acting on columns/rows p, q
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    vals = np.diag(A).copy()
    order = np.argsort(-vals, kind="stable")
    vals, V = vals[order], V[:, order]
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    return vals, V * signs


@dataclass
class ASModel:
    C: np.ndarray
    eigvals: np.ndarray
    W: np.ndarray
    k: int = 1

    def __post_init__(self):
        # fixed memory layout keeps projections bitwise reproducible after reload
        self.W = np.ascontiguousarray(self.W, dtype=float)
        if not 1 <= self.k <= self.W.shape[1]:
            raise ValueError(f"active dimension k={self.k} out of range 1..{self.W.shape[1]}")

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def W_active(self):
        return self.W[:, : self.k]

    def with_k(self, k) -> "ASModel":
        return ASModel(self.C, self.eigvals, self.W, k)

    def to_json(self) -> str:
        return json.dumps({
            "C": self.C.tolist(),
            "eigvals": self.eigvals.tolist(),
            "W": self.W.tolist(),
            "k": self.k,
        })

    @classmethod
    def from_json(cls, text) -> "ASModel":
        d = json.loads(text)
        return cls(np.array(d["C"]), np.array(d["eigvals"]), np.array(d["W"]), d["k"])


def fit(grads, k=1) -> ASModel:
    C = covariance(grads)
    vals, W = sym_eig(C)
    return ASModel(C, vals, W, k)


def project(model: ASModel, x) -> np.ndarray:
    """Active coordinates W_A^T x; batched rows give (S, k)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n:
        raise ValueError(f"expected dimension {model.n}, got {x.shape[-1]}")
    return x @ model.W_active


def rotate(model: ASModel, x) -> np.ndarray:
    """All rotated coordinates W^T x."""
    return np.asarray(x, dtype=float) @ model.W


def pushforward_gradients(model: ASModel, grads) -> np.ndarray:
    """Gradients in the rotated coordinates, W^T grad f."""
    return np.atleast_2d(np.asarray(grads, dtype=float)) @ model.W

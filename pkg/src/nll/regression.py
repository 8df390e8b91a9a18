"""Low-dimensional regressors fitted on the active coordinates z_A."""
from __future__ import annotations

import itertools
import warnings

import numpy as np

from .optim import Adam, apply_delta


def monomial_exponents(d, degree):
    """Exponent tuples of all monomials in ``d`` variables of total degree <= ``degree``."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), total):
            e = [0] * d
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return np.array(out, dtype=int).reshape(-1, d)


def design(Z, exps):
    Z = np.asarray(Z, dtype=float)
    return np.prod(Z[..., None, :] ** exps, axis=-1)


def _as_2d(Z, d=None):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None] if d in (None, 1) else Z[None, :]
    if d is not None and Z.shape[1] != d:
        raise ValueError(f"expected {d} latent coordinates, got {Z.shape[1]}")
    return Z


class GlobalPoly:
    kind = "global_poly"

    def __init__(self, degree=4):
        self.degree = degree
        self.coef = None
        self.exps = None
        self.rank_deficient = False

    def fit(self, Z, y):
        Z = _as_2d(Z)
        y = np.asarray(y, dtype=float).ravel()
        self.exps = monomial_exponents(Z.shape[1], self.degree)
        A = design(Z, self.exps)
        Q, R = np.linalg.qr(A)
        diag = np.abs(np.diag(R))
        if A.shape[0] >= A.shape[1] and diag.min() > 1e-10 * diag.max():
            self.coef = np.linalg.solve(R, Q.T @ y)
            self.rank_deficient = False
        else:
            warnings.warn("rank-deficient design matrix; using the minimum-norm fit")
            self.coef = np.linalg.lstsq(A, y, rcond=None)[0]
            self.rank_deficient = True
        return self

    def predict(self, Z):
        Z = _as_2d(Z, self.exps.shape[1])
        return design(Z, self.exps) @ self.coef

    def to_dict(self):
        return {"kind": self.kind, "degree": self.degree, "coef": self.coef.tolist(),
                "d": int(self.exps.shape[1])}

    @classmethod
    def from_dict(cls, d):
        reg = cls(d["degree"])
        reg.coef = np.asarray(d["coef"])
        reg.exps = monomial_exponents(d["d"], d["degree"])
        return reg


class LocalPoly:
    """Least-squares polynomial through the ``k`` nearest training points.

    Fitting just stores the data; each query solves its own small problem in
    a monomial basis centered at the query. Distance ties go to the lower
    training index.
    """

    kind = "local_poly"

    def __init__(self, degree=2, k=10, chunk=1000):
        self.degree = degree
        self.k = k
        self.chunk = chunk
        self.Z = None
        self.y = None

    def fit(self, Z, y):
        Z = _as_2d(Z)
        y = np.asarray(y, dtype=float).ravel()
        m = len(monomial_exponents(Z.shape[1], self.degree))
        if self.k < m:
            raise ValueError(f"k={self.k} neighbors cannot determine {m} monomial coefficients")
        if Z.shape[0] < 1:
            raise ValueError("no training data")
        self.Z, self.y = Z, y
        self.exps = monomial_exponents(Z.shape[1], self.degree)
        return self

    def predict(self, Z):
        Q = _as_2d(Z, self.Z.shape[1])
        out = np.empty(Q.shape[0])
        k = min(self.k, self.Z.shape[0])
        for start in range(0, Q.shape[0], self.chunk):
            q = Q[start:start + self.chunk]
            dist = np.sum((q[:, None, :] - self.Z[None, :, :]) ** 2, axis=2)
            nb = np.argsort(dist, axis=1, kind="stable")[:, :k]
            dz = self.Z[nb] - q[:, None, :]  # (c, k, d)
            h = np.max(np.abs(dz), axis=(1, 2))
            h[h == 0] = 1.0
            A = design(dz / h[:, None, None], self.exps)  # (c, k, M)
            # solve for deviations from the neighbor mean so that the
            # min-norm answer of a degenerate design still returns it
            yn = self.y[nb]
            ybar = yn.mean(axis=1)
            coef = np.linalg.pinv(A) @ (yn - ybar[:, None])[..., None]
            out[start:start + self.chunk] = ybar + coef[:, 0, 0]
        return out

    def to_dict(self):
        return {"kind": self.kind, "degree": self.degree, "k": self.k,
                "Z": self.Z.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["degree"], d["k"]).fit(np.asarray(d["Z"]), np.asarray(d["y"]))


class MLP:
    """Fully connected tanh network with a linear scalar output.

    Inputs and targets are standardized internally; training is full-batch
    ADAM on the mean squared error.
    """

    kind = "mlp"

    def __init__(self, hidden=(20, 20), epochs=5000, lr=0.05, seed=0):
        self.hidden = tuple(hidden)
        self.epochs = epochs
        self.lr = lr
        self.seed = seed
        self.weights = None
        self.loss_history = []

    def _init(self, d):
        rng = np.random.default_rng(self.seed)
        sizes = (d, *self.hidden, 1)
        w = {}
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            w[f"W{i}"] = rng.normal(0.0, np.sqrt(2.0 / (a + b)), (a, b))
            w[f"b{i}"] = np.zeros(b)
        return w

    def _forward(self, X):
        acts = [X]
        h = X
        n_layers = len(self.hidden) + 1
        for i in range(n_layers):
            h = h @ self.weights[f"W{i}"] + self.weights[f"b{i}"]
            if i < n_layers - 1:
                h = np.tanh(h)
            acts.append(h)
        return acts

    def fit(self, Z, y):
        Z = _as_2d(Z)
        y = np.asarray(y, dtype=float).ravel()
        self.z_mean, self.z_std = Z.mean(axis=0), Z.std(axis=0)
        self.z_std[self.z_std == 0] = 1.0
        self.y_mean, self.y_std = y.mean(), y.std()
        if self.y_std == 0:
            self.y_std = 1.0
        X = (Z - self.z_mean) / self.z_std
        t = ((y - self.y_mean) / self.y_std)[:, None]
        self.weights = self._init(Z.shape[1])
        opt = Adam(self.lr)
        self.loss_history = []
        for _ in range(self.epochs):
            mse, grads = self._loss_and_grads(X, t)
            self.loss_history.append(mse)
            apply_delta(self.weights, opt.step(grads))
        return self

    def _loss_and_grads(self, X, t):
        """Mean squared error on standardized data and its weight gradients."""
        acts = self._forward(X)
        err = acts[-1] - t
        delta = 2.0 * err / X.shape[0]
        grads = {}
        for i in reversed(range(len(self.hidden) + 1)):
            grads[f"W{i}"] = acts[i].T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[f"W{i}"].T) * (1.0 - acts[i] ** 2)
        return float(np.mean(err * err)), grads

    def predict(self, Z):
        Z = _as_2d(Z, self.z_mean.shape[0])
        out = self._forward((Z - self.z_mean) / self.z_std)[-1][:, 0]
        return out * self.y_std + self.y_mean

    def to_dict(self):
        return {
            "kind": self.kind, "hidden": list(self.hidden), "epochs": self.epochs,
            "lr": self.lr, "seed": self.seed,
            "z_mean": self.z_mean.tolist(), "z_std": self.z_std.tolist(),
            "y_mean": self.y_mean, "y_std": self.y_std,
            "weights": {k: v.tolist() for k, v in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, d):
        reg = cls(d["hidden"], d["epochs"], d["lr"], d["seed"])
        reg.z_mean, reg.z_std = np.asarray(d["z_mean"]), np.asarray(d["z_std"])
        reg.y_mean, reg.y_std = d["y_mean"], d["y_std"]
        reg.weights = {k: np.asarray(v) for k, v in d["weights"].items()}
        return reg


REGRESSORS = {cls.kind: cls for cls in (LocalPoly, GlobalPoly, MLP)}


def make(kind, **config):
    try:
        return REGRESSORS[kind](**config)
    except KeyError:
        raise ValueError(f"unknown regressor {kind!r}; expected one of {sorted(REGRESSORS)}") from None


def fit(kind, Z, y, **config):
    return make(kind, **config).fit(Z, y)


def from_dict(d):
    return REGRESSORS[d["kind"]].from_dict(d)

"""Reversible Verlet network: the bijection pair z = g(x), x = h(z).

Each layer applies two shear updates to the channel split (u, v) of the input,

    u <- u + tau * K1^T tanh(K1 v + b1)
    v <- v - tau * K2^T tanh(K2 u + b2)

so every layer can be inverted in closed form. Arrays are batched over
samples: a single point has shape ``(n,)`` and a batch ``(S, n)``.

Besides the maps themselves this module propagates cotangents through the
inverse network. ``cotangent_sweep`` returns ``J_h(z)^T a`` for any stack of
covectors ``a`` given at ``x = h(z)``; that quantity is what every training
loss is built from. Its parameter derivative (a second-order quantity) is
``cotangent_sweep_backward``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ARRAY_NAMES = ("K1", "b1", "K2", "b2")


class StaleTapeError(RuntimeError):
    """Raised when a tape recorded under older parameters is reused."""


@dataclass
class RevNetParams:
    """Layer weights for an ``L``-layer Verlet network on ``n = 2*half`` inputs.

    ``K1[l]`` acts on the v-channel and ``K2[l]`` on the u-channel; both have
    shape ``(m, half)``. ``padded`` marks a network built for an odd input
    dimension, with one inert trailing coordinate appended.
    """

    K1: np.ndarray
    b1: np.ndarray
    K2: np.ndarray
    b2: np.ndarray
    tau: float = 0.25
    padded: bool = False
    version: int = field(default=0, compare=False)

    def __post_init__(self):
        for name in ARRAY_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        L, m, half = self.K1.shape
        if self.K2.shape != (L, m, half) or self.b1.shape != (L, m) or self.b2.shape != (L, m):
            raise ValueError("inconsistent layer shapes")
        if L < 1 or m < 1 or half < 1:
            raise ValueError("need L >= 1, m >= 1, n >= 2")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def L(self) -> int:
        return self.K1.shape[0]

    @property
    def m(self) -> int:
        return self.K1.shape[1]

    @property
    def half(self) -> int:
        return self.K1.shape[2]

    @property
    def n(self) -> int:
        """Internal (even) dimension."""
        return 2 * self.half

    @property
    def n_features(self) -> int:
        """Dimension of the data the network was built for."""
        return self.n - int(self.padded)

    @property
    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ARRAY_NAMES}

    def mark_updated(self):
        self.version += 1

    def apply_update(self, delta: dict[str, np.ndarray]):
        """Add ``delta`` to the weights in place and bump the version."""
        for name in ARRAY_NAMES:
            getattr(self, name)[...] += delta[name]
        self.mark_updated()

    def copy(self) -> "RevNetParams":
        return RevNetParams(
            *(getattr(self, name).copy() for name in ARRAY_NAMES),
            tau=self.tau,
            padded=self.padded,
        )

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(getattr(self, name)) for name in ARRAY_NAMES}

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        layers = [
            {name: getattr(self, name)[l].ravel().tolist() for name in ARRAY_NAMES}
            for l in range(self.L)
        ]
        return {
            "n": self.n,
            "L": self.L,
            "m": self.m,
            "tau": self.tau,
            "padded": self.padded,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RevNetParams":
        L, m, half = d["L"], d["m"], d["n"] // 2
        stacked = {}
        for name in ARRAY_NAMES:
            shape = (m, half) if name.startswith("K") else (m,)
            stacked[name] = np.array([np.reshape(layer[name], shape) for layer in d["layers"]])
        if len(d["layers"]) != L:
            raise ValueError("layer count mismatch")
        return cls(**stacked, tau=d["tau"], padded=d.get("padded", False))

    def to_json(self) -> str:
        # repr-based float formatting round-trips float64 exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "RevNetParams":
        return cls.from_dict(json.loads(text))


def init_params(n, L, m=None, tau=0.25, seed=0, scale=0.1, pad=False) -> RevNetParams:
    """Gaussian weights with standard deviation ``scale``, zero biases.

    ``m`` defaults to ``n/2`` (square weight matrices). An odd ``n`` is only
    accepted with ``pad=True``; the network then works on ``n + 1``
    coordinates.
    """
    if n < 1:
        raise ValueError("n must be positive")
    padded = bool(n % 2)
    if padded:
        if not pad:
            raise ValueError(
                f"odd input dimension n={n}: the weight-tied update needs equal "
                "channel sizes; pass pad=True to append an inert coordinate"
            )
        n += 1
    if scale < 0:
        raise ValueError("scale must be non-negative")
    half = n // 2
    m = half if m is None else m
    rng = np.random.default_rng(seed)
    K1 = np.empty((L, m, half))
    K2 = np.empty((L, m, half))
    for l in range(L):
        K1[l] = rng.normal(0.0, 1.0, (m, half))
        K2[l] = rng.normal(0.0, 1.0, (m, half))
    return RevNetParams(K1 * scale, np.zeros((L, m)), K2 * scale, np.zeros((L, m)),
                        tau=tau, padded=padded)


def pad_points(params: RevNetParams, x) -> np.ndarray:
    """Append the inert zero coordinate when the network is padded."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == params.n:
        return x
    if params.padded and x.shape[-1] == params.n_features:
        return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
    raise ValueError(f"expected last dimension {params.n_features}, got {x.shape[-1]}")


def _as_batch(params, x):
    x = pad_points(params, x)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def _shear(K, b, c):
    # K^T tanh(K c + b), batched over rows of c
    return np.tanh(c @ K.T + b) @ K


def forward(params: RevNetParams, x) -> np.ndarray:
    """z = g(x)."""
    X, single = _as_batch(params, x)
    h, tau = params.half, params.tau
    u, v = X[:, :h].copy(), X[:, h:].copy()
    for l in range(params.L):
        u += tau * _shear(params.K1[l], params.b1[l], v)
        v -= tau * _shear(params.K2[l], params.b2[l], u)
    z = np.concatenate([u, v], axis=1)
    return z[0] if single else z


def inverse(params: RevNetParams, z) -> np.ndarray:
    """x = h(z), undoing the layers of ``forward`` in reverse order."""
    Z, single = _as_batch(params, z)
    h, tau = params.half, params.tau
    u, v = Z[:, :h].copy(), Z[:, h:].copy()
    for l in reversed(range(params.L)):
        v += tau * _shear(params.K2[l], params.b2[l], u)
        u -= tau * _shear(params.K1[l], params.b1[l], v)
    x = np.concatenate([u, v], axis=1)
    return x[0] if single else x


@dataclass
class Tape:
    """Layer states recorded by ``forward_with_tape``.

    ``cond[l, 0]`` is the v-channel entering the u-update of layer ``l`` and
    ``cond[l, 1]`` the updated u-channel entering the v-update; ``act`` holds
    the matching ``tanh`` activations.
    """

    x: np.ndarray
    z: np.ndarray
    cond: np.ndarray  # (L, 2, S, half)
    act: np.ndarray  # (L, 2, S, m)
    version: int

    def check(self, params: RevNetParams):
        if self.version != params.version:
            raise StaleTapeError(
                f"tape recorded at parameter version {self.version}, "
                f"parameters are now at version {params.version}"
            )


def forward_with_tape(params: RevNetParams, x) -> tuple[np.ndarray, Tape]:
    """Batched forward pass that keeps every intermediate state."""
    X = np.atleast_2d(pad_points(params, x))
    S, h, tau = X.shape[0], params.half, params.tau
    cond = np.empty((params.L, 2, S, h))
    act = np.empty((params.L, 2, S, params.m))
    u, v = X[:, :h].copy(), X[:, h:].copy()
    for l in range(params.L):
        cond[l, 0] = v
        t = act[l, 0] = np.tanh(v @ params.K1[l].T + params.b1[l])
        u += tau * (t @ params.K1[l])
        cond[l, 1] = u
        t = act[l, 1] = np.tanh(u @ params.K2[l].T + params.b2[l])
        v -= tau * (t @ params.K2[l])
    z = np.concatenate([u, v], axis=1)
    return z, Tape(X, z, cond, act, params.version)


def replay(params: RevNetParams, tape: Tape) -> np.ndarray:
    """Recompute z from the recorded layer states."""
    tape.check(params)
    h, tau = params.half, params.tau
    u = tape.cond[-1, 1]
    v = tape.cond[-1, 0] - tau * (tape.act[-1, 1] @ params.K2[-1])
    return np.concatenate([u, v], axis=1)


# -- derivatives ---------------------------------------------------------------
# A shear sub-step y' = y + s*tau*K^T tanh(K c + b) has the inverse
# y = y' - s*tau*K^T tanh(K c + b), whose transposed Jacobian leaves the
# y-cotangent alone and updates the c-cotangent:
#     a_c' = a_c - s*tau * K^T diag(tanh') K a_y.
# Running these updates layer by layer from x to z computes J_h(z)^T a.

_SUBSTEPS = ((0, +1.0), (1, -1.0))  # (channel index of y, sign)


# Samples are swept in chunks of about this many cotangent entries so that
# the per-substep temporaries stay cache resident.
SWEEP_CHUNK = 1 << 15


@dataclass
class CotangentTape:
    """Cotangents entering each sub-step, kept for the second-order pass."""

    chunks: list  # sample slices
    a_y: list  # [chunk][l][j] -> (s, k, half)
    p: list  # [chunk][l][j] -> (s, k, m), a_y K^T
    w: np.ndarray  # (S, k, n)


def _chunks(S, k, width):
    size = max(1, SWEEP_CHUNK // max(1, k * width))
    return [slice(i, min(S, i + size)) for i in range(0, S, size)]


def _sweep_chunk(params, tape, sl, A):
    h, tau = params.half, params.tau
    chans = [A[:, :, :h].copy(), A[:, :, h:].copy()]  # a_u, a_v
    kept_a = [[None, None] for _ in range(params.L)]
    kept_p = [[None, None] for _ in range(params.L)]
    Ks = (params.K1, params.K2)
    for l in range(params.L):
        for j, (iy, sg) in enumerate(_SUBSTEPS):
            K = Ks[j][l]
            t = tape.act[l, j, sl]
            a_y = chans[iy]
            p = a_y @ K.T
            kept_a[l][j], kept_p[l][j] = a_y, p
            q = p * ((-sg * tau) * (1.0 - t * t))[:, None, :]
            # rebinding (not in-place) keeps the stored a_y intact
            chans[1 - iy] = chans[1 - iy] + q @ K
    return np.concatenate(chans, axis=2), kept_a, kept_p


def cotangent_sweep(params: RevNetParams, tape: Tape, A) -> tuple[np.ndarray, CotangentTape]:
    """Return ``J_h(z)^T a`` for each covector in ``A`` of shape (S, k, n).

    The covectors live at the points ``x`` recorded on ``tape``.
    """
    tape.check(params)
    A = np.asarray(A, dtype=float)
    S, k, n = A.shape
    w = np.empty_like(A)
    ctape = CotangentTape([], [], [], w)
    for sl in _chunks(S, k, max(params.half, params.m)):
        w[sl], kept_a, kept_p = _sweep_chunk(params, tape, sl, A[sl])
        ctape.chunks.append(sl)
        ctape.a_y.append(kept_a)
        ctape.p.append(kept_p)
    return w, ctape


def _backward_chunk(params, tape, sl, kept_a, kept_p, W_bar, grads):
    S, k, n = W_bar.shape
    h, tau = params.half, params.tau
    Kn, bn = ("K1", "K2"), ("b1", "b2")
    Ks = (params.K1, params.K2)
    abar = [W_bar[:, :, :h].copy(), W_bar[:, :, h:].copy()]
    # adjoint of the output state z; the loss does not see z directly
    ybar = [np.zeros((S, h)), np.zeros((S, h))]
    for l in reversed(range(params.L)):
        for j in (1, 0):
            iy, sg = _SUBSTEPS[j]
            ic = 1 - iy
            K = Ks[j][l]
            gK = grads[Kn[j]][l]
            t = tape.act[l, j, sl]
            d = 1.0 - t * t
            c = tape.cond[l, j, sl]
            a_y, p = kept_a[l][j], kept_p[l][j]
            # forward: a_c' = a_c + (p * e) K with e = -sg*tau*d
            e = (-sg * tau) * d
            ac_bar = abar[ic].reshape(-1, h)
            r = (ac_bar @ K.T).reshape(S, k, -1)  # adjoint of (p * e)
            gK += (p * e[:, None, :]).reshape(-1, p.shape[-1]).T @ ac_bar
            e_bar = np.einsum("skm,skm->sm", r, p)
            r *= e[:, None, :]  # now the adjoint of p
            r2 = r.reshape(-1, r.shape[-1])
            gK += r2.T @ a_y.reshape(-1, h)
            abar[iy] = abar[iy] + (r2 @ K).reshape(S, k, h)
            # y' = y + sg*tau*t K ; y-adjoint passes through unchanged
            yb = ybar[iy]
            t_bar = (sg * tau) * (yb @ K.T)
            gK += (sg * tau) * (t.T @ yb)
            # e = -sg*tau*(1 - t^2)  =>  de/dt = 2 sg tau t
            t_bar += (2.0 * sg * tau) * t * e_bar
            s_bar = t_bar * d
            gK += s_bar.T @ c
            grads[bn[j]][l] += s_bar.sum(axis=0)
            ybar[ic] = ybar[ic] + s_bar @ K


def cotangent_sweep_backward(params: RevNetParams, tape: Tape, ctape: CotangentTape, W_bar) -> dict:
    """Gradient w.r.t. the weights of a scalar depending on the sweep output.

    ``W_bar`` is the derivative of that scalar w.r.t. ``w`` (same shape as
    ``w``). Both the states ``x_l`` and the cotangents depend on the weights;
    the adjoint runs through both.
    """
    tape.check(params)
    W_bar = np.asarray(W_bar, dtype=float)
    grads = params.zeros_like()
    for sl, kept_a, kept_p in zip(ctape.chunks, ctape.a_y, ctape.p):
        _backward_chunk(params, tape, sl, kept_a, kept_p, W_bar[sl], grads)
    return grads


def inverse_vjp(params: RevNetParams, z, w) -> np.ndarray:
    """J_h(z)^T w; with w = grad f(h(z)) entry i is <grad f(x), dh/dz^i>."""
    Z, single = _as_batch(params, z)
    Wv = np.atleast_2d(pad_points(params, w))
    if Wv.shape != Z.shape:
        raise ValueError("z and w must have matching shapes")
    _, tape = forward_with_tape(params, inverse(params, Z))
    out, _ = cotangent_sweep(params, tape, Wv[:, None, :])
    out = out[:, 0, :]
    return out[0] if single else out


def pushforward_gradients(params: RevNetParams, x, grads) -> np.ndarray:
    """Rows of (f o h)'(g(x)) given samples x and gradients of f at x."""
    X = np.atleast_2d(pad_points(params, x))
    G = np.atleast_2d(pad_points(params, grads))
    _, tape = forward_with_tape(params, X)
    out, _ = cotangent_sweep(params, tape, G[:, None, :])
    return out[:, 0, :]


def inverse_jacobian(params: RevNetParams, z) -> np.ndarray:
    """Full J_h(z); column i is dh/dz^i. Batched input gives (S, n, n)."""
    Z, single = _as_batch(params, z)
    _, tape = forward_with_tape(params, inverse(params, Z))
    eye = np.broadcast_to(np.eye(params.n), (Z.shape[0], params.n, params.n))
    # row i of the stacked output is e_i^T J_h, so the stack is J_h itself
    J, _ = cotangent_sweep(params, tape, eye)
    return J[0] if single else J


def forward_jacobian(params: RevNetParams, x) -> np.ndarray:
    """J_g(x) by forward-mode tangent propagation."""
    X, single = _as_batch(params, x)
    S, h, tau = X.shape[0], params.half, params.tau
    u, v = X[:, :h].copy(), X[:, h:].copy()
    eye = np.eye(params.n)
    du = np.broadcast_to(eye[:h], (S, h, params.n)).copy()
    dv = np.broadcast_to(eye[h:], (S, h, params.n)).copy()
    for l in range(params.L):
        K, b = params.K1[l], params.b1[l]
        t = np.tanh(v @ K.T + b)
        du += tau * np.einsum("mi,sm,mj,sjk->sik", K, 1 - t * t, K, dv)
        u += tau * (t @ K)
        K, b = params.K2[l], params.b2[l]
        t = np.tanh(u @ K.T + b)
        dv -= tau * np.einsum("mi,sm,mj,sjk->sik", K, 1 - t * t, K, du)
        v -= tau * (t @ K)
    J = np.concatenate([du, dv], axis=1)
    return J[0] if single else J

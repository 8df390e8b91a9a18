"""High-dimensional test functions with closed-form gradients."""
import numpy as np


def _batch(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def f4_eval_grad(x):
    """sin(|x|^2) and its gradient 2 cos(|x|^2) x."""
    X, single = _batch(x)
    r2 = np.sum(X * X, axis=1)
    val = np.sin(r2)
    grad = 2.0 * np.cos(r2)[:, None] * X
    return (val[0], grad[0]) if single else (val, grad)


def f5_eval_grad(x):
    """prod_i 1/(1 + x_i^2) and its gradient."""
    X, single = _batch(x)
    inv = 1.0 / (1.0 + X * X)
    val = np.prod(inv, axis=1)
    grad = val[:, None] * (-2.0 * X * inv)
    return (val[0], grad[0]) if single else (val, grad)


def linear_eval_grad(a):
    """Evaluator for f(x) = a.x, handy for exact-recovery checks."""
    a = np.asarray(a, dtype=float)

    def evaluate(x):
        X, single = _batch(x)
        val = X @ a
        grad = np.broadcast_to(a, X.shape).copy()
        return (val[0], grad[0]) if single else (val, grad)

    return evaluate

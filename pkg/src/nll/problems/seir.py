"""Basic reproduction number of the modified SEIR (Ebola) model.

Parameter order: (beta1, beta2, beta3, rho1, gamma1, gamma2, omega, psi).
Only the closed form of R0 is needed; the ODE system is never integrated.
"""
import numpy as np

PARAM_NAMES = ("beta1", "beta2", "beta3", "rho1", "gamma1", "gamma2", "omega", "psi")


def r0_eval_grad(theta):
    T = np.asarray(theta, dtype=float)
    single = T.ndim == 1
    T = np.atleast_2d(T)
    if T.shape[1] != 8:
        raise ValueError("R0 takes 8 parameters")
    b1, b2, b3, rho1, g1, g2, om, psi = T.T
    den = g1 + psi
    if np.any(om == 0) or np.any(g2 == 0) or np.any(den == 0):
        raise ZeroDivisionError("R0 needs omega != 0, gamma2 != 0 and gamma1 + psi != 0")
    num = b1 + b2 * rho1 * g1 / om + b3 * psi / g2
    val = num / den
    grad = np.empty_like(T)
    grad[:, 0] = 1.0 / den
    grad[:, 1] = rho1 * g1 / (om * den)
    grad[:, 2] = psi / (g2 * den)
    grad[:, 3] = b2 * g1 / (om * den)
    grad[:, 4] = b2 * rho1 / (om * den) - val / den
    grad[:, 5] = -b3 * psi / (g2 * g2 * den)
    grad[:, 6] = -b2 * rho1 * g1 / (om * om * den)
    grad[:, 7] = b3 / (g2 * den) - val / den
    return (val[0], grad[0]) if single else (val, grad)

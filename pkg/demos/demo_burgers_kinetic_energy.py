"""
Kinetic energy of a forced Burgers flow
=======================================

Solves the inviscid Burgers equation with a spatially growing source,
integrates the kinetic energy K(t, mu) and its parameter gradient from the
sensitivity equations, checks one gradient by finite differences, and
compares a short New NLL run against one- and two-dimensional AS.
"""

import numpy as np

from nll import experiment
from nll.experiment import ExperimentConfig
from nll.problems import KINETIC_BOX, KINETIC_GRID, burgers_solve, kinetic_energy_and_grad

mu = [5.0, 0.03, 0.02]
w = burgers_solve(mu, KINETIC_GRID)
print("grid:", KINETIC_GRID.n_cells + 1, "points,", KINETIC_GRID.n_steps, "steps of", KINETIC_GRID.dt)
print("w at t=25, every 50th cell:", np.round(w[int(25 / KINETIC_GRID.dt), ::50], 3))

K, g = kinetic_energy_and_grad(mu, 25.0)
print("K = %.4f, grad (t, mu1, mu2, mu3) =" % K, np.round(g, 4))

h = 1e-4
fd = (kinetic_energy_and_grad([mu[0] + h, *mu[1:]], 25.0)[0]
      - kinetic_energy_and_grad([mu[0] - h, *mu[1:]], 25.0)[0]) / (2 * h)
print("dK/dmu1: sensitivity %.6f, central difference %.6f" % (g[1], fd))

###############################################################################
# Reductions on 100 samples from the parameter box
print("box:", KINETIC_BOX)
cfg = ExperimentConfig.for_problem("burgers_K", n_train=100, n_valid=100, n_test=200, epochs=1000, seed=0)
sets = experiment.generate(cfg)
for method, active in (("new_nll", 1), ("as", 1), ("as", 2)):
    run_cfg = ExperimentConfig.for_problem("burgers_K", method=method, active=active, n_train=100,
                                           n_valid=100, n_test=200, epochs=1000, seed=0)
    _, ev = experiment.run(run_cfg, sets)
    print(f"{ev.row['method']:8s} sens {ev.row['z_A_sens_pct']:5.1f}%  RRMSE {ev.row['rrmse_pct']:.3f}%")

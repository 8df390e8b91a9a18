"""
Reproduction number over a user-supplied parameter box
======================================================

R0 has a closed form in eight epidemic parameters, but no ranges ship with
the library. This demo reads the illustrative box in ``r0_ranges.json``
(the same file format ``python -m nll reproduce table2 --ranges`` takes)
and compares New NLL with 1-D and 2-D active subspaces.
"""

import json
from pathlib import Path

from nll import experiment
from nll.experiment import ExperimentConfig
from nll.problems import R0_PARAMS, r0_eval_grad

box = json.loads((Path(__file__).parent / "r0_ranges.json").read_text())
for name, (lo, hi) in zip(R0_PARAMS, box):
    print(f"{name:7s} [{lo}, {hi}]")

mid = [0.5 * (lo + hi) for lo, hi in box]
value, grad = r0_eval_grad(mid)
print("R0 at the box center: %.4f" % value)

###############################################################################
# One dataset, three reductions
base = dict(box=box, n_train=100, n_valid=100, n_test=2000, epochs=2000, seed=0)
sets = experiment.generate(ExperimentConfig.for_problem("r0", **base))
for method, active in (("new_nll", 1), ("as", 1), ("as", 2)):
    cfg = ExperimentConfig.for_problem("r0", method=method, active=active, **base)
    _, ev = experiment.run(cfg, sets)
    print(f"{ev.row['method']:8s} sens {ev.row['z_A_sens_pct']:5.1f}%  RRMSE {ev.row['rrmse_pct']:.3f}%")

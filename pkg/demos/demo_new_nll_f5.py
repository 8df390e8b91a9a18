"""
Learning a one-dimensional coordinate for f5
============================================

Trains a 30-layer reversible network with the new loss on a short budget,
then regresses f5 on the single active coordinate z1. The full-length run
(5000 epochs, 500 samples) is what ``python -m nll reproduce table1`` does.
"""

import numpy as np

from nll import experiment
from nll.experiment import ExperimentConfig

cfg = ExperimentConfig.for_problem("f5", n_train=200, n_valid=100, n_test=2000, epochs=600, seed=0)
sets = experiment.generate(cfg)
print("train inputs:", sets["train"].x.shape, "normalized range:",
      sets["train"].xn.min().round(3), sets["train"].xn.max().round(3))

fitted, ev = experiment.run(cfg, sets)
trace = fitted.trace
for epoch in (0, 100, 300, 600):
    i = trace.epoch.index(epoch)
    print(f"epoch {epoch:4d}  relative loss {trace.train_rel_pct[i]:8.3f}%")
print("best validation epoch:", trace.best_epoch)
print({k: round(v, 3) if isinstance(v, float) else v for k, v in ev.row.items()})

###############################################################################
# The same data through the original loss, for contrast
old_cfg = ExperimentConfig.for_problem("f5", method="old_nll_tilde", n_train=200, n_valid=100,
                                       n_test=2000, epochs=600, seed=0)
_, old_ev = experiment.run(old_cfg, sets)
print({k: round(v, 3) if isinstance(v, float) else v for k, v in old_ev.row.items()})

###############################################################################
# Scatter of the test set against z1: columns z1, f_true, f_pred
scatter = ev.scatter[np.argsort(ev.scatter[:, 0])]
print(np.round(scatter[:: len(scatter) // 8], 3))

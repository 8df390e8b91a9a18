"""
Active subspaces: where linear reduction works and where it stalls
==================================================================

A linear function is captured exactly by one active direction. On f4 the
gradient covariance has one dominant eigenvalue, yet the leading direction
carries only about a quarter of the average gradient magnitude: the
function bends away from any single linear direction.
"""

import numpy as np

from nll import activesub, metrics
from nll.problems import DomainBox, f4_eval_grad, sample_uniform

rng = np.random.default_rng(0)

# a linear function: every gradient is the same vector a
a = rng.normal(size=6)
grads = np.tile(a, (10, 1))
model = activesub.fit(grads, k=1)
print("eigenvalues:", np.round(model.eigvals, 6))
print("cos(angle to a):", abs(model.W_active[:, 0] @ a) / np.linalg.norm(a))
xs = rng.uniform(-1, 1, (10, 6))
print("first-coordinate sensitivity: %.1f%%" % metrics.coordinate_sensitivities(model, xs, grads).active())

###############################################################################
# f4 on [0, 1]^40, normalized to [-1, 1]^40
box = DomainBox.cube(40)
data = sample_uniform(box, 500, 1, f4_eval_grad)
model = activesub.fit(data.gradn, k=1)
spectrum = model.eigvals / model.eigvals.sum()
print("leading eigenvalue shares:", np.round(spectrum[:5], 3))
rep = metrics.coordinate_sensitivities(model, data.xn, data.gradn)
print("1-D AS sensitivity on f4: %.1f%%" % rep.active())

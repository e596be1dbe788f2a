"""
Analytic head gradients against finite differences
==================================================

The head is trained on two losses: cross-entropy and the mean prediction
entropy.  Both analytic gradients are compared to central differences.
"""

import numpy as np

from uillab import ClassifierState, entropy, forward, grads, numerical_grads

rng = np.random.default_rng(0)
state = ClassifierState(rng.standard_normal((4, 6)), rng.standard_normal(4), (0, 1, 2, 3))
X = rng.standard_normal((5, 6))
y = rng.integers(0, 4, 5)

g = grads(state, X, y)
for loss, analytic in (("ce", g.ce_w), ("em", g.em_w)):
    numeric, _ = numerical_grads(state, X, y, loss=loss)
    err = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
    print(f"{loss}: relative error {err:.2e}")

# entropy of a prediction is bounded by log(#classes) and vanishes when confident
p = forward(state, X[0]).probabilities
print("prediction", np.round(p, 3), "entropy", round(float(entropy(p)), 4), "max", round(np.log(4), 4))

# at a uniform prediction the entropy gradient is exactly zero
flat = ClassifierState(np.zeros((4, 6)), np.zeros(4), (0, 1, 2, 3))
print("entropy gradient at uniform:", np.abs(grads(flat, X, y).em_w).max())

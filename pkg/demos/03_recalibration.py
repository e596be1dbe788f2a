"""
Direction and magnitude recalibration
=====================================

Two conflicting unit gradients are merged.  The offset search tilts the
merged direction so the worse-aligned objective is served better, and the
min-max rescale damps rows with large gradients.
"""

import numpy as np

from uillab import RecalConfig, direction_recalibrate, magnitude_recalibrate, worst_case_alignment

u_ce = np.array([1.0, 0.0])
u_em = np.array([-0.8, 0.6])  # cosine -0.8 with u_ce
gamma = 0.3

plain = (u_ce + gamma * u_em) / np.linalg.norm(u_ce + gamma * u_em)
print("plain merge     ", np.round(plain, 4), "worst alignment", round(min(u_ce @ plain, u_em @ plain), 4))

for rho in (0.25, 0.5, 1.0):
    res = direction_recalibrate(u_ce, u_em, RecalConfig(gamma=gamma, rho=rho))
    f = res.direction
    print(f"rho={rho:<4}        ", np.round(f, 4), "worst alignment", round(min(u_ce @ f, u_em @ f), 4),
          "lambda*", round(res.lambda_star, 4))

# the solver's choice against a brute-force scan of the same objective
g0 = u_ce + gamma * u_em
beta = 0.5 * np.linalg.norm(g0)
grid = np.linspace(0, 1, 1001)
phi = worst_case_alignment(u_ce, u_em, g0, beta, grid)
print("grid best lambda", grid[np.argmax(phi)])

# magnitude side: the biggest row gets the smallest factor
mags = {"head class": 6.0, "middle": 4.0, "tail class": 2.0}
print(magnitude_recalibrate(mags))
print(magnitude_recalibrate(mags, w_floor=0.5))

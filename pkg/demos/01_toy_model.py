"""
Least squares on the torus
==========================

Translation synchronization with Gaussian edge noise: the exact MSE of the
least-squares estimate is a Laplacian eigen-sum.  It grows linearly in d=1,
logarithmically in d=2 and stays bounded in d=3.
"""

import numpy as np

from gridsync.bounds.toy import toy_mse, toy_mse_closed_form_1d, toy_mse_empirical

# d=1: MSE / L tends to 1/12
for L in (16, 128, 1024):
    r = toy_mse(L, 1)
    print(f"d=1 L={L:5d}  MSE/L = {r.per_volume:.5f}  closed form {toy_mse_closed_form_1d(L) / L:.5f}")

# d=2: MSE / log L tends to 1/(2 pi), slowly
for L in (32, 128, 512):
    print(f"d=2 L={L:4d}  MSE/log L = {toy_mse(L, 2).per_log:.4f}   1/(2 pi) = {1 / (2 * np.pi):.4f}")

# d=3: a plateau
print("d=3 plateau:", [round(toy_mse(L, 3).mse, 4) for L in (8, 16, 32, 48)])

# the same number from simulated least squares
est, se = toy_mse_empirical(8, 2, 1.0, n_trials=2000, seed=0)
print(f"d=2 L=8 eigen-sum {toy_mse(8, 2).mse:.4f}  simulated {est:.4f} +- {se:.4f}")

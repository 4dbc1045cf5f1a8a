"""
Impossibility diagnostics
=========================

Three quantities behind the negative results: connectivity of the open
edges in the percolation coupling, the Dirichlet energy of the logarithmic
spin wave, and the calibration constant lambda of each channel.
"""

import numpy as np

from gridsync.bounds.percolation import channel_floor_decomposition, percolation_probe
from gridsync.bounds.spinwave import nonrecovery_bound, psi_quadratic_check, spin_wave_profile
from gridsync.channels import DensitySpec, OrthGaussian, U1Multiplicative, Z2Flip, lambda_for_channel

# Z2Flip(p) reveals theta_x theta_y only on open edges, opened with prob 1 - 2p
for p in (0.2, 0.25, 0.3):
    print(f"Z2Flip({p}): p_open = {channel_floor_decomposition(Z2Flip(p)).p_open:.2f}")
for q in (0.45, 0.55):
    rep = percolation_probe(2, q, 128, [8, 32, 64], n_trials=20, seed=0)
    print(f"p_open={q}: P(x ~ y) at r=8,32,64 ->", np.round(rep.connectivity, 3))

# spin wave: E(L) log(L + 1) stays of order one
for L in (16, 64, 256, 1024):
    print(f"L={L:5d}  E(L) log(L+1) = {spin_wave_profile(L).scaled_energy:.4f}")
den = DensitySpec("von_mises", 2.0)
print("kappa_hat", round(psi_quadratic_check(den).kappa_hat, 4), " bound at L=256:",
      round(nonrecovery_bound(256, den).bound, 4))

# lambda for the shipped channels
print("lambda Z2Flip(0.1)", lambda_for_channel(Z2Flip(0.1)).value)
print("lambda U1 von Mises(2)", round(lambda_for_channel(U1Multiplicative(den)).value, 5))
for s in (0.0, 0.5, 1.0):
    print(f"lambda O(3) sigma={s}", round(lambda_for_channel(OrthGaussian(3, s), n_samples=20000).value, 4))

"""
Gibbs sampling on the Nishimori line
====================================

At beta = atanh(1 - 2p) the posterior of the signs is a random-bond Ising
model.  The ratio G(L/2) / G(L/4) of truth-aligned correlations is size
independent at the transition, so curves for different L cross there.
This demo runs a small scan; the full scan lives in the acceptance tests.
"""

import numpy as np

from gridsync.gibbs import nishimori_beta, phase_scan

print("beta at p = 0.05, 0.1, 0.15:", [round(nishimori_beta(p), 4) for p in (0.05, 0.1, 0.15)])

p_grid = np.round(np.arange(0.04, 0.2001, 0.04), 3)
scan = phase_scan(p_grid, [8, 16], d=2, n_disorder=64, sweeps=[2000, 8000], burn_in=[1000, 4000],
                  stride=[5, 20], seed=1)
print("p      " + " ".join(f"{p:6.3f}" for p in p_grid))
for L, row in zip(scan.sizes, scan.overlap):
    print(f"L={L:<4d} " + " ".join(f"{x:6.3f}" for x in row))
print(f"crossing {scan.crossing:.3f}  95% interval {np.round(scan.crossing_ci, 3).tolist()}")

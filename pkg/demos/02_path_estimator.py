"""
Averaging over random paths
===========================

In d >= 3 the product of observations along a monotone path, rescaled by
lambda^{-length}, is an unbiased estimate of theta_0^{-1} theta_u.  Averaging
many paths that rarely share edges keeps the variance bounded.
"""

import numpy as np

from gridsync.channels import Z2Flip, generate_instance
from gridsync.grid import build_grid
from gridsync.paths import UniformMonotone, eit_diagnostic, estimate_diagonal, predicted_second_moment

g = build_grid(3, 17, "free")
n = 8

# how many edges do two independent reflected paths share?
eit = eit_diagnostic(UniformMonotone(), n, 20000, np.random.default_rng(0))
print("P(X >= k):", np.round(eit.tail[:8], 4), " fitted ratio", round(eit.beta_hat, 3))

# estimate theta_0 theta_u for u = (8, 8, 8) on a few instances
for lam in (0.98, 0.95, 0.90):
    aligned = []
    for s in range(40):
        inst = generate_instance(g, Z2Flip((1 - lam) / 2), seed=s)
        rep = estimate_diagonal(inst, n, 512, rng=np.random.default_rng(s))
        a, b = inst.truth[g.vertex_index(rep.start)], inst.truth[g.vertex_index(rep.end)]
        aligned.append(a * float(rep.raw) * b)
    aligned = np.array(aligned)
    print(f"lambda={lam}: mean aligned {aligned.mean():.3f}  "
          f"second moment {np.mean(aligned**2):.3f}  predicted {predicted_second_moment(eit, lam, n, 512):.3f}")

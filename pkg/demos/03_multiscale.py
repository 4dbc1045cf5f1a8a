"""
Multi-scale Z2 synchronization in the plane
===========================================

Blocks are synchronized level by level: sub-blocks vote across their common
boundary, sub-blocks in incoherent 2x2 squares are dropped, and the largest
clean component fixes the relative signs.  The audit compares honest-edge
rates with the binomial law.
"""

import numpy as np

from gridsync.channels import Z2Flip, generate_instance
from gridsync.grid import build_grid
from gridsync.multiscale import (
    BlockSchedule,
    audit_good_blocks,
    build_block_tree,
    honesty_probability,
    run_multiscale,
    sample_pairs,
    synchronize,
)

g = build_grid(2, 128, "free")
sched = BlockSchedule((1, 8, 64))
rng = np.random.default_rng(0)
near, far = sample_pairs(g, 1, 8, 500, rng), sample_pairs(g, 64, 128, 500, rng)

for p in (0.0, 0.005, 0.02, 0.05):
    inst = generate_instance(g, Z2Flip(p), seed=1)
    a, b = run_multiscale(inst, sched, near), run_multiscale(inst, sched, far)
    excl = a.diagnostics[0]["excluded_fraction"]
    print(f"p={p:<5}  success near {a.success_rate:.3f}  far {b.success_rate:.3f}  level-0 excluded {excl:.2f}")

inst = generate_instance(g, Z2Flip(0.02), seed=2)
for row in audit_good_blocks(inst, synchronize(inst, build_block_tree(g, sched))):
    print(f"sub-block side {row['sub_block_side']:3d}: honest {row['honest_rate']:.4f}"
          f"  binomial {honesty_probability(0.02, row['pair_size']):.4f}  good {row['good_rate']:.3f}")

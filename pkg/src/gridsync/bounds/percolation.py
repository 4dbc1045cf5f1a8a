"""Percolation coupling behind the impossibility of weak recovery at high noise.

A channel whose density with respect to Haar measure is bounded below by
``1 - p`` splits as ``q = (1 - p) + p q_*``.  Observations can then be drawn
in two stages: an edge is *open* with probability ``p`` and reports a draw
from ``q_*`` (for ``Z2Flip`` the exact difference), otherwise it reports a
Haar-uniform value.  Vertices in different open clusters are independent
given the data, so ``P(x ~ y)`` in bond percolation bounds any estimator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..channels import ChannelSpec, OrthGaussian, U1Multiplicative, Z2Flip
from ..grid import Boundary, GridGraph, build_grid

# bond percolation thresholds used as reference lines; d = 3 is a numerical literature value
P_C = {1: 1.0, 2: 0.5, 3: 0.2488}


@dataclass(frozen=True)
class FloorDecomposition:
    p_open: float
    density_infimum: float  # infimum of the density with respect to Haar measure
    residual: str


def channel_floor_decomposition(channel: ChannelSpec) -> FloorDecomposition:
    """Split ``q(y | theta) = (1 - p_open) + p_open * q_*(y | theta)`` with ``p_open = 1 - inf q``."""
    if isinstance(channel, Z2Flip):
        f = channel.p
        inf = 2.0 * f  # Haar on Z2 puts 1/2 on each sign; densities are 2(1-f) and 2f
        p_open = 1.0 - inf
        return FloorDecomposition(p_open=p_open, density_infimum=inf, residual="point mass on the true difference")
    if isinstance(channel, U1Multiplicative):
        inf = channel.density.haar_density_infimum()
        p_open = 1.0 - inf
        return FloorDecomposition(
            p_open=p_open, density_infimum=inf,
            residual=f"({channel.density.family}({channel.density.param}) - {inf:.6g}) / {p_open:.6g}, rotated by the true angle",
        )
    if isinstance(channel, OrthGaussian):
        raise ValueError(
            "OrthGaussian has a positive density floor but its infimum is not computed; "
            "use Z2Flip or a U1 family for the percolation coupling"
        )
    raise TypeError(f"unsupported channel {channel!r}")


def coupled_z2_observations(
    g: GridGraph, channel: Z2Flip, truth: np.ndarray, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Two-stage draw of ``Z2Flip`` observations; returns ``(obs, open_mask)``.

    Open edges report ``theta_x theta_y``; closed edges report a uniform sign.
    The marginal law of each observation equals the direct channel.
    """
    dec = channel_floor_decomposition(channel)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(8,)))
    diff = (truth[g.edge_tail] * truth[g.edge_head]).astype(np.int8)
    open_ = rng.random(g.n_edges) < dec.p_open
    coin = np.where(rng.random(g.n_edges) < 0.5, 1, -1).astype(np.int8)
    return np.where(open_, diff, coin), open_


@dataclass
class PercolationReport:
    d: int
    p_open: float
    extents: tuple
    distances: np.ndarray
    connectivity: np.ndarray  # P(x ~ y) per distance
    stderr: np.ndarray
    p_c: float
    n_trials: int

    def rows(self):
        return [
            {"d": self.d, "p_open": self.p_open, "distance": int(r), "connectivity": float(c), "stderr": float(s)}
            for r, c, s in zip(self.distances, self.connectivity, self.stderr)
        ]


def _pair_grid(g: GridGraph, r: int) -> tuple[np.ndarray, np.ndarray]:
    """All pairs ``(x, x + r e_0)`` inside the grid."""
    coords = g.coords(np.arange(g.n_vertices))
    ok = coords[:, 0] + r < g.extents[0]
    src = np.flatnonzero(ok)
    dst = coords[ok].copy()
    dst[:, 0] += r
    return src, g.vertex_index(dst)


def percolation_probe(
    d: int,
    p_open: float,
    extents,
    distances: Sequence[int],
    n_trials: int,
    seed: int = 0,
) -> PercolationReport:
    """Monte Carlo ``P(x ~ y)`` in bond percolation on a free-boundary box.

    Each trial opens every edge independently with probability ``p_open``,
    labels clusters and averages the connection indicator over all pairs
    ``(x, x + r e_1)`` in the box; the trial means are then averaged.
    """
    if not 0.0 <= p_open <= 1.0:
        raise ValueError(f"p_open must lie in [0, 1], got {p_open}")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    g = build_grid(d, extents, Boundary.FREE)
    distances = np.asarray(sorted(int(r) for r in distances))
    if distances.size and (distances.min() < 1 or distances.max() >= g.extents[0]):
        raise ValueError(f"distances must lie in [1, {g.extents[0] - 1}]")
    pairs = [_pair_grid(g, int(r)) for r in distances]
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(9,)))
    vals = np.zeros((n_trials, distances.size))
    n = g.n_vertices
    for t in range(n_trials):
        open_ = rng.random(g.n_edges) < p_open
        adj = coo_matrix(
            (np.ones(int(open_.sum()), dtype=np.int8), (g.edge_tail[open_], g.edge_head[open_])), shape=(n, n)
        )
        _, label = connected_components(adj, directed=False)
        for j, (a, b) in enumerate(pairs):
            vals[t, j] = np.mean(label[a] == label[b])
    se = vals.std(axis=0, ddof=1) / np.sqrt(n_trials) if n_trials > 1 else np.zeros(distances.size)
    return PercolationReport(
        d=d, p_open=float(p_open), extents=g.extents, distances=distances,
        connectivity=vals.mean(axis=0), stderr=se, p_c=P_C.get(d, float("nan")), n_trials=n_trials,
    )

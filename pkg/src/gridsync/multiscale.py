"""Hierarchical block synchronization for Z2 on the square grid.

Level-k blocks are squares of side ``sides[k]`` (``sides[0] == 1``: single
vertices).  Within every level-(k+1) parent, adjacent level-k sub-blocks get a
majority sign from the observations across their common boundary, dressed by
the running per-vertex product of the sync variables already assigned.  Sub
-blocks touching an incoherent 2x2 quartet are dropped, the largest remaining
connected set is 2-colored, and everything else keeps ``W = +1``.

If the top schedule side does not cover the grid, the whole grid is appended
as an implicit root level so that every pair of vertices ends up in a common
block.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import binom

from .channels import Instance
from .grid import Boundary, GridGraph
from .groups import Variant


@dataclass(frozen=True)
class BlockSchedule:
    sides: Tuple[int, ...]
    alpha: float = 0.9
    b_max: int = 1

    def __post_init__(self):
        sides = tuple(int(s) for s in self.sides)
        object.__setattr__(self, "sides", sides)
        if not sides or sides[0] != 1:
            raise ValueError(f"schedule must start at side 1, got {sides}")
        for a, b in zip(sides, sides[1:]):
            if b <= a or b % a:
                raise ValueError(f"each side must strictly divide the next, got {sides}")
        if not 0.5 < self.alpha <= 1:
            raise ValueError(f"honest threshold alpha must lie in (1/2, 1], got {self.alpha}")
        if self.b_max < 0:
            raise ValueError(f"b_max must be >= 0, got {self.b_max}")

    @classmethod
    def desk(cls, levels: int = 2, base: int = 8) -> "BlockSchedule":
        return cls(tuple(base**k for k in range(levels + 1)))

    @classmethod
    def asymptotic(cls, levels: int = 1) -> "BlockSchedule":
        """Sides ``2**(10 k (k+1))`` needed by the recovery guarantee; level 1 already has side 2**20."""
        return cls(tuple(2 ** (10 * k * (k + 1)) for k in range(levels + 1)), alpha=0.9, b_max=1)


def schedule_preset(name: str, levels: int = 2) -> BlockSchedule:
    if name == "desk":
        return BlockSchedule.desk(levels)
    if name == "asymptotic":
        return BlockSchedule.asymptotic(levels)
    raise ValueError(f"unknown schedule preset {name!r} (expected 'desk' or 'asymptotic')")


@dataclass
class LevelStructure:
    """Static geometry of one level of sub-blocks inside their parents."""

    side: Tuple[int, int]
    shape: Tuple[int, int]  # blocks per axis
    vertex_block: np.ndarray  # (N,) block index of every vertex
    block_parent: np.ndarray  # (n_blocks,) parent index at the next level
    pair_b1: np.ndarray  # adjacent sub-block pairs sharing a parent; b2 = b1 + e_axis
    pair_b2: np.ndarray
    pair_axis: np.ndarray
    cross_edge: np.ndarray  # grid edges crossing between paired sub-blocks
    cross_pair: np.ndarray  # pair id of each crossing edge
    quartet_pairs: np.ndarray  # (n_quartets, 4) pair ids around each 2x2 square
    quartet_blocks: np.ndarray  # (n_quartets, 4)

    @property
    def n_blocks(self) -> int:
        return self.shape[0] * self.shape[1]

    def pair_sizes(self) -> np.ndarray:
        return np.bincount(self.cross_pair, minlength=self.pair_b1.size)


@dataclass
class LevelState:
    W: np.ndarray
    pair_sign: Optional[np.ndarray] = None
    in_component: Optional[np.ndarray] = None
    parent_H: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)


@dataclass
class BlockTree:
    graph: GridGraph
    schedule: BlockSchedule
    levels: List[LevelStructure]
    state: List[LevelState]
    root_sign: int = 1

    @property
    def n_levels(self) -> int:
        """Number of synchronized levels (the root parent is not counted)."""
        return len(self.levels)

    def block_counts(self) -> List[int]:
        return [lv.n_blocks for lv in self.levels] + [1]

    def block_of(self, k: int, u) -> int:
        if k == len(self.levels):
            return 0
        u = np.asarray(u)
        return int(self.levels[k].vertex_block[u[0] + self.graph.extents[0] * u[1]])

    def wtilde(self, upto: Optional[int] = None) -> np.ndarray:
        """Per-vertex product of the sync variables of levels ``< upto``."""
        upto = len(self.levels) if upto is None else upto
        out = np.ones(self.graph.n_vertices, dtype=np.int8)
        for k in range(upto):
            out *= self.state[k].W[self.levels[k].vertex_block]
        return out


def _level_structure(g: GridGraph, side: int, parent_side: Tuple[int, int]) -> LevelStructure:
    L0, L1 = g.extents
    nb0, nb1 = L0 // side, L1 // side
    coords = g.coords(np.arange(g.n_vertices))
    bx, by = coords[:, 0] // side, coords[:, 1] // side
    vertex_block = bx + nb0 * by

    ratio0, ratio1 = parent_side[0] // side, parent_side[1] // side
    np0 = nb0 // ratio0
    bi = np.arange(nb0 * nb1)
    bix, biy = bi % nb0, bi // nb0
    block_parent = bix // ratio0 + np0 * (biy // ratio1)

    pair_of = np.full((nb0 * nb1, 2), -1, dtype=np.int64)
    b1s, b2s, axs = [], [], []
    count = 0
    for a, (dx, dy) in enumerate(((1, 0), (0, 1))):
        ok = (bix + dx < nb0) & (biy + dy < nb1)
        src = bi[ok]
        dst = src + dx + nb0 * dy
        same = block_parent[src] == block_parent[dst]
        src, dst = src[same], dst[same]
        pair_of[src, a] = np.arange(count, count + src.size)
        count += src.size
        b1s.append(src)
        b2s.append(dst)
        axs.append(np.full(src.size, a))
    pair_b1 = np.concatenate(b1s)
    pair_b2 = np.concatenate(b2s)
    pair_axis = np.concatenate(axs)

    tb = vertex_block[g.edge_tail]
    hb = vertex_block[g.edge_head]
    crossing = (tb != hb) & (block_parent[tb] == block_parent[hb])
    cross_edge = np.flatnonzero(crossing)
    cross_pair = pair_of[tb[cross_edge], g.edge_axis[cross_edge]]
    assert np.all(cross_pair >= 0)

    # quartets: 2x2 squares of sub-blocks inside a single parent
    ok = (bix + 1 < nb0) & (biy + 1 < nb1)
    q00 = bi[ok]
    q10, q01 = q00 + 1, q00 + nb0
    q11 = q01 + 1
    same = (block_parent[q00] == block_parent[q11])
    q00, q10, q01, q11 = q00[same], q10[same], q01[same], q11[same]
    quartet_pairs = np.stack([pair_of[q00, 0], pair_of[q10, 1], pair_of[q01, 0], pair_of[q00, 1]], axis=1)
    quartet_blocks = np.stack([q00, q10, q11, q01], axis=1)
    return LevelStructure(
        side=(side, side),
        shape=(nb0, nb1),
        vertex_block=vertex_block,
        block_parent=block_parent,
        pair_b1=pair_b1,
        pair_b2=pair_b2,
        pair_axis=pair_axis,
        cross_edge=cross_edge,
        cross_pair=cross_pair,
        quartet_pairs=quartet_pairs,
        quartet_blocks=quartet_blocks,
    )


def build_block_tree(g: GridGraph, schedule: BlockSchedule) -> BlockTree:
    """Materialize every level of the block partition of a 2D free grid."""
    if g.dims != 2 or g.boundary is not Boundary.FREE:
        raise ValueError("multi-scale synchronization needs a 2D grid with free boundary")
    top = schedule.sides[-1]
    if any(L % top for L in g.extents):
        raise ValueError(f"grid sides {list(g.extents)} must be divisible by the top block side {top}")
    sides = list(schedule.sides)
    parents: List[Tuple[int, int]] = [(s, s) for s in sides[1:]]
    if tuple(g.extents) != (top, top):
        parents.append(tuple(g.extents))
    else:
        sides = sides[:-1]
    levels = [_level_structure(g, s, p) for s, p in zip(sides, parents)]
    state = [LevelState(W=np.ones(lv.n_blocks, dtype=np.int8)) for lv in levels]
    return BlockTree(graph=g, schedule=schedule, levels=levels, state=state)


def _choose_components(lv: LevelStructure, clean: np.ndarray) -> np.ndarray:
    """Largest clean connected set per parent; ties go to the smallest block index."""
    keep = clean[lv.pair_b1] & clean[lv.pair_b2]
    n = lv.n_blocks
    adj = sparse.coo_matrix(
        (np.ones(keep.sum()), (lv.pair_b1[keep], lv.pair_b2[keep])), shape=(n, n)
    )
    _, label = connected_components(adj, directed=False)
    cand = np.flatnonzero(clean)
    if cand.size == 0:
        return np.zeros(n, dtype=bool)
    size = np.bincount(label[cand], minlength=label.max() + 1)
    first = np.full(label.max() + 1, n, dtype=np.int64)
    np.minimum.at(first, label[cand], cand)
    comps = np.flatnonzero(size)
    comp_parent = lv.block_parent[first[comps]]
    order = np.lexsort((first[comps], -size[comps], comp_parent))
    chosen_sorted = comps[order]
    par_sorted = comp_parent[order]
    is_first = np.ones(order.size, dtype=bool)
    is_first[1:] = par_sorted[1:] != par_sorted[:-1]
    chosen = np.zeros(label.max() + 1, dtype=bool)
    chosen[chosen_sorted[is_first]] = True
    return clean & chosen[label]


def synchronize_level(inst: Instance, tree: BlockTree, k: int, wtilde: np.ndarray) -> BlockTree:
    """Assign the level-k sync variables inside every level-(k+1) parent."""
    if inst.variant is not Variant.Z2:
        raise ValueError("multi-scale synchronization is implemented for Z2 only")
    lv = tree.levels[k]
    g = tree.graph
    e = lv.cross_edge
    vote = wtilde[g.edge_tail[e]].astype(np.int64) * wtilde[g.edge_head[e]] * inst.obs[e]
    sums = np.bincount(lv.cross_pair, weights=vote, minlength=lv.pair_b1.size)
    pair_sign = np.where(sums >= 0, 1, -1).astype(np.int8)

    qprod = np.prod(pair_sign[lv.quartet_pairs], axis=1) if lv.quartet_pairs.size else np.ones(0)
    incoherent = qprod < 0
    dirty = np.zeros(lv.n_blocks, dtype=bool)
    dirty[lv.quartet_blocks[incoherent].ravel()] = True
    inI = _choose_components(lv, ~dirty)

    # 2-coloring via the doubled graph: node 2b is "W_b = +1", 2b+1 is "W_b = -1"
    use = inI[lv.pair_b1] & inI[lv.pair_b2]
    b1, b2, sgn = lv.pair_b1[use], lv.pair_b2[use], pair_sign[use]
    plus = sgn > 0
    rows = np.concatenate([2 * b1, 2 * b1 + 1])
    cols = np.concatenate([np.where(plus, 2 * b2, 2 * b2 + 1), np.where(plus, 2 * b2 + 1, 2 * b2)])
    n2 = 2 * lv.n_blocks
    _, lab = connected_components(
        sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n2, n2)), directed=False
    )
    n_par = int(lv.block_parent.max()) + 1
    blocks = np.arange(lv.n_blocks)
    root = np.full(n_par, lv.n_blocks, dtype=np.int64)
    np.minimum.at(root, lv.block_parent[inI], blocks[inI])
    W = np.ones(lv.n_blocks, dtype=np.int8)
    r = root[lv.block_parent[inI]]
    W[inI] = np.where(lab[2 * blocks[inI]] == lab[2 * r], 1, -1) * tree.root_sign

    # verify every constraint on I; a parent with any violation fails event H
    bad = (W[b1] * W[b2]) != sgn
    H = np.ones(n_par, dtype=bool)
    H[lv.block_parent[b1[bad]]] = False
    W[~H[lv.block_parent]] = 1

    n_parent_blocks = np.bincount(lv.block_parent, minlength=n_par)
    tree.state[k] = LevelState(
        W=W,
        pair_sign=pair_sign,
        in_component=inI,
        parent_H=H,
        diagnostics={
            "level": k,
            "n_pairs": int(lv.pair_b1.size),
            "incoherent_quartets": int(incoherent.sum()),
            "dirty_blocks": int(dirty.sum()),
            "excluded_blocks": int((~inI).sum()),
            "excluded_fraction": float((~inI).mean()),
            "H_failures": int((~H).sum()),
            "n_parents": n_par,
            "parent_sizes": int(n_parent_blocks.max()),
        },
    )
    return tree


def synchronize(inst: Instance, tree: BlockTree) -> BlockTree:
    """Run every level bottom-up."""
    wt = np.ones(inst.graph.n_vertices, dtype=np.int8)
    for k in range(tree.n_levels):
        synchronize_level(inst, tree, k, wt)
        wt = wt * tree.state[k].W[tree.levels[k].vertex_block]
    return tree


@dataclass
class RecoveryResult:
    pairs: np.ndarray  # (n, 2) vertex indices
    estimate: np.ndarray  # (n,) signs
    success: Optional[np.ndarray]
    diagnostics: List[dict]

    @property
    def success_rate(self) -> float:
        if self.success is None:
            raise ValueError("truth not available")
        return float(np.mean(self.success)) if self.success.size else float("nan")


def _as_index_pairs(g: GridGraph, pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.ndim == 3:  # (n, 2, d) coordinates
        return np.stack([g.vertex_index(arr[:, 0]), g.vertex_index(arr[:, 1])], axis=1)
    return arr.reshape(-1, 2)


def recover_pairs(inst: Instance, tree: BlockTree, pairs, dishonest: Optional[Sequence[int]] = None) -> RecoveryResult:
    """Estimate ``theta_u theta_v`` for each pair from the assigned sync variables.

    ``pairs`` is an ``(n, 2)`` array of vertex indices or ``(n, 2, 2)`` of
    coordinates.  The product over levels stops at the first common block
    automatically because both factors coincide from there on.
    """
    if any(st.pair_sign is None for st in tree.state):
        raise ValueError("block tree has unsynchronized levels; run synchronize() first")
    idx = _as_index_pairs(tree.graph, pairs)
    wt = tree.wtilde()
    est = (wt[idx[:, 0]] * wt[idx[:, 1]]).astype(np.int8)
    success = None
    if inst.truth is not None:
        success = est == inst.truth[idx[:, 0]] * inst.truth[idx[:, 1]]
    diags = [dict(st.diagnostics) for st in tree.state]
    return RecoveryResult(pairs=idx, estimate=est, success=success, diagnostics=diags)


def sample_pairs(g: GridGraph, lo: int, hi: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` vertex pairs ``(u, v)`` with L1 distance uniform in ``[lo, hi]``.

    ``u`` is uniform on the grid, the distance is split uniformly between
    the two axes and the signs are random; draws leaving the grid are
    rejected.
    """
    if g.dims != 2:
        raise ValueError("pair sampling is implemented for 2D grids")
    lo, hi = int(lo), int(hi)
    if not 1 <= lo <= hi or hi > sum(L - 1 for L in g.extents):
        raise ValueError(f"distance band [{lo}, {hi}] does not fit the grid {list(g.extents)}")
    ext = np.asarray(g.extents)
    out = np.empty((0, 2), dtype=np.int64)
    while out.shape[0] < n:
        k = 2 * (n - out.shape[0]) + 16
        u = rng.integers(0, ext, size=(k, 2))
        r = rng.integers(lo, hi + 1, size=k)
        dx = (rng.random(k) * (r + 1)).astype(np.int64)
        step = np.stack([dx, r - dx], axis=1) * np.where(rng.random((k, 2)) < 0.5, -1, 1)
        v = u + step
        ok = np.all((v >= 0) & (v < ext), axis=1)
        pairs = np.stack([g.vertex_index(u[ok]), g.vertex_index(v[ok])], axis=1)
        out = np.concatenate([out, pairs])
    return out[:n]


def run_multiscale(inst: Instance, schedule: BlockSchedule, pairs) -> RecoveryResult:
    tree = build_block_tree(inst.graph, schedule)
    synchronize(inst, tree)
    return recover_pairs(inst, tree, pairs)


# -- truth-side audit ----------------------------------------------------------

def honest_pairs(inst: Instance, lv: LevelStructure, alpha: float) -> np.ndarray:
    """Honesty of every in-parent sub-block adjacency: agreement fraction >= alpha."""
    g = inst.graph
    e = lv.cross_edge
    agree = inst.obs[e] * inst.truth[g.edge_tail[e]] * inst.truth[g.edge_head[e]] > 0
    n_agree = np.bincount(lv.cross_pair, weights=agree, minlength=lv.pair_b1.size)
    return n_agree >= alpha * lv.pair_sizes() - 1e-9


def honesty_probability(p: float, ell: int, alpha: float = 0.9) -> float:
    """Exact ``P(Bin(ell, 1 - p) >= ceil(alpha * ell))``."""
    need = int(np.ceil(alpha * ell - 1e-9))
    return float(binom.sf(need - 1, ell, 1.0 - p))


def audit_good_blocks(inst: Instance, tree: BlockTree) -> List[dict]:
    """Per-level honest-edge and good-block frequencies from the ground truth."""
    if inst.truth is None:
        raise ValueError("audit needs the ground truth")
    alpha, b_max = tree.schedule.alpha, tree.schedule.b_max
    good = np.ones(tree.levels[0].n_blocks, dtype=bool)
    out = []
    for k, lv in enumerate(tree.levels):
        honest = honest_pairs(inst, lv, alpha)
        n_par = int(lv.block_parent.max()) + 1
        n_bad = np.bincount(lv.block_parent, weights=~good, minlength=n_par)
        dishonest = np.bincount(lv.block_parent[lv.pair_b1], weights=~honest, minlength=n_par)
        parent_good = (n_bad <= b_max) & (dishonest == 0)
        sizes = lv.pair_sizes()
        out.append(
            {
                "level": k,
                "sub_block_side": lv.side[0],
                "n_pairs": int(honest.size),
                "pair_size": int(np.median(sizes)) if sizes.size else 0,
                "honest_rate": float(honest.mean()) if honest.size else float("nan"),
                "good_rate": float(good.mean()),
                "parent_good_rate": float(parent_good.mean()),
                "claim1_bound": 1.0 - 2.0 ** (-200 * (k + 1) - 200),
            }
        )
        good = parent_good
    return out

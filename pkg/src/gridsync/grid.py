"""Finite d-dimensional grids and tori with positively oriented edges.

Vertices are stored as dense integers in row-major order with axis 0 varying
fastest, i.e. ``index = sum_i x[i] * prod_{k<i} L[k]``.  Edges are enumerated
axis-major: all edges along axis 0 first, then axis 1, and so on; within one
axis they follow the vertex order of their tail.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np


class Boundary(str, Enum):
    FREE = "free"
    TORUS = "torus"


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Immutable grid graph.  Build it with :func:`build_grid`."""

    extents: Tuple[int, ...]
    boundary: Boundary
    edge_tail: np.ndarray = field(repr=False)
    edge_head: np.ndarray = field(repr=False)
    edge_axis: np.ndarray = field(repr=False)
    axis_offset: Tuple[int, ...] = field(repr=False)

    @property
    def dims(self) -> int:
        return len(self.extents)

    @property
    def n_vertices(self) -> int:
        return int(np.prod(self.extents))

    @property
    def n_edges(self) -> int:
        return int(self.edge_tail.shape[0])

    @property
    def strides(self) -> np.ndarray:
        return np.concatenate(([1], np.cumprod(self.extents[:-1]))).astype(np.int64)

    # -- coordinates -------------------------------------------------------
    def vertex_index(self, coords) -> np.ndarray | int:
        """Dense index of one coordinate vector or of an ``(..., d)`` array."""
        c = np.asarray(coords, dtype=np.int64)
        idx = c @ self.strides
        return int(idx) if c.ndim == 1 else idx

    def coords(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=np.int64)
        out = np.empty(idx.shape + (self.dims,), dtype=np.int64)
        rest = idx.copy()
        for i, L in enumerate(self.extents):
            out[..., i] = rest % L
            rest = rest // L
        return out

    def contains(self, coords) -> bool:
        c = np.asarray(coords)
        return bool(np.all((c >= 0) & (c < np.asarray(self.extents)), axis=-1).all())

    # -- edges -------------------------------------------------------------
    def edge_index(self, tail, axis) -> np.ndarray | int:
        """Index of the edge leaving ``tail`` in the positive ``axis`` direction.

        Vectorized over a leading batch dimension of ``tail``/``axis``.  The
        caller is responsible for the edge existing (see :meth:`has_edge`).
        """
        t = np.asarray(tail, dtype=np.int64)
        a = np.asarray(axis, dtype=np.int64)
        scalar = t.ndim == 1
        t = np.atleast_2d(t)
        a = np.broadcast_to(a, t.shape[:-1])
        ext = np.asarray(self.extents, dtype=np.int64)
        offs = np.asarray(self.axis_offset, dtype=np.int64)
        if self.boundary is Boundary.TORUS:
            local = t @ self.strides
        else:
            # tails along axis j live in a box whose j-th side is L_j - 1
            red = np.broadcast_to(ext, t.shape).copy()
            red[np.arange(t.shape[0]), a] -= 1
            strides = np.concatenate(
                (np.ones((t.shape[0], 1), dtype=np.int64), np.cumprod(red[:, :-1], axis=1)), axis=1
            )
            local = np.sum(t * strides, axis=1)
        out = offs[a] + local
        return int(out[0]) if scalar else out

    def has_edge(self, tail, axis: int) -> bool:
        t = np.asarray(tail)
        if not self.contains(t):
            return False
        return self.boundary is Boundary.TORUS or t[axis] < self.extents[axis] - 1

    def edge_endpoints(self, e: int) -> Tuple[np.ndarray, np.ndarray]:
        return self.coords(self.edge_tail[e]), self.coords(self.edge_head[e])

    def degree(self) -> np.ndarray:
        deg = np.bincount(self.edge_tail, minlength=self.n_vertices)
        return deg + np.bincount(self.edge_head, minlength=self.n_vertices)

    def describe(self) -> dict:
        return {"dims": self.dims, "extents": list(self.extents), "boundary": self.boundary.value}


# vertex budget: coordinates and edge arrays stay within a few GiB
MAX_VERTICES = 1 << 27


def build_grid(d: int, extents: Sequence[int] | int, boundary: Boundary | str = Boundary.FREE) -> GridGraph:
    """Build a ``d``-dimensional grid or torus.

    ``extents`` may be a single int (a cube) or one side length per axis.
    Every side must be at least 2.
    """
    if int(d) < 1:
        raise ValueError(f"grid dimension must satisfy d >= 1, got {d}")
    d = int(d)
    if np.isscalar(extents):
        extents = [int(extents)] * d
    ext = tuple(int(x) for x in extents)
    if len(ext) != d:
        raise ValueError(f"expected {d} extents, got {len(ext)}")
    if min(ext) < 2:
        raise ValueError(f"every extent must be >= 2, got {list(ext)}")
    boundary = Boundary(boundary)

    n = 1
    for x in ext:
        n *= x
    if n > MAX_VERTICES:
        raise ValueError(f"grid {list(ext)} has {n} vertices, above the limit {MAX_VERTICES}")
    strides = np.concatenate(([1], np.cumprod(ext[:-1]))).astype(np.int64)
    all_v = np.arange(n, dtype=np.int64)
    coords = np.stack([(all_v // strides[i]) % ext[i] for i in range(d)], axis=1)

    tails, heads, axes, offsets = [], [], [], []
    count = 0
    for j in range(d):
        offsets.append(count)
        if boundary is Boundary.TORUS:
            t = all_v
            hc = coords.copy()
            hc[:, j] = (hc[:, j] + 1) % ext[j]
        else:
            t = all_v[coords[:, j] < ext[j] - 1]
            hc = coords[coords[:, j] < ext[j] - 1].copy()
            hc[:, j] += 1
        tails.append(t)
        heads.append(hc @ strides)
        axes.append(np.full(t.shape[0], j, dtype=np.int64))
        count += t.shape[0]

    return GridGraph(
        extents=ext,
        boundary=boundary,
        edge_tail=np.concatenate(tails),
        edge_head=np.concatenate(heads),
        edge_axis=np.concatenate(axes),
        axis_offset=tuple(offsets),
    )


def edge_between(g: GridGraph, x, y) -> Optional[Tuple[int, bool]]:
    """Return ``(edge index, forward)`` for adjacent ``x``, ``y`` or ``None``.

    ``forward`` is True when ``(x, y)`` matches the stored orientation.
    """
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if not (g.contains(x) and g.contains(y)):
        return None
    diff = y - x
    ext = np.asarray(g.extents)
    if g.boundary is Boundary.TORUS:
        for j in range(g.dims):
            step = np.zeros(g.dims, dtype=np.int64)
            step[j] = 1
            if np.array_equal((x + step) % ext, y):
                return g.edge_index(x, j), True
            if np.array_equal((y + step) % ext, x):
                return g.edge_index(y, j), False
        return None
    nz = np.flatnonzero(diff)
    if nz.size != 1 or abs(diff[nz[0]]) != 1:
        return None
    j = int(nz[0])
    if diff[j] == 1:
        return g.edge_index(x, j), True
    return g.edge_index(y, j), False


def graph_distance(g: GridGraph, x, y) -> int:
    """L1 distance, with wraparound on a torus."""
    diff = np.abs(np.asarray(x, dtype=np.int64) - np.asarray(y, dtype=np.int64))
    if g.boundary is Boundary.TORUS:
        diff = np.minimum(diff, np.asarray(g.extents) - diff)
    return int(diff.sum())

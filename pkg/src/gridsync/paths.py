"""Path-averaging estimators of relative group elements on grids with d >= 3.

A path estimate of ``theta_x^{-1} theta_y`` is the ordered product of edge
observations along an increasing path, rescaled by ``lambda^{-length}``;
averaging over many random paths keeps it unbiased and, when independent
paths rarely share edges, shrinks its variance.  Averages are taken in the
raw linear embedding of the group and projected only at the end.

Paths are generated in a canonical frame: a sequence of axis labels in
``{0, 1, 2}`` describing unit steps from the origin toward a target with
nonnegative coordinates.  A :class:`Frame` places such a path in the grid
(origin vertex, the three grid axes used and a sign per axis).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .channels import Instance, lambda_for_channel
from .grid import Boundary, GridGraph
from .groups import (
    REORTH_EVERY,
    GroupElement,
    Variant,
    embed,
    polar,
    project_raw_array,
    raw_misalignment,
)

# paths are drawn and multiplied in chunks of this many, each with its own RNG stream
PATH_CHUNK = 256


# -- path measures -----------------------------------------------------------

@dataclass(frozen=True)
class UniformMonotone:
    """Uniformly random interleaving of the required axis steps."""

    kind = "uniform"


@dataclass(frozen=True)
class HierarchicalSplit:
    """Recursive midpoint splitting with randomly tilted halves.

    A segment of ``M`` steps is split into its first ``floor(M/2)`` and last
    ``ceil(M/2)`` steps.  Which steps go to the first half is decided by
    sorting them on ``U + b_axis`` with ``U`` uniform and one tilt
    ``b_axis ~ Uniform(-spread, spread)`` per axis and segment, so each half
    leans toward some axes and paths wander off the diagonal.  Halves are
    split again until single steps remain.  ``spread = 0`` gives the uniform
    interleaving.
    """

    spread: float = 0.3
    kind = "hierarchical"

    def __post_init__(self):
        if not 0 <= self.spread < 0.5:
            raise ValueError(f"spread must lie in [0, 1/2), got {self.spread}")


PathMeasure = Union[UniformMonotone, HierarchicalSplit]


def measure_from_name(name: str, **kw) -> PathMeasure:
    if name in ("uniform", "UniformMonotone"):
        return UniformMonotone()
    if name in ("hierarchical", "HierarchicalSplit"):
        return HierarchicalSplit(**kw)
    raise ValueError(f"unknown path measure {name!r}")


def _labels_for(target: Sequence[int]) -> np.ndarray:
    t = np.asarray(target, dtype=np.int64)
    if np.any(t < 0):
        raise ValueError(f"target must have nonnegative coordinates, got {list(t)}")
    return np.repeat(np.arange(t.size), t)


def sample_labels(measure: PathMeasure, target: Sequence[int], size: int, rng: np.random.Generator) -> np.ndarray:
    """``(size, |target|_1)`` axis labels of increasing paths from 0 to ``target``."""
    base = _labels_for(target)
    M = base.size
    if M == 0:
        return np.zeros((size, 0), dtype=np.int64)
    if isinstance(measure, UniformMonotone):
        order = np.argsort(rng.random((size, M)), axis=1)
        return base[order]
    if isinstance(measure, HierarchicalSplit):
        return _hierarchical_labels(np.asarray(target, dtype=np.int64), size, measure.spread, rng)
    raise TypeError(f"unsupported path measure {measure!r}")


def _hierarchical_labels(target: np.ndarray, size: int, spread: float, rng) -> np.ndarray:
    d = target.size
    lab = np.broadcast_to(_labels_for(target), (size, int(target.sum()))).copy()
    M = lab.shape[1]
    rows = np.arange(size)[:, None]
    bounds = [(0, M)]
    while any(e - s > 1 for s, e in bounds):
        block = np.empty(M, dtype=np.int64)
        for i, (s, e) in enumerate(bounds):
            block[s:e] = i
        tilt = rng.uniform(-spread, spread, size=(size, len(bounds), d))
        key = rng.random((size, M)) + tilt[rows, block[None, :], lab]
        key = (key + spread) / (1.0 + 2.0 * spread + 1e-9)  # into [0, 1)
        order = np.argsort(block[None, :] + key, axis=1, kind="stable")
        lab = lab[rows, order]
        nxt = []
        for s, e in bounds:
            if e - s > 1:
                mid = s + (e - s) // 2
                nxt += [(s, mid), (mid, e)]
            else:
                nxt.append((s, e))
        bounds = nxt
    return lab


# -- path samples ------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """Placement of canonical paths in a grid (usually three axes)."""

    origin: Tuple[int, ...]
    axes: Tuple[int, int, int] = (0, 1, 2)
    signs: Tuple[int, int, int] = (1, 1, 1)

    def steps(self, d: int) -> np.ndarray:
        """``(3, d)`` grid displacement of one canonical step along each label."""
        out = np.zeros((len(self.axes), d), dtype=np.int64)
        for a, (ax, s) in enumerate(zip(self.axes, self.signs)):
            out[a, ax] = s
        return out

    def place(self, canonical) -> np.ndarray:
        c = np.asarray(canonical, dtype=np.int64)
        return np.asarray(self.origin, dtype=np.int64) + c @ self.steps(len(self.origin))


@dataclass
class PathSample:
    """One directed path: its edges, traversal flags and endpoints."""

    edges: np.ndarray
    forward: np.ndarray
    start: np.ndarray
    end: np.ndarray
    labels: np.ndarray = field(default=None, repr=False)

    @property
    def steps(self) -> List[Tuple[int, bool]]:
        return [(int(e), bool(f)) for e, f in zip(self.edges, self.forward)]

    def __len__(self) -> int:
        return int(self.edges.size)


def _walk(g: GridGraph, frame: Frame, labels: np.ndarray):
    """Edge indices, traversal flags and vertex coordinates for batched label sequences."""
    labels = np.atleast_2d(labels)
    P, M = labels.shape
    d = g.dims
    step = frame.steps(d)[labels] if M else np.zeros((P, 0, d), dtype=np.int64)
    pos = np.concatenate(
        [np.broadcast_to(np.asarray(frame.origin, dtype=np.int64), (P, 1, d)), np.cumsum(step, axis=1) + np.asarray(frame.origin)],
        axis=1,
    )
    ext = np.asarray(g.extents)
    if g.boundary is Boundary.TORUS:
        pos = pos % ext
    elif np.any(pos < 0) or np.any(pos >= ext):
        raise ValueError("path leaves the grid")
    if M == 0:
        return np.zeros((P, 0), dtype=np.int64), np.zeros((P, 0), dtype=bool), pos
    sign = np.asarray(frame.signs)[labels]
    axis = np.asarray(frame.axes)[labels]
    fwd = sign > 0
    tail = np.where(fwd[..., None], pos[:, :-1], pos[:, 1:])
    edges = g.edge_index(tail.reshape(-1, d), axis.reshape(-1)).reshape(P, M)
    return edges, fwd, pos


def make_path(g: GridGraph, labels, frame: Optional[Frame] = None) -> PathSample:
    frame = frame or Frame(origin=(0,) * g.dims)
    lab = np.asarray(labels, dtype=np.int64).reshape(1, -1)
    edges, fwd, pos = _walk(g, frame, lab)
    return PathSample(edges=edges[0], forward=fwd[0], start=pos[0, 0], end=pos[0, -1], labels=lab[0])


def sample_increasing_path(
    measure: PathMeasure, target: Sequence[int], rng: np.random.Generator, g: Optional[GridGraph] = None
) -> PathSample:
    """Draw one increasing path from the origin to ``target``.

    Without a graph the returned sample carries labels and endpoints only.
    """
    lab = sample_labels(measure, target, 1, rng)[0]
    if g is not None:
        k = len(target)
        return make_path(g, lab, Frame(origin=(0,) * g.dims, axes=tuple(range(k)), signs=(1,) * k))
    end = np.bincount(lab, minlength=len(target)) if lab.size else np.zeros(len(target), dtype=np.int64)
    return PathSample(
        edges=np.zeros(0, dtype=np.int64), forward=np.zeros(0, dtype=bool),
        start=np.zeros(len(target), dtype=np.int64), end=end, labels=lab,
    )


def reflect_labels(prefix: np.ndarray, n: int) -> np.ndarray:
    """Complete batched prefixes that stop on ``x1 + x2 + x3 = 3n/2`` into paths to ``(n, n, n)``.

    The completion retraces the prefix steps in reverse order, which is the
    point reflection ``x -> (n, n, n) - x`` of the reversed prefix and is exact
    when the prefix ends at the center.  Otherwise a step whose axis has no
    remaining budget is replaced by the axis with the most remaining budget
    (ties to the lowest axis), so the completed path is increasing and ends
    at ``(n, n, n)``.
    """
    prefix = np.atleast_2d(np.asarray(prefix, dtype=np.int64))
    if n % 2:
        raise ValueError(f"reflection completion needs even n, got {n}")
    P, h = prefix.shape
    if h != 3 * n // 2:
        raise ValueError(f"prefix endpoint must lie on x1+x2+x3 = {3 * n // 2}, got length {h}")
    counts = np.stack([(prefix == a).sum(axis=1) for a in range(3)], axis=1)
    if np.any(counts > n):
        raise ValueError(f"prefix leaves the box [0, {n}]^3")
    budget = n - counts
    rows = np.arange(P)
    tail = np.empty_like(prefix)
    for k in range(h):
        want = prefix[:, h - 1 - k]
        ok = budget[rows, want] > 0
        # argmax picks the lowest axis among ties
        alt = np.argmax(budget, axis=1)
        lab = np.where(ok, want, alt)
        tail[:, k] = lab
        budget[rows, lab] -= 1
    return np.concatenate([prefix, tail], axis=1)


def reflect_complete(prefix: PathSample, n: int, g: Optional[GridGraph] = None) -> PathSample:
    """Extend an increasing prefix ending on ``H(n)`` to a path ending at ``(n, n, n)``."""
    if prefix.labels is None:
        raise ValueError("prefix carries no step labels")
    start = np.asarray(prefix.start)
    end = np.asarray(prefix.end)
    if int((end - start).sum()) * 2 != 3 * n:
        raise ValueError(f"prefix endpoint {list(end - start)} is not on x1+x2+x3 = 3n/2 for n={n}")
    lab = reflect_labels(prefix.labels[None, :], n)[0]
    if g is not None:
        return make_path(g, lab, Frame(origin=tuple(int(v) for v in start)))
    return PathSample(
        edges=np.zeros(0, dtype=np.int64), forward=np.zeros(0, dtype=bool),
        start=start, end=start + n, labels=lab,
    )


def sample_diagonal_labels(measure: PathMeasure, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Reflected paths to ``(n, n, n)``: draw toward the corner, stop on ``H(n)``, complete."""
    if n % 2 or n < 0:
        raise ValueError(f"diagonal paths need a nonnegative even n, got {n}")
    if n == 0:
        return np.zeros((size, 0), dtype=np.int64)
    full = sample_labels(measure, (n, n, n), size, rng)
    return reflect_labels(full[:, : 3 * n // 2], n)


# -- products ----------------------------------------------------------------

def _batched_products(inst: Instance, edges: np.ndarray, fwd: np.ndarray) -> np.ndarray:
    """Raw-embedded ordered products ``Y_{e1} Y_{e2} ...`` for each row of ``edges``."""
    v = inst.variant
    P, M = edges.shape
    if v is Variant.Z2:
        return np.prod(inst.obs[edges].astype(np.float64), axis=1) if M else np.ones(P)
    if v is Variant.U1:
        ang = np.where(fwd, inst.obs[edges], -inst.obs[edges]).sum(axis=1) if M else np.zeros(P)
        return np.exp(1j * ang)
    m = inst.m
    out = np.broadcast_to(np.eye(m), (P, m, m)).copy()
    for k in range(M):
        Y = inst.obs[edges[:, k]]
        Y = np.where(fwd[:, k, None, None], Y, np.swapaxes(Y, -1, -2))
        out = out @ Y
        if (k + 1) % REORTH_EVERY == 0:
            out = polar(out)
    return out


def path_product(inst: Instance, path: PathSample) -> GroupElement:
    """Ordered product of the observations along ``path`` as a group element."""
    edges = np.asarray(path.edges, dtype=np.int64)[None, :]
    fwd = np.asarray(path.forward, dtype=bool)[None, :]
    if edges.size and (edges.max() >= inst.graph.n_edges or edges.min() < 0):
        raise ValueError("path leaves the grid")
    raw = _batched_products(inst, edges, fwd)[0]
    return _element(inst.variant, project_raw_array(inst.variant, raw))


# -- estimators --------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorParams:
    n_paths: int = 64
    measure: PathMeasure = UniformMonotone()
    lam: Optional[float] = None  # None: the channel's lambda
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


@dataclass
class EstimatorReport:
    """Raw and projected estimate of ``theta_x^{-1} theta_y``."""

    variant: Variant
    start: np.ndarray
    end: np.ndarray
    raw: np.ndarray
    estimate: GroupElement
    n_paths: int
    lambda_used: float
    misalignment: float  # |theta_x T theta_y^{-1} - I|_F^2 of the raw estimate
    misalignment_projected: float
    product_bound_ok: bool = True
    legs: List["EstimatorReport"] = field(default_factory=list, repr=False)

    @property
    def success(self) -> bool:
        """Projected estimate equals the truth (up to round-off for continuous groups)."""
        return self.misalignment_projected < 1e-9 if self.variant is Variant.Z2 else self.misalignment_projected < 1e-6


def _resolve_lambda(inst: Instance, lam: Optional[float]) -> float:
    if lam is None:
        lam = lambda_for_channel(inst.channel).value
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return float(lam)


def _element(v: Variant, payload) -> GroupElement:
    return GroupElement(v, payload if v is Variant.ORTH else np.asarray(payload).item())


def _report(inst: Instance, x: np.ndarray, y: np.ndarray, raw, n_paths: int, lam: float, legs=(), bound_ok=True):
    g = inst.graph
    v = inst.variant
    a = inst.truth[g.vertex_index(x)]
    b = inst.truth[g.vertex_index(y)]
    proj = project_raw_array(v, raw)
    mis = float(raw_misalignment(v, a, raw, b))
    mis_p = float(raw_misalignment(v, a, embed(v, proj), b))
    return EstimatorReport(
        variant=v, start=np.asarray(x), end=np.asarray(y), raw=np.asarray(raw), estimate=_element(v, proj),
        n_paths=n_paths, lambda_used=lam, misalignment=mis, misalignment_projected=mis_p,
        product_bound_ok=bound_ok, legs=list(legs),
    )


def diagonal_raw(
    inst: Instance, frame: Frame, n: int, n_paths: int, measure: PathMeasure, lam: float, rng: np.random.Generator
) -> np.ndarray:
    """``lambda^{-3n}`` times the mean product over ``n_paths`` reflected paths in ``frame``."""
    total = None
    done = 0
    for chunk_rng, size in _chunks(rng, n_paths):
        labels = sample_diagonal_labels(measure, n, size, chunk_rng)
        edges, fwd, _ = _walk(inst.graph, frame, labels)
        s = _batched_products(inst, edges, fwd).sum(axis=0)
        total = s if total is None else total + s
        done += size
    return total / done * lam ** (-3.0 * n)


def _chunks(rng: np.random.Generator, n: int):
    """Fixed-size chunks, each with a child generator seeded from ``rng``."""
    left = n
    while left > 0:
        size = min(PATH_CHUNK, left)
        yield np.random.default_rng(int(rng.integers(0, 2**63 - 1))), size
        left -= size


def _require_3d(g: GridGraph):
    if g.dims < 3:
        raise ValueError(f"path estimators need d >= 3, got d={g.dims}")


def _fits(g: GridGraph, pts: np.ndarray) -> bool:
    if g.boundary is Boundary.TORUS:
        return True
    return bool(np.all(pts >= 0) and np.all(pts < np.asarray(g.extents)))


def estimate_diagonal(
    inst: Instance,
    n: int,
    n_paths: int = 64,
    measure: PathMeasure = UniformMonotone(),
    lam: Optional[float] = None,
    rng: Optional[np.random.Generator] = None,
    frame: Optional[Frame] = None,
) -> EstimatorReport:
    """Estimate ``theta_0^{-1} theta_{u(n)}`` for ``u(n) = (n, n, n)`` in ``frame``."""
    g = inst.graph
    _require_3d(g)
    lam = _resolve_lambda(inst, lam)
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    frame = frame or Frame(origin=(0,) * g.dims)
    x = np.asarray(frame.origin, dtype=np.int64)
    y = frame.place((n, n, n))
    if not (_fits(g, x) and _fits(g, y)):
        raise ValueError(f"grid {g.extents} too small for a diagonal of side {n} from {list(x)}")
    rng = rng if rng is not None else np.random.default_rng()
    raw = diagonal_raw(inst, frame, n, n_paths, measure, lam, rng)
    if g.boundary is Boundary.TORUS:
        y = y % np.asarray(g.extents)
    return _report(inst, x, y, raw, n_paths, lam)


def _compose_raw(variant: Variant, a, b):
    if variant is Variant.ORTH:
        return np.asarray(a) @ np.asarray(b)
    return a * b


def _single_edge_raw(inst: Instance, x: np.ndarray, axis: int, sign: int, lam: float):
    frame = Frame(origin=tuple(int(v) for v in x), axes=(axis, axis, axis), signs=(sign, sign, sign))
    edges, fwd, _ = _walk(inst.graph, frame, np.zeros((1, 1), dtype=np.int64))
    return _batched_products(inst, edges, fwd)[0] / lam


def _frob(variant: Variant, a, raw, b) -> float:
    return float(np.sqrt(raw_misalignment(variant, a, raw, b)))


def _compose_reports(inst: Instance, x, y, legs: List[Tuple[np.ndarray, np.ndarray, object]], n_paths, lam, sublegs):
    """Multiply raw leg estimates in order and check the product inequality."""
    v = inst.variant
    g = inst.graph
    raw = embed(v, _identity_payload(v, inst.m))
    bound_ok = True
    acc_bound = 1.0
    for a, b, leg_raw in legs:
        raw = _compose_raw(v, raw, leg_raw)
        ta = inst.truth[g.vertex_index(a)]
        tb = inst.truth[g.vertex_index(b)]
        acc_bound *= 1.0 + _frob(v, ta, leg_raw, tb)
        lhs = 1.0 + _frob(v, inst.truth[g.vertex_index(x)], raw, tb)
        bound_ok &= lhs <= acc_bound * (1 + 1e-9) + 1e-9
    rep = _report(inst, x, y, raw, n_paths, lam, legs=sublegs, bound_ok=bound_ok and all(s.product_bound_ok for s in sublegs))
    return rep


def _identity_payload(v: Variant, m: int):
    if v is Variant.Z2:
        return 1.0
    if v is Variant.U1:
        return 0.0
    return np.eye(m)


def _detour(g: GridGraph, x: np.ndarray, j: int, half: int) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    others = [a for a in range(g.dims) if a != j][:2]
    signs = []
    for a in others:
        if g.boundary is Boundary.TORUS or x[a] + half < g.extents[a]:
            signs.append(1)
        elif x[a] - half >= 0:
            signs.append(-1)
        else:
            raise ValueError(f"grid too small: no room for a detour of {half} along axis {a} from {list(x)}")
    return tuple(others), tuple(signs)


def estimate_axis(
    inst: Instance,
    j: int,
    n: int,
    params: EstimatorParams = EstimatorParams(),
    origin=None,
    sign: int = 1,
    rng: Optional[np.random.Generator] = None,
) -> EstimatorReport:
    """Estimate ``theta_x^{-1} theta_{x + sign * n * e_j}`` by two diagonal legs through a midpoint.

    With ``n = 4q + r`` the legs cover ``4q`` steps: the first goes to the
    midpoint ``w = x + 2q (sign e_j + s_1 e_a + s_2 e_b)`` over detour axes
    ``a, b`` and the second from ``w`` to ``x + 4q sign e_j``.  The remaining
    ``r`` steps use single-edge observations divided by ``lambda``, each an
    unbiased factor on its own.
    """
    g = inst.graph
    _require_3d(g)
    if not 0 <= j < g.dims:
        raise ValueError(f"axis {j} out of range for d={g.dims}")
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    lam = _resolve_lambda(inst, params.lam)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    x = np.zeros(g.dims, dtype=np.int64) if origin is None else np.asarray(origin, dtype=np.int64)
    y = x.copy()
    y[j] += sign * n
    if not (_fits(g, x) and _fits(g, y)):
        raise ValueError(f"grid {g.extents} too small for an axis step of {n} from {list(x)}")

    q, r = divmod(n, 4)
    legs: List[Tuple[np.ndarray, np.ndarray, object]] = []
    sub: List[EstimatorReport] = []
    cur = x.copy()
    if q:
        half = 2 * q
        (a, b), (sa, sb) = _detour(g, x, j, half)
        f1 = Frame(origin=tuple(int(t) for t in x), axes=(j, a, b), signs=(sign, sa, sb))
        w = f1.place((half, half, half))
        f2 = Frame(origin=tuple(int(t) for t in w), axes=(j, a, b), signs=(sign, -sa, -sb))
        end = f2.place((half, half, half))
        for f, s, e in ((f1, x, w), (f2, w, end)):
            raw = diagonal_raw(inst, f, half, params.n_paths, params.measure, lam, rng)
            legs.append((s % np.asarray(g.extents) if g.boundary is Boundary.TORUS else s,
                         e % np.asarray(g.extents) if g.boundary is Boundary.TORUS else e, raw))
            sub.append(_report(inst, legs[-1][0], legs[-1][1], raw, params.n_paths, lam))
        cur = end
    for _ in range(r):
        nxt = cur.copy()
        nxt[j] += sign
        raw = _single_edge_raw(inst, cur, j, sign, lam)
        wrap = (lambda z: z % np.asarray(g.extents)) if g.boundary is Boundary.TORUS else (lambda z: z)
        legs.append((wrap(cur), wrap(nxt), raw))
        cur = nxt
    if g.boundary is Boundary.TORUS:
        y = y % np.asarray(g.extents)
    return _compose_reports(inst, x, y, legs, params.n_paths, lam, sub)


def estimate_pair(
    inst: Instance,
    x,
    y,
    params: EstimatorParams = EstimatorParams(),
    rng: Optional[np.random.Generator] = None,
) -> EstimatorReport:
    """Estimate ``theta_x^{-1} theta_y`` along the staircase ``x -> w(1) -> ... -> y``.

    ``w(j)`` agrees with ``y`` on the first ``j`` axes and with ``x`` on the
    rest; each stair is an axis estimate.
    """
    g = inst.graph
    _require_3d(g)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if not (g.contains(x) and g.contains(y)):
        raise ValueError("pair endpoints must lie in the grid")
    lam = _resolve_lambda(inst, params.lam)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    legs = []
    sub = []
    cur = x.copy()
    for j in range(g.dims):
        delta = int(y[j] - x[j])
        if delta == 0:
            continue
        rep = estimate_axis(inst, j, abs(delta), EstimatorParams(params.n_paths, params.measure, lam, params.seed),
                            origin=cur, sign=1 if delta > 0 else -1, rng=rng)
        nxt = cur.copy()
        nxt[j] = y[j]
        legs.append((cur, nxt, rep.raw))
        sub.append(rep)
        cur = nxt
    return _compose_reports(inst, x, y, legs, params.n_paths, lam, sub)


# -- intersection tails ------------------------------------------------------

@dataclass
class EITReport:
    n: int
    measure: str
    counts: np.ndarray  # shared directed edges per sampled pair
    k: np.ndarray
    tail: np.ndarray  # empirical P(X >= k)
    beta_hat: float
    geometric: bool  # log-tail close to linear over the fitted range
    fit_range: Tuple[int, int]

    def moment(self, lam: float) -> Tuple[float, float]:
        """Monte Carlo ``E[lambda^{-2X}]`` and its standard error."""
        w = lam ** (-2.0 * self.counts)
        return float(w.mean()), float(w.std(ddof=1) / np.sqrt(w.size))

    def rows(self) -> List[dict]:
        return [{"k": int(k), "tail": float(t)} for k, t in zip(self.k, self.tail)]


def shared_edges(labels1: np.ndarray, labels2: np.ndarray) -> np.ndarray:
    """Common directed edges of paired increasing paths from the same origin.

    Increasing paths can only share an edge at the same position, so this
    counts positions where both paths sit at the same vertex and step along
    the same axis.
    """
    labels1 = np.atleast_2d(labels1)
    labels2 = np.atleast_2d(labels2)
    if labels1.shape[1] == 0:
        return np.zeros(labels1.shape[0], dtype=np.int64)
    d = int(max(labels1.max(), labels2.max())) + 1
    oh1 = np.eye(d, dtype=np.int64)[labels1]
    oh2 = np.eye(d, dtype=np.int64)[labels2]
    pos1 = np.cumsum(oh1, axis=1) - oh1
    pos2 = np.cumsum(oh2, axis=1) - oh2
    same = np.all(pos1 == pos2, axis=2) & (labels1 == labels2)
    return same.sum(axis=1)


def eit_diagnostic(
    measure: PathMeasure,
    n: int,
    n_pairs: int,
    rng: np.random.Generator,
    target: Optional[Sequence[int]] = None,
    k_max: int = 20,
) -> EITReport:
    """Empirical intersection tail of i.i.d. path pairs.

    By default pairs are the reflected diagonal paths used by the estimator;
    ``target`` switches to plain increasing paths to an arbitrary endpoint.
    """
    if n_pairs < 1000:
        raise ValueError(f"n_pairs must be >= 1000, got {n_pairs}")
    X = np.empty(n_pairs, dtype=np.int64)
    done = 0
    while done < n_pairs:
        size = min(4096, n_pairs - done)
        if target is None:
            l1 = sample_diagonal_labels(measure, n, size, rng)
            l2 = sample_diagonal_labels(measure, n, size, rng)
        else:
            l1 = sample_labels(measure, target, size, rng)
            l2 = sample_labels(measure, target, size, rng)
        X[done : done + size] = shared_edges(l1, l2)
        done += size
    k = np.arange(0, int(X.max()) + 1)
    tail = np.array([(X >= kk).mean() for kk in k])
    beta_hat, geometric, rng_fit = _fit_tail(k, tail, n_pairs, k_max)
    return EITReport(
        n=n, measure=getattr(measure, "kind", str(measure)), counts=X, k=k, tail=tail,
        beta_hat=beta_hat, geometric=geometric, fit_range=rng_fit,
    )


def _fit_tail(k: np.ndarray, tail: np.ndarray, n_pairs: int, k_max: int):
    # use k >= 1 with at least ~20 expected exceedances
    ok = (k >= 1) & (k <= k_max) & (tail * n_pairs >= 20)
    if ok.sum() < 2:
        return float("nan"), False, (0, 0)
    kk, lt = k[ok], np.log(tail[ok])
    slope, icpt = np.polyfit(kk, lt, 1)
    resid = lt - (slope * kk + icpt)
    geometric = bool(np.max(np.abs(resid)) < 0.25)
    return float(np.exp(slope)), geometric, (int(kk[0]), int(kk[-1]))


def predicted_second_moment(eit: EITReport, lam: float, n: int, n_paths: int) -> float:
    """``E|theta_0 T theta_u^{-1}|^2`` for a Z2 average of ``n_paths`` i.i.d. paths.

    Distinct paths contribute ``E[lambda^{-2X}]`` and each path paired with
    itself contributes ``lambda^{-6n}``.
    """
    same = lam ** (-6.0 * n)
    cross, _ = eit.moment(lam)
    return same / n_paths + (1.0 - 1.0 / n_paths) * cross


def lambda_sensitivity(
    inst: Instance, n: int, lam_grid: Sequence[float], n_paths: int = 64,
    measure: PathMeasure = UniformMonotone(), seed: int = 0,
) -> List[dict]:
    """Raw misalignment of the diagonal estimate when a mismatched lambda is plugged in.

    The same paths are reused for every lambda so only the rescaling differs.
    """
    true_lam = _resolve_lambda(inst, None)
    base = estimate_diagonal(inst, n, n_paths, measure, true_lam, np.random.default_rng(seed))
    out = []
    g = inst.graph
    a = inst.truth[g.vertex_index(base.start)]
    b = inst.truth[g.vertex_index(base.end)]
    for lam in lam_grid:
        raw = base.raw * (true_lam / lam) ** (3 * n)
        out.append({"lambda": float(lam), "misalignment": float(raw_misalignment(inst.variant, a, raw, b))})
    return out

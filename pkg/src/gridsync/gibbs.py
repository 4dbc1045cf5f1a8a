"""Heat-bath sampling of the random-bond Ising posterior on the Nishimori line.

The chain targets ``mu(sigma) ~ exp(beta * sum_{(x,y)} Y_xy sigma_x sigma_y)``.
Sites are updated in checkerboard order (parity of the coordinate sum), which
requires even side lengths on a torus.  Many independent disorder samples can
be advanced together: spins are stored as an ``(R, N)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np

from .channels import Instance, TruthMode, Z2Flip, generate_instance
from .grid import Boundary, GridGraph, build_grid
from .groups import Variant


def nishimori_beta(p: float) -> float:
    """Inverse temperature that turns the Ising measure into the Bayes posterior."""
    if not 0 < p < 0.5:
        raise ValueError(f"Nishimori line needs p in (0, 1/2), got {p}")
    return float(0.5 * np.log((1.0 - p) / p))


@dataclass(frozen=True)
class GibbsParams:
    p: float
    beta: Optional[float] = None  # None -> Nishimori value
    sweeps: int = 1000
    burn_in: int = 100
    stride: int = 5
    seed: int = 0
    init: str = "truth"  # "truth", "random" or "plus"
    n_temps: int = 1  # > 1 adds replica exchange over a ladder ending at beta
    beta_min: float = 0.3

    def __post_init__(self):
        if not 0 < self.p < 0.5:
            raise ValueError(f"flip probability must satisfy p in (0, 1/2), got {self.p}")
        if self.sweeps < 1 or self.burn_in < 0 or self.stride < 1:
            raise ValueError("need sweeps >= 1, burn_in >= 0 and stride >= 1")
        if self.burn_in >= self.sweeps:
            raise ValueError(f"burn_in ({self.burn_in}) must be smaller than sweeps ({self.sweeps})")
        if self.init not in ("truth", "random", "plus"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.n_temps < 1:
            raise ValueError(f"n_temps must be >= 1, got {self.n_temps}")

    @property
    def effective_beta(self) -> float:
        return nishimori_beta(self.p) if self.beta is None else float(self.beta)


@dataclass
class _Lattice:
    nbr: np.ndarray  # (N, 2d) neighbor vertex, self-loop padding where missing
    nbr_edge: np.ndarray  # (N, 2d) edge id, -1 where missing
    colors: Tuple[np.ndarray, np.ndarray]


def _lattice(g: GridGraph) -> _Lattice:
    if g.boundary is Boundary.TORUS and any(L % 2 for L in g.extents):
        raise ValueError("checkerboard updates on a torus need even side lengths")
    n, d = g.n_vertices, g.dims
    nbr = np.tile(np.arange(n)[:, None], (1, 2 * d))
    nbr_edge = np.full((n, 2 * d), -1, dtype=np.int64)
    e = np.arange(g.n_edges)
    slot = g.edge_axis
    nbr[g.edge_tail, 2 * slot] = g.edge_head
    nbr_edge[g.edge_tail, 2 * slot] = e
    nbr[g.edge_head, 2 * slot + 1] = g.edge_tail
    nbr_edge[g.edge_head, 2 * slot + 1] = e
    parity = g.coords(np.arange(n)).sum(axis=1) % 2
    return _Lattice(nbr=nbr, nbr_edge=nbr_edge, colors=(np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)))


def _couplings(lat: _Lattice, obs: np.ndarray) -> np.ndarray:
    """Per-site neighbor couplings, ``(R, N, 2d)`` int8; zero for missing neighbors."""
    obs = np.atleast_2d(obs).astype(np.int8)
    J = obs[:, np.maximum(lat.nbr_edge, 0)]
    J[:, lat.nbr_edge < 0] = 0
    return np.ascontiguousarray(J)


def heat_bath_probability(beta: float, local_field) -> np.ndarray:
    """``P(sigma_x = +1 | neighbors)`` for local field ``h = sum_y J_xy sigma_y``."""
    return 0.5 * (1.0 + np.tanh(beta * np.asarray(local_field, dtype=float)))


@numba.njit(cache=True)
def _sweeps_kernel(spins, J, nbr, color0, color1, table, betas, uniforms, swap_uniforms, swaps):
    # spins (R, T, N): T tempering slots per disorder sample, slot T-1 is the target.
    # table[r, t, h + K] = P(up | local field h), K = 2d.
    # uniforms (S, R, T, N) and swap_uniforms (S, R, T - 1) drive S sweeps.
    R, T, N = spins.shape
    K = nbr.shape[1]
    energy = np.zeros((R, T), dtype=np.int64)
    if T > 1:
        for r in range(R):
            for t in range(T):
                e = 0
                for i in range(N):
                    for k in range(K):
                        e += J[r, i, k] * spins[r, t, i] * spins[r, t, nbr[i, k]]
                energy[r, t] = e // 2
    for s in range(uniforms.shape[0]):
        for c in range(2):
            sites = color0 if c == 0 else color1
            for r in range(R):
                for t in range(T):
                    for i in sites:
                        h = 0
                        for k in range(K):
                            h += J[r, i, k] * spins[r, t, nbr[i, k]]
                        # branch-free: +1 when u < P(up), else -1
                        new = 2 * (uniforms[s, r, t, i] < table[r, t, h + K]) - 1
                        energy[r, t] += (new - spins[r, t, i]) * h
                        spins[r, t, i] = new
        if T == 1:
            continue
        for r in range(R):
            for t in range(T - 1):
                x = (betas[r, t] - betas[r, t + 1]) * (energy[r, t + 1] - energy[r, t])
                if x >= 0 or swap_uniforms[s, r, t] < np.exp(x):
                    for i in range(N):
                        tmp = spins[r, t, i]
                        spins[r, t, i] = spins[r, t + 1, i]
                        spins[r, t + 1, i] = tmp
                    tmp_e = energy[r, t]
                    energy[r, t] = energy[r, t + 1]
                    energy[r, t + 1] = tmp_e
                    swaps[r, t] += 1


# cap on pre-drawn uniforms per kernel call
_CHUNK = 1 << 24


def beta_ladder(beta: np.ndarray, n_temps: int, beta_min: float) -> np.ndarray:
    """``(R, n_temps)`` geometric ladders of inverse temperatures ending at each ``beta``."""
    beta = np.asarray(beta, dtype=float)
    if n_temps == 1:
        return beta[:, None].copy()
    if np.any(beta <= 0) or beta_min <= 0:
        raise ValueError("tempering needs positive inverse temperatures")
    lo = np.minimum(beta_min, beta)
    frac = np.linspace(0.0, 1.0, n_temps)
    return lo[:, None] * (beta / lo)[:, None] ** frac[None, :]


def _advance(spins, J, lat, betas, n_sweeps, rng, swaps) -> None:
    R, T, N = spins.shape
    K = lat.nbr.shape[1]
    table = heat_bath_probability(1.0, betas[..., None] * np.arange(-K, K + 1)).astype(np.float32)
    per_sweep = max(1, _CHUNK // spins.size)
    done = 0
    while done < n_sweeps:
        S = min(per_sweep, n_sweeps - done)
        u = rng.random((S, R, T, N), dtype=np.float32)
        v = rng.random((S, R, max(T - 1, 1)))
        _sweeps_kernel(spins, J, lat.nbr, lat.colors[0], lat.colors[1], table, betas, u, v, swaps)
        done += S


def _axis_shifts(g: GridGraph, r: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Vertex pairs ``(x, x + r e_i)`` for every axis, wrapping on a torus."""
    n = g.n_vertices
    coords = g.coords(np.arange(n))
    out = []
    for i, L in enumerate(g.extents):
        if r >= L and g.boundary is Boundary.FREE:
            continue
        shifted = coords.copy()
        shifted[:, i] += r
        if g.boundary is Boundary.TORUS:
            shifted[:, i] %= L
            src = np.arange(n)
        else:
            ok = shifted[:, i] < L
            src = np.flatnonzero(ok)
            shifted = shifted[ok]
        out.append((src, g.vertex_index(shifted)))
    return out


@dataclass
class CorrelationReport:
    pairs: np.ndarray  # (P, 2) vertex indices
    correlation: np.ndarray  # (R, P) time-averaged <sigma_u sigma_v>
    aligned: np.ndarray  # (R, P) <sigma_u sigma_v> theta_u theta_v
    distances: np.ndarray  # distances r of the translation-averaged profile
    profile: np.ndarray  # (R, len(distances)) aligned correlation averaged over all pairs at distance r along axes
    series: np.ndarray  # (R, T) aligned far-distance overlap per measurement
    tau_int: float
    n_measurements: int
    swap_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per adjacent ladder pair

    @property
    def far_overlap(self) -> float:
        """Disorder- and time-averaged aligned correlation at the largest distance."""
        return float(self.profile[:, -1].mean())


def integrated_autocorrelation(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window (average over rows)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x = x - x.mean(axis=1, keepdims=True)
    T = x.shape[1]
    if T < 4:
        return 0.5
    f = np.fft.rfft(x, n=2 * T, axis=1)
    acf = np.fft.irfft(f * np.conj(f), axis=1)[:, :T].mean(axis=0)
    if acf[0] <= 0:
        return 0.5
    rho = acf / acf[0]
    tau = 0.5
    for w in range(1, T):
        tau += rho[w]
        if w >= c * tau:
            break
    return float(max(tau, 0.5))


def _init_spins(mode: str, truth: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if mode == "truth":
        return truth.astype(np.int8).copy()
    if mode == "plus":
        return np.ones_like(truth, dtype=np.int8)
    return np.where(rng.random(truth.shape) < 0.5, 1, -1).astype(np.int8)


def run_chains(
    g: GridGraph,
    obs: np.ndarray,
    truth: np.ndarray,
    params: GibbsParams,
    pairs=None,
    distances: Optional[Sequence[int]] = None,
    betas: Optional[np.ndarray] = None,
) -> CorrelationReport:
    """Advance ``R`` independent chains, one per row of ``obs`` / ``truth``."""
    lat = _lattice(g)
    obs = np.atleast_2d(obs)
    truth = np.atleast_2d(truth).astype(np.int8)
    R = obs.shape[0]
    J = _couplings(lat, obs)
    beta = np.full(R, params.effective_beta) if betas is None else np.asarray(betas, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(params.seed, spawn_key=(4,)))

    if distances is None:
        distances = [max(1, min(g.extents) // 2)]
    shifts = [_axis_shifts(g, r) for r in distances]
    pairs = np.zeros((0, 2), dtype=np.int64) if pairs is None else np.asarray(pairs, dtype=np.int64).reshape(-1, 2)

    T = params.n_temps
    betas = beta_ladder(beta, T, params.beta_min)
    spins = np.repeat(_init_spins(params.init, truth, rng)[:, None, :], T, axis=1)
    swaps = np.zeros((R, max(T - 1, 1)), dtype=np.int64)
    corr = np.zeros((R, pairs.shape[0]))
    prof = np.zeros((R, len(distances)))
    series = []
    _advance(spins, J, lat, betas, params.burn_in, rng, swaps)
    n_meas = max(1, (params.sweeps - params.burn_in) // params.stride)
    for _ in range(n_meas):
        _advance(spins, J, lat, betas, params.stride, rng, swaps)
        cold = spins[:, -1, :]
        tau = cold * truth
        corr += cold[:, pairs[:, 0]] * cold[:, pairs[:, 1]]
        row = np.empty((R, len(distances)))
        for j, sh in enumerate(shifts):
            row[:, j] = np.mean([(tau[:, a] * tau[:, b]).mean(axis=1) for a, b in sh], axis=0)
        prof += row
        series.append(row[:, -1])
    corr /= n_meas
    prof /= n_meas
    series = np.stack(series, axis=1)
    aligned = corr * truth[:, pairs[:, 0]] * truth[:, pairs[:, 1]]
    return CorrelationReport(
        pairs=pairs,
        correlation=corr,
        aligned=aligned,
        distances=np.asarray(distances),
        profile=prof,
        series=series,
        tau_int=integrated_autocorrelation(series),
        n_measurements=n_meas,
        swap_rate=swaps.mean(axis=0) / max(params.sweeps, 1) if T > 1 else np.zeros(0),
    )


def run_chain(inst: Instance, params: GibbsParams, pairs=None, distances=None) -> CorrelationReport:
    """Sample the posterior of one Z2 instance."""
    if inst.variant is not Variant.Z2:
        raise ValueError("the Gibbs sampler handles Z2 instances only")
    return run_chains(inst.graph, inst.obs, inst.truth, params, pairs=pairs, distances=distances)


# -- multi-spin coding ---------------------------------------------------------
#
# For a scan many disorder samples share one inverse temperature, so the
# heat-bath decision can be made for 64 of them at once.  Bit ``l`` of
# ``S[g, x]`` is 1 when spin x of lane l in word-group g is -1, and bit l of
# ``Jb[g, x, k]`` is 1 when the coupling to neighbor k is -1.  The number c of
# negative terms in the local field ``h = K - 2c`` is accumulated in three
# bit planes; one shared uniform u per site and group gives the cutoff
# ``m = #{c : u < P(up | K - 2c)}`` and the new spin is down exactly when
# ``c >= m``.  Every lane is an exact heat-bath chain; lanes of one group share
# their uniforms.

_LANES = 64


def _pack_lanes(bits: np.ndarray) -> np.ndarray:
    """``(n_lanes <= 64, ...)`` booleans -> uint64 words with lane l in bit l."""
    bits = np.asarray(bits, dtype=np.uint64)
    shifts = np.arange(bits.shape[0], dtype=np.uint64).reshape((-1,) + (1,) * (bits.ndim - 1))
    return np.bitwise_or.reduce(bits << shifts, axis=0)


def _unpack_lanes(words: np.ndarray, n_lanes: int) -> np.ndarray:
    shifts = np.arange(n_lanes, dtype=np.uint64).reshape((-1,) + (1,) * words.ndim)
    return ((words[None] >> shifts) & np.uint64(1)).astype(bool)


@numba.njit(cache=True)
def _msc_kernel(S, Jb, nbr, color0, color1, thr, raw):
    # S (G, N) uint64, Jb (G, N, K) uint64, thr (G, K + 1) int64 with thr[g, c]
    # = 2^32 P(up | h = K - 2c) (nonincreasing in c), raw (n_sweeps, G, N) uint32.
    G, N = S.shape
    K = nbr.shape[1]
    ones = np.uint64(0xFFFFFFFFFFFFFFFF)
    for s in range(raw.shape[0]):
        for c in range(2):
            sites = color0 if c == 0 else color1
            for g in range(G):
                for ii in range(sites.shape[0]):
                    i = sites[ii]
                    b0 = np.uint64(0)
                    b1 = np.uint64(0)
                    b2 = np.uint64(0)
                    for k in range(K):
                        x = S[g, nbr[i, k]] ^ Jb[g, i, k]
                        c0 = b0 & x
                        b0 ^= x
                        c1 = b1 & c0
                        b1 ^= c0
                        b2 |= c1
                    u = np.int64(raw[s, g, i])
                    m = 0
                    for v in range(K + 1):
                        if u < thr[g, v]:
                            m += 1
                    # lanes with count < m (bitwise comparison with the constant m)
                    lt = np.uint64(0)
                    eq = ones
                    if (m >> 2) & 1:
                        lt |= eq & ~b2
                        eq &= b2
                    else:
                        eq &= ~b2
                    if (m >> 1) & 1:
                        lt |= eq & ~b1
                        eq &= b1
                    else:
                        eq &= ~b1
                    if m & 1:
                        lt |= eq & ~b0
                    S[g, i] = ~lt


@numba.njit(cache=True)
def _msc_disagreements(S, Th, src, dst, out):
    # out[g, l] += number of pairs with tau_a tau_b = -1 in lane l, tau = sigma theta
    G = S.shape[0]
    for g in range(G):
        for j in range(src.shape[0]):
            t = (S[g, src[j]] ^ Th[g, src[j]]) ^ (S[g, dst[j]] ^ Th[g, dst[j]])
            for l in range(64):
                out[g, l] += (t >> np.uint64(l)) & np.uint64(1)


def heat_bath_thresholds(beta: float, K: int) -> np.ndarray:
    """``round(2^32 P(up | h = K - 2c))`` for ``c = 0..K``."""
    h = K - 2 * np.arange(K + 1)
    return np.round(heat_bath_probability(beta, h) * 2.0**32).astype(np.int64)


@dataclass
class MultiSpinReport:
    distances: np.ndarray
    profile: np.ndarray  # (R, n_dist) time-averaged aligned correlation per system
    series: np.ndarray  # (R, T) aligned correlation at the largest distance per measurement
    n_measurements: int


def run_multispin(
    g: GridGraph,
    obs: np.ndarray,
    truth: np.ndarray,
    betas: Sequence[float],
    distances: Sequence[int],
    sweeps: int,
    burn_in: int,
    stride: int,
    seed: int,
    init: str = "truth",
) -> MultiSpinReport:
    """Heat-bath chains for ``R`` Z2 systems on a torus, 64 per machine word.

    Systems with equal ``beta`` are packed into the same words.  Returns the
    truth-aligned correlation profile over axis-translated pairs.
    """
    if g.boundary is not Boundary.TORUS:
        raise ValueError("multi-spin sampling needs a torus (every site has 2d neighbors)")
    if g.dims > 3:
        raise ValueError("multi-spin sampling supports d <= 3")
    if init not in ("truth", "random", "plus"):
        raise ValueError(f"unknown init {init!r}")
    if sweeps < 1 or burn_in < 0 or stride < 1 or burn_in >= sweeps:
        raise ValueError("need sweeps >= 1, 0 <= burn_in < sweeps and stride >= 1")
    lat = _lattice(g)
    obs = np.atleast_2d(obs)
    truth = np.atleast_2d(truth).astype(np.int8)
    R, N = truth.shape
    K = lat.nbr.shape[1]
    betas = np.broadcast_to(np.asarray(betas, dtype=float), (R,))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))

    # word groups: systems in input order, one group per (beta, block of 64)
    groups: List[np.ndarray] = []
    for b in dict.fromkeys(betas.tolist()):
        idx = np.flatnonzero(betas == b)
        groups.extend(idx[i : i + _LANES] for i in range(0, idx.size, _LANES))
    G = len(groups)
    S = np.empty((G, N), dtype=np.uint64)
    Th = np.empty((G, N), dtype=np.uint64)
    Jb = np.empty((G, N, K), dtype=np.uint64)
    thr = np.empty((G, K + 1), dtype=np.int64)
    for gi, idx in enumerate(groups):
        Th[gi] = _pack_lanes(truth[idx] < 0)
        Jb[gi] = _pack_lanes(obs[idx][:, lat.nbr_edge] < 0)
        thr[gi] = heat_bath_thresholds(float(betas[idx[0]]), K)
        if init == "truth":
            S[gi] = Th[gi]
        elif init == "plus":
            S[gi] = 0
        else:
            S[gi] = rng.integers(0, 2**64, size=N, dtype=np.uint64, endpoint=False)
    c0 = lat.colors[0].astype(np.int64)
    c1 = lat.colors[1].astype(np.int64)
    shifts = [_axis_shifts(g, r) for r in distances]
    pairs = [(np.concatenate([a for a, _ in sh]), np.concatenate([b for _, b in sh])) for sh in shifts]
    per_chunk = max(1, _CHUNK // (G * N))

    def advance(n):
        done = 0
        while done < n:
            k = min(per_chunk, n - done)
            raw = rng.bit_generator.random_raw(k * G * N // 2 + 1).view(np.uint32)[: k * G * N]
            _msc_kernel(S, Jb, lat.nbr, c0, c1, thr, raw.reshape(k, G, N))
            done += k

    advance(burn_in)
    n_meas = max(1, (sweeps - burn_in) // stride)
    prof = np.zeros((G, _LANES, len(distances)))
    series = np.zeros((G, _LANES, n_meas))
    for t in range(n_meas):
        advance(stride)
        for j, (a, b) in enumerate(pairs):
            bad = np.zeros((G, _LANES), dtype=np.int64)
            _msc_disagreements(S, Th, a, b, bad)
            corr = 1.0 - 2.0 * bad / a.size
            prof[:, :, j] += corr
            if j == len(pairs) - 1:
                series[:, :, t] = corr
    prof /= n_meas
    out_prof = np.empty((R, len(distances)))
    out_series = np.empty((R, n_meas))
    for gi, idx in enumerate(groups):
        out_prof[idx] = prof[gi, : idx.size]
        out_series[idx] = series[gi, : idx.size]
    return MultiSpinReport(distances=np.asarray(distances), profile=out_prof, series=out_series, n_measurements=n_meas)


# -- phase scan --------------------------------------------------------------

@dataclass
class PhaseScan:
    d: int
    p_grid: np.ndarray
    sizes: Tuple[int, ...]
    overlap: np.ndarray  # (n_sizes, n_p) disorder mean of the crossing statistic
    stderr: np.ndarray
    samples: np.ndarray  # (n_sizes, n_p, R) per-disorder values
    far: np.ndarray  # (n_sizes, n_p) aligned correlation at distance L/2
    crossing: float
    crossing_ci: Tuple[float, float]
    pairwise_crossings: List[float]

    def rows(self) -> List[dict]:
        out = []
        for i, L in enumerate(self.sizes):
            for j, p in enumerate(self.p_grid):
                out.append(
                    {
                        "d": self.d,
                        "L": L,
                        "p": float(p),
                        "ratio": float(self.overlap[i, j]),
                        "ratio_stderr": float(self.stderr[i, j]),
                        "overlap_far": float(self.far[i, j]),
                    }
                )
        return out


def _crossing(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Where ``b - a`` turns from positive to negative, robust to noise near zero.

    The split ``j`` maximizes ``sum_{i<=j} diff_i - sum_{i>j} diff_i``, so a
    stray sign change deep inside a region where both curves sit at 1 cannot
    win over the real crossing.  The crossing is then linearly interpolated
    between ``p[j]`` and ``p[j+1]``.  NaN when the best split is at an end of
    the grid (no crossing inside it).
    """
    diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    n = diff.size
    if n < 2:
        return float("nan")
    total = diff.sum()
    head = np.cumsum(diff)  # head[j] = sum_{i<=j}
    score = np.concatenate(([-total], 2 * head - total))  # split after index j = -1 .. n-1
    j = int(np.argmax(score)) - 1
    if j < 0 or j >= n - 1:
        return float("nan")
    lo, hi = diff[j], diff[j + 1]
    t = 0.5 if lo == hi else float(np.clip(lo / (lo - hi), 0.0, 1.0))
    return float(p[j] + t * (p[j + 1] - p[j]))


def _estimate_crossing(p_grid, curves) -> Tuple[float, List[float]]:
    xs = [_crossing(p_grid, curves[i], curves[i + 1]) for i in range(len(curves) - 1)]
    good = [x for x in xs if np.isfinite(x)]
    return (float(np.mean(good)) if good else float("nan")), xs


def _per_size(value, n: int, name: str) -> List[int]:
    vals = [int(v) for v in value] if isinstance(value, (list, tuple, np.ndarray)) else [int(value)] * n
    if len(vals) != n:
        raise ValueError(f"{name} needs one value per size ({n}), got {len(vals)}")
    return vals


def phase_scan(
    p_grid: Sequence[float],
    sizes: Sequence[int],
    d: int = 2,
    n_disorder: int = 16,
    sweeps=400,
    burn_in=50,
    stride=2,
    seed: int = 0,
    n_boot: int = 200,
    init: str = "truth",
    n_temps: int = 1,
    beta_min: float = 0.3,
    engine: str = "multispin",
) -> PhaseScan:
    """Truth-aligned correlations on the Nishimori line across p and system size.

    The size-crossing statistic is the correlation ratio ``G(L/2) / G(L/4)``
    of disorder-averaged truth-aligned correlations.  It tends to 1 in the
    recoverable phase and to 0 otherwise, and it is scale invariant at the
    transition, so curves for different L cross there.  The raw far overlap
    ``G(L/2)`` is reported alongside.  Chains start from the planted truth,
    which is an exact posterior sample on the Nishimori line.

    ``sweeps``, ``burn_in`` and ``stride`` take one value or one per size.
    ``engine="multispin"`` packs 64 disorder samples per machine word (plain
    heat-bath only); ``"scalar"`` runs one chain per sample and supports
    replica exchange through ``n_temps`` and ``beta_min``.
    """
    p_grid = np.asarray(p_grid, dtype=float)
    if np.any((p_grid <= 0) | (p_grid >= 0.5)):
        raise ValueError("p_grid must lie inside (0, 1/2)")
    if engine not in ("multispin", "scalar"):
        raise ValueError(f"engine must be 'multispin' or 'scalar', got {engine!r}")
    if engine == "multispin" and n_temps != 1:
        raise ValueError("replica exchange needs engine='scalar'")
    if n_disorder < 2:
        raise ValueError(f"n_disorder must be >= 2, got {n_disorder}")
    sizes = tuple(int(L) for L in sizes)
    sweeps_l = _per_size(sweeps, len(sizes), "sweeps")
    burn_l = _per_size(burn_in, len(sizes), "burn_in")
    stride_l = _per_size(stride, len(sizes), "stride")
    ss = np.random.SeedSequence(seed)
    G2 = np.zeros((len(sizes), p_grid.size, n_disorder))
    G4 = np.zeros_like(G2)
    for i, L in enumerate(sizes):
        g = build_grid(d, L, Boundary.TORUS)
        obs, truth, betas = [], [], []
        for j, p in enumerate(p_grid):
            for r in range(n_disorder):
                child = int(np.random.SeedSequence(seed, spawn_key=(5, i, j, r)).generate_state(1)[0])
                inst = generate_instance(g, Z2Flip(float(p)), TruthMode.HAAR, seed=child)
                obs.append(inst.obs)
                truth.append(inst.truth)
                betas.append(nishimori_beta(float(p)))
        chain_seed = int(np.random.SeedSequence(seed, spawn_key=(6, i)).generate_state(1)[0])
        distances = [max(1, L // 4), L // 2]
        if engine == "multispin":
            rep = run_multispin(g, np.stack(obs), np.stack(truth), np.array(betas), distances,
                                sweeps_l[i], burn_l[i], stride_l[i], chain_seed, init=init)
        else:
            params = GibbsParams(
                p=float(p_grid[0]), sweeps=sweeps_l[i], burn_in=burn_l[i], stride=stride_l[i],
                init=init, n_temps=n_temps, beta_min=beta_min, seed=chain_seed,
            )
            rep = run_chains(g, np.stack(obs), np.stack(truth), params, distances=distances, betas=np.array(betas))
        G4[i] = rep.profile[:, 0].reshape(p_grid.size, n_disorder)
        G2[i] = rep.profile[:, 1].reshape(p_grid.size, n_disorder)

    def ratio(g2, g4):
        m4 = g4.mean(axis=-1)
        return np.where(m4 > 0, g2.mean(axis=-1) / np.where(m4 > 0, m4, 1.0), 0.0)

    curves = ratio(G2, G4)
    crossing, xs = _estimate_crossing(p_grid, curves)
    rng = np.random.default_rng(ss.spawn(1)[0])
    boot = []
    for _ in range(n_boot):
        idx = rng.integers(0, n_disorder, size=n_disorder)
        c, _ = _estimate_crossing(p_grid, ratio(G2[..., idx], G4[..., idx]))
        if np.isfinite(c):
            boot.append(c)
    ci = (float(np.percentile(boot, 2.5)), float(np.percentile(boot, 97.5))) if boot else (np.nan, np.nan)

    # per-disorder stderr of the ratio by the delta method
    se = np.zeros_like(curves)
    for i in range(len(sizes)):
        for j in range(p_grid.size):
            a, b = G2[i, j], G4[i, j]
            mb = b.mean()
            if mb > 0:
                resid = (a - curves[i, j] * b) / mb
                se[i, j] = resid.std(ddof=1) / np.sqrt(n_disorder)
    return PhaseScan(
        d=d, p_grid=p_grid, sizes=sizes, overlap=curves, stderr=se,
        samples=G2, far=G2.mean(axis=-1), crossing=crossing, crossing_ci=ci, pairwise_crossings=xs,
    )

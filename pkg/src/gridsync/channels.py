"""Observation channels, problem instances and the signal parameter lambda."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import integrate, special, stats

from .grid import GridGraph
from .groups import TWO_PI, Variant, embed, haar_array, polar

# Edges are grouped in fixed blocks, each with its own child seed, so the draw
# for an edge depends only on (seed, edge index) and not on generation order.
EDGE_BLOCK = 4096


class TruthMode(str, Enum):
    HAAR = "haar"
    IDENTITY = "identity"


# -- U(1) noise densities ------------------------------------------------------

@dataclass(frozen=True)
class DensitySpec:
    """Circular noise density.  ``pdf`` is w.r.t. Lebesgue measure on [0, 2pi).

    families:
      ``wrapped_gaussian`` -- ``param`` is the width (std of the unwrapped normal), > 0
      ``von_mises``        -- ``param`` is the concentration, >= 0
      ``uniform_mixture``  -- ``param`` is eps in (0, 1]: eps * uniform +
                              (1 - eps) * raised cosine ``(1 + cos t) / 2pi``.
                              Its density w.r.t. Haar has infimum exactly eps.
    """

    family: str
    param: float

    def __post_init__(self):
        if self.family == "wrapped_gaussian":
            if not self.param > 0:
                raise ValueError(f"wrapped_gaussian width must be > 0, got {self.param}")
        elif self.family == "von_mises":
            if not self.param >= 0:
                raise ValueError(f"von_mises concentration must be >= 0, got {self.param}")
        elif self.family == "uniform_mixture":
            if not 0 < self.param <= 1:
                raise ValueError(f"uniform_mixture eps must lie in (0, 1], got {self.param}")
        else:
            raise ValueError(f"unknown density family {self.family!r}")

    def pdf(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.family == "von_mises":
            k = self.param
            # exp(k (cos t - 1)) / (2 pi I0e(k)) avoids overflow at large k
            return np.exp(k * (np.cos(t) - 1.0)) / (TWO_PI * special.i0e(k))
        if self.family == "uniform_mixture":
            eps = self.param
            return (eps + (1.0 - eps) * (1.0 + np.cos(t))) / TWO_PI
        w = self.param
        if w <= 2.5:
            u = (t + np.pi) % TWO_PI - np.pi
            z = (u[..., None] + TWO_PI * np.arange(-4, 5)) / w
            return np.exp(-0.5 * z * z).sum(axis=-1) / (w * np.sqrt(TWO_PI))
        n = np.arange(1, 25)
        coef = np.exp(-0.5 * (n * w) ** 2)
        return (1.0 + 2.0 * np.cos(np.multiply.outer(t, n)) @ coef) / TWO_PI

    def haar_density(self, t) -> np.ndarray:
        """Density w.r.t. the Haar probability measure ``dt / 2pi``."""
        return TWO_PI * self.pdf(t)

    def haar_density_infimum(self) -> float:
        if self.family == "uniform_mixture":
            return float(self.param)
        # both remaining families are unimodal and symmetric about 0
        return float(self.haar_density(np.pi))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.family == "von_mises":
            return rng.vonmises(0.0, self.param, size=n) % TWO_PI
        if self.family == "wrapped_gaussian":
            return rng.normal(0.0, self.param, size=n) % TWO_PI
        eps = self.param
        pick_uniform = rng.random(n) < eps
        u = rng.random(n)
        out = TWO_PI * u
        # raised cosine by inverse CDF: F(t) = (t + pi + sin t) / 2pi on (-pi, pi]
        target = TWO_PI * u[~pick_uniform] - np.pi
        lo = np.full(target.shape, -np.pi)
        hi = np.full(target.shape, np.pi)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = mid + np.sin(mid) < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out[~pick_uniform] = 0.5 * (lo + hi)
        return out % TWO_PI

    def describe(self) -> dict:
        return {"family": self.family, "param": self.param}


# -- channels -------------------------------------------------------------------

@dataclass(frozen=True)
class Z2Flip:
    p: float

    def __post_init__(self):
        if not 0 <= self.p < 0.5:
            raise ValueError(f"Z2Flip flip probability must satisfy p in [0, 1/2), got {self.p}")

    variant = Variant.Z2
    m = 1

    def describe(self) -> dict:
        return {"kind": "z2flip", "p": self.p}


@dataclass(frozen=True)
class OrthGaussian:
    m: int
    sigma: float
    project: bool = True

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError(f"OrthGaussian requires m >= 1, got {self.m}")
        if not self.sigma >= 0:
            raise ValueError(f"OrthGaussian requires sigma >= 0, got {self.sigma}")

    variant = Variant.ORTH

    def describe(self) -> dict:
        return {"kind": "orth_gaussian", "m": self.m, "sigma": self.sigma, "project": self.project}


@dataclass(frozen=True)
class U1Multiplicative:
    density: DensitySpec

    variant = Variant.U1
    m = 2

    def describe(self) -> dict:
        return {"kind": "u1", "density": self.density.describe()}


ChannelSpec = Union[Z2Flip, OrthGaussian, U1Multiplicative]


def channel_from_dict(d: dict) -> ChannelSpec:
    kind = d.get("kind")
    if kind == "z2flip":
        return Z2Flip(float(d["p"]))
    if kind == "orth_gaussian":
        return OrthGaussian(int(d["m"]), float(d["sigma"]), bool(d.get("project", True)))
    if kind == "u1":
        den = d["density"]
        return U1Multiplicative(DensitySpec(str(den["family"]), float(den["param"])))
    raise ValueError(f"unknown channel kind {kind!r}")


def _group_m(channel: ChannelSpec) -> int:
    return int(channel.m) if isinstance(channel, OrthGaussian) else 1


def emit(channel: ChannelSpec, diff: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pass a batch of exact group differences through the channel."""
    n = diff.shape[0]
    if isinstance(channel, Z2Flip):
        flips = rng.random(n) < channel.p
        return np.where(flips, -diff, diff).astype(np.int8)
    if isinstance(channel, OrthGaussian):
        if channel.sigma == 0:
            return np.array(diff, dtype=float)
        X = diff + channel.sigma * rng.standard_normal(diff.shape)
        return polar(X) if channel.project else X
    return (diff + channel.density.sample(n, rng)) % TWO_PI


# -- instances ---------------------------------------------------------------

@dataclass(eq=False)
class Instance:
    graph: GridGraph
    channel: ChannelSpec
    truth: np.ndarray
    obs: np.ndarray
    seed: int
    truth_mode: TruthMode = TruthMode.HAAR
    meta: dict = field(default_factory=dict)

    @property
    def variant(self) -> Variant:
        return self.channel.variant

    @property
    def m(self) -> int:
        return _group_m(self.channel)

    @property
    def raw(self) -> bool:
        """True when observations are unprojected matrices."""
        return isinstance(self.channel, OrthGaussian) and not self.channel.project


def _group_difference(variant: Variant, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if variant is Variant.Z2:
        return (a * b).astype(np.int8)
    if variant is Variant.U1:
        return (b - a) % TWO_PI
    return np.swapaxes(a, -1, -2) @ b


def edge_differences(g: GridGraph, variant: Variant, truth: np.ndarray) -> np.ndarray:
    """``theta_x^{-1} theta_y`` for every oriented edge ``(x, y)``."""
    return _group_difference(variant, truth[g.edge_tail], truth[g.edge_head])


def _truth(n: int, variant: Variant, m: int, mode: TruthMode, seed: int) -> np.ndarray:
    if mode is TruthMode.IDENTITY:
        if variant is Variant.Z2:
            return np.ones(n, dtype=np.int8)
        if variant is Variant.U1:
            return np.zeros(n)
        return np.broadcast_to(np.eye(m), (n, m, m)).copy()
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    return haar_array(variant, m, n, rng)


def generate_instance(
    g: GridGraph,
    channel: ChannelSpec,
    truth_mode: TruthMode | str = TruthMode.HAAR,
    seed: int = 0,
    variant: Optional[Variant | str] = None,
) -> Instance:
    """Draw truth and conditionally independent edge observations.

    Deterministic in ``(seed, graph, channel)``.  ``variant`` is optional and
    only checked against the channel.
    """
    if variant is not None and Variant(variant) is not channel.variant:
        raise ValueError(
            f"variant mismatch: channel {type(channel).__name__} emits {channel.variant.value}, "
            f"requested {Variant(variant).value}"
        )
    truth_mode = TruthMode(truth_mode)
    seed = int(seed)
    variant = channel.variant
    m = _group_m(channel)
    truth = _truth(g.n_vertices, variant, m, truth_mode, seed)
    diff = edge_differences(g, variant, truth)
    chunks = []
    for b, start in enumerate(range(0, g.n_edges, EDGE_BLOCK)):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, b)))
        chunks.append(emit(channel, diff[start : start + EDGE_BLOCK], rng))
    obs = np.concatenate(chunks) if chunks else diff[:0]
    return Instance(graph=g, channel=channel, truth=truth, obs=obs, seed=seed, truth_mode=truth_mode)


# -- lambda ------------------------------------------------------------------

@dataclass(frozen=True)
class LambdaEstimate:
    value: float
    method: str  # "closed_form", "quadrature" or "monte_carlo"
    n_samples: int = 0
    stderr: float = 0.0


@lru_cache(maxsize=256)
def _orth_lambda_mc(m: int, sigma: float, n_samples: int, seed: int) -> LambdaEstimate:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, m)))
    chunk = 20000
    traces = []
    for start in range(0, n_samples, chunk):
        k = min(chunk, n_samples - start)
        X = np.eye(m) + sigma * rng.standard_normal((k, m, m))
        traces.append(np.trace(polar(X), axis1=-2, axis2=-1) / m)
    t = np.concatenate(traces)
    return LambdaEstimate(float(t.mean()), "monte_carlo", n_samples, float(t.std(ddof=1) / np.sqrt(n_samples)))


def lambda_for_channel(channel: ChannelSpec, n_samples: int = 20000, seed: int = 0) -> LambdaEstimate:
    """The scalar ``lambda`` with ``E[Y_xy | theta] = lambda theta_x^{-1} theta_y``."""
    if isinstance(channel, Z2Flip):
        return LambdaEstimate(1.0 - 2.0 * channel.p, "closed_form")
    if isinstance(channel, U1Multiplicative):
        pdf = channel.density.pdf
        re, _ = integrate.quad(lambda t: np.cos(t) * pdf(t), 0.0, TWO_PI, limit=200, epsabs=1e-13)
        im, _ = integrate.quad(lambda t: np.sin(t) * pdf(t), 0.0, TWO_PI, limit=200, epsabs=1e-13)
        return LambdaEstimate(float(np.hypot(re, im)), "quadrature")
    if channel.sigma == 0 or not channel.project:
        # unprojected I + sigma Z has mean exactly I
        return LambdaEstimate(1.0, "closed_form")
    if n_samples < 100:
        raise ValueError(f"Monte Carlo budget must be >= 100 samples, got {n_samples}")
    return _orth_lambda_mc(int(channel.m), float(channel.sigma), int(n_samples), int(seed))


@dataclass
class UnbiasednessReport:
    mean: np.ndarray
    lambda_hat: float
    lambda_ref: float
    deviation: np.ndarray
    offdiag_max: float
    stderr: np.ndarray
    n_samples: int


def verify_unbiasedness(channel: ChannelSpec, n_samples: int, seed: int = 0) -> UnbiasednessReport:
    """Empirical mean of ``theta_x Y theta_y^{-1}`` with fresh Haar truth per sample."""
    if n_samples < 1000:
        raise ValueError(f"verify_unbiasedness needs n_samples >= 1000, got {n_samples}")
    variant = channel.variant
    m = _group_m(channel)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3,)))
    total = None
    total_sq = None
    chunk = 50000
    for start in range(0, n_samples, chunk):
        k = min(chunk, n_samples - start)
        a = haar_array(variant, m, k, rng)
        b = haar_array(variant, m, k, rng)
        y = emit(channel, _group_difference(variant, a, b), rng)
        if variant is Variant.Z2:
            z = (a.astype(float) * y * b)[:, None, None]
        elif variant is Variant.U1:
            w = np.exp(1j * (a + y - b))
            z = np.stack([np.stack([w.real, -w.imag], -1), np.stack([w.imag, w.real], -1)], -2)
        else:
            z = a @ y @ np.swapaxes(b, -1, -2)
        s, s2 = z.sum(axis=0), (z * z).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
    mean = total / n_samples
    var = np.maximum(total_sq / n_samples - mean * mean, 0.0)
    stderr = np.sqrt(var / max(n_samples - 1, 1))
    dim = mean.shape[0]
    lam_hat = float(np.trace(mean) / dim)
    off = mean - np.diag(np.diag(mean))
    ref = lambda_for_channel(channel, seed=seed).value
    return UnbiasednessReport(
        mean=mean,
        lambda_hat=lam_hat,
        lambda_ref=ref,
        deviation=mean - lam_hat * np.eye(dim),
        offdiag_max=float(np.abs(off).max()) if dim > 1 else 0.0,
        stderr=stderr,
        n_samples=n_samples,
    )


def embedded_observations(inst: Instance) -> np.ndarray:
    """Observations in the raw linear embedding (floats, unit complex, matrices)."""
    if inst.raw:
        return np.asarray(inst.obs, dtype=float)
    return embed(inst.variant, inst.obs)

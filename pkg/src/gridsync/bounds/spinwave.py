"""Spin-wave argument against weak recovery of U(1) in two dimensions.

Rotating every ``theta_x`` by ``s h(x)`` for the logarithmic profile

    h(x) = 1 - log(1 + min(|x - u|_2, L)) / log(L + 1)

changes the law of the observations by a chi-square amount bounded by
``prod_edges (1 + psi(s (h(x) - h(y)))) - 1``, where ``psi`` is the
chi-square divergence of the noise density against its rotation by ``s``.
With ``psi(s) <= kappa s^2`` the leading term is ``kappa`` times the
Dirichlet energy of ``h``, which decays like ``1 / log L``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..channels import DensitySpec
from ..groups import TWO_PI


@dataclass(frozen=True)
class SpinWaveReport:
    L: int
    u: tuple
    extent: int
    energy: float  # sum over edges of |h(x) - h(y)|^2
    h_u: float
    h_v: float
    max_h_outside: float  # max of h over |x - u| >= L (zero by construction)

    @property
    def scaled_energy(self) -> float:
        """``E(L) * log(L + 1)``, bounded above and below for large L."""
        return self.energy * np.log(self.L + 1)


def spin_profile(coords: np.ndarray, u, L: int) -> np.ndarray:
    r = np.linalg.norm(np.asarray(coords, dtype=float) - np.asarray(u, dtype=float), axis=-1)
    return 1.0 - np.log1p(np.minimum(r, L)) / np.log(L + 1.0)


def spin_wave_profile(L: int, u=None, extent: Optional[int] = None) -> SpinWaveReport:
    """Dirichlet energy of the logarithmic profile on a 2D box around ``u``.

    The box ``[0, extent)^2`` must contain the radius-``L`` disc around
    ``u`` plus one layer, so every edge where ``h`` varies is counted.  ``v``
    is taken as ``u + L e_1``.
    """
    L = int(L)
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    extent = 2 * L + 3 if extent is None else int(extent)
    u = (extent // 2, extent // 2) if u is None else tuple(int(c) for c in u)
    if min(u) < L + 1 or max(u) + L + 1 >= extent:
        raise ValueError(f"extent {extent} too small for radius {L} around {u}; need at least 2L+3")
    x = np.arange(extent)
    X, Y = np.meshgrid(x, x, indexing="ij")
    h = spin_profile(np.stack([X, Y], axis=-1), u, L)
    energy = float(np.sum(np.diff(h, axis=0) ** 2) + np.sum(np.diff(h, axis=1) ** 2))
    r = np.hypot(X - u[0], Y - u[1])
    outside = h[r >= L]
    return SpinWaveReport(
        L=L, u=u, extent=extent, energy=energy,
        h_u=float(h[u]), h_v=float(h[u[0] + L, u[1]]),
        max_h_outside=float(np.abs(outside).max()) if outside.size else 0.0,
    )


# -- psi and kappa -----------------------------------------------------------

class QuadratureError(RuntimeError):
    pass


def _periodic_trapezoid(f, rtol: float = 1e-8, n0: int = 64, n_max: int = 1 << 20) -> float:
    """Trapezoid rule on [0, 2pi), doubling the node count until the relative change is below ``rtol``."""
    n = n0
    prev = TWO_PI * np.mean(f(np.arange(n) * TWO_PI / n))
    while n < n_max:
        n *= 2
        cur = TWO_PI * np.mean(f(np.arange(n) * TWO_PI / n))
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300) or cur == prev:
            return float(cur)
        prev = cur
    raise QuadratureError(f"trapezoid rule did not reach rtol={rtol} with {n_max} nodes")


def psi(density: DensitySpec, s: float, rtol: float = 1e-8) -> float:
    """``int (g(t - s) - g(t))^2 / g(t) dt``: chi-square divergence of the rotated density.

    Algebraically equal to ``int (g(t - s) / g(t))^2 g(t) dt - 1`` but free of
    the cancellation that form suffers at small ``s``.
    """
    if s == 0:
        return 0.0

    def f(t):
        g = density.pdf(t)
        return (density.pdf(t - s) - g) ** 2 / g

    return _periodic_trapezoid(f, rtol)


@dataclass
class PsiTable:
    density: DensitySpec
    s: np.ndarray
    psi: np.ndarray
    kappa_hat: float

    def rows(self):
        return [{"s": float(a), "psi": float(b), "ratio": float(b / a**2) if a else float("nan")} for a, b in zip(self.s, self.psi)]


DEFAULT_S_GRID = np.concatenate(([0.0], np.geomspace(1e-3, np.pi, 40)))


def psi_quadratic_check(density: DensitySpec, s_grid: Optional[Sequence[float]] = None) -> PsiTable:
    """Tabulate ``psi`` and ``kappa_hat = max psi(s) / s^2`` over nonzero grid points."""
    s = np.asarray(DEFAULT_S_GRID if s_grid is None else s_grid, dtype=float)
    vals = np.array([psi(density, float(x)) for x in s])
    if np.any(vals < 0):
        raise AssertionError("psi must be nonnegative")
    if np.any((s == 0) & (vals != 0)):
        raise AssertionError("psi(0) must vanish")
    nz = s != 0
    kappa = float(np.max(vals[nz] / s[nz] ** 2)) if nz.any() else 0.0
    return PsiTable(density=density, s=s, psi=vals, kappa_hat=kappa)


@dataclass(frozen=True)
class NonrecoveryBound:
    L: int
    kappa_hat: float
    energy: float
    bound: float  # kappa_hat * E(L)


def nonrecovery_bound(L: int, density: DensitySpec, u=None, v=None, kappa_hat: Optional[float] = None) -> NonrecoveryBound:
    """Leading term ``kappa_hat * E(L)`` of the product bound on the chi-square distance.

    ``v`` only fixes the separation: when given, ``L`` is replaced by the
    rounded Euclidean distance ``|u - v|_2``.
    """
    if u is not None and v is not None:
        L = int(round(float(np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(v, dtype=float)))))
    kappa = psi_quadratic_check(density).kappa_hat if kappa_hat is None else float(kappa_hat)
    sw = spin_wave_profile(L)
    return NonrecoveryBound(L=int(L), kappa_hat=kappa, energy=sw.energy, bound=kappa * sw.energy)

"""Gaussian translation synchronization on the torus.

With ``Y_xy = theta_y - theta_x + Z_xy`` on every edge of ``(Z/LZ)^d`` and
centered ``theta``, least squares gives ``theta_hat - theta = L^+ D^T Z`` and

    MSE(L, sigma^2) = sigma^2 / L^d * sum_{p != 0} 1 / lambda(p),
    lambda(p) = sum_i (2 - 2 cos p_i),  p in (2 pi / L) Z^d.

:func:`toy_mse` evaluates the eigen-sum exactly without materializing all
modes; :func:`toy_mse_empirical` simulates the model and solves it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

# largest slice of modes materialized at once by the streamed eigen-sum
MAX_SLICE = 1 << 25


@dataclass(frozen=True)
class ToyModelResult:
    L: int
    d: int
    sigma2: float
    mse: float
    eigen_sum: float

    @property
    def per_volume(self) -> float:
        """``MSE / (sigma^2 L)``, the d=1 normalization."""
        return self.mse / (self.sigma2 * self.L) if self.sigma2 else 0.0

    @property
    def per_log(self) -> float:
        """``MSE / (sigma^2 log L)``, the d=2 normalization."""
        return float(self.mse / (self.sigma2 * np.log(self.L))) if self.sigma2 else 0.0


def _check(L: int, d: int, sigma2: float) -> None:
    if int(L) < 2:
        raise ValueError(f"torus side must satisfy L >= 2, got {L}")
    if int(d) < 1:
        raise ValueError(f"dimension must satisfy d >= 1, got {d}")
    if sigma2 < 0:
        raise ValueError(f"noise variance must be nonnegative, got {sigma2}")


def laplacian_modes(L: int) -> np.ndarray:
    """One-dimensional eigenvalues ``2 - 2 cos(2 pi n / L)``, ``n = 0..L-1``."""
    return 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(L) / L)


def toy_mse(L: int, d: int, sigma2: float = 1.0) -> ToyModelResult:
    """Exact least-squares MSE of the torus translation model.

    The sum runs over slices with the first ``d - 1`` mode indices fixed, so
    memory is ``O(L)`` per slice; ``L^(d-1)`` slices are visited in order.
    """
    _check(L, d, sigma2)
    L, d = int(L), int(d)
    mu = laplacian_modes(L)
    if L > MAX_SLICE:
        raise OverflowError(f"L = {L} exceeds the streamed slice limit {MAX_SLICE}")
    total = 0.0
    # iterate over the leading d-1 indices; the last axis is vectorized
    for idx in np.ndindex(*([L] * (d - 1))):
        base = float(sum(mu[i] for i in idx))
        lam = base + mu
        if base == 0.0:
            lam = lam[1:]  # drop the zero mode
        total += float(np.sum(1.0 / lam))
    return ToyModelResult(L=L, d=d, sigma2=float(sigma2), mse=sigma2 * total / L**d, eigen_sum=total)


def toy_mse_closed_form_1d(L: int, sigma2: float = 1.0) -> float:
    """``sigma^2 (L^2 - 1) / (12 L)``, the d=1 eigen-sum in closed form."""
    return sigma2 * (L * L - 1) / (12.0 * L)


def toy_mse_empirical(
    L: int, d: int, sigma2: float, n_trials: int, seed: int = 0, batch: int = 256
) -> Tuple[float, float]:
    """Monte Carlo MSE of torus least squares; returns ``(estimate, stderr)``.

    Each trial draws centered ``theta`` and Gaussian edge noise, forms
    ``Y = D theta + Z``, solves ``theta_hat = L^+ D^T Y`` by dividing by the
    Laplacian eigenvalues in the Fourier domain (zero mode set to 0) and
    records ``|theta_hat - theta|^2 / L^d``.
    """
    _check(L, d, sigma2)
    if n_trials < 10:
        raise ValueError(f"n_trials must be >= 10, got {n_trials}")
    L, d = int(L), int(d)
    shape = (L,) * d
    mu = laplacian_modes(L)
    lam = np.zeros(shape)
    for i in range(d):
        lam = lam + mu.reshape([-1 if k == i else 1 for k in range(d)])
    inv = np.zeros(shape)
    nz = lam > 1e-12
    inv[nz] = 1.0 / lam[nz]

    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    sigma = np.sqrt(sigma2)
    errs = []
    done = 0
    axes = tuple(range(1, d + 1))
    while done < n_trials:
        B = min(batch, n_trials - done)
        theta = rng.standard_normal((B,) + shape)
        theta -= theta.mean(axis=axes, keepdims=True)
        # edge along axis i from x to x + e_i
        div = np.zeros((B,) + shape)
        for i in range(d):
            ax = i + 1
            Y = np.roll(theta, -1, axis=ax) - theta + sigma * rng.standard_normal((B,) + shape)
            # D^T Y: +Y on the head, -Y on the tail
            div += np.roll(Y, 1, axis=ax) - Y
        # L theta_hat = D^T Y with L = D^T D
        theta_hat = np.real(np.fft.ifftn(np.fft.fftn(div, axes=axes) * inv, axes=axes))
        errs.append(np.sum((theta_hat - theta) ** 2, axis=axes) / L**d)
        done += B
    errs = np.concatenate(errs)
    return float(errs.mean()), float(errs.std(ddof=1) / np.sqrt(errs.size))

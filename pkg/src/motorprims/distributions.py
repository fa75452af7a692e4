"""Diagonal Gaussian distributions: log densities, KL, reparameterized samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class DiagonalGaussian:
    """Independent Gaussian per coordinate; std must be strictly positive."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape:
            raise ShapeError(f"mean shape {mean.shape} != std shape {std.shape}")
        if not np.all(std > 0.0):
            raise DomainError("std must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[-1]


def gaussian_log_prob(d: DiagonalGaussian, x: np.ndarray) -> float | np.ndarray:
    """Sum over coordinates of the per-dim Gaussian log density.

    Accepts a single point with d's shape or a batch with one extra leading
    axis; returns a scalar or a per-row vector accordingly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != d.mean.shape and x.shape[1:] != d.mean.shape:
        raise ShapeError(f"x shape {x.shape} incompatible with mean shape {d.mean.shape}")
    z = (x - d.mean) / d.std
    per_dim = -0.5 * z * z - np.log(d.std) - 0.5 * LOG_2PI
    total = per_dim.sum(axis=-1)
    return float(total) if total.ndim == 0 else total


def gaussian_kl(q: DiagonalGaussian, p: DiagonalGaussian) -> float:
    """Closed-form KL(q || p) between diagonal Gaussians of equal dimension."""
    if q.mean.shape != p.mean.shape:
        raise ShapeError("KL requires equal dimensions")
    var_ratio = (q.std / p.std) ** 2
    mean_term = ((q.mean - p.mean) / p.std) ** 2
    return float(0.5 * np.sum(var_ratio + mean_term - 1.0 - np.log(var_ratio)))


def reparameterized_sample(d: DiagonalGaussian, noise: np.ndarray) -> np.ndarray:
    """mean + std * noise; differentiable in mean and std."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != d.mean.shape and noise.shape[1:] != d.mean.shape:
        raise ShapeError(f"noise shape {noise.shape} incompatible with mean shape {d.mean.shape}")
    return d.mean + d.std * noise

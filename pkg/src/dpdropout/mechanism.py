"""Per-step randomisation: L2 clipping, Gaussian update noise, and the
bookkeeping that reads that noise back as a Gaussian dropout rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSpec",
    "DropoutRateMap",
    "clip_by_l2",
    "sample_update_noise",
    "dropout_alpha_from_noise",
    "drop_prob_to_alpha",
    "alpha_to_drop_prob",
]

DEFAULT_FLOOR = 1e-8


@dataclass(frozen=True)
class NoiseSpec:
    """Clipping threshold ``C`` and noise multiplier ``sigma``.

    The L2 sensitivity of a clipped gradient is ``2C`` and each coordinate
    receives noise with standard deviation ``2 C sigma``.
    """

    clip_threshold: float
    sigma: float

    def __post_init__(self):
        if not self.clip_threshold > 0:
            raise ValueError(f"clip_threshold must be > 0, got {self.clip_threshold}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def sensitivity(self) -> float:
        return 2.0 * self.clip_threshold

    @property
    def noise_std(self) -> float:
        return 2.0 * self.clip_threshold * self.sigma

    @property
    def noise_variance(self) -> float:
        return self.noise_std**2


@dataclass(frozen=True)
class DropoutRateMap:
    """Per-parameter Gaussian dropout variance ``alpha`` and Bernoulli rate ``p``.

    Both are masked arrays; entries whose weight magnitude is below the floor
    are masked because the noise has no multiplicative reading there.
    """

    alpha: np.ma.MaskedArray
    drop_prob: np.ma.MaskedArray

    @property
    def defined(self) -> np.ndarray:
        return ~np.ma.getmaskarray(self.alpha)

    def summary(self) -> dict:
        """min/median/max of alpha and p over defined entries (None if there are none)."""
        a = self.alpha.compressed()
        p = self.drop_prob.compressed()
        if a.size == 0:
            keys = ("alpha_min", "alpha_median", "alpha_max", "p_min", "p_median", "p_max")
            return dict.fromkeys(keys)
        return {
            "alpha_min": float(a.min()),
            "alpha_median": float(np.median(a)),
            "alpha_max": float(a.max()),
            "p_min": float(p.min()),
            "p_median": float(np.median(p)),
            "p_max": float(p.max()),
        }


def clip_by_l2(gradient, clip_threshold: float) -> np.ndarray:
    """Scale ``gradient`` down so its L2 norm (over all entries) is at most ``C``."""
    if not clip_threshold > 0:
        raise ValueError(f"clip_threshold must be > 0, got {clip_threshold}")
    g = np.asarray(gradient, dtype=float)
    norm = np.linalg.norm(g.ravel())
    if norm <= clip_threshold:
        return g.copy()
    return g * (clip_threshold / norm)


def sample_update_noise(shape, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. N(0, 4 C^2 sigma^2) noise of the given shape (an int is a dimension)."""
    return rng.normal(0.0, spec.noise_std, size=shape)


def drop_prob_to_alpha(p):
    """``p / (1 - p)``; works elementwise on arrays."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0) or np.any(p_arr >= 1):
        raise ValueError("drop probability must lie in [0, 1)")
    out = p_arr / (1.0 - p_arr)
    return float(out) if out.ndim == 0 else out


def alpha_to_drop_prob(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0):
        raise ValueError("alpha must be >= 0")
    out = a / (1.0 + a)
    return float(out) if out.ndim == 0 else out


def dropout_alpha_from_noise(spec: NoiseSpec, theta, floor: float = DEFAULT_FLOOR) -> DropoutRateMap:
    """Per-weight ``alpha`` solving ``alpha * theta^2 = 4 C^2 sigma^2``.

    Weights with ``|theta| < floor`` are masked.
    """
    if not floor > 0:
        raise ValueError(f"floor must be > 0, got {floor}")
    theta = np.asarray(theta, dtype=float)
    mask = np.abs(theta) < floor
    safe = np.where(mask, 1.0, theta)
    alpha = spec.noise_variance / safe**2
    p = alpha / (1.0 + alpha)
    return DropoutRateMap(np.ma.array(alpha, mask=mask), np.ma.array(p, mask=mask.copy()))

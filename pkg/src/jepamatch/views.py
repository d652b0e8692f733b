"""Multi-view augmentation for vector inputs.

One input vector yields a weak view (light Gaussian noise), a strong view
(heavier noise plus coordinate dropout), and K local views that each keep
one random contiguous coordinate window and zero everything else — the
vector-space stand-in for global crops versus small local crops. All views
keep the input dimensionality.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class AugmentConfig:
    weak_noise_sigma: float = 0.1
    strong_noise_sigma: float = 0.5
    strong_dropout_frac: float = 0.3
    local_window_frac_min: float = 0.2
    local_window_frac_max: float = 0.5
    local_crops: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.weak_noise_sigma < 0 or self.strong_noise_sigma < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if not 0.0 <= self.strong_dropout_frac < 1.0:
            raise ConfigError(f"strong_dropout_frac must be in [0,1), got {self.strong_dropout_frac}")
        if not 0.0 < self.local_window_frac_min <= self.local_window_frac_max <= 1.0:
            raise ConfigError("local window fractions must satisfy 0 < min <= max <= 1")
        if self.local_crops < 1:
            raise ConfigError(f"need at least one local crop, got {self.local_crops}")


@dataclass
class ViewSet:
    weak: np.ndarray
    strong: np.ndarray
    locals: list  # K arrays of shape (d,)


def _weak(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    return x + cfg.weak_noise_sigma * rng.standard_normal(x.shape[0])

def _strong(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    d = x.shape[0]
    out = x + cfg.strong_noise_sigma * rng.standard_normal(d)
    n_drop = int(round(cfg.strong_dropout_frac * d))
    if n_drop:
        out[rng.choice(d, size=n_drop, replace=False)] = 0.0
    return out


def _local(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    d = x.shape[0]
    frac = rng.uniform(cfg.local_window_frac_min, cfg.local_window_frac_max)
    width = min(d, max(1, int(round(frac * d))))
    start = int(rng.integers(0, d - width + 1))
    out = np.zeros(d)
    window = x[start:start + width]
    out[start:start + width] = window + cfg.weak_noise_sigma * rng.standard_normal(width)
    return out


def make_views(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> ViewSet:
    """Weak + strong + K local views of one sample; deterministic in ``rng``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ConfigError(f"expected a vector of dimension >= 2, got shape {x.shape}")
    return ViewSet(
        weak=_weak(x, cfg, rng),
        strong=_strong(x, cfg, rng),
        locals=[_local(x, cfg, rng) for _ in range(cfg.local_crops)],
    )


def make_weak_only(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Weak view alone; labeled samples never get strong or local views."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ConfigError(f"expected a vector of dimension >= 2, got shape {x.shape}")
    return _weak(x, cfg, rng)

"""Deterministic synthetic benchmark series.

The committed dataset at data/synthetic.csv is exactly
seasonal_series() with default arguments; regenerate it with

    python -m armd.cli synth --out data/synthetic.csv
"""

from __future__ import annotations

import numpy as np

from .core import SeriesMatrix

DEFAULT_SEED = 7


def seasonal_series(
    n_timesteps: int = 5000,
    n_channels: int = 3,
    period: float = 48.0,
    noise_sigma: float = 0.1,
    seed: int = DEFAULT_SEED,
) -> SeriesMatrix:
    """Sinusoid with per-channel phase, a gentle linear trend, and Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_timesteps, dtype=np.float64)
    values = np.empty((n_channels, n_timesteps))
    for ch in range(n_channels):
        phase = 2.0 * np.pi * ch / n_channels
        slope = (0.5 + 0.25 * ch) / 1000.0
        values[ch] = np.sin(2.0 * np.pi * t / period + phase) + slope * t
    values += noise_sigma * rng.standard_normal(values.shape)
    return SeriesMatrix(values, tuple(f"s{ch}" for ch in range(n_channels)))

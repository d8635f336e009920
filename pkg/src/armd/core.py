"""Core domain types: series matrices, diffusion schedules, window samples.

Conventions used throughout the package:
  * a series is stored channels-first, shape (n_channels, n_timesteps)
  * diffusion step t runs from 0 (the future window, initial state) up to
    T (the historical window, final state)
  * alpha_bar has length T + 1 with alpha_bar[0] = 1 so that a reverse
    jump landing on step 0 needs no special case
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def as_values(series) -> np.ndarray:
    """Return the underlying (n_channels, n_timesteps) array of a series-like input."""
    if isinstance(series, SeriesMatrix):
        return series.values
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"series must be 1-D or 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SeriesMatrix:
    """Multivariate series values, channels x timesteps."""

    values: np.ndarray
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ValueError(f"values must be 2-D (channels x timesteps), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"series must have at least one channel and one timestep, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("series values must be finite (no NaN/Inf)")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        names = tuple(self.channel_names) if self.channel_names else tuple(
            f"c{i}" for i in range(arr.shape[0])
        )
        if len(names) != arr.shape[0]:
            raise ValueError(f"{len(names)} channel names for {arr.shape[0]} channels")
        object.__setattr__(self, "channel_names", names)

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def n_timesteps(self) -> int:
        return self.values.shape[1]

    def slice_timesteps(self, start: int, stop: int) -> "SeriesMatrix":
        if not (0 <= start < stop <= self.n_timesteps):
            raise ValueError(f"invalid timestep slice [{start}, {stop}) for length {self.n_timesteps}")
        return SeriesMatrix(self.values[:, start:stop], self.channel_names)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Precomputed beta / alpha_bar arrays, indexed by step t = 0..T.

    beta[0] is unused and set to 0; alpha_bar[t] is the cumulative product
    of (1 - beta[k]) for k = 1..t, with the empty product alpha_bar[0] = 1.
    """

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray
    beta_start: float = field(default=float("nan"))
    beta_end: float = field(default=float("nan"))

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if beta.shape != (self.T + 1,) or alpha_bar.shape != (self.T + 1,):
            raise ValueError("beta and alpha_bar must both have length T + 1")
        if alpha_bar[0] != 1.0:
            raise ValueError("alpha_bar[0] must be exactly 1")
        inner = alpha_bar[1:]
        if np.any(inner <= 0.0) or np.any(inner >= 1.0):
            raise ValueError("alpha_bar[1..T] must lie in (0, 1)")
        if np.any(np.diff(alpha_bar) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        recon = np.cumprod(1.0 - beta[1:])
        if not np.allclose(recon, inner, rtol=1e-12, atol=0.0):
            raise ValueError("alpha_bar inconsistent with cumulative product of (1 - beta)")
        beta = beta.copy()
        alpha_bar = alpha_bar.copy()
        beta.setflags(write=False)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", alpha_bar)


def build_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> DiffusionSchedule:
    """Build a linear beta schedule and its cumulative-product alpha_bar.

    beta[t] is interpolated linearly from beta_start to beta_end over
    t = 1..T; both endpoints must lie in (0, 1) with start <= end.
    """
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"beta bounds must satisfy 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.zeros(T + 1, dtype=np.float64)
    beta[1:] = np.linspace(beta_start, beta_end, T)
    alpha_bar = np.ones(T + 1, dtype=np.float64)
    alpha_bar[1:] = np.cumprod(1.0 - beta[1:])
    return DiffusionSchedule(T=T, beta=beta, alpha_bar=alpha_bar,
                             beta_start=float(beta_start), beta_end=float(beta_end))


@dataclass(frozen=True)
class WindowSample:
    """A 2T-length context pairing a length-T history with its length-T future.

    The context covers relative times -T+1..T around the forecast origin;
    the first T columns are the history (final diffusion state) and the
    last T columns the future (initial state).
    """

    context: SeriesMatrix
    origin_index: int

    def __post_init__(self):
        if self.context.n_timesteps % 2 != 0:
            raise ValueError(f"context length must be even (2T), got {self.context.n_timesteps}")

    @property
    def T(self) -> int:
        return self.context.n_timesteps // 2

    def history(self) -> SeriesMatrix:
        """The historical window X over relative times -T+1..0 (first T columns)."""
        return self.context.slice_timesteps(0, self.T)

    def future(self) -> SeriesMatrix:
        """The future window X over relative times 1..T (last T columns)."""
        return self.context.slice_timesteps(self.T, 2 * self.T)


def make_window_samples(series: SeriesMatrix, T: int, stride: int = 1) -> list[WindowSample]:
    """Extract every 2T-length context window at offsets 0, stride, 2*stride, ...

    Windows that would extend past the end of the series are not emitted;
    a series shorter than 2T yields an empty list (callers must check).
    """
    if T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    n = series.n_timesteps
    samples: list[WindowSample] = []
    for offset in range(0, n - 2 * T + 1, stride):
        context = series.slice_timesteps(offset, offset + 2 * T)
        samples.append(WindowSample(context=context, origin_index=offset + T - 1))
    return samples

"""Forward diffusion of a window sample, realized as deterministic sliding.

The future window (step 0) evolves into the historical window (step T) by
sliding the length-T view across the 2T context, one column per step.
Each diffused state satisfies the identity

    X^t = sqrt(alpha_bar[t]) * X^0 + sqrt(1 - alpha_bar[t]) * z^t

where the evolution trend z^t plays the role noise plays in a stochastic
diffusion and is computed by inverting that identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiffusionSchedule, SeriesMatrix, WindowSample, as_values


@dataclass(frozen=True)
class DeviationConfig:
    """Training-time perturbation of the devolution-network input."""

    enabled: bool = True
    seed: int = 0


@dataclass(frozen=True)
class DiffusedState:
    """A forward-diffused window: the slid values X^t and their trend z^t."""

    step: int
    values: SeriesMatrix
    trend: np.ndarray


def slide(sample: WindowSample, k: int, from_step: int = 0) -> SeriesMatrix:
    """Move the length-T window k steps toward the history, starting at from_step.

    The step-s view of the context covers relative times 1-s..T-s, i.e.
    context columns [T-s, 2T-s). slide(sample, 0, s) is the identity on it.
    """
    if k < 0 or from_step < 0:
        raise ValueError(f"k and from_step must be non-negative, got k={k}, from_step={from_step}")
    T = sample.T
    step = from_step + k
    if step > T:
        raise ValueError(f"slide to step {step} exits the context (T={T})")
    return sample.context.slice_timesteps(T - step, 2 * T - step)


def evolution_trend(x0, xt, t: int, schedule: DiffusionSchedule) -> np.ndarray:
    """Trend z^t = (sqrt(1/alpha_bar[t]) * X^t - X^0) / sqrt(1/alpha_bar[t] - 1).

    Defined for t in 1..T only; at t = 0 the divisor vanishes.
    """
    if not (1 <= t <= schedule.T):
        raise ValueError(f"t must be in 1..{schedule.T}, got {t}")
    x0v = as_values(x0)
    xtv = as_values(xt)
    if x0v.shape != xtv.shape:
        raise ValueError(f"shape mismatch: x0 {x0v.shape} vs xt {xtv.shape}")
    inv = 1.0 / schedule.alpha_bar[t]
    return (np.sqrt(inv) * xtv - x0v) / np.sqrt(inv - 1.0)


def diffuse(sample: WindowSample, t: int, schedule: DiffusionSchedule) -> DiffusedState:
    """Diffuse the future window t steps: slide it and compute its trend."""
    if schedule.T != sample.T:
        raise ValueError(f"schedule T={schedule.T} does not match sample T={sample.T}")
    values = slide(sample, t, 0)
    trend = evolution_trend(sample.future(), values, t, schedule)
    return DiffusedState(step=t, values=values, trend=trend)


def interpolate_state(sample: WindowSample, t: int) -> SeriesMatrix:
    """Ablation variant: blend future and history affinely instead of sliding.

    Returns X^0 + (X^T - X^0) * t / T, elementwise, for t in 0..T.
    """
    T = sample.T
    if not (0 <= t <= T):
        raise ValueError(f"t must be in 0..{T}, got {t}")
    x0 = sample.future().values
    xT = sample.history().values
    return SeriesMatrix(x0 + (xT - x0) * (t / T), sample.context.channel_names)


def apply_deviation(
    xt,
    t: int,
    schedule: DiffusionSchedule,
    config: DeviationConfig,
    rng: np.random.Generator | None = None,
) -> SeriesMatrix:
    """Perturb a diffused state with alpha_bar[t]-scaled standard-normal noise.

    The perturbation targets only the devolution network's input; loss
    targets are computed from the clean state. When disabled, the input is
    returned unchanged. alpha_bar decreases in t, so the injected scale is
    largest near the future window and smallest near the history.
    """
    if not (1 <= t <= schedule.T):
        raise ValueError(f"t must be in 1..{schedule.T}, got {t}")
    xtv = as_values(xt)
    names = xt.channel_names if isinstance(xt, SeriesMatrix) else ()
    if not config.enabled:
        return xt if isinstance(xt, SeriesMatrix) else SeriesMatrix(xtv, names)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    eps = rng.standard_normal(xtv.shape)
    return SeriesMatrix(xtv + schedule.alpha_bar[t] * eps, names)

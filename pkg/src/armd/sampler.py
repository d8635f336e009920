"""Deterministic skip-step reverse sampling, from history to forecast.

One reverse application at step t with skip k computes

    X^{t-k} = sqrt(abar[t-k]) * x0_hat + sqrt(1 - abar[t-k] - sigma_t^2) * z_hat

with sigma_t = 0 in the default deterministic mode. A forecast runs
n_steps applications from t = T down to exactly 0: each jumps
floor(T / n_steps) steps and the final application absorbs the remainder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiffusionSchedule, SeriesMatrix, as_values
from .devolution import predict_trend

TRAJECTORY_LIMIT = 512
DEFAULT_NOISE_VARIANCE_FACTOR = 0.01


@dataclass(frozen=True)
class SamplerConfig:
    """Reverse-process settings.

    n_steps: number of reverse applications (grid {1, 2, 3, 4, 6, 8, 12})
    add_noise: ablation flag; when set, sigma_t * eps is added per step
    noise_sigma: constant per-step sigma override; None applies the
        default sigma_t^2 = 0.01 * (1 - abar[t-k]), which is always valid
    keep_trajectory: None resolves to T <= 512 at forecast time
    """

    n_steps: int = 1
    add_noise: bool = False
    noise_sigma: float | None = None
    seed: int = 0
    keep_trajectory: bool | None = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")


@dataclass(frozen=True)
class ForecastRun:
    """A reverse trajectory (step, state) from t = T down to the prediction at t = 0."""

    trajectory: tuple[tuple[int, SeriesMatrix], ...]
    prediction: SeriesMatrix


def _sigma(t: int, k: int, schedule: DiffusionSchedule, config: SamplerConfig) -> float:
    if not config.add_noise:
        return 0.0
    if config.noise_sigma is not None:
        return float(config.noise_sigma)
    return float(np.sqrt(DEFAULT_NOISE_VARIANCE_FACTOR * (1.0 - schedule.alpha_bar[t - k])))


def sample_step(
    model,
    xt,
    t: int,
    k: int,
    schedule: DiffusionSchedule,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
) -> SeriesMatrix:
    """Devolve the state at step t down to step t - k."""
    if not (1 <= t <= schedule.T):
        raise ValueError(f"t must be in 1..{schedule.T}, got {t}")
    if not (1 <= k <= t):
        raise ValueError(f"skip count k must be in 1..t, got k={k} at t={t}")
    pair = predict_trend(model, xt, t, schedule)
    abar_next = schedule.alpha_bar[t - k]
    sigma = _sigma(t, k, schedule, config)
    radicand = 1.0 - abar_next - sigma * sigma
    if radicand < 0.0:
        raise ValueError(
            f"noise sigma^2 = {sigma * sigma:.3g} exceeds 1 - alpha_bar[{t - k}] = {1.0 - abar_next:.3g}"
        )
    out = np.sqrt(abar_next) * pair.x0_hat + np.sqrt(radicand) * pair.z_hat
    if config.add_noise and sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(config.seed)
        out = out + sigma * rng.standard_normal(out.shape)
    names = xt.channel_names if isinstance(xt, SeriesMatrix) else ()
    return SeriesMatrix(out, names)


def plan_steps(T: int, n_steps: int) -> list[int]:
    """Skip sizes for n_steps applications covering T steps exactly.

    Equal floor(T / n_steps) jumps, with the remainder absorbed into the
    final jump so the trajectory lands on step 0.
    """
    if not (1 <= n_steps <= T):
        raise ValueError(f"n_steps must be in 1..{T}, got {n_steps}")
    base = T // n_steps
    sizes = [base] * (n_steps - 1)
    sizes.append(T - base * (n_steps - 1))
    return sizes


def forecast(
    model,
    history,
    schedule: DiffusionSchedule,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
) -> ForecastRun:
    """Run the reverse process from the historical window to a forecast.

    Deterministic when add_noise is false; the prediction equals the
    recorded step-0 state exactly. An explicit rng lets callers stream
    noise across many forecasts instead of reseeding per call.
    """
    hist = as_values(history)
    T = schedule.T
    if hist.shape[1] != T:
        raise ValueError(f"history length {hist.shape[1]} does not match schedule T={T}")
    names = history.channel_names if isinstance(history, SeriesMatrix) else ()
    state = history if isinstance(history, SeriesMatrix) else SeriesMatrix(hist, names)

    keep = config.keep_trajectory
    if keep is None:
        keep = T <= TRAJECTORY_LIMIT

    if rng is None and config.add_noise:
        rng = np.random.default_rng(config.seed)
    trajectory: list[tuple[int, SeriesMatrix]] = [(T, state)]
    t = T
    for k in plan_steps(T, config.n_steps):
        state = sample_step(model, state, t, k, schedule, config, rng=rng)
        t -= k
        if keep or t == 0:
            trajectory.append((t, state))
    return ForecastRun(trajectory=tuple(trajectory), prediction=state)

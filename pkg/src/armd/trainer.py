"""Training loop: batched forward diffusion, devolution prediction, Adam.

Each iteration draws batch_size window samples with replacement and one
diffusion step t per sample, builds the diffused states and their trend
targets, perturbs the network input when deviation is enabled, and takes
one Adam step on the mean L1 trend error. The whole loop is deterministic
given the config seeds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import DiffusionSchedule, WindowSample
from .devolution import DevolutionModel, sigmoid
from .evolution import DeviationConfig

STATE_GENERATORS = ("sliding", "interpolation")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    deviation: DeviationConfig = field(default_factory=DeviationConfig)
    state_generator: str = "sliding"
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.state_generator not in STATE_GENERATORS:
            raise ValueError(f"state_generator must be one of {STATE_GENERATORS}, got {self.state_generator!r}")


@dataclass
class TrainReport:
    loss_curve: np.ndarray
    wall_time: float
    final_loss: float


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; moments start at zero."""
    step = state.step + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    corr1 = 1.0 - b1**step
    corr2 = 1.0 - b2**step
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for key, value in params.items():
        g = grads[key]
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        new_params[key] = value - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(step=step, m=new_m, v=new_v)


def _batch_states(
    contexts: np.ndarray,
    idx: np.ndarray,
    ts: np.ndarray,
    T: int,
    generator: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Diffused states X^t and initial states X^0 for a batch, shape (B, C, T)."""
    ctx = contexts[idx]
    x0 = ctx[:, :, T:]
    if generator == "sliding":
        cols = (T - ts)[:, np.newaxis] + np.arange(T)[np.newaxis, :]
        xt = np.take_along_axis(ctx, cols[:, np.newaxis, :], axis=2)
    else:
        hist = ctx[:, :, :T]
        frac = (ts / T)[:, np.newaxis, np.newaxis]
        xt = x0 + (hist - x0) * frac
    return xt, x0


def train(
    dataset: list[WindowSample],
    schedule: DiffusionSchedule,
    config: TrainConfig,
    model: DevolutionModel | None = None,
    checkpoint_fn=None,
    hyper_b: float = 1.0,
    hyper_c: float = 0.5,
    hyper_d: float = 0.5,
) -> tuple[DevolutionModel, TrainReport]:
    """Train a devolution model on window samples; reproducible given seeds.

    When no model is passed, one is initialized from the config seed with
    the given blending hyperparameters. checkpoint_fn(iteration, model)
    fires every config.checkpoint_every iterations when set.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    T = schedule.T
    for sample in dataset:
        if sample.T != T:
            raise ValueError(f"sample T={sample.T} does not match schedule T={T}")

    rng = np.random.default_rng(config.seed)
    if model is None:
        model = DevolutionModel.initialize(schedule, hyper_b, hyper_c, hyper_d, rng=rng)
    if model.T != T:
        raise ValueError(f"model T={model.T} does not match schedule T={T}")
    dev_rng = np.random.default_rng(config.deviation.seed)

    contexts = np.stack([s.context.values for s in dataset])
    n_samples = contexts.shape[0]
    params = {"weight": model.weight, "bias": model.bias, "w_logits": model.w_logits}
    opt_state = AdamState.zeros_like(params)
    b, c, d = model.hyper_b, model.hyper_c, model.hyper_d

    loss_curve = np.empty(config.iterations)
    started = time.perf_counter()

    for it in range(config.iterations):
        idx = rng.integers(0, n_samples, size=config.batch_size)
        ts = rng.integers(1, T + 1, size=config.batch_size)
        xt, x0 = _batch_states(contexts, idx, ts, T, config.state_generator)

        abar = schedule.alpha_bar[ts]
        s = np.sqrt(1.0 / abar)[:, np.newaxis, np.newaxis]
        r = np.sqrt(1.0 / abar - 1.0)[:, np.newaxis, np.newaxis]
        z_true = (s * xt - x0) / r

        if config.deviation.enabled:
            xt_in = xt + abar[:, np.newaxis, np.newaxis] * dev_rng.standard_normal(xt.shape)
        else:
            xt_in = xt

        w = sigmoid(params["w_logits"][ts - 1])
        scale = (1.0 + c * w) ** (-d)
        wb = w[:, np.newaxis, np.newaxis]
        sb = scale[:, np.newaxis, np.newaxis]

        dist = xt_in @ params["weight"].T + params["bias"]
        blended = wb * xt_in + (1.0 - b * wb) * dist
        x0_hat = sb * blended
        z_hat = (s * xt - x0_hat) / r

        resid = z_true - z_hat
        loss_curve[it] = np.mean(np.abs(resid))

        g_x0 = np.sign(resid) / (resid.size * r)
        g_dist = g_x0 * ((1.0 - b * w) * scale)[:, np.newaxis, np.newaxis]
        grads = {
            "weight": np.einsum("bci,bcj->ij", g_dist, xt_in),
            "bias": g_dist.sum(axis=(0, 1)),
        }
        dscale_dw = -d * c * scale / (1.0 + c * w)
        dx0_dw = dscale_dw[:, np.newaxis, np.newaxis] * blended + sb * (xt_in - b * dist)
        g_w = (g_x0 * dx0_dw).sum(axis=(1, 2))
        grad_logits = np.zeros(T)
        np.add.at(grad_logits, ts - 1, g_w * w * (1.0 - w))
        grads["w_logits"] = grad_logits

        params, opt_state = adam_step(params, grads, opt_state, config)

        if checkpoint_fn is not None and config.checkpoint_every > 0 and (it + 1) % config.checkpoint_every == 0:
            _sync_model(model, params)
            checkpoint_fn(it + 1, model)

    _sync_model(model, params)
    report = TrainReport(
        loss_curve=loss_curve,
        wall_time=time.perf_counter() - started,
        final_loss=float(loss_curve[-1]),
    )
    return model, report


def _sync_model(model: DevolutionModel, params: dict[str, np.ndarray]) -> None:
    model.weight = params["weight"]
    model.bias = params["bias"]
    model.w_logits = params["w_logits"]

"""Linear devolution network and its analytic backward pass.

Forward pipeline for an input state x at step t (per channel, the same
T x T weights shared across channels):

    D       = weight @ x + bias                       distance prediction
    W(t)    = sigmoid(w_logits[t])                    learned step weight
    x0_hat  = (W(t)*x + (1 - b*W(t))*D) / (1 + c*W(t))**d
    z_hat   = (sqrt(1/abar_t)*x - x0_hat) / sqrt(1/abar_t - 1)
    loss    = mean |z_true - z_hat|

The step weights are stored as logits so W(t) stays in (0, 1) during
training. Gradients are derived by hand; the L1 subgradient at exactly
zero is taken as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DiffusionSchedule, SeriesMatrix, as_values
from .evolution import evolution_trend

DENOMINATOR_FLOOR = 1e-6


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


@dataclass
class DevolutionModel:
    """Shared linear distance head plus per-step blending weights.

    weight: (T, T) map from an input window to the distance prediction
    bias: (T,) offset
    w_logits: (T,) logits of W(t), position t-1 holding step t
    hyper_b, hyper_c, hyper_d: blending constants
    """

    weight: np.ndarray
    bias: np.ndarray
    w_logits: np.ndarray
    hyper_b: float
    hyper_c: float
    hyper_d: float
    T: int

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.w_logits = np.asarray(self.w_logits, dtype=np.float64)
        if self.weight.shape != (self.T, self.T):
            raise ValueError(f"weight must be ({self.T}, {self.T}), got {self.weight.shape}")
        if self.bias.shape != (self.T,):
            raise ValueError(f"bias must be ({self.T},), got {self.bias.shape}")
        if self.w_logits.shape != (self.T,):
            raise ValueError(f"w_logits must be ({self.T},), got {self.w_logits.shape}")
        base = 1.0 + self.hyper_c * sigmoid(self.w_logits)
        if np.any(base <= DENOMINATOR_FLOOR):
            t_bad = int(np.argmax(base <= DENOMINATOR_FLOOR)) + 1
            raise ValueError(
                f"balancing denominator base 1 + c*W(t) = {base[t_bad - 1]:.3g} at t={t_bad} "
                f"is not above {DENOMINATOR_FLOOR}; rejecting c={self.hyper_c}"
            )

    @classmethod
    def initialize(
        cls,
        schedule: DiffusionSchedule,
        hyper_b: float = 1.0,
        hyper_c: float = 0.5,
        hyper_d: float = 0.5,
        rng: np.random.Generator | None = None,
    ) -> "DevolutionModel":
        """Fresh model: near-identity distance head, W(t) = alpha_bar[t].

        The identity-plus-noise weight makes the untrained head approximate
        persistence; logits are set so the step weights start at the
        schedule's alpha_bar values (decreasing in t).
        """
        if rng is None:
            rng = np.random.default_rng(0)
        T = schedule.T
        weight = np.eye(T) + rng.uniform(-0.01, 0.01, size=(T, T))
        bias = np.zeros(T)
        w_logits = logit(schedule.alpha_bar[1:])
        return cls(weight=weight, bias=bias, w_logits=w_logits,
                   hyper_b=float(hyper_b), hyper_c=float(hyper_c), hyper_d=float(hyper_d), T=T)

    def step_weight(self, t: int) -> float:
        """W(t) = sigmoid(w_logits[t]), t in 1..T."""
        if not (1 <= t <= self.T):
            raise ValueError(f"t must be in 1..{self.T}, got {t}")
        return float(sigmoid(self.w_logits[t - 1]))

    def distance_head(self, xt) -> np.ndarray:
        """Distance prediction D = weight @ x + bias, independently per channel."""
        x = as_values(xt)
        if x.shape[1] != self.T:
            raise ValueError(f"input window length {x.shape[1]} does not match T={self.T}")
        return x @ self.weight.T + self.bias

    def predict_x0(self, xt, t: int) -> np.ndarray:
        """Blend the input with its distance prediction into an estimate of X^0."""
        x = as_values(xt)
        d = self.distance_head(x)
        w = self.step_weight(t)
        denom = (1.0 + self.hyper_c * w) ** self.hyper_d
        return (w * x + (1.0 - self.hyper_b * w) * d) / denom


@dataclass(frozen=True)
class PredictionPair:
    """Predicted initial state and its implied evolution trend."""

    x0_hat: np.ndarray
    z_hat: np.ndarray


def predict_trend(model, xt, t: int, schedule: DiffusionSchedule) -> PredictionPair:
    """Predict X^0 and convert it to a trend on the same path as the ground truth.

    Any object exposing predict_x0(xt, t) works as the model here; the
    trend conversion reuses evolution_trend so a perfect X^0 prediction
    reproduces the true trend bit-for-bit.
    """
    x0_hat = model.predict_x0(xt, t)
    z_hat = evolution_trend(x0_hat, xt, t, schedule)
    return PredictionPair(x0_hat=x0_hat, z_hat=z_hat)


def l1_loss(z_true, z_hat) -> float:
    """Mean absolute difference over all elements."""
    a = np.asarray(z_true, dtype=np.float64)
    b = np.asarray(z_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


@dataclass
class ModelGrads:
    """Gradients of the L1 loss w.r.t. the trainable parameters."""

    weight: np.ndarray
    bias: np.ndarray
    w_logits: np.ndarray

    def scaled(self, factor: float) -> "ModelGrads":
        return ModelGrads(self.weight * factor, self.bias * factor, self.w_logits * factor)


def backward(
    model: DevolutionModel,
    xt,
    t: int,
    z_true: np.ndarray,
    schedule: DiffusionSchedule,
    xt_eval=None,
) -> ModelGrads:
    """Analytic gradients of l1_loss(z_true, z_hat) for one input state.

    xt is the network input (possibly deviation-perturbed); xt_eval, when
    given, is the clean state used in the trend conversion term
    sqrt(1/abar_t)*X^t. They coincide outside deviation training.
    """
    x = as_values(xt)
    x_eval = x if xt_eval is None else as_values(xt_eval)
    z_true = np.asarray(z_true, dtype=np.float64)
    if x.shape[1] != model.T:
        raise ValueError(f"input window length {x.shape[1]} does not match T={model.T}")
    if z_true.shape != x.shape:
        raise ValueError(f"z_true shape {z_true.shape} does not match input {x.shape}")
    if not (1 <= t <= schedule.T):
        raise ValueError(f"t must be in 1..{schedule.T}, got {t}")

    w = model.step_weight(t)
    b, c, d = model.hyper_b, model.hyper_c, model.hyper_d
    scale = (1.0 + c * w) ** (-d)

    dist = model.distance_head(x)
    blended = w * x + (1.0 - b * w) * dist
    x0_hat = scale * blended

    inv = 1.0 / schedule.alpha_bar[t]
    root = np.sqrt(inv - 1.0)
    z_hat = (np.sqrt(inv) * x_eval - x0_hat) / root

    # d loss / d x0_hat: the 1/root from the trend conversion flips the
    # residual sign back to +sign(z_true - z_hat).
    n_elems = z_true.size
    g_x0 = np.sign(z_true - z_hat) / (n_elems * root)

    g_dist = g_x0 * ((1.0 - b * w) * scale)
    grad_weight = g_dist.T @ x
    grad_bias = g_dist.sum(axis=0)

    # d x0_hat / d W(t): product rule through the scale and the blend.
    dscale_dw = -d * c * scale / (1.0 + c * w)
    dx0_dw = dscale_dw * blended + scale * (x - b * dist)
    g_w = float(np.sum(g_x0 * dx0_dw))
    grad_logits = np.zeros(model.T)
    grad_logits[t - 1] = g_w * w * (1.0 - w)

    return ModelGrads(weight=grad_weight, bias=grad_bias, w_logits=grad_logits)

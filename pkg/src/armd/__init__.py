"""ARMD: auto-regressive moving diffusion forecasting.

Time-series forecasting as a deterministic sliding-window diffusion: the
future window diffuses into the historical window by sliding, a linear
devolution network learns to reverse that evolution, and forecasting is a
deterministic skip-step reverse process starting from the history.
"""

from .core import (
    DiffusionSchedule,
    SeriesMatrix,
    WindowSample,
    build_schedule,
    make_window_samples,
)
from .data_io import (
    ModelArtifact,
    NormalizationStats,
    SplitSpec,
    chronological_split,
    denormalize,
    fit_normalizer,
    load_csv,
    load_model,
    normalize,
    save_model,
)
from .devolution import DevolutionModel, ModelGrads, PredictionPair, backward, l1_loss, predict_trend
from .evolution import (
    DeviationConfig,
    DiffusedState,
    apply_deviation,
    diffuse,
    evolution_trend,
    interpolate_state,
    slide,
)
from .harness import (
    ExperimentSpec,
    MetricReport,
    compute_metrics,
    grid_search_sampling_steps,
    linear_baseline,
    naive_baseline,
    run_experiment,
)
from .sampler import ForecastRun, SamplerConfig, forecast, sample_step
from .trainer import AdamState, TrainConfig, TrainReport, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "DeviationConfig",
    "DevolutionModel",
    "DiffusedState",
    "DiffusionSchedule",
    "ExperimentSpec",
    "ForecastRun",
    "MetricReport",
    "ModelArtifact",
    "ModelGrads",
    "NormalizationStats",
    "PredictionPair",
    "SamplerConfig",
    "SeriesMatrix",
    "SplitSpec",
    "TrainConfig",
    "TrainReport",
    "WindowSample",
    "adam_step",
    "apply_deviation",
    "backward",
    "build_schedule",
    "chronological_split",
    "compute_metrics",
    "denormalize",
    "diffuse",
    "evolution_trend",
    "fit_normalizer",
    "forecast",
    "grid_search_sampling_steps",
    "interpolate_state",
    "l1_loss",
    "linear_baseline",
    "load_csv",
    "load_model",
    "make_window_samples",
    "naive_baseline",
    "normalize",
    "predict_trend",
    "run_experiment",
    "sample_step",
    "save_model",
    "slide",
    "train",
]

"""Experiment harness: metrics, reference baselines, grid search, reports.

An experiment loads a CSV dataset, makes a chronological 70/10/20 split,
z-scores everything with train statistics, trains one model per repeat
seed, picks the sampling-step count on the validation split, and reports
test MSE/MAE next to two reference baselines (repeat-history and a ridge
least-squares linear map).

Repeats are realized as training seeds 0..n_repeats-1: the default
sampler is deterministic, so repeated sampling from one model would be
pointless. Summary files never contain wall times, keeping reruns
byte-identical.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core import SeriesMatrix, WindowSample, build_schedule, make_window_samples
from .data_io import chronological_split, fit_normalizer, load_csv, normalize, write_loss_curve
from .evolution import DeviationConfig
from .sampler import SamplerConfig, forecast
from .trainer import TrainConfig, train

DEFAULT_STEP_GRID = (1, 2, 3, 4, 6, 8, 12)


class ExperimentError(RuntimeError):
    """An experiment stage failed; the message carries the stage name."""


@contextmanager
def _stage(name: str):
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(f"[{name}] {exc}") from exc


@dataclass(frozen=True)
class MetricReport:
    """MSE/MAE aggregated over windows; per-window values kept for dispersion."""

    mse: float
    mae: float
    n_windows: int
    per_window_mse: np.ndarray
    per_window_mae: np.ndarray

    @classmethod
    def merge(cls, reports: list["MetricReport"]) -> "MetricReport":
        if not reports:
            raise ValueError("cannot merge zero metric reports")
        mses = np.concatenate([r.per_window_mse for r in reports])
        maes = np.concatenate([r.per_window_mae for r in reports])
        return cls(
            mse=float(mses.mean()),
            mae=float(maes.mean()),
            n_windows=len(mses),
            per_window_mse=mses,
            per_window_mae=maes,
        )


def compute_metrics(pred, truth) -> MetricReport:
    """Single-window contribution: mean squared / absolute error over all elements."""
    p = pred.values if isinstance(pred, SeriesMatrix) else np.asarray(pred, dtype=np.float64)
    t = truth.values if isinstance(truth, SeriesMatrix) else np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs truth {t.shape}")
    err = p - t
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    return MetricReport(mse=mse, mae=mae, n_windows=1,
                        per_window_mse=np.array([mse]), per_window_mae=np.array([mae]))


def naive_baseline(history: SeriesMatrix) -> SeriesMatrix:
    """Repeat the historical window as the forecast."""
    return history


@dataclass(frozen=True)
class LinearBaseline:
    """Ridge least-squares map from history to future, shared across channels."""

    weight: np.ndarray
    bias: np.ndarray

    def predict(self, history: SeriesMatrix) -> SeriesMatrix:
        return SeriesMatrix(history.values @ self.weight.T + self.bias, history.channel_names)


def linear_baseline(train_windows: list[WindowSample], ridge: float = 1e-6) -> LinearBaseline:
    """Fit future = W @ history + b over all (window, channel) rows by normal equations."""
    if not train_windows:
        raise ValueError("cannot fit a linear baseline on zero windows")
    T = train_windows[0].T
    hist = np.concatenate([w.history().values for w in train_windows], axis=0)
    fut = np.concatenate([w.future().values for w in train_windows], axis=0)
    a = np.concatenate([hist, np.ones((hist.shape[0], 1))], axis=1)
    gram = a.T @ a + ridge * np.eye(T + 1)
    solution = np.linalg.solve(gram, a.T @ fut)
    return LinearBaseline(weight=solution[:T].T, bias=solution[T])


def evaluate_forecaster(predict_fn, windows: list[WindowSample]) -> MetricReport:
    """Score predict_fn(history) -> SeriesMatrix against each window's future."""
    if not windows:
        raise ValueError("cannot evaluate on zero windows")
    reports = [compute_metrics(predict_fn(w.history()), w.future()) for w in windows]
    return MetricReport.merge(reports)


def evaluate_model(model, windows, schedule, config: SamplerConfig) -> MetricReport:
    rng = np.random.default_rng(config.seed) if config.add_noise else None
    return evaluate_forecaster(
        lambda hist: forecast(model, hist, schedule, config, rng=rng).prediction, windows
    )


def grid_search_sampling_steps(
    model,
    valid_windows: list[WindowSample],
    schedule,
    grid: tuple[int, ...] = DEFAULT_STEP_GRID,
    config: SamplerConfig = SamplerConfig(),
) -> int:
    """Validation-MSE minimizer over the step grid, ties broken toward fewer steps."""
    if not valid_windows:
        raise ValueError("grid search needs a non-empty validation set")
    candidates = sorted(n for n in grid if 1 <= n <= schedule.T)
    if not candidates:
        raise ValueError(f"no grid value is usable for T={schedule.T}: {grid}")
    best_steps, best_mse = None, None
    for n_steps in candidates:
        trial = SamplerConfig(
            n_steps=n_steps, add_noise=config.add_noise, noise_sigma=config.noise_sigma,
            seed=config.seed, keep_trajectory=False,
        )
        mse = evaluate_model(model, valid_windows, schedule, trial).mse
        if best_mse is None or mse < best_mse:
            best_steps, best_mse = n_steps, mse
    return best_steps


@dataclass(frozen=True)
class ExperimentSpec:
    """Plain key = value experiment description; every field is a file key."""

    dataset: str
    output_dir: str
    horizon: int = 96
    iterations: int = 2000
    batch_size: int = 128
    learning_rate: float = 1e-3
    n_repeats: int = 10
    train_stride: int = 1
    beta_start: float = 1e-4
    beta_end: float = 0.02
    hyper_b: float = 1.0
    hyper_c: float = 0.5
    hyper_d: float = 0.5
    step_grid: tuple[int, ...] = DEFAULT_STEP_GRID
    interpolation_states: bool = False
    remove_deviation: bool = False
    add_sampling_noise: bool = False
    save_predictions: str = "first"

    def __post_init__(self):
        if self.n_repeats < 1:
            raise ValueError(f"n_repeats must be >= 1, got {self.n_repeats}")
        if self.save_predictions not in ("none", "first", "all"):
            raise ValueError(f"save_predictions must be none/first/all, got {self.save_predictions!r}")

    @property
    def state_generator(self) -> str:
        return "interpolation" if self.interpolation_states else "sliding"

    @classmethod
    def from_file(cls, path) -> "ExperimentSpec":
        values = parse_kv_file(path)
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"{path}: unknown experiment key {key!r}")
            kwargs[key] = _convert(key, raw)
        missing = {"dataset", "output_dir"} - kwargs.keys()
        if missing:
            raise ValueError(f"{path}: missing required key(s): {', '.join(sorted(missing))}")
        return cls(**kwargs)


_BOOL_KEYS = {"interpolation_states", "remove_deviation", "add_sampling_noise"}
_INT_KEYS = {"horizon", "iterations", "batch_size", "n_repeats", "train_stride"}
_FLOAT_KEYS = {"learning_rate", "beta_start", "beta_end", "hyper_b", "hyper_c", "hyper_d"}


def _convert(key: str, raw: str):
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"key {key!r} expects true/false, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "step_grid":
        return tuple(int(part) for part in raw.split(",") if part.strip())
    return raw


def parse_kv_file(path) -> dict[str, str]:
    """Read `key = value` lines; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}: line {line_no} is not a key = value pair: {line!r}")
        key, raw = stripped.split("=", 1)
        values[key.strip()] = raw.strip()
    return values


def run_experiment(spec: ExperimentSpec) -> dict:
    """Execute the full protocol and write report files; returns the summary dict."""
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    T = spec.horizon

    with _stage("load"):
        series = load_csv(spec.dataset)
    with _stage("split"):
        train_split, valid_split, test_split = chronological_split(series)
    with _stage("normalize"):
        stats = fit_normalizer(train_split)
        train_norm = normalize(train_split, stats)
        valid_norm = normalize(valid_split, stats)
        test_norm = normalize(test_split, stats)
    with _stage("windows"):
        train_windows = make_window_samples(train_norm, T, spec.train_stride)
        valid_windows = make_window_samples(valid_norm, T, 1)
        test_windows = make_window_samples(test_norm, T, 1)
        for name, windows in (("train", train_windows), ("valid", valid_windows), ("test", test_windows)):
            if not windows:
                raise ValueError(f"{name} split has no full window of length {2 * T}")
        schedule = build_schedule(T, spec.beta_start, spec.beta_end)

    per_seed = []
    for seed in range(spec.n_repeats):
        with _stage(f"train seed {seed}"):
            config = TrainConfig(
                iterations=spec.iterations,
                batch_size=spec.batch_size,
                learning_rate=spec.learning_rate,
                seed=seed,
                deviation=DeviationConfig(enabled=not spec.remove_deviation, seed=seed),
                state_generator=spec.state_generator,
            )
            model, report = train(
                train_windows, schedule, config,
                hyper_b=spec.hyper_b, hyper_c=spec.hyper_c, hyper_d=spec.hyper_d,
            )
            write_loss_curve(out_dir / f"loss_curve_seed{seed}.csv", report.loss_curve)
        with _stage(f"grid search seed {seed}"):
            base = SamplerConfig(add_noise=spec.add_sampling_noise, seed=seed, keep_trajectory=False)
            n_steps = grid_search_sampling_steps(model, valid_windows, schedule, spec.step_grid, base)
        with _stage(f"evaluate seed {seed}"):
            chosen = SamplerConfig(
                n_steps=n_steps, add_noise=spec.add_sampling_noise, seed=seed, keep_trajectory=False
            )
            metrics = evaluate_model(model, test_windows, schedule, chosen)
            per_seed.append({"seed": seed, "n_steps": n_steps, "mse": metrics.mse, "mae": metrics.mae})
            if spec.save_predictions == "all" or (spec.save_predictions == "first" and seed == 0):
                _write_predictions(out_dir / f"predictions_seed{seed}.csv",
                                   model, test_windows, schedule, chosen)

    with _stage("baselines"):
        naive = evaluate_forecaster(naive_baseline, test_windows)
        fitted = linear_baseline(train_windows)
        linear = evaluate_forecaster(fitted.predict, test_windows)

    summary = {
        "dataset": str(spec.dataset),
        "horizon": T,
        "n_repeats": spec.n_repeats,
        "iterations": spec.iterations,
        "batch_size": spec.batch_size,
        "learning_rate": spec.learning_rate,
        "beta_start": spec.beta_start,
        "beta_end": spec.beta_end,
        "hyper_b": spec.hyper_b,
        "hyper_c": spec.hyper_c,
        "hyper_d": spec.hyper_d,
        "state_generator": spec.state_generator,
        "deviation_enabled": not spec.remove_deviation,
        "add_sampling_noise": spec.add_sampling_noise,
        "step_grid": list(spec.step_grid),
        "n_train_windows": len(train_windows),
        "n_valid_windows": len(valid_windows),
        "n_test_windows": len(test_windows),
        "per_seed": per_seed,
        "mse_mean": float(np.mean([r["mse"] for r in per_seed])),
        "mse_std": float(np.std([r["mse"] for r in per_seed])),
        "mae_mean": float(np.mean([r["mae"] for r in per_seed])),
        "mae_std": float(np.std([r["mae"] for r in per_seed])),
        "naive_mse": naive.mse,
        "naive_mae": naive.mae,
        "linear_mse": linear.mse,
        "linear_mae": linear.mae,
    }

    with _stage("report"):
        _write_summary_txt(out_dir / "summary.txt", summary)
        (out_dir / "summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
        with (out_dir / "metrics.csv").open("w", encoding="utf-8") as fh:
            fh.write("seed,n_steps,mse,mae\n")
            for row in per_seed:
                fh.write(f"{row['seed']},{row['n_steps']},{row['mse']!r},{row['mae']!r}\n")
    return summary


def _write_summary_txt(path: Path, summary: dict) -> None:
    lines = ["# repeats are independent training seeds; default sampling is deterministic"]
    for key, value in summary.items():
        if key == "per_seed":
            for row in value:
                lines.append(
                    f"seed_{row['seed']} = n_steps:{row['n_steps']} mse:{row['mse']!r} mae:{row['mae']!r}"
                )
        elif isinstance(value, float):
            lines.append(f"{key} = {value!r}")
        elif isinstance(value, list):
            lines.append(f"{key} = {','.join(str(v) for v in value)}")
        else:
            lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_predictions(path: Path, model, windows, schedule, config: SamplerConfig) -> None:
    """Long-format prediction-vs-truth table for external plotting."""
    rng = np.random.default_rng(config.seed) if config.add_noise else None
    with path.open("w", encoding="utf-8") as fh:
        fh.write("window,channel,step,prediction,truth\n")
        for w_idx, window in enumerate(windows):
            pred = forecast(model, window.history(), schedule, config, rng=rng).prediction
            truth = window.future()
            for ch, name in enumerate(truth.channel_names):
                for step in range(truth.n_timesteps):
                    fh.write(
                        f"{w_idx},{name},{step},{pred.values[ch, step]!r},{truth.values[ch, step]!r}\n"
                    )

"""Command-line interface.

Subcommands:
  train       fit a model on a dataset's training split, save the artifact
  forecast    predict the next horizon from the tail of a history CSV
  evaluate    score a saved model on a dataset's test split
  experiment  run a full multi-seed experiment from a key = value spec file
  schedule    dump the beta / alpha_bar table
  synth       write the bundled synthetic benchmark series

Failures exit nonzero with a stage-tagged message on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data_io, harness, synthetic
from .core import SeriesMatrix, build_schedule, make_window_samples
from .evolution import DeviationConfig
from .sampler import SamplerConfig, forecast
from .trainer import TrainConfig, train


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--horizon", type=int, default=96, help="history/forecast length T")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stride", type=int, default=1, help="training window stride")
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)
    p.add_argument("--hyper-b", type=float, default=1.0)
    p.add_argument("--hyper-c", type=float, default=0.5)
    p.add_argument("--hyper-d", type=float, default=0.5)
    p.add_argument("--no-deviation", action="store_true", help="disable input deviation during training")
    p.add_argument("--state-generator", choices=("sliding", "interpolation"), default="sliding")
    p.add_argument("--checkpoint-every", type=int, default=0, help="save the artifact every N iterations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="armd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a dataset and save a model artifact")
    p.add_argument("--data", required=True, help="CSV dataset path")
    p.add_argument("--out", required=True, help="model artifact output path")
    p.add_argument("--loss-curve", help="optional loss-curve CSV output path")
    _add_train_flags(p)

    p = sub.add_parser("forecast", help="forecast from the tail of a history CSV")
    p.add_argument("--model", required=True, help="model artifact path")
    p.add_argument("--history", required=True, help="CSV with at least T rows; the last T are used")
    p.add_argument("--out", required=True, help="prediction CSV output path")
    p.add_argument("--steps", type=int, default=1, help="number of reverse sampling applications")

    p = sub.add_parser("evaluate", help="score a saved model on a dataset's test split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=0,
                   help="sampling steps; 0 grid-searches on the validation split")

    p = sub.add_parser("experiment", help="run a spec-file experiment")
    p.add_argument("--spec", required=True, help="key = value experiment spec file")

    p = sub.add_parser("schedule", help="print the beta / alpha_bar table")
    p.add_argument("--horizon", type=int, default=96)
    p.add_argument("--beta-start", type=float, default=1e-4)
    p.add_argument("--beta-end", type=float, default=0.02)

    p = sub.add_parser("synth", help="write the synthetic benchmark series")
    p.add_argument("--out", required=True)
    p.add_argument("--timesteps", type=int, default=5000)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--seed", type=int, default=synthetic.DEFAULT_SEED)
    return parser


def _cmd_train(args) -> int:
    series = data_io.load_csv(args.data)
    train_split, _, _ = data_io.chronological_split(series)
    stats = data_io.fit_normalizer(train_split)
    windows = make_window_samples(data_io.normalize(train_split, stats), args.horizon, args.stride)
    if not windows:
        raise ValueError(f"training split is too short for horizon {args.horizon}")
    schedule = build_schedule(args.horizon, args.beta_start, args.beta_end)
    config = TrainConfig(
        iterations=args.iterations,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
        deviation=DeviationConfig(enabled=not args.no_deviation, seed=args.seed),
        state_generator=args.state_generator,
        checkpoint_every=args.checkpoint_every,
    )
    checkpoint_fn = None
    if args.checkpoint_every > 0:
        def checkpoint_fn(iteration, model, _stats=stats, _schedule=schedule):
            data_io.save_model(model, _stats, _schedule, f"{args.out}.iter{iteration}")
    model, report = train(
        windows, schedule, config, checkpoint_fn=checkpoint_fn,
        hyper_b=args.hyper_b, hyper_c=args.hyper_c, hyper_d=args.hyper_d,
    )
    data_io.save_model(model, stats, schedule, args.out)
    if args.loss_curve:
        data_io.write_loss_curve(args.loss_curve, report.loss_curve)
    print(f"trained {args.iterations} iterations on {len(windows)} windows, "
          f"final loss {report.final_loss:.6f}, saved {args.out}")
    return 0


def _cmd_forecast(args) -> int:
    artifact = data_io.load_model(args.model)
    model = artifact.to_model()
    schedule = artifact.to_schedule()
    stats = artifact.to_stats()
    series = data_io.load_csv(args.history)
    if series.n_timesteps < artifact.T:
        raise ValueError(f"history has {series.n_timesteps} rows, need at least T={artifact.T}")
    tail = series.slice_timesteps(series.n_timesteps - artifact.T, series.n_timesteps)
    normalized = data_io.normalize(tail, stats)
    run = forecast(model, normalized, schedule, SamplerConfig(n_steps=args.steps))
    prediction = data_io.denormalize(run.prediction, stats)
    data_io.write_series_csv(args.out, SeriesMatrix(prediction.values, series.channel_names))
    print(f"wrote {artifact.T}-step forecast for {series.n_channels} channels to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    artifact = data_io.load_model(args.model)
    model = artifact.to_model()
    schedule = artifact.to_schedule()
    stats = artifact.to_stats()
    series = data_io.load_csv(args.data)
    _, valid_split, test_split = data_io.chronological_split(series)
    valid_windows = make_window_samples(data_io.normalize(valid_split, stats), artifact.T, 1)
    test_windows = make_window_samples(data_io.normalize(test_split, stats), artifact.T, 1)
    if not test_windows:
        raise ValueError(f"test split is too short for horizon {artifact.T}")
    if args.steps > 0:
        n_steps = args.steps
    else:
        n_steps = harness.grid_search_sampling_steps(model, valid_windows, schedule)
    metrics = harness.evaluate_model(
        model, test_windows, schedule, SamplerConfig(n_steps=n_steps, keep_trajectory=False)
    )
    print(f"n_steps = {n_steps}")
    print(f"test_mse = {metrics.mse!r}")
    print(f"test_mae = {metrics.mae!r}")
    print(f"n_windows = {metrics.n_windows}")
    return 0


def _cmd_experiment(args) -> int:
    spec = harness.ExperimentSpec.from_file(args.spec)
    summary = harness.run_experiment(spec)
    print(f"experiment finished: mse_mean {summary['mse_mean']:.6f}, "
          f"mae_mean {summary['mae_mean']:.6f}, reports in {spec.output_dir}")
    return 0


def _cmd_schedule(args) -> int:
    schedule = build_schedule(args.horizon, args.beta_start, args.beta_end)
    print("t,beta,alpha_bar")
    for t in range(schedule.T + 1):
        print(f"{t},{schedule.beta[t]!r},{schedule.alpha_bar[t]!r}")
    return 0


def _cmd_synth(args) -> int:
    series = synthetic.seasonal_series(args.timesteps, args.channels, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    data_io.write_series_csv(args.out, series)
    print(f"wrote {series.n_channels}x{series.n_timesteps} synthetic series to {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "forecast": _cmd_forecast,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "schedule": _cmd_schedule,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except harness.ExperimentError as exc:
        print(f"armd {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"armd {args.command}: [{args.command}] {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Dataset ingestion, chronological splitting, z-scoring, model persistence.

The model artifact is a little-endian binary file:

    magic     8 bytes  b"ARMDMODL"
    version   uint32
    T         uint32
    n_chan    uint32
    hyper_b, hyper_c, hyper_d          float64 each
    beta_start, beta_end               float64 each
    weight    T*T float64, row-major
    bias      T float64
    w_logits  T float64
    mean      n_chan float64
    std       n_chan float64
    checksum  8 bytes, truncated sha256 of everything after the magic

Fixed binary layout (rather than text) keeps round trips bit-exact across
platforms and makes corruption detectable.
"""

from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DiffusionSchedule, SeriesMatrix, as_values, build_schedule
from .devolution import DevolutionModel

MAGIC = b"ARMDMODL"
FORMAT_VERSION = 1
TIMESTAMP_COLUMNS = ("date", "timestamp")


class DataError(ValueError):
    """Malformed input data (CSV parse failures, constant channels, ...)."""


class ArtifactError(ValueError):
    """Base class for model-artifact problems."""


class ArtifactVersionError(ArtifactError):
    pass


class ArtifactChecksumError(ArtifactError):
    pass


def load_csv(path) -> SeriesMatrix:
    """Load a header-first CSV into a channels x timesteps matrix.

    An optional leading column named date/timestamp is skipped; every
    other cell must parse as a finite real. Rows are time order, columns
    become channels.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if not header:
            raise DataError(f"{path}: empty header row")
        skip_first = header[0].strip().lower() in TIMESTAMP_COLUMNS
        names = [h.strip() for h in header[1:]] if skip_first else [h.strip() for h in header]
        if not names:
            raise DataError(f"{path}: no value columns after the timestamp column")
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            cells = row[1:] if skip_first else row
            if len(cells) != len(names):
                raise DataError(
                    f"{path}: row {line_no} has {len(cells)} value cells, expected {len(names)}"
                )
            parsed = []
            for name, cell in zip(names, cells):
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {line_no}, column '{name}': {cell!r}"
                    ) from None
                if not np.isfinite(value):
                    raise DataError(f"{path}: non-finite value at row {line_no}, column '{name}'")
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=np.float64).T
    return SeriesMatrix(values, tuple(names))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.70
    valid_fraction: float = 0.10
    test_fraction: float = 0.20

    def __post_init__(self):
        total = self.train_fraction + self.valid_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        if min(self.train_fraction, self.valid_fraction, self.test_fraction) <= 0:
            raise ValueError("all split fractions must be positive")


def chronological_split(
    series: SeriesMatrix, spec: SplitSpec = SplitSpec()
) -> tuple[SeriesMatrix, SeriesMatrix, SeriesMatrix]:
    """Contiguous train/valid/test segments; the remainder goes to test."""
    n = series.n_timesteps
    n_train = int(np.floor(spec.train_fraction * n))
    n_valid = int(np.floor(spec.valid_fraction * n))
    if n_train < 1 or n_valid < 1 or n - n_train - n_valid < 1:
        raise DataError(f"series of length {n} is too short for a {spec.train_fraction:.0%}"
                        f"/{spec.valid_fraction:.0%}/{spec.test_fraction:.0%} split")
    train = series.slice_timesteps(0, n_train)
    valid = series.slice_timesteps(n_train, n_train + n_valid)
    test = series.slice_timesteps(n_train + n_valid, n)
    return train, valid, test


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel z-score statistics, fitted on the training split only."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        std = np.asarray(self.std, dtype=np.float64).copy()
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean and std must be 1-D arrays of equal length")
        if np.any(std <= 0):
            raise DataError("normalization std must be positive for every channel")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def n_channels(self) -> int:
        return self.mean.shape[0]


def fit_normalizer(train: SeriesMatrix) -> NormalizationStats:
    """Per-channel mean and population std (divide by N) of the training split.

    Constant channels are rejected: silently rescaling them would corrupt
    downstream metrics.
    """
    values = train.values
    mean = values.mean(axis=1)
    std = values.std(axis=1)
    if np.any(std == 0):
        bad = [train.channel_names[i] for i in np.nonzero(std == 0)[0]]
        raise DataError(f"constant channel(s) cannot be z-scored: {', '.join(bad)}")
    return NormalizationStats(mean=mean, std=std)


def normalize(series, stats: NormalizationStats) -> SeriesMatrix:
    values = as_values(series)
    if values.shape[0] != stats.n_channels:
        raise ValueError(f"{values.shape[0]} channels but stats cover {stats.n_channels}")
    names = series.channel_names if isinstance(series, SeriesMatrix) else ()
    return SeriesMatrix((values - stats.mean[:, np.newaxis]) / stats.std[:, np.newaxis], names)


def denormalize(series, stats: NormalizationStats) -> SeriesMatrix:
    values = as_values(series)
    if values.shape[0] != stats.n_channels:
        raise ValueError(f"{values.shape[0]} channels but stats cover {stats.n_channels}")
    names = series.channel_names if isinstance(series, SeriesMatrix) else ()
    return SeriesMatrix(values * stats.std[:, np.newaxis] + stats.mean[:, np.newaxis], names)


@dataclass(frozen=True)
class ModelArtifact:
    """Everything needed to reconstruct a model, its schedule, and its scaler."""

    format_version: int
    T: int
    n_channels: int
    hyper_b: float
    hyper_c: float
    hyper_d: float
    beta_start: float
    beta_end: float
    weight: np.ndarray
    bias: np.ndarray
    w_logits: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def to_model(self) -> DevolutionModel:
        return DevolutionModel(
            weight=self.weight.copy(), bias=self.bias.copy(), w_logits=self.w_logits.copy(),
            hyper_b=self.hyper_b, hyper_c=self.hyper_c, hyper_d=self.hyper_d, T=self.T,
        )

    def to_schedule(self) -> DiffusionSchedule:
        return build_schedule(self.T, self.beta_start, self.beta_end)

    def to_stats(self) -> NormalizationStats:
        return NormalizationStats(mean=self.mean.copy(), std=self.std.copy())


def _artifact_payload(artifact: ModelArtifact) -> bytes:
    head = struct.pack(
        "<III5d",
        artifact.format_version,
        artifact.T,
        artifact.n_channels,
        artifact.hyper_b,
        artifact.hyper_c,
        artifact.hyper_d,
        artifact.beta_start,
        artifact.beta_end,
    )
    arrays = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in (artifact.weight, artifact.bias, artifact.w_logits, artifact.mean, artifact.std)
    )
    return head + arrays


def save_model(
    model: DevolutionModel,
    stats: NormalizationStats,
    schedule: DiffusionSchedule,
    path,
) -> None:
    """Write the model artifact; round trips are bit-exact."""
    if model.T != schedule.T:
        raise ValueError(f"model T={model.T} does not match schedule T={schedule.T}")
    if not np.isfinite(schedule.beta_start) or not np.isfinite(schedule.beta_end):
        raise ValueError("schedule must carry its beta endpoints to be persisted")
    artifact = ModelArtifact(
        format_version=FORMAT_VERSION,
        T=model.T,
        n_channels=stats.n_channels,
        hyper_b=model.hyper_b,
        hyper_c=model.hyper_c,
        hyper_d=model.hyper_d,
        beta_start=schedule.beta_start,
        beta_end=schedule.beta_end,
        weight=model.weight,
        bias=model.bias,
        w_logits=model.w_logits,
        mean=stats.mean,
        std=stats.std,
    )
    payload = _artifact_payload(artifact)
    checksum = hashlib.sha256(payload).digest()[:8]
    Path(path).write_bytes(MAGIC + payload + checksum)


def load_model(path) -> ModelArtifact:
    """Read a model artifact, verifying magic, version, and checksum."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"model file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise ArtifactError(f"{path}: not a model artifact (bad magic)")
    body = blob[len(MAGIC):]
    if len(body) < 4:
        raise ArtifactChecksumError(f"{path}: truncated artifact")
    (version,) = struct.unpack_from("<I", body, 0)
    if version != FORMAT_VERSION:
        raise ArtifactVersionError(
            f"{path}: artifact version {version}, this build reads version {FORMAT_VERSION}"
        )
    if len(body) < 8 + struct.calcsize("<III5d"):
        raise ArtifactChecksumError(f"{path}: truncated artifact")
    payload, stored = body[:-8], body[-8:]
    if hashlib.sha256(payload).digest()[:8] != stored:
        raise ArtifactChecksumError(f"{path}: checksum mismatch, artifact is corrupt")

    header_size = struct.calcsize("<III5d")
    version, T, n_channels, b, c, d, beta_start, beta_end = struct.unpack_from("<III5d", payload, 0)
    counts = (T * T, T, T, n_channels, n_channels)
    expected = header_size + 8 * sum(counts)
    if len(payload) != expected:
        raise ArtifactChecksumError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    arrays = []
    offset = header_size
    for count in counts:
        arrays.append(np.frombuffer(payload, dtype="<f8", count=count, offset=offset).astype(np.float64))
        offset += 8 * count
    weight, bias, w_logits, mean, std = arrays
    return ModelArtifact(
        format_version=version,
        T=T,
        n_channels=n_channels,
        hyper_b=b,
        hyper_c=c,
        hyper_d=d,
        beta_start=beta_start,
        beta_end=beta_end,
        weight=weight.reshape(T, T),
        bias=bias,
        w_logits=w_logits,
        mean=mean,
        std=std,
    )


def write_loss_curve(path, loss_curve: np.ndarray) -> None:
    """Two-column text file: iteration index and loss value."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("iteration,loss\n")
        for i, value in enumerate(loss_curve):
            fh.write(f"{i},{float(value)!r}\n")


def write_series_csv(path, series: SeriesMatrix) -> None:
    """Write a series back out in the load_csv column layout (no timestamp)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(",".join(series.channel_names) + "\n")
        for row in series.values.T:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

"""Time-series tables: CSV ingestion, chronological splits, sliding windows,
z-score scaling and seeded synthetic generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesTable:
    timestamps: tuple[str, ...]
    values: np.ndarray  # (L, D)
    column_names: tuple[str, ...]

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {self.values.shape}")
        if len(self.timestamps) != self.values.shape[0] or len(self.column_names) != self.values.shape[1]:
            raise DataError("timestamps / column names do not match the value matrix")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "TimeSeriesTable":
        return TimeSeriesTable(self.timestamps[start:stop], self.values[start:stop], self.column_names)

    def select(self, columns: list[str]) -> "TimeSeriesTable":
        missing = [c for c in columns if c not in self.column_names]
        if missing:
            raise DataError(f"unknown column(s): {', '.join(missing)}")
        idx = [self.column_names.index(c) for c in columns]
        return TimeSeriesTable(self.timestamps, self.values[:, idx], tuple(columns))

    def with_values(self, values: np.ndarray) -> "TimeSeriesTable":
        return TimeSeriesTable(self.timestamps, values, self.column_names)


def load_csv(path) -> TimeSeriesTable:
    """Read ``timestamp,col1,col2,...`` with a header row; every value column must be numeric."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise DataError(f"{path}:1: missing header (need a timestamp column and at least one value column)")
        width = len(header)
        stamps, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value in {row[1:]}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{lineno}: non-finite value")
            stamps.append(row[0])
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return TimeSeriesTable(tuple(stamps), np.array(rows, dtype=np.float64), tuple(header[1:]))


def save_csv(table: TimeSeriesTable, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *table.column_names])
        for stamp, row in zip(table.timestamps, table.values):
            w.writerow([stamp, *(repr(float(v)) for v in row)])


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2

    def __post_init__(self):
        parts = (self.train, self.val, self.test)
        if min(parts) <= 0 or not math.isclose(sum(parts), 1.0, abs_tol=1e-9):
            raise ValueError(f"split ratios must be positive and sum to 1, got {parts}")

    def boundaries(self, length: int) -> tuple[int, int]:
        # round first so 0.7 + 0.1 lands on 0.8 rather than 0.7999...
        return math.floor(round(self.train * length, 9)), math.floor(round((self.train + self.val) * length, 9))


def split(table: TimeSeriesTable, spec: SplitSpec = SplitSpec()) -> tuple[TimeSeriesTable, TimeSeriesTable, TimeSeriesTable]:
    if len(table) < 10:
        raise DataError(f"need at least 10 rows to split, got {len(table)}")
    a, b = spec.boundaries(len(table))
    return table.rows(0, a), table.rows(a, b), table.rows(b, len(table))


# ---------------------------------------------------------------- windows


@dataclass(frozen=True)
class WindowSample:
    input: np.ndarray  # (input_len, D)
    target: np.ndarray  # (horizon, D)
    origin_index: int


class WindowSet:
    """All ``(input, target)`` windows of one table, gathered lazily by origin."""

    def __init__(self, values: np.ndarray, input_len: int, horizon: int, stride: int = 1):
        values = np.asarray(values, dtype=np.float64)
        if stride < 1:
            raise ValueError("stride must be >= 1")
        span = input_len + horizon
        if span > values.shape[0]:
            raise DataError(f"window of {span} samples is longer than the table ({values.shape[0]} rows)")
        self.values = values
        self.input_len = input_len
        self.horizon = horizon
        self.origins = np.arange(0, values.shape[0] - span + 1, stride)
        self._offsets = np.arange(span)

    def __len__(self) -> int:
        return self.origins.size

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        rows = self.values[self.origins[np.asarray(idx)][:, None] + self._offsets]
        return rows[:, : self.input_len], rows[:, self.input_len :]

    def batches(self, size: int):
        for start in range(0, len(self), size):
            yield np.arange(start, min(start + size, len(self)))

    def sample(self, i: int) -> WindowSample:
        o = int(self.origins[i])
        return WindowSample(
            self.values[o : o + self.input_len], self.values[o + self.input_len : o + self.input_len + self.horizon], o
        )


def windows(table: TimeSeriesTable | np.ndarray, input_len: int, horizon: int, stride: int = 1) -> list[WindowSample]:
    values = table.values if isinstance(table, TimeSeriesTable) else np.asarray(table)
    ws = WindowSet(values, input_len, horizon, stride)
    return [ws.sample(i) for i in range(len(ws))]


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values) -> "Scaler":
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] == 0:
            raise DataError("cannot fit a scaler on an empty table")
        std = values.std(axis=0)
        return cls(values.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


def standardize(train: TimeSeriesTable, *others: TimeSeriesTable) -> tuple[Scaler, list[TimeSeriesTable]]:
    """Fit per-channel z-scores on ``train`` only and apply them to every table."""
    scaler = Scaler.fit(train.values)
    return scaler, [t.with_values(scaler.transform(t.values)) for t in (train, *others)]


# ---------------------------------------------------------------- generators

DEFAULT_COMPONENTS = ((1.0, 24.0, 0.0), (0.5, 168.0, 1.0))


def gen_sine_trend(
    length: int,
    components=DEFAULT_COMPONENTS,
    trend_slope: float = 0.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> TimeSeriesTable:
    """``x_t = sum a sin(2 pi t / p + phi) + slope t + sigma g_t`` for ``t = 0..length-1``."""
    if length < 1:
        raise ValueError("length must be >= 1")
    t = np.arange(length, dtype=np.float64)
    x = trend_slope * t
    for amp, period, phase in components:
        x = x + amp * np.sin(2.0 * np.pi * t / period + phase)
    if noise_sigma:
        x = x + noise_sigma * np.random.default_rng(seed).standard_normal(length)
    return TimeSeriesTable(tuple(str(i) for i in range(length)), x[:, None], ("value",))


@dataclass(frozen=True)
class ARTrajectory:
    a: np.ndarray  # (dim, dim), orthogonal
    b: np.ndarray  # (dim,)
    x0: np.ndarray  # (dim,)
    states: np.ndarray  # (trials, steps + 1, dim), with noise
    deterministic: np.ndarray  # (steps + 1, dim), same recursion with no noise


def rotation_blocks(dim: int, rng) -> np.ndarray:
    if dim < 2 or dim % 2:
        raise ValueError(f"dim must be an even integer >= 2, got {dim}")
    angles = rng.uniform(0.0, 2.0 * np.pi, dim // 2)
    a = np.zeros((dim, dim))
    for i, th in enumerate(angles):
        c, s = np.cos(th), np.sin(th)
        a[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, -s], [s, c]]
    return a


def gen_ar_unitary(dim: int, steps: int, sigma: float, seed: int = 0, trials: int = 1) -> ARTrajectory:
    """``x_{t+1} = A x_t + b + eps_t`` with block-rotation ``A`` and Gaussian ``eps``.

    All trials share ``A``, ``b`` and ``x0`` and differ only in their noise.
    """
    rng = np.random.default_rng(seed)
    a = rotation_blocks(dim, rng)
    b = rng.standard_normal(dim)
    x0 = rng.standard_normal(dim)
    # row 0 is the noiseless replay; sharing one batched product keeps it bit-identical at sigma=0
    noise = np.zeros((steps, trials + 1, dim))
    noise[:, 1:] = sigma * rng.standard_normal((steps, trials, dim))
    out = np.empty((trials + 1, steps + 1, dim))
    state = np.broadcast_to(x0, (trials + 1, dim)).copy()
    out[:, 0] = state
    for t in range(steps):
        state = state @ a.T + b + noise[t]
        out[:, t + 1] = state
    det, noisy = out[0], out[1:]
    return ARTrajectory(a, b, x0, noisy, det)


def gen_lipschitz(lipschitz_const: float, length: int, seed: int = 0) -> np.ndarray:
    """Random walk whose steps are at most ``lipschitz_const / length`` in size."""
    if length < 2:
        raise ValueError("length must be >= 2")
    rng = np.random.default_rng(seed)
    step = lipschitz_const / length
    return np.cumsum(rng.uniform(-step, step, length))

"""End-to-end forecasting runs: split, scale, window, train, score."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import Scaler, SplitSpec, TimeSeriesTable, WindowSet, gen_sine_trend, split, standardize
from .model import FiLMConfig, FiLMParams
from .training import LossReport, TrainConfig, TrainResult, evaluate, mae, mse, train

# seasonal + trend + noise series used for the desk-scale forecasting check
DESK_COMPONENTS = ((1.0, 24.0, 0.0), (0.5, 168.0, 1.0))
DESK_TREND = 2e-4
DESK_NOISE = 0.2


def desk_series(length: int = 10_000, seed: int = 0) -> TimeSeriesTable:
    return gen_sine_trend(length, DESK_COMPONENTS, DESK_TREND, DESK_NOISE, seed)


@dataclass(frozen=True)
class PreparedData:
    scaler: Scaler
    train: WindowSet
    val: WindowSet
    test: WindowSet


def prepare(table: TimeSeriesTable, config: FiLMConfig, spec: SplitSpec = SplitSpec()) -> PreparedData:
    """Chronological split, train-only z-scores, then windows inside each split."""
    if table.channels != config.channels:
        raise ValueError(f"table has {table.channels} channels, config expects {config.channels}")
    parts = split(table, spec)
    scaler, scaled = standardize(*parts)
    sets = [WindowSet(t.values, config.input_length, config.horizon) for t in scaled]
    return PreparedData(scaler, *sets)


def naive_report(data: WindowSet, batch_size: int = 1024) -> LossReport:
    """Repeat-last-value baseline."""
    reports = []
    for idx in data.batches(batch_size):
        x, y = data.batch(idx)
        pred = np.repeat(x[:, -1:], y.shape[1], axis=1)
        reports.append(LossReport(mse(pred, y), mae(pred, y), y.size))
    return LossReport.combine(reports)


@dataclass
class ExperimentResult:
    training: TrainResult
    test: LossReport
    naive: LossReport
    runtime: float

    @property
    def ratio(self) -> float:
        return self.test.mse / self.naive.mse


def run_experiment(
    table: TimeSeriesTable,
    model_config: FiLMConfig,
    train_config: TrainConfig,
    spec: SplitSpec = SplitSpec(),
    progress=None,
) -> tuple[ExperimentResult, PreparedData]:
    start = time.perf_counter()
    data = prepare(table, model_config, spec)
    params = FiLMParams.init(model_config, train_config.seed)
    result = train(params, data.train, data.val, model_config, train_config, progress)
    test = evaluate(result.best, model_config, data.test)
    out = ExperimentResult(result, test, naive_report(data.test), time.perf_counter() - start)
    return out, data

"""``film`` command line: train, evaluate, forecast, reconstruct, verify, ks-test.

Results go to stdout twice: a human-readable table, then ``key=value`` lines.
Exit codes: 0 success, 1 runtime/data error or failed check, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import verify as V
from .data import DataError, Scaler, TimeSeriesTable, WindowSet, load_csv, split
from .experiment import desk_series, naive_report, run_experiment
from .legendre import build_eval_matrix, lpu, project, reconstruct
from .model import FiLMConfig, film_forward, load_checkpoint, save_checkpoint
from .training import TrainConfig, TrainingError, evaluate, format_history

MODEL_KEYS = {f.name for f in dataclasses.fields(FiLMConfig)}
TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}
DATA_KEYS = {"data", "columns", "synthetic_length"}

# flag dest -> config key
FLAG_KEYS = {
    "horizon": "horizon",
    "factors": "multiscale_factors",
    "order": "legendre_order",
    "modes": "mode_count",
    "mode_policy": "mode_policy",
    "mode_seed": "mode_seed",
    "rank": "rank",
    "revin": "revin",
    "lr": "learning_rate",
    "batch_size": "batch_size",
    "epochs": "epochs",
    "data": "data",
    "columns": "columns",
    "synthetic_length": "synthetic_length",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config


def read_config_file(path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in MODEL_KEYS | TRAIN_KEYS | DATA_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _parse_bool(v: str) -> bool:
    low = str(v).strip().lower()
    if low in {"1", "true", "yes", "on"}:
        return True
    if low in {"0", "false", "no", "off"}:
        return False
    raise UsageError(f"not a boolean: {v!r}")


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    if key == "multiscale_factors":
        return tuple(int(p) for p in value.replace(" ", "").split(",") if p)
    if key == "rank":
        return None if value.lower() in {"none", ""} else int(value)
    if key == "dt":
        return None if value.lower() in {"none", ""} else float(value)
    if key == "revin":
        return _parse_bool(value)
    if key in {"mode_policy", "data", "columns"}:
        return value
    if key in {"learning_rate", "eps_norm", "adam_beta1", "adam_beta2", "adam_eps"}:
        return float(value)
    return int(value)


def resolve_settings(args) -> dict:
    """Config file values, overridden by any flag that was given."""
    settings = read_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    try:
        return {k: _coerce(k, v) for k, v in settings.items()}
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from None


def build_configs(settings: dict, seed: int) -> tuple[FiLMConfig, TrainConfig]:
    model = {k: v for k, v in settings.items() if k in MODEL_KEYS}
    trainer = {k: v for k, v in settings.items() if k in TRAIN_KEYS}
    return FiLMConfig(**model), TrainConfig(seed=seed, **trainer)


def load_table(settings: dict, seed: int) -> TimeSeriesTable:
    path = settings.get("data")
    if path:
        table = load_csv(path)
        cols = settings.get("columns")
        if cols:
            table = table.select([c.strip() for c in cols.split(",")])
        return table
    return desk_series(int(settings.get("synthetic_length", 10_000)), seed)


# ---------------------------------------------------------------- output


def emit(title: str, rows: list[tuple[str, object]], out=None) -> None:
    """Human table followed by ``key=value`` lines.  Rows named with a leading
    ``~`` go to the table only (used for wall-clock times)."""
    out = sys.stdout if out is None else out
    width = max((len(k.lstrip("~")) for k, _ in rows), default=0)
    print(title, file=out)
    for key, value in rows:
        print(f"  {key.lstrip('~'):<{width}}  {_fmt(value)}", file=out)
    for key, value in rows:
        if not key.startswith("~"):
            print(f"{key}={_fmt(value)}", file=out)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.9g}"
    return str(value)


def _config_rows(config: FiLMConfig) -> list[tuple[str, object]]:
    rows = []
    for k, v in config.to_dict().items():
        if isinstance(v, list):
            v = ",".join(map(str, v))
        rows.append((f"config.{k}", v))
    return rows


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    settings = resolve_settings(args)
    model_config, train_config = build_configs(settings, args.seed)
    table = load_table(settings, args.seed)
    progress = (lambda r: print(f"epoch {r.epoch}: train_mse={r.train_mse:.6f} val_mse={r.val_mse:.6f}", file=sys.stderr)) if args.verbose else None
    result, data = run_experiment(table, model_config, train_config, progress=progress)
    save_checkpoint(
        args.out,
        result.training.best,
        model_config,
        {"scaler_mean": data.scaler.mean, "scaler_std": data.scaler.std, "seed": np.array(args.seed)},
    )
    print(format_history(result.training.history))
    rows = [
        ("seed", args.seed),
        ("best_epoch", result.training.best_epoch),
        ("val_mse", result.training.history[result.training.best_epoch - 1].val_mse),
        ("test_mse", result.test.mse),
        ("test_mae", result.test.mae),
        ("naive_mse", result.naive.mse),
        ("naive_mae", result.naive.mae),
        ("mse_ratio", result.ratio),
        ("~runtime_s", f"{result.runtime:.1f}"),
        ("~checkpoint", args.out),
        *_config_rows(model_config),
    ]
    emit(f"train horizon={model_config.horizon}", rows)
    return 0


def _restore(args):
    params, config, extra = load_checkpoint(args.checkpoint)
    settings = resolve_settings(args)
    table = load_table(settings, args.seed)
    if "scaler_mean" in extra:
        scaler = Scaler(extra["scaler_mean"], extra["scaler_std"])
    else:
        scaler = Scaler.fit(split(table)[0].values)
    return params, config, table, scaler


def cmd_evaluate(args) -> int:
    start = time.perf_counter()
    params, config, table, scaler = _restore(args)
    test = split(table)[2].with_values(scaler.transform(split(table)[2].values))
    windows = WindowSet(test.values, config.input_length, config.horizon)
    report = evaluate(params, config, windows)
    naive = naive_report(windows)
    rows = [
        ("seed", args.seed),
        ("horizon", config.horizon),
        ("windows", len(windows)),
        ("test_mse", report.mse),
        ("test_mae", report.mae),
        ("naive_mse", naive.mse),
        ("naive_mae", naive.mae),
        ("~runtime_s", f"{time.perf_counter() - start:.1f}"),
        *_config_rows(config),
    ]
    emit("evaluate (standardised scale)", rows)
    return 0


def cmd_forecast(args) -> int:
    params, config, table, scaler = _restore(args)
    history = scaler.transform(table.values)
    if history.shape[0] < config.input_length:
        raise DataError(f"need {config.input_length} rows of history, table has {history.shape[0]}")
    pred = scaler.inverse(film_forward(history[-config.input_length :], params, config))
    print("step," + ",".join(table.column_names))
    for i, row in enumerate(pred, start=1):
        print(f"{i}," + ",".join(f"{v:.9g}" for v in row))
    return 0


def cmd_reconstruct(args) -> int:
    if args.data:
        table = load_csv(args.data)
        col = args.column or table.column_names[-1]
        signal = table.select([col]).values[-args.length :, 0]
        if signal.size < args.length:
            raise DataError(f"column {col!r} has only {signal.size} rows, asked for {args.length}")
    else:
        signal = V.smooth_signal(args.length)
    report = V.reconstruct_demo(args.length, args.order, signal)
    if args.dump:
        coeffs = project(signal, lpu(args.order, args.length)).coeffs
        rec = reconstruct(coeffs[-1], build_eval_matrix(args.length, args.order), args.length)
        print("t,signal,reconstruction")
        for t, (a, b) in enumerate(zip(signal, rec)):
            print(f"{t},{a:.9g},{b:.9g}")
    emit(
        "reconstruct",
        [("length", args.length), ("order", args.order), ("relative_error", report.measured)],
    )
    return 0


def cmd_verify(args) -> int:
    names = list(V.SUITES) if args.suite == "all" else [args.suite]
    reports = [V.SUITES[name]() for name in names]
    rows = []
    for r in reports:
        rows += [(f"{r.name}.measured", r.measured), (f"{r.name}.expected", r.expected), (f"{r.name}.pass", int(r.passed))]
    emit("verify", rows)
    for r in reports:
        print(f"# {r.name}: {r.detail}")
    return 0 if all(r.passed for r in reports) else 1


def _read_numbers(path) -> np.ndarray:
    try:
        return np.loadtxt(path, dtype=np.float64, ndmin=1, delimiter=",")
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_ks(args) -> int:
    if args.checkpoint:
        params, config, table, scaler = _restore(args)
        test = scaler.transform(split(table)[2].values)
        windows = WindowSet(test, config.input_length, config.horizon, stride=config.horizon)
        x, _ = windows.batch(np.arange(len(windows)))
        pred = film_forward(x, params, config)
        a, b = x[:, -config.horizon :].ravel(), pred.ravel()
    else:
        if not (args.a and args.b):
            raise UsageError("ks-test needs --checkpoint or both --a and --b")
        a, b = _read_numbers(args.a), _read_numbers(args.b)
    res = V.ks_test(a, b, args.alpha)
    emit(
        "ks-test",
        [("n", res.n), ("m", res.m), ("alpha", res.alpha), ("statistic", res.statistic),
         ("threshold", res.threshold), ("reject", int(res.reject))],
    )
    return 0


# ---------------------------------------------------------------- parser


def _add_model_flags(p) -> None:
    g = p.add_argument_group("model / training (override --config)")
    g.add_argument("--horizon", type=int)
    g.add_argument("--factors", help="comma-separated multiscale factors, e.g. 1,2,4")
    g.add_argument("--order", type=int, help="Legendre order N")
    g.add_argument("--modes", type=int, help="mode count M")
    g.add_argument("--mode-policy", choices=["lowest", "random", "low_random"])
    g.add_argument("--mode-seed", type=int)
    g.add_argument("--rank", help="low-rank K, or 'none' for full weights")
    g.add_argument("--revin", choices=["on", "off"])
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--epochs", type=int)


def _add_data_flags(p) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", help="CSV file (first column timestamp); synthetic series if omitted")
    g.add_argument("--columns", help="comma-separated value columns to keep")
    g.add_argument("--synthetic-length", type=int)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags take precedence")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="film", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train on a CSV or the synthetic series")
    _add_model_flags(p)
    _add_data_flags(p)
    p.add_argument("--out", default="film_checkpoint.npz")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("evaluate", cmd_evaluate, "score a checkpoint on the test split"),
        ("forecast", cmd_forecast, "forecast past the end of the table"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--checkpoint", required=True)
        _add_data_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("reconstruct", parents=[common], help="Legendre memory round trip of one window")
    p.add_argument("--length", type=int, default=1024)
    p.add_argument("--order", type=int, default=128)
    p.add_argument("--data")
    p.add_argument("--column")
    p.add_argument("--dump", action="store_true", help="print signal and reconstruction columns")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify", parents=[common], help="run the numerical convergence and bound checks")
    p.add_argument("--suite", choices=[*V.SUITES, "all"], default="all")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ks-test", parents=[common], help="two-sample Kolmogorov-Smirnov test")
    p.add_argument("--checkpoint", help="compare input windows with forecasts on the test split")
    p.add_argument("--a", help="file of numbers (sample 1)")
    p.add_argument("--b", help="file of numbers (sample 2)")
    p.add_argument("--alpha", type=float, default=0.01)
    _add_data_flags(p)
    p.set_defaults(func=cmd_ks)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    if getattr(args, "revin", None) is not None:
        args.revin = args.revin == "on"
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"film: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, TrainingError, ValueError, OSError, KeyError) as exc:
        print(f"film: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

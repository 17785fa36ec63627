"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the ``acceptance`` section of the
terminal summary) before asserting, so a failing criterion still reports what
was measured.
"""

import os
import time

import numpy as np
import pytest

from film.cli import main
from film.data import load_csv
from film.experiment import desk_series, run_experiment
from film.model import FiLMConfig, FiLMParams, film_forward, revin_denormalize, revin_normalize
from film.spectral import SpectralWeights, fel_forward, low_rank_ratio, select_modes
from film.training import TrainConfig, backward, finite_diff_grad, max_relative_error
from film.verify import ks_threshold, reconstruct_demo, verify_theorem1, verify_theorem2, verify_theorem3


def _check(report, label, passed, detail):
    report(label, bool(passed), detail)
    assert passed, f"{label}: {detail}"


def _random_small_case(seed):
    rng = np.random.default_rng(seed)
    horizon = int(rng.integers(2, 9))
    factors = tuple(sorted({int(f) for f in rng.integers(1, 5, size=2)}))
    horizon = min(horizon, 32 // max(factors))
    cfg = FiLMConfig(
        horizon=horizon,
        multiscale_factors=factors,
        legendre_order=int(rng.integers(2, 17)),
        mode_count=int(rng.integers(1, 5)),
        mode_policy=str(rng.choice(["lowest", "random", "low_random"])),
        rank=[None, 2][seed % 2],
        revin=bool(seed % 3),
        channels=int(rng.integers(1, 4)),
    )
    p = FiLMParams.init(cfg, seed)
    p = p.map(lambda a: a * (1 + 20 * rng.random(a.shape)) if np.iscomplexobj(a) else a)
    p.merge = rng.uniform(0.3, 1.2, p.merge.shape)
    p.gamma = rng.uniform(0.6, 1.6, cfg.channels)
    p.beta = rng.normal(0, 0.3, cfg.channels)
    x = rng.standard_normal((3, cfg.input_length, cfg.channels)) + rng.normal(0, 2, cfg.channels)
    y = rng.standard_normal((3, cfg.horizon, cfg.channels))
    return cfg, p, x, y


def test_c01_gradient_oracle(report):
    start = time.perf_counter()
    errors = []
    for seed in range(4):
        cfg, p, x, y = _random_small_case(seed)
        assert cfg.legendre_order <= 16 and cfg.input_length <= 32 and cfg.horizon <= 8
        _, grads = backward(p, cfg, x, y)
        # step near the cube root of machine epsilon balances truncation and roundoff
        fd = finite_diff_grad(lambda q: float(np.mean((film_forward(x, q, cfg) - y) ** 2)), p, h=1e-5)
        errors.append(max_relative_error(grads, fd))
    elapsed = time.perf_counter() - start
    worst = max(errors)
    _check(report, "1 gradient oracle", worst < 1e-5 and elapsed < 10,
           f"max rel err {worst:.2e} over {len(errors)} configs (< 1e-5), {elapsed:.2f}s (< 10s)")


def test_c02_lpu_round_trip(report):
    start = time.perf_counter()
    r = reconstruct_demo(1024, 128)
    elapsed = time.perf_counter() - start
    _check(report, "2 LPU round trip", r.measured < 0.05 and elapsed < 1,
           f"relative L2 {r.measured:.4f} (< 0.05), {elapsed:.2f}s (< 1s)")


def test_c03_theorem1_rate(report):
    start = time.perf_counter()
    r = verify_theorem1(seeds=10)
    elapsed = time.perf_counter() - start
    _check(report, "3 projection error rate", r.measured <= -0.4 and elapsed < 30,
           f"slope {r.measured:.3f} (<= -0.4, expected -0.5), {elapsed:.1f}s (< 30s)")


def test_c04_theorem2_rate(report):
    start = time.perf_counter()
    r = verify_theorem2(thetas=(16, 64, 256, 1024), trials=200)
    elapsed = time.perf_counter() - start
    _check(report, "4 noise deviation rate", abs(r.measured - 0.5) <= 0.1 and elapsed < 30,
           f"slope {r.measured:.4f} (0.5 +- 0.1), {elapsed:.1f}s (< 30s)")


def test_c05_theorem3_bound(report):
    start = time.perf_counter()
    results = [verify_theorem3(d=64, n=64, s=16, decay=1e-3, seed=k) for k in range(10)]
    elapsed = time.perf_counter() - start
    violations = sum(not r.passed for r in results)
    worst = max(r.measured for r in results)
    _check(report, "5 column projection bound", violations == 0 and elapsed < 10,
           f"{violations} violations in 10 seeds, worst error {worst:.4f} vs {results[0].expected}, {elapsed:.2f}s (< 10s)")


def test_c06_low_rank_accounting(report):
    count, ratio = low_rank_ratio(256, 8, 4)
    formula = (256 * 4 + 16 * 8 + 4 * 256) / (8 * 256**2)
    count1, ratio1 = low_rank_ratio(256, 8, 1)
    built = SpectralWeights.init(256, 8, rank=4, rng=0)
    ok = (
        ratio == formula
        and count == 2176
        and round(100 * ratio1, 2) == 0.10
        and built.w0.size + built.w1.size + built.w2.size == count
    )
    _check(report, "6 low-rank accounting", ok,
           f"K=4: {count} scalars, ratio {100 * ratio:.3f}% (formula {100 * formula:.3f}%); K=1: {100 * ratio1:.3f}%")


def _desk_run(epochs):
    cfg = FiLMConfig()
    return run_experiment(desk_series(10_000, seed=0), cfg, TrainConfig(epochs=epochs, seed=0))[0]


@pytest.mark.slow
def test_c07_desk_forecasting(report):
    result = _desk_run(15)
    # replaying epoch 1 alone must give the identical first-epoch record
    replay = _desk_run(1)
    deterministic = replay.training.history[0] == result.training.history[0]
    ok = result.ratio <= 0.5 and deterministic and result.runtime < 300
    _check(report, "7 desk forecasting", ok,
           f"test/naive MSE {result.ratio:.4f} (<= 0.5), deterministic={deterministic}, "
           f"runtime {result.runtime:.0f}s (< 300s)")


ETTM2 = os.environ.get("FILM_ETTM2_CSV")


@pytest.mark.slow
@pytest.mark.skipif(not ETTM2, reason="set FILM_ETTM2_CSV to the ETTm2 csv path")
def test_c08_ettm2_univariate(report):
    table = load_csv(ETTM2).select(["OT"])
    cfg = FiLMConfig(horizon=96, channels=1)
    start = time.perf_counter()
    scores = [run_experiment(table, cfg, TrainConfig(learning_rate=1e-4, epochs=15, batch_size=32, seed=s))[0].test.mse
              for s in range(5)]
    elapsed = time.perf_counter() - start
    mean = float(np.mean(scores))
    _check(report, "8 ETTm2 univariate (advisory)", abs(mean - 0.065) <= 0.2 * 0.065 and elapsed < 1800,
           f"mean test MSE {mean:.4f} (0.065 +- 20%), {elapsed:.0f}s (< 1800s)")


def test_c09_identity_invariance(report):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    traj = rng.standard_normal((40, 5))
    fel_err = np.abs(fel_forward(traj, SpectralWeights.identity(5, 21), select_modes("lowest", 21, 21)) - traj).max()

    x = rng.normal(3, 2, (4, 50, 3))
    gamma, beta = rng.uniform(0.5, 2, 3), rng.normal(0, 1, 3)
    z, stats = revin_normalize(x, gamma, beta)
    revin_err = np.abs(revin_denormalize(z, stats, gamma, beta) - x).max()

    cfg = FiLMConfig(horizon=6, multiscale_factors=(1, 2, 3), legendre_order=10, mode_count=4, channels=2,
                     revin=True, eps_norm=1e-12)
    p = FiLMParams.init(cfg, 1)
    p = p.map(lambda a: a * (1 + 30 * rng.random(a.shape)) if np.iscomplexobj(a) else a)
    w = rng.standard_normal((cfg.input_length, 2))
    base = film_forward(w, p, cfg)
    equiv_err = np.abs(film_forward(3.5 * w - 7.0, p, cfg) - (3.5 * base - 7.0)).max() / np.abs(3.5 * base - 7.0).max()

    threshold = ks_threshold(0.01, 100, 100)
    elapsed = time.perf_counter() - start
    ok = fel_err < 1e-10 and revin_err < 1e-10 and equiv_err < 1e-8 and abs(threshold - 0.2302) <= 1e-4 and elapsed < 5
    _check(report, "9 identity/invariance", ok,
           f"FEL identity {fel_err:.1e}, RevIN round trip {revin_err:.1e}, shift-scale {equiv_err:.1e}, "
           f"KS threshold {threshold:.4f}, {elapsed:.2f}s (< 5s)")


def _metric_lines(argv, capsys):
    assert main(argv) == 0
    out = capsys.readouterr().out
    return [line for line in out.splitlines() if "=" in line and not line[:1].isspace() and not line.startswith("#")]


def test_c10_determinism(tmp_path, capsys, report):
    flags = ["--horizon", "24", "--order", "32", "--modes", "8", "--epochs", "2", "--synthetic-length", "2000", "--seed", "7"]
    runs = []
    for k in range(2):
        ck = tmp_path / f"run{k}.npz"
        lines = _metric_lines(["train", "--out", str(ck), *flags], capsys)
        lines += _metric_lines(["evaluate", "--checkpoint", str(ck), "--synthetic-length", "2000"], capsys)
        runs.append(lines)
    same = runs[0] == runs[1] and len(runs[0]) > 0
    bytes_same = (tmp_path / "run0.npz").read_bytes() == (tmp_path / "run1.npz").read_bytes()
    _check(report, "10 determinism", same and bytes_same,
           f"{len(runs[0])} metric lines identical={runs[0] == runs[1]}, checkpoints byte-identical={bytes_same}")

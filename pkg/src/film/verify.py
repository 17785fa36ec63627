"""Numerical checks of the approximation-rate, noise-accumulation and
column-projection results, plus the two-sample Kolmogorov-Smirnov test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import gen_ar_unitary, gen_lipschitz
from .legendre import build_eval_matrix, lpu, project, reconstruct, round_trip_error
from .spectral import column_projection_error

# ---------------------------------------------------------------- KS test


@dataclass(frozen=True)
class KSResult:
    statistic: float
    threshold: float
    alpha: float
    n: int
    m: int

    @property
    def reject(self) -> bool:
        return self.statistic > self.threshold


def ks_statistic(sample1, sample2) -> float:
    """Exact ``sup |F1 - F2|`` of the two empirical CDFs."""
    a = np.sort(np.asarray(sample1, dtype=np.float64).ravel())
    b = np.sort(np.asarray(sample2, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs two non-empty samples")
    # both CDFs only jump at sample points; evaluate right-continuous values at all of them
    points = np.concatenate([a, b])
    f1 = np.searchsorted(a, points, side="right") / a.size
    f2 = np.searchsorted(b, points, side="right") / b.size
    return float(np.abs(f1 - f2).max())


def ks_threshold(alpha: float, n: int, m: int) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1 or m < 1:
        raise ValueError("sample sizes must be >= 1")
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) * math.sqrt((n + m) / (n * m))


def ks_test(sample1, sample2, alpha: float = 0.01) -> KSResult:
    n, m = np.size(sample1), np.size(sample2)
    return KSResult(ks_statistic(sample1, sample2), ks_threshold(alpha, n, m), alpha, n, m)


# ---------------------------------------------------------------- reports


@dataclass(frozen=True)
class VerifyReport:
    name: str
    measured: float
    expected: str
    passed: bool
    detail: str

    def lines(self) -> list[str]:
        return [
            f"{self.name}.measured={self.measured:.6g}",
            f"{self.name}.pass={int(self.passed)}",
        ]


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------- projection error rate


def smooth_signal(length: int) -> np.ndarray:
    """Two slow sinusoids spanning the window; the reconstruction demo signal."""
    t = np.arange(length) / length
    return np.sin(2 * np.pi * 2 * t) + 0.5 * np.cos(2 * np.pi * 5 * t + 0.3)


def theorem1_errors(signals: np.ndarray, orders) -> np.ndarray:
    """Relative round-trip errors, shape ``(len(orders), n_signals)``."""
    signals = np.atleast_2d(signals)
    length = signals.shape[-1]
    out = np.empty((len(orders), signals.shape[0]))
    for i, order in enumerate(orders):
        coeffs = project(signals, lpu(order, length)).coeffs
        rec = reconstruct(coeffs[..., -1, :], build_eval_matrix(length, order), length)
        out[i] = np.linalg.norm(rec - signals, axis=-1) / np.linalg.norm(signals, axis=-1)
    return out


def verify_theorem1(
    orders=(16, 32, 64, 128),
    signal_seed: int = 0,
    seeds: int = 10,
    length: int = 4096,
    lipschitz_const: float = 1.0,
    signal: np.ndarray | None = None,
) -> VerifyReport:
    """Error of the order-N Legendre memory on Lipschitz signals should fall like ``N^-1/2``.

    Averages the log-log slope over ``seeds`` random walks starting at
    ``signal_seed``, or uses ``signal`` when one is supplied.
    """
    orders = tuple(int(o) for o in orders)
    if len(orders) < 3 or any(b <= a for a, b in zip(orders, orders[1:])):
        raise ValueError("need at least 3 strictly increasing orders")
    if signal is None:
        signals = np.stack([gen_lipschitz(lipschitz_const, length, signal_seed + k) for k in range(seeds)])
    else:
        signals = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    if np.all(np.ptp(signals, axis=-1) == 0):
        return VerifyReport("theorem1", 0.0, "slope <= -0.4", True, "degenerate, vacuous pass: constant signal")
    errors = theorem1_errors(signals, orders)
    slopes = [loglog_slope(orders, errors[:, k]) for k in range(signals.shape[0])]
    slope = float(np.mean(slopes))
    detail = "orders=" + ",".join(map(str, orders)) + " mean_err=" + ",".join(f"{e:.3g}" for e in errors.mean(axis=1))
    return VerifyReport("theorem1", slope, "slope <= -0.4", slope <= -0.4, detail + f"; slope {slope:.3f} <= -0.4")


# ---------------------------------------------------------------- noise deviation rate


def theorem2_deviations(thetas, trials: int, sigma: float, seed: int, dim: int = 16) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=int)
    traj = gen_ar_unitary(dim, int(thetas.max()), sigma, seed, trials)
    dev = traj.states[:, thetas] - traj.deterministic[thetas]
    return np.linalg.norm(dev, axis=-1).mean(axis=0)


def verify_theorem2(thetas=(16, 64, 256, 1024), trials: int = 200, sigma: float = 0.1, seed: int = 0, dim: int = 16) -> VerifyReport:
    """Noise injected into a unitary linear recursion should accumulate like ``sqrt(theta)``."""
    if len(thetas) < 3:
        raise ValueError("need at least 3 window sizes")
    dev = theorem2_deviations(thetas, trials, sigma, seed, dim)
    if np.all(dev == 0):
        return VerifyReport("theorem2", 0.0, "slope in [0.4, 0.6]", True, "degenerate: zero noise, no deviation")
    slope = loglog_slope(thetas, dev)
    ok = abs(slope - 0.5) <= 0.1
    detail = "deviation=" + ",".join(f"{d:.4g}" for d in dev) + f"; |{slope:.3f} - 0.5| <= 0.1"
    return VerifyReport("theorem2", slope, "slope in [0.4, 0.6]", ok, detail)


# ---------------------------------------------------------------- column projection bound


def decaying_matrix(d: int, n: int, s: int, decay: float, seed: int = 0) -> np.ndarray:
    """Random ``d x n`` matrix with O(1) leading columns and a tail bounded by ``decay``.

    One tail entry is pinned at magnitude ``decay`` so the tail bound is tight.
    """
    rng = np.random.default_rng(seed)
    a = np.empty((d, n))
    a[:, :s] = rng.standard_normal((d, s))
    a[:, s:] = rng.uniform(-decay, decay, (d, n - s))
    if n > s and decay > 0:
        a[0, s] = decay
    return a


def sampled_columns(s: int, n: int, k: int = 6, epsilon: float = 1.0) -> int:
    """Extra column count ``ceil(k^2 / eps^2) - s``, clipped to what is available."""
    return int(min(max(math.ceil(k * k / (epsilon * epsilon)) - s, 0), n - s))


def verify_theorem3(
    d: int = 64, n: int = 64, s: int = 16, decay: float = 1e-3, epsilon: float = 1.0, seed: int = 0, k: int = 6
) -> VerifyReport:
    """Projection of a matrix onto its first ``s`` columns plus a few sampled ones
    leaves a residual bounded by the size of the discarded tail."""
    if not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= n, got s={s}, n={n}")
    a = decaying_matrix(d, n, s, decay, seed)
    extra = sampled_columns(s, n, k, epsilon)
    err, bound = column_projection_error(a, s, extra, seed, epsilon)
    # least squares leaves rounding residue even when the bound is exactly zero
    floor = 1e-12 * max(float(np.linalg.norm(a)), 1.0)
    ok = err <= bound + floor
    detail = f"extra_columns={extra}; {err:.4g} <= {bound:.4g}"
    return VerifyReport("theorem3", err, f"<= {bound:.6g}", ok, detail)


# ---------------------------------------------------------------- reconstruction demo


def reconstruct_demo(length: int = 1024, order: int = 128, signal: np.ndarray | None = None) -> VerifyReport:
    x = smooth_signal(length) if signal is None else np.asarray(signal, dtype=np.float64)
    err = round_trip_error(x, order)
    return VerifyReport("reconstruct", err, "< 0.05", err < 0.05, f"length={x.size} order={order}")


SUITES = {
    "theorem1": verify_theorem1,
    "theorem2": verify_theorem2,
    "theorem3": verify_theorem3,
}

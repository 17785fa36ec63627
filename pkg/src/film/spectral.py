"""Frequency Enhanced Layer: time-axis real FFT of a memory trajectory,
mode selection and per-mode channel mixing (full or low rank)."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import fft as _fft

Policy = Literal["lowest", "random", "low_random"]
POLICIES = ("lowest", "random", "low_random")


@dataclass(frozen=True)
class ModeSet:
    indices: tuple[int, ...]
    policy: str = "lowest"
    seed: int = 0

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)


@dataclass(frozen=True)
class FrequencyTrajectory:
    """Bins of shape ``(..., L//2 + 1, N)``."""

    bins: np.ndarray
    original_length: int


@dataclass
class SpectralWeights:
    """Per-mode ``N -> N`` channel maps, stored full or factored through rank K.

    Full weights have shape ``(M, N, N)`` and act on row vectors
    (``out = x @ full[m]``).  The low-rank form is ``w0 (N, K)``,
    ``w1 (K, K, M)``, ``w2 (K, N)`` with ``out = x @ w0 @ w1[:, :, m] @ w2``.
    """

    full: np.ndarray | None = None
    w0: np.ndarray | None = None
    w1: np.ndarray | None = None
    w2: np.ndarray | None = None

    def __post_init__(self):
        low = (self.w0, self.w1, self.w2)
        if self.full is not None and any(w is not None for w in low):
            raise ValueError("SpectralWeights holds either full or low-rank factors, not both")
        if self.full is None and any(w is None for w in low):
            raise ValueError("low-rank SpectralWeights needs w0, w1 and w2")

    @property
    def variant(self) -> str:
        return "full" if self.full is not None else "low_rank"

    @property
    def channels(self) -> int:
        return self.full.shape[1] if self.full is not None else self.w0.shape[0]

    @property
    def modes(self) -> int:
        return self.full.shape[0] if self.full is not None else self.w1.shape[2]

    @property
    def rank(self) -> int | None:
        return None if self.full is not None else self.w0.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        if self.full is not None:
            return {"full": self.full}
        return {"w0": self.w0, "w1": self.w1, "w2": self.w2}

    def map(self, fn) -> "SpectralWeights":
        return SpectralWeights(**{k: fn(v) for k, v in self.arrays().items()})

    @classmethod
    def init(cls, channels: int, modes: int, rank: int | None = None, rng=None) -> "SpectralWeights":
        """Uniform ``[0, 1/N^2)`` on real and imaginary parts independently."""
        rng = np.random.default_rng(rng)
        scale = 1.0 / (channels * channels)

        def draw(*shape):
            return scale * (rng.random(shape) + 1j * rng.random(shape))

        if rank is None:
            return cls(full=draw(modes, channels, channels))
        return cls(w0=draw(channels, rank), w1=draw(rank, rank, modes), w2=draw(rank, channels))

    @classmethod
    def identity(cls, channels: int, modes: int) -> "SpectralWeights":
        full = np.broadcast_to(np.eye(channels, dtype=np.complex128), (modes, channels, channels))
        return cls(full=full.copy())


def rfft_time(traj) -> FrequencyTrajectory:
    """Unnormalised real FFT along the time axis (second to last)."""
    x = np.asarray(traj, dtype=np.float64)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ValueError("trajectory must have shape (..., L, N) with L >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite value in trajectory")
    length = x.shape[-2]
    bins = np.swapaxes(_fft.rfft(np.swapaxes(x, -1, -2)), -1, -2)
    return FrequencyTrajectory(bins, length)


def irfft_time(freq: FrequencyTrajectory | np.ndarray, length: int) -> np.ndarray:
    """Inverse of :func:`rfft_time`, with the 1/L factor."""
    bins = freq.bins if isinstance(freq, FrequencyTrajectory) else np.asarray(freq)
    if isinstance(freq, FrequencyTrajectory) and freq.original_length != length:
        raise ValueError(f"trajectory was length {freq.original_length}, asked for {length}")
    if bins.shape[-2] != length // 2 + 1:
        raise ValueError(f"{bins.shape[-2]} bins do not match length {length}")
    return np.swapaxes(_fft.irfft(np.swapaxes(bins, -1, -2), length), -1, -2)


def select_modes(policy: str, m: int, bin_count: int, seed: int = 0) -> ModeSet:
    if policy not in POLICIES:
        raise ValueError(f"unknown mode policy {policy!r}; expected one of {POLICIES}")
    if m < 1 or bin_count < 1:
        raise ValueError(f"mode count and bin count must be >= 1, got {m}, {bin_count}")
    if m > bin_count:
        warnings.warn(f"requested {m} modes but only {bin_count} bins exist; clamping", stacklevel=2)
        m = bin_count
    rng = np.random.default_rng(seed)
    if policy == "lowest":
        idx = np.arange(m)
    elif policy == "random":
        idx = rng.choice(bin_count, size=m, replace=False)
    else:
        n_low = min(math.ceil(0.8 * m), m)
        rest = rng.choice(np.arange(n_low, bin_count), size=m - n_low, replace=False)
        idx = np.concatenate([np.arange(n_low), rest])
    return ModeSet(tuple(sorted(int(i) for i in idx)), policy, seed)


def _check(weights: SpectralWeights, modes: ModeSet, channels: int) -> None:
    if weights.modes != len(modes):
        raise ValueError(f"weights carry {weights.modes} modes but {len(modes)} were selected")
    if weights.channels != channels:
        raise ValueError(f"weights act on {weights.channels} channels, input has {channels}")


def to_mode_major(a: np.ndarray) -> np.ndarray:
    """``(..., M, C) -> (M, B, C)`` with all leading axes flattened into B."""
    return np.moveaxis(a, -2, 0).reshape(a.shape[-2], -1, a.shape[-1])


def from_mode_major(a: np.ndarray, lead: tuple[int, ...]) -> np.ndarray:
    return np.moveaxis(a.reshape((a.shape[0],) + lead + (a.shape[-1],)), 0, -2)


def mix(x: np.ndarray, weights: SpectralWeights) -> tuple[np.ndarray, tuple]:
    """Apply the per-mode maps to mode-major bins ``x`` of shape ``(M, B, N)``.

    Returns the mixed bins and the stage inputs needed by :func:`mix_backward`.
    Every stage is linear in ``x``.
    """
    if weights.full is not None:
        return x @ weights.full, (x,)
    a1 = x @ weights.w0
    a2 = a1 @ np.moveaxis(weights.w1, -1, 0)
    return a2 @ weights.w2, (x, a1, a2)


def mix_backward(grad_out: np.ndarray, cache: tuple, weights: SpectralWeights) -> SpectralWeights:
    """Weight gradients of a real loss, as ``dL/dRe + i dL/dIm``.

    ``grad_out`` uses the same convention for the mixed bins.  For ``z = x @ w``
    that gives ``grad_w = x^H grad_z`` and ``grad_x = grad_z w^H``.
    """
    if weights.full is not None:
        (x,) = cache
        return SpectralWeights(full=np.conj(x).transpose(0, 2, 1) @ grad_out)
    x, a1, a2 = cache
    k = a1.shape[-1]
    g_w2 = np.conj(a2).reshape(-1, k).T @ grad_out.reshape(-1, grad_out.shape[-1])
    g_a2 = grad_out @ np.conj(weights.w2).T
    g_w1 = np.conj(a1).transpose(0, 2, 1) @ g_a2
    g_a1 = g_a2 @ np.conj(np.moveaxis(weights.w1, -1, 0)).transpose(0, 2, 1)
    g_w0 = np.conj(x).reshape(-1, x.shape[-1]).T @ g_a1.reshape(-1, k)
    return SpectralWeights(w0=g_w0, w1=np.moveaxis(g_w1, 0, -1), w2=g_w2)


def fel_forward(traj, weights: SpectralWeights, modes: ModeSet) -> np.ndarray:
    """FFT over time, mix the selected bins, zero the rest, inverse FFT."""
    traj = np.asarray(traj, dtype=np.float64)
    length, channels = traj.shape[-2], traj.shape[-1]
    _check(weights, modes, channels)
    freq = rfft_time(traj)
    if max(modes.indices) >= freq.bins.shape[-2]:
        raise ValueError(f"mode index {max(modes.indices)} outside {freq.bins.shape[-2]} bins")
    idx = modes.array
    out = np.zeros_like(freq.bins)
    sel = freq.bins[..., idx, :]
    mixed, _ = mix(to_mode_major(sel), weights)
    out[..., idx, :] = from_mode_major(mixed, sel.shape[:-2])
    return irfft_time(FrequencyTrajectory(out, length), length)


def param_count(weights: SpectralWeights) -> tuple[int, float]:
    """Complex scalars held by the weights, and the ratio to a full ``M*N*N`` tensor."""
    n, m = weights.channels, weights.modes
    if weights.full is not None:
        count = m * n * n
    else:
        k = weights.rank
        count = n * k + k * k * m + k * n
    return count, count / (m * n * n)


def low_rank_ratio(channels: int, modes: int, rank: int) -> tuple[int, float]:
    count = channels * rank + rank * rank * modes + rank * channels
    return count, count / (modes * channels * channels)


def column_projection_error(
    a, keep_first: int, extra: int, seed: int = 0, epsilon: float = 1.0
) -> tuple[float, float]:
    """Residual of projecting ``a`` onto a subset of its own columns.

    The first ``keep_first`` columns are always kept and ``extra`` more are
    sampled uniformly from the rest.  Returns ``(||A - P(A)||_F, bound)`` with
    ``bound = (1 + epsilon) * a_min * sqrt((n - s) d)``, ``a_min`` being the
    largest magnitude in the unkept tail.
    """
    a = np.asarray(a)
    d, n = a.shape
    s = keep_first
    if s < 0 or extra < 0 or s + extra > n:
        raise ValueError(f"cannot keep {s} + {extra} columns out of {n}")
    rng = np.random.default_rng(seed)
    sampled = rng.choice(np.arange(s, n), size=extra, replace=False) if extra else np.empty(0, int)
    cols = np.concatenate([np.arange(s), sampled]).astype(np.intp)
    if cols.size:
        basis = a[:, cols]
        coef, *_ = np.linalg.lstsq(basis, a, rcond=None)
        resid = a - basis @ coef
    else:
        resid = a
    a_min = float(np.abs(a[:, s:]).max()) if s < n else 0.0
    bound = (1.0 + epsilon) * a_min * math.sqrt((n - s) * d)
    return float(np.linalg.norm(resid)), bound

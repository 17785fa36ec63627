"""Legendre projection unit: LegT transition, bilinear discretization,
online projection and reconstruction.

Coefficients are indexed from 0 (``P_0`` is the constant polynomial).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class LegendreTransition:
    order: int
    a_matrix: np.ndarray
    b_vector: np.ndarray


@dataclass(frozen=True)
class DiscretizedTransition:
    ad: np.ndarray
    bd: np.ndarray
    dt: float

    @property
    def order(self) -> int:
        return self.ad.shape[0]


@dataclass(frozen=True)
class MemoryTrajectory:
    """Memory states ``C_t`` of shape ``(..., L, N)``; row t has consumed samples 0..t."""

    coeffs: np.ndarray

    @property
    def length(self) -> int:
        return self.coeffs.shape[-2]

    @property
    def order(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def last(self) -> np.ndarray:
        return self.coeffs[..., -1, :]


def build_transition(order: int) -> LegendreTransition:
    """Fixed LegT matrices with positive diagonal.

    ``A[n, k] = (2n+1)(-1)^(n-k)`` for ``k <= n`` and ``(2n+1)`` above the
    diagonal; ``B[n] = (2n+1)(-1)^n``.  The continuous generator is ``-A``.
    """
    if not isinstance(order, (int, np.integer)) or order < 1:
        raise ValueError(f"order must be a positive integer, got {order!r}")
    n = np.arange(order)
    scale = (2 * n + 1).astype(np.float64)
    sign = np.where((n[:, None] - n[None, :]) % 2 == 0, 1.0, -1.0)
    a = np.where(n[None, :] <= n[:, None], sign, 1.0) * scale[:, None]
    b = scale * np.where(n % 2 == 0, 1.0, -1.0)
    a.setflags(write=False)
    b.setflags(write=False)
    return LegendreTransition(int(order), a, b)


def discretize_bilinear(trans: LegendreTransition, dt: float) -> DiscretizedTransition:
    """Tustin discretization of ``dc/dt = -A c + B f`` with step ``dt``."""
    if not dt > 0 or not np.isfinite(dt):
        raise ValueError(f"dt must be a positive finite number, got {dt!r}")
    return _discretize_cached(trans.order, float(dt))


@lru_cache(maxsize=64)
def _discretize_cached(order: int, dt: float) -> DiscretizedTransition:
    trans = build_transition(order)
    ac = -trans.a_matrix
    eye = np.eye(order)
    lhs = eye - (dt / 2.0) * ac
    try:
        inv = np.linalg.solve(lhs, eye)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - not reachable for LegT
        raise FloatingPointError(f"singular bilinear system for order={order}, dt={dt}") from exc
    ad = inv @ (eye + (dt / 2.0) * ac)
    bd = inv @ (dt * trans.b_vector)
    ad.setflags(write=False)
    bd.setflags(write=False)
    return DiscretizedTransition(ad, bd, dt)


def lpu(order: int, length: int, dt: float | None = None) -> DiscretizedTransition:
    """Discretized transition for a window of ``length`` samples (``dt = 1/length`` by default)."""
    return discretize_bilinear(build_transition(order), 1.0 / length if dt is None else dt)


def project(signal, disc: DiscretizedTransition) -> MemoryTrajectory:
    """Run ``C_t = Ad C_{t-1} + Bd x_t`` from ``C_0 = 0``.

    ``signal`` has time on the last axis, shape ``(..., L)``; leading axes
    (batch, channels) are projected independently with the shared system.
    Returns coefficients of shape ``(..., L, N)``.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise ValueError("signal must have at least one sample")
    bad = ~np.isfinite(x)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise ValueError(f"non-finite input sample at index {tuple(int(i) for i in idx)}")
    length = x.shape[-1]
    out = np.empty(x.shape + (disc.order,))
    c = np.zeros(x.shape[:-1] + (disc.order,))
    ad_t = disc.ad.T
    for t in range(length):
        c = c @ ad_t + x[..., t, None] * disc.bd
        out[..., t, :] = c
    return MemoryTrajectory(out)


def legendre_values(x, order: int) -> np.ndarray:
    """``P_0..P_{order-1}`` at points ``x`` via the three-term recurrence; shape ``(len(x), order)``."""
    x = np.asarray(x, dtype=np.float64)
    vals = np.empty(x.shape + (order,))
    vals[..., 0] = 1.0
    if order > 1:
        vals[..., 1] = x
    for n in range(1, order - 1):
        vals[..., n + 1] = ((2 * n + 1) * x * vals[..., n] - n * vals[..., n - 1]) / (n + 1)
    return vals


def build_eval_matrix(length: int, order: int) -> np.ndarray:
    """Legendre values on the reconstruction grid, ``E[i, n] = P_n(1 - (2i+1)/L)``.

    Row ``L-1`` is the newest sample.  With the LegT matrices above zero delay
    maps to ``x = -1``; the bilinear recursion holds each input over its step,
    so sample ``i`` sits at the centre of its cell, half a step from the edge.
    """
    if length < 1 or order < 1:
        raise ValueError(f"length and order must be >= 1, got {length}, {order}")
    return _eval_cached(int(length), int(order))


@lru_cache(maxsize=64)
def _eval_cached(length: int, order: int) -> np.ndarray:
    grid = 1.0 - (2.0 * np.arange(length) + 1.0) / length
    mat = legendre_values(grid, order)
    mat.setflags(write=False)
    return mat


def reconstruct(memory, eval_matrix: np.ndarray, tail: int) -> np.ndarray:
    """Last ``tail`` samples of the window encoded by ``memory`` (shape ``(..., N)``)."""
    length = eval_matrix.shape[0]
    if tail < 1 or tail > length:
        raise ValueError(f"tail must be in [1, {length}], got {tail}")
    memory = np.asarray(memory, dtype=np.float64)
    if memory.shape[-1] != eval_matrix.shape[1]:
        raise ValueError(
            f"memory order {memory.shape[-1]} does not match eval matrix order {eval_matrix.shape[1]}"
        )
    return memory @ eval_matrix[length - tail :].T


def round_trip_error(signal, order: int, dt: float | None = None) -> float:
    """Relative L2 error of reconstructing the whole window from the final memory state."""
    x = np.asarray(signal, dtype=np.float64)
    length = x.shape[-1]
    disc = lpu(order, length, dt)
    memory = project(x, disc).last
    rec = reconstruct(memory, build_eval_matrix(length, order), length)
    denom = np.linalg.norm(x)
    err = np.linalg.norm(rec - x)
    return float(err / denom) if denom > 0 else float(err)

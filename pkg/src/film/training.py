"""Losses, analytic gradients, finite-difference oracle, Adam and the epoch loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .data import WindowSet
from .model import FiLMConfig, FiLMParams, expert_operators, expert_rows_grad, flatten, forward_batch

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 15
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class LossReport:
    mse: float
    mae: float
    count: int

    @staticmethod
    def combine(reports: list["LossReport"]) -> "LossReport":
        total = sum(r.count for r in reports)
        if total == 0:
            return LossReport(0.0, 0.0, 0)
        mse_ = sum(r.mse * r.count for r in reports) / total
        mae_ = sum(r.mae * r.count for r in reports) / total
        return LossReport(mse_, mae_, total)


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs truth {truth.shape}")
    return pred, truth


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


# ---------------------------------------------------------------- gradients


def backward(
    params: FiLMParams, config: FiLMConfig, x, y, batch_index: int | None = None, out: FiLMParams | None = None
) -> tuple[float, FiLMParams]:
    """Batch-mean MSE and its exact gradient w.r.t. every parameter.

    Complex weights receive ``dL/dRe + i dL/dIm``, so ``-grad`` is a descent
    direction.  The model is linear in each expert's weights and in the merge
    weights; RevIN enters through ``y = (P(x_hat) - beta) / gamma * s + mu``
    with ``P(x_hat) = gamma P(z) + beta P(1)``.

    ``out``, if given, must be laid out like ``params`` and is filled in place.
    """
    pred, cache = forward_batch(params, config, x)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        y = y[None]
    if pred.shape != y.shape:
        raise ValueError(f"target shape {y.shape} does not match forecast {pred.shape}")
    diff = pred - y
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        where = "" if batch_index is None else f" in batch {batch_index}"
        raise TrainingError(f"non-finite loss{where}")
    grad_y = 2.0 * diff / diff.size
    grads = params.zeros_like() if out is None else out

    if config.revin:
        std = cache.stats.std[:, None, :]
        gamma = cache.gamma
        g_norm = grad_y * std / gamma
        grads.gamma[...] = -np.sum(grad_y * (cache.y_norm - params.beta) * std, axis=(0, 1)) / gamma**2
        grads.gamma += np.sum(g_norm * cache.p_z, axis=(0, 1))
        grads.beta[...] = -np.sum(grad_y * std, axis=(0, 1)) / gamma
        grads.beta += np.sum(g_norm * cache.p_one[None, :, None], axis=(0, 1))
    else:
        g_norm = grad_y
        grads.gamma[...] = 0.0
        grads.beta[...] = 0.0

    b, h, d = g_norm.shape
    g_flat = g_norm.transpose(0, 2, 1).reshape(b * d, h)
    ops = expert_operators(config)
    for i, (op, w) in enumerate(zip(ops, params.experts)):
        grads.merge[i] = np.sum(g_flat * cache.expert_out[i])
        g_rows = (params.merge[i] * g_flat) @ op.tail_eval
        target = grads.experts[i]
        if isinstance(w, np.ndarray):
            expert_rows_grad(g_rows, cache.stage_cache[i], w, out=target)
        else:
            for dst, src in zip(target.arrays().values(), expert_rows_grad(g_rows, cache.stage_cache[i], w).arrays().values()):
                dst[...] = src
    return loss, grads


def model_loss(params: FiLMParams, config: FiLMConfig, x, y) -> float:
    pred, _ = forward_batch(params, config, x)
    return mse(pred, np.asarray(y).reshape(pred.shape))


def finite_diff_grad(loss_fn, params: FiLMParams, h: float = 1e-6) -> FiLMParams:
    """Central differences of ``loss_fn(params)`` for every real scalar.

    Real and imaginary parts of complex entries are perturbed separately and
    reassembled as ``dL/dRe + i dL/dIm``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    work = params.copy()
    grads = params.zeros_like()
    for (_, arr), (_, g) in zip(work.named_arrays(), grads.named_arrays()):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        parts = (1.0, 1j) if np.iscomplexobj(arr) else (1.0,)
        for i in range(flat.size):
            orig = flat[i]
            for unit in parts:
                flat[i] = orig + h * unit
                up = loss_fn(work)
                flat[i] = orig - h * unit
                down = loss_fn(work)
                flat[i] = orig
                gflat[i] += unit * (up - down) / (2.0 * h)
    return grads


def max_relative_error(a: FiLMParams, b: FiLMParams) -> float:
    """Largest per-tensor ``max|a - b| / max|b|`` across all parameters."""
    worst = 0.0
    for (_, x), (_, y) in zip(a.named_arrays(), b.named_arrays()):
        scale = np.abs(y).max()
        err = np.abs(x - y).max()
        worst = max(worst, err / scale if scale > 0 else err)
    return float(worst)


# ---------------------------------------------------------------- Adam


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, b1, b2, step, bc2, eps):  # pragma: no cover - compiled
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= step * mi / (np.sqrt(vi / bc2) + eps)


@dataclass
class AdamState:
    """Moments over a flat float64 parameter buffer (see :func:`flatten`)."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, grads: np.ndarray, params: np.ndarray, config: TrainConfig) -> AdamState:
    """One bias-corrected Adam update of the flat buffer ``params``, in place.

    Complex parameters sit in the buffer as interleaved (re, im) pairs and so
    are updated componentwise.
    """
    if not (grads.shape == params.shape == state.first_moment.shape):
        raise ValueError("gradient, parameter and moment buffers must have equal shapes")
    state.step_count += 1
    t = state.step_count
    b1, b2 = config.adam_beta1, config.adam_beta2
    _adam_kernel(
        params, grads, state.first_moment, state.second_moment,
        b1, b2, config.learning_rate / (1.0 - b1**t), 1.0 - b2**t, config.adam_eps,
    )
    return state


# ---------------------------------------------------------------- loop


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    val_mae: float


@dataclass
class TrainResult:
    final: FiLMParams
    best: FiLMParams
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0


def evaluate(params: FiLMParams, config: FiLMConfig, data: WindowSet, batch_size: int = 256) -> LossReport:
    reports = []
    for idx in data.batches(batch_size):
        x, y = data.batch(idx)
        pred, _ = forward_batch(params, config, x)
        reports.append(LossReport(mse(pred, y), mae(pred, y), pred.size))
    return LossReport.combine(reports)


def predict(params: FiLMParams, config: FiLMConfig, data: WindowSet, batch_size: int = 256) -> np.ndarray:
    preds = [forward_batch(params, config, data.batch(idx)[0])[0] for idx in data.batches(batch_size)]
    return np.concatenate(preds) if preds else np.empty((0, config.horizon, config.channels))


def train(
    params: FiLMParams,
    train_data: WindowSet,
    val_data: WindowSet,
    model_config: FiLMConfig,
    train_config: TrainConfig,
    progress=None,
) -> TrainResult:
    """Fixed-epoch Adam training, keeping a snapshot of the best-validation parameters.

    ``params`` is left untouched.  Internally all parameters live in one flat
    buffer with full spectral weights stacked as ``[Re W; -Im W]``; since Adam
    is elementwise and odd in the gradient, that is the same optimisation as
    on the complex tensors.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("training and validation sets must both be non-empty")
    rng = np.random.default_rng(train_config.seed)
    buf, work = flatten(params.stacked())
    gbuf, grads = flatten(work)
    state = AdamState.zeros(buf.size)
    best_buf, best_val, best_epoch = buf.copy(), np.inf, 0
    history = []
    batch_no = 0
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(len(train_data))
        reports = []
        for start in range(0, len(order), train_config.batch_size):
            idx = order[start : start + train_config.batch_size]
            x, y = train_data.batch(idx)
            loss, _ = backward(work, model_config, x, y, batch_index=batch_no, out=grads)
            adam_step(state, gbuf, buf, train_config)
            reports.append(LossReport(loss, 0.0, y.size))
            batch_no += 1
        train_mse = LossReport.combine(reports).mse
        val = evaluate(work, model_config, val_data)
        record = EpochRecord(epoch, train_mse, val.mse, val.mae)
        history.append(record)
        log.info("epoch %d train_mse=%.6f val_mse=%.6f val_mae=%.6f", epoch, train_mse, val.mse, val.mae)
        if progress is not None:
            progress(record)
        if val.mse < best_val:
            best_buf[...] = buf
            best_val, best_epoch = val.mse, epoch
    final = work.unstacked()
    buf[...] = best_buf
    return TrainResult(final, work.unstacked(), history, best_epoch)


def format_history(history: list[EpochRecord]) -> str:
    lines = [f"{'epoch':>5} {'train_mse':>12} {'val_mse':>12} {'val_mae':>12}"]
    lines += [f"{r.epoch:>5d} {r.train_mse:>12.6f} {r.val_mse:>12.6f} {r.val_mae:>12.6f}" for r in history]
    return "\n".join(lines)

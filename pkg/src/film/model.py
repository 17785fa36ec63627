"""FiLM forecaster: RevIN, multiscale LPU -> FEL -> reconstruction experts,
linear expert merge.

Two evaluation routes exist.  :func:`expert_forward` runs the literal
pipeline (project the window, FFT over time, mix modes, inverse FFT,
reconstruct the final memory row).  :class:`ExpertOperator` folds the fixed
parts of that pipeline into dense matrices so batches reduce to a few GEMMs;
:func:`film_forward` and training use it.  The test suite ties the two
together.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from .legendre import build_eval_matrix, lpu, project, reconstruct
from .spectral import (
    POLICIES,
    ModeSet,
    SpectralWeights,
    fel_forward,
    select_modes,
)

CHECKPOINT_VERSION = 1
GAMMA_FLOOR = 1e-8


@dataclass(frozen=True)
class FiLMConfig:
    horizon: int = 96
    multiscale_factors: tuple[int, ...] = (1, 2, 4)
    legendre_order: int = 256
    mode_count: int = 32
    mode_policy: str = "lowest"
    mode_seed: int = 0
    rank: int | None = None
    revin: bool = False
    eps_norm: float = 1e-5
    channels: int = 1
    dt: float | None = None  # None: 1 / expert window length

    def __post_init__(self):
        object.__setattr__(self, "multiscale_factors", tuple(int(f) for f in self.multiscale_factors))
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.multiscale_factors or min(self.multiscale_factors) < 1:
            raise ValueError("multiscale_factors must be a non-empty list of positive integers")
        if self.legendre_order < 1 or self.mode_count < 1 or self.channels < 1:
            raise ValueError("legendre_order, mode_count and channels must be >= 1")
        if self.mode_policy not in POLICIES:
            raise ValueError(f"mode_policy must be one of {POLICIES}")
        if self.rank is not None and self.rank < 1:
            raise ValueError("rank must be >= 1 or None")

    @property
    def input_length(self) -> int:
        return max(self.multiscale_factors) * self.horizon

    @property
    def n_experts(self) -> int:
        return len(self.multiscale_factors)

    def expert_length(self, i: int) -> int:
        return self.multiscale_factors[i] * self.horizon

    def expert_modes(self, i: int) -> ModeSet:
        length = self.expert_length(i)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return select_modes(self.mode_policy, self.mode_count, length // 2 + 1, self.mode_seed + i)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["multiscale_factors"] = list(self.multiscale_factors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FiLMConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------- RevIN


@dataclass(frozen=True)
class RevINStats:
    mean: np.ndarray  # (..., D)
    std: np.ndarray  # sqrt(var + eps), (..., D)


def _safe_gamma(gamma: np.ndarray) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=np.float64)
    small = np.abs(gamma) < GAMMA_FLOOR
    if small.any():
        warnings.warn("RevIN gamma below 1e-8 clamped", stacklevel=3)
        gamma = np.where(small, np.where(gamma < 0, -GAMMA_FLOOR, GAMMA_FLOOR), gamma)
    return gamma


def revin_normalize(x, gamma, beta, eps: float = 1e-5) -> tuple[np.ndarray, RevINStats]:
    """Per-instance, per-channel affine normalisation over the time axis.

    ``x`` has shape ``(..., T, D)``; statistics use the population variance.
    """
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=-2)
    std = np.sqrt(x.var(axis=-2) + eps)
    x_hat = gamma * (x - mean[..., None, :]) / std[..., None, :] + beta
    return x_hat, RevINStats(mean, std)


def revin_denormalize(y_hat, stats: RevINStats, gamma, beta) -> np.ndarray:
    gamma = _safe_gamma(gamma)
    return (np.asarray(y_hat) - beta) / gamma * stats.std[..., None, :] + stats.mean[..., None, :]


# ---------------------------------------------------------------- parameters


def stack_full(full: np.ndarray) -> np.ndarray:
    """Real ``(2*M*N, N)`` layout ``[Re W; -Im W]`` of full ``(M, N, N)`` weights."""
    m, n, _ = full.shape
    return np.concatenate([full.real.reshape(m * n, n), -full.imag.reshape(m * n, n)])


def unstack_full(stacked: np.ndarray) -> np.ndarray:
    half = stacked.shape[0] // 2
    n = stacked.shape[1]
    return (stacked[:half] - 1j * stacked[half:]).reshape(-1, n, n)


@dataclass
class FiLMParams:
    """Model parameters.

    An expert entry is either :class:`SpectralWeights` or, for full weights
    during training, the real stacked matrix from :func:`stack_full`.  The
    stacked form feeds the folded operators without any re-layout.
    """

    experts: list[SpectralWeights | np.ndarray]
    merge: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray

    @classmethod
    def init(cls, config: FiLMConfig, seed: int = 0) -> "FiLMParams":
        rng = np.random.default_rng(seed)
        experts = [
            SpectralWeights.init(config.legendre_order, len(config.expert_modes(i)), config.rank, rng)
            for i in range(config.n_experts)
        ]
        return cls(
            experts=experts,
            merge=np.full(config.n_experts, 1.0 / config.n_experts),
            gamma=np.ones(config.channels),
            beta=np.zeros(config.channels),
        )

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, w in enumerate(self.experts):
            if isinstance(w, np.ndarray):
                out.append((f"expert{i}/stacked", w))
            else:
                out.extend((f"expert{i}/{k}", v) for k, v in w.arrays().items())
        out += [("merge", self.merge), ("gamma", self.gamma), ("beta", self.beta)]
        return out

    def map(self, fn) -> "FiLMParams":
        return FiLMParams(
            experts=[fn(w) if isinstance(w, np.ndarray) else w.map(fn) for w in self.experts],
            merge=fn(self.merge),
            gamma=fn(self.gamma),
            beta=fn(self.beta),
        )

    def copy(self) -> "FiLMParams":
        return self.map(np.array)

    def zeros_like(self) -> "FiLMParams":
        return self.map(np.zeros_like)

    def num_scalars(self) -> int:
        return sum(a.size * (2 if np.iscomplexobj(a) else 1) for _, a in self.named_arrays())

    def stacked(self) -> "FiLMParams":
        """Copy with every full expert in the stacked real layout."""
        experts = [stack_full(w.full) if isinstance(w, SpectralWeights) and w.full is not None else w for w in self.experts]
        return FiLMParams([np.array(w) if isinstance(w, np.ndarray) else w.map(np.array) for w in experts],
                          self.merge.copy(), self.gamma.copy(), self.beta.copy())

    def unstacked(self) -> "FiLMParams":
        experts = [SpectralWeights(full=unstack_full(w)) if isinstance(w, np.ndarray) else w.map(np.array) for w in self.experts]
        return FiLMParams(experts, self.merge.copy(), self.gamma.copy(), self.beta.copy())


def flatten(params: FiLMParams) -> tuple[np.ndarray, FiLMParams]:
    """One contiguous float64 buffer holding every parameter, plus a FiLMParams of views into it.

    Complex arrays occupy interleaved (re, im) pairs, so elementwise updates on
    the buffer act on real and imaginary parts independently.
    """
    named = params.named_arrays()
    sizes = [a.size * (2 if np.iscomplexobj(a) else 1) for _, a in named]
    buf = np.empty(sum(sizes))
    views, pos = [], 0
    for (_, a), size in zip(named, sizes):
        chunk = buf[pos : pos + size]
        view = chunk.view(np.complex128) if np.iscomplexobj(a) else chunk
        view = view.reshape(a.shape)
        view[...] = a
        views.append(view)
        pos += size
    it = iter(views)
    return buf, params.map(lambda _: next(it))


# ---------------------------------------------------------------- experts


@dataclass(frozen=True)
class ExpertOperator:
    """Fixed linear maps of one expert, folded for batched evaluation.

    ``features[s, m]`` takes sample ``s`` of a window (length L) to selected
    rFFT bin ``m`` of its memory trajectory.  ``readout[m]`` turns a mixed
    bin into its share of the last row of the inverse FFT, so the final FEL
    memory row is ``Re(sum_m readout[m] * mixed[m])``.  ``tail_eval`` maps
    that row to the last ``horizon`` reconstructed samples.
    """

    length: int
    modes: ModeSet
    features: np.ndarray = field(repr=False)  # (L, M, N) complex
    readout: np.ndarray = field(repr=False)  # (M,) complex
    tail_eval: np.ndarray = field(repr=False)  # (horizon, N)

    def __post_init__(self):
        L, M, N = self.features.shape
        scaled = self.features * self.readout[None, :, None]
        flat = np.concatenate([scaled.real.reshape(L, M * N), scaled.imag.reshape(L, M * N)], axis=1)
        object.__setattr__(self, "_flat", np.ascontiguousarray(flat))

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Readout-scaled bins of windows ``x`` ``(B, L)`` as real ``(B, 2*M*N)``: ``[Re | Im]``."""
        return x @ self._flat

    def bins(self, x: np.ndarray) -> np.ndarray:
        """Unscaled mode-major bins ``(M, B, N)`` of windows ``x`` ``(B, L)``."""
        return np.einsum("bl,lmn->mbn", x, self.features)


def _complex_view(a: np.ndarray, modes: int, channels: int) -> np.ndarray:
    half = modes * channels
    return (a[:, :half] + 1j * a[:, half:]).reshape(-1, modes, channels)


def expert_rows(op: ExpertOperator, encoded: np.ndarray, weights: SpectralWeights) -> tuple[np.ndarray, tuple]:
    """Final FEL memory rows ``(B, N)`` from encoded windows; also returns the stage cache.

    Every cached array is linear in ``encoded``.
    """
    if isinstance(weights, np.ndarray):
        return encoded @ weights, (encoded,)
    if weights.full is not None:
        return encoded @ stack_full(weights.full), (encoded,)
    m = weights.modes
    a0 = _complex_view(encoded, m, weights.channels)  # (B, M, N)
    a1 = a0 @ weights.w0  # (B, M, K)
    a2 = np.einsum("bmk,klm->bl", a1, weights.w1)
    return (a2 @ weights.w2).real, (encoded, a1, a2)


def expert_rows_grad(g_rows: np.ndarray, cache: tuple, weights, out=None):
    """Adjoint of :func:`expert_rows` w.r.t. the weights (``dL/dRe + i dL/dIm``).

    Stacked weights get a stacked gradient, written into ``out`` when given.
    """
    if isinstance(weights, np.ndarray):
        (encoded,) = cache
        return np.matmul(encoded.T, g_rows, out=out)
    if weights.full is not None:
        (encoded,) = cache
        m, n, _ = weights.full.shape
        g = g_rows.T @ encoded  # (N, 2*M*N)
        g_re = g[:, : m * n].T.reshape(m, n, n)
        g_im = g[:, m * n :].T.reshape(m, n, n)
        return SpectralWeights(full=g_re - 1j * g_im)
    encoded, a1, a2 = cache
    a0 = _complex_view(encoded, weights.modes, weights.channels)
    g_w2 = np.conj(a2).T @ g_rows
    g_a2 = g_rows @ np.conj(weights.w2).T  # (B, K)
    g_w1 = np.einsum("bmk,bl->klm", np.conj(a1), g_a2)
    g_a1 = np.einsum("bl,klm->bmk", g_a2, np.conj(weights.w1))
    g_w0 = np.einsum("bmn,bmk->nk", np.conj(a0), g_a1)
    return SpectralWeights(w0=g_w0, w1=g_w1, w2=g_w2)


def readout_weights(length: int, modes: ModeSet) -> np.ndarray:
    """Coefficients giving the last sample of an inverse real FFT from its bins."""
    k = modes.array
    mult = np.where((k == 0) | ((length % 2 == 0) & (k == length // 2)), 1.0, 2.0)
    return mult * np.exp(2j * np.pi * k * (length - 1) / length) / length


@lru_cache(maxsize=16)
def expert_operator(length: int, order: int, modes: ModeSet, horizon: int, dt: float | None = None) -> ExpertOperator:
    disc = lpu(order, length, dt)
    k = modes.array
    if k.max() >= length // 2 + 1:
        raise ValueError(f"mode {k.max()} outside the {length // 2 + 1} bins of length {length}")
    # H_s = sum_{t>=s} w^{t} Ad^{t-s} Bd with w = exp(-2 pi i k / L), run backwards in s
    phase = np.exp(-2j * np.pi * np.outer(np.arange(length), k) / length)  # (L, M)
    feats = np.empty((length, k.size, order), dtype=np.complex128)
    h = np.zeros((k.size, order), dtype=np.complex128)
    ad_t = disc.ad.T
    for s in range(length - 1, -1, -1):
        h = h @ ad_t + phase[s][:, None] * disc.bd
        feats[s] = h
    tail = np.ascontiguousarray(build_eval_matrix(length, order)[length - horizon :])
    return ExpertOperator(length, modes, feats, readout_weights(length, modes), tail)


def expert_operators(config: FiLMConfig) -> list[ExpertOperator]:
    return [
        expert_operator(
            config.expert_length(i), config.legendre_order, config.expert_modes(i), config.horizon, config.dt
        )
        for i in range(config.n_experts)
    ]


def expert_forward(x, weights: SpectralWeights, modes: ModeSet, horizon: int, dt: float | None = None) -> np.ndarray:
    """Literal expert pipeline on one window ``x`` of shape ``(f*horizon, D)``.

    Per channel: memory trajectory, FEL, then the final FEL row is
    reconstructed over the window and its last ``horizon`` samples returned.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    length = x.shape[0]
    if length < horizon:
        raise ValueError(f"expert window of {length} samples is shorter than the horizon {horizon}")
    order = weights.channels
    traj = project(x.T, lpu(order, length, dt)).coeffs  # (D, L, N)
    filtered = fel_forward(traj, weights, modes)
    return reconstruct(filtered[:, -1, :], build_eval_matrix(length, order), horizon).T


# ---------------------------------------------------------------- forward


@dataclass
class ForwardCache:
    """Intermediates kept for the analytic backward pass."""

    batch: int
    stats: RevINStats | None
    gamma: np.ndarray | None
    expert_out: list[np.ndarray]  # per expert, (B*D, horizon), model (normalised) scale
    stage_cache: list[tuple]  # per expert, see expert_rows
    y_norm: np.ndarray  # merged output before denormalisation, (B, horizon, D)
    p_z: np.ndarray | None = None  # merged output for the centred input z, (B, horizon, D)
    p_one: np.ndarray | None = None  # merged output for a constant-one input, (horizon,)


def _check_input(x: np.ndarray, config: FiLMConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"input must have shape (T, D) or (B, T, D), got {x.shape}")
    if x.shape[-1] != config.channels:
        raise ValueError(f"input has {x.shape[-1]} channels, config expects {config.channels}")
    need = config.input_length
    if x.shape[1] < need:
        raise ValueError(f"need at least {need} trailing samples (max factor x horizon), got {x.shape[1]}")
    if not np.all(np.isfinite(x[:, -need:])):
        raise ValueError("non-finite value in input window")
    return x[:, -need:]


def _rowwise(col: np.ndarray, like: np.ndarray) -> np.ndarray:
    return col.reshape((-1,) + (1,) * (like.ndim - 1))


def forward_batch(params: FiLMParams, config: FiLMConfig, x) -> tuple[np.ndarray, ForwardCache]:
    """Batched forecast ``(B, horizon, D)`` plus the cache used by backward."""
    x = _check_input(x, config)
    b, _, d = x.shape
    ops = expert_operators(config)
    h = config.horizon
    stats = gamma = None
    if config.revin:
        z, stats = revin_normalize(x, 1.0, 0.0, config.eps_norm)
        gamma = _safe_gamma(params.gamma)
        g_rows = np.tile(gamma, b)[:, None]
        b_rows = np.tile(params.beta, b)[:, None]
    else:
        z = x
    series = z.transpose(0, 2, 1).reshape(b * d, -1)  # (B*D, T)

    outs, caches, outs_z, outs_one = [], [], [], []
    if len(params.experts) != len(ops):
        raise ValueError(f"parameters hold {len(params.experts)} experts, config has {len(ops)}")
    for op, w in zip(ops, params.experts):
        rows, cache = expert_rows(op, op.encode(series[:, -op.length :]), w)
        if config.revin:
            # the pipeline is linear, so the affine RevIN input splits into
            # gamma * (centred part) + beta * (constant part)
            rows_one, cache_one = expert_rows(op, op.encode(np.ones((1, op.length))), w)
            outs_z.append(rows @ op.tail_eval.T)
            outs_one.append((rows_one @ op.tail_eval.T)[0])
            cache = tuple(
                _rowwise(g_rows, c) * c + _rowwise(b_rows, c) * c1 for c, c1 in zip(cache, cache_one)
            )
            rows = g_rows * rows + b_rows * rows_one
        outs.append(rows @ op.tail_eval.T)
        caches.append(cache)

    merged = sum(wi * o for wi, o in zip(params.merge, outs))
    y_norm = merged.reshape(b, d, h).transpose(0, 2, 1)
    cache = ForwardCache(b, stats, gamma, outs, caches, y_norm)
    if config.revin:
        p_z = sum(wi * o for wi, o in zip(params.merge, outs_z))
        cache.p_z = p_z.reshape(b, d, h).transpose(0, 2, 1)
        cache.p_one = sum(wi * o for wi, o in zip(params.merge, outs_one))
        y = (y_norm - params.beta) / gamma * stats.std[:, None, :] + stats.mean[:, None, :]
    else:
        y = y_norm
    return y, cache


def film_forward(x, params: FiLMParams, config: FiLMConfig, direct: bool = False) -> np.ndarray:
    """Forecast the next ``horizon`` samples from the trailing history.

    ``x`` is ``(T, D)`` or a batch ``(B, T, D)``; the result drops the batch
    axis when the input had none.  ``direct=True`` evaluates every expert
    through :func:`expert_forward` instead of the folded operators.
    """
    single = np.asarray(x).ndim == 2
    if not direct:
        y, _ = forward_batch(params, config, x)
        return y[0] if single else y
    xb = _check_input(x, config)
    params = params.unstacked()
    results = []
    for window in xb:
        if config.revin:
            xin, stats = revin_normalize(window, params.gamma, params.beta, config.eps_norm)
        else:
            xin = window
        y = sum(
            params.merge[i]
            * expert_forward(xin[-config.expert_length(i) :], w, config.expert_modes(i), config.horizon, config.dt)
            for i, w in enumerate(params.experts)
        )
        if config.revin:
            y = revin_denormalize(y, stats, params.gamma, params.beta)
        results.append(y)
    out = np.stack(results)
    return out[0] if single else out


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params: FiLMParams, config: FiLMConfig, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write config and every tensor to an ``.npz`` container (bit-exact round trip)."""
    arrays = {f"param/{k}": v for k, v in params.unstacked().named_arrays()}
    arrays["meta/format_version"] = np.array(CHECKPOINT_VERSION)
    arrays["meta/config"] = np.array(json.dumps(config.to_dict(), sort_keys=True))
    for k, v in (extra or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[FiLMParams, FiLMConfig, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["meta/format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        config = FiLMConfig.from_dict(json.loads(str(data["meta/config"])))
        tensors = {k[len("param/") :]: data[k] for k in data.files if k.startswith("param/")}
        extra = {k[len("extra/") :]: data[k] for k in data.files if k.startswith("extra/")}
    experts = []
    for i in range(config.n_experts):
        keys = {k.split("/", 1)[1]: v for k, v in tensors.items() if k.startswith(f"expert{i}/")}
        experts.append(SpectralWeights(**keys))
    params = FiLMParams(experts, tensors["merge"], tensors["gamma"], tensors["beta"])
    return params, config, extra

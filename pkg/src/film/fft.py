"""Discrete Fourier transforms along the last axis.

Iterative radix-2 Cooley-Tukey for power-of-two lengths, Bluestein's chirp-z
for everything else.  Both are vectorised over leading axes.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=32)
def _twiddles(n: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n // 2) / n)


def _radix2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    out = x[..., _bit_reverse(n)].astype(np.complex128, copy=True)
    lead = out.shape[:-1]
    tw_all = _twiddles(n)
    size = 2
    while size <= n:
        half = size // 2
        tw = tw_all[:: n // size]
        blocks = out.reshape(lead + (n // size, size))
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * tw
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        size *= 2
    return out


@lru_cache(maxsize=32)
def _chirp(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the phase argument small for long inputs
    w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(w)
    if n > 1:
        b[-(n - 1) :] = np.conj(w[1:])[::-1]
    return w, _radix2(b), m


def _bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    w, b_hat, m = _chirp(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * w
    conv = _ifft_pow2(_radix2(a) * b_hat)
    return conv[..., :n] * w


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_radix2(np.conj(x))) / x.shape[-1]


def fft(x) -> np.ndarray:
    """Unnormalised forward DFT over the last axis."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("fft of an empty axis")
    if n == 1:
        return x.astype(np.complex128)
    if _is_pow2(n):
        return _radix2(x)
    return _bluestein(x)


def ifft(x) -> np.ndarray:
    """Inverse DFT over the last axis, carrying the 1/n factor."""
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def rfft(x) -> np.ndarray:
    """Non-negative frequency bins ``0..n//2`` of a real signal."""
    x = np.asarray(x, dtype=np.float64)
    return fft(x)[..., : x.shape[-1] // 2 + 1]


def irfft(bins, n: int) -> np.ndarray:
    """Real inverse of :func:`rfft` for length ``n``.

    As with the usual convention, the imaginary parts of bin 0 and (for even
    ``n``) bin ``n/2`` are ignored.
    """
    bins = np.asarray(bins, dtype=np.complex128)
    half = n // 2 + 1
    if bins.shape[-1] != half:
        raise ValueError(f"expected {half} bins for length {n}, got {bins.shape[-1]}")
    full = np.zeros(bins.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :half] = bins
    full[..., 0] = bins[..., 0].real
    if n % 2 == 0:
        full[..., n // 2] = bins[..., n // 2].real
    upper = n - half
    if upper > 0:
        full[..., half:] = np.conj(bins[..., 1 : upper + 1][..., ::-1])
    return ifft(full).real

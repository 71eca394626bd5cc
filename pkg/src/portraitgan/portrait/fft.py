"""Iterative radix-2 decimation-in-time FFT over the last axis."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@lru_cache(maxsize=None)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


def _transform(x: np.ndarray, sign: float) -> np.ndarray:
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1]
    if n == 0 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    lead = a.shape[:-1]
    a = a[..., _bitrev(n)]
    m = 1
    while m < n:
        tw = np.exp(sign * 1j * np.pi * np.arange(m) / m)
        blocks = a.reshape(*lead, n // (2 * m), 2, m)
        even = blocks[..., 0, :]
        odd = blocks[..., 1, :] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        m *= 2
    return a


def fft(x: np.ndarray) -> np.ndarray:
    return _transform(x, -1.0)


def ifft(x: np.ndarray) -> np.ndarray:
    n = np.shape(x)[-1]
    return _transform(x, 1.0) / n

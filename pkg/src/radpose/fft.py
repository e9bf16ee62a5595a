"""Radix-2 FFT and per-fiber centering for complex radar tensors.

Convention: unnormalized forward transform, X_k = sum_n x_n exp(-2*pi*i*k*n/N).
Only power-of-two lengths are supported; inputs are zero-padded to the
requested length before transforming.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

_rev_cache: dict[int, np.ndarray] = {}
_twiddle_cache: dict[int, list[np.ndarray]] = {}


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reversal(n: int) -> np.ndarray:
    perm = _rev_cache.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        idx = np.arange(n)
        perm = np.zeros(n, dtype=np.intp)
        for b in range(bits):
            perm = (perm << 1) | ((idx >> b) & 1)
        _rev_cache[n] = perm
    return perm


def _twiddles(n: int) -> list[np.ndarray]:
    tw = _twiddle_cache.get(n)
    if tw is None:
        tw = []
        size = 2
        while size <= n:
            half = size // 2
            tw.append(np.exp(-2j * np.pi * np.arange(half) / size))
            size *= 2
        _twiddle_cache[n] = tw
    return tw


def _fft_last_axis(a: np.ndarray) -> np.ndarray:
    """Iterative Cooley-Tukey over the last axis; len must be a power of two."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    a = a[..., _bit_reversal(n)]
    for w in _twiddles(n):
        size = 2 * w.shape[0]
        grouped = a.reshape(a.shape[:-1] + (n // size, size))
        even = grouped[..., : size // 2]
        odd = grouped[..., size // 2 :] * w
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(a.shape)
    return a


def fft_1d(x: np.ndarray, pad_to: int) -> np.ndarray:
    """DFT of a 1-D signal zero-padded to pad_to (power of two >= len(x))."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise ShapeError(f"fft_1d expects a vector, got shape {x.shape}")
    return fft_along(x, axis=0, pad_to=pad_to)


def fft_along(t: np.ndarray, axis: int, pad_to: int) -> np.ndarray:
    """Apply fft_1d independently along one axis of a complex tensor."""
    t = np.asarray(t, dtype=np.complex128)
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {t.shape}")
    axis = axis % t.ndim
    n = t.shape[axis]
    if not is_power_of_two(pad_to):
        raise ValueError(f"pad_to must be a power of two, got {pad_to}")
    if pad_to < n:
        raise ValueError(f"pad_to={pad_to} shorter than axis length {n}")
    moved = np.moveaxis(t, axis, -1)
    if pad_to > n:
        pad = [(0, 0)] * moved.ndim
        pad[-1] = (0, pad_to - n)
        moved = np.pad(moved, pad)
    out = _fft_last_axis(moved)
    return np.moveaxis(out, -1, axis)


def center_along(t: np.ndarray, axis: int) -> np.ndarray:
    """Subtract the per-fiber mean along one axis (complex mean if complex)."""
    t = np.asarray(t)
    if not -t.ndim <= axis < t.ndim:
        raise ShapeError(f"axis {axis} out of range for shape {t.shape}")
    return t - t.mean(axis=axis, keepdims=True)

import itertools

import numpy as np
import pytest

from conftest import naive_dft
from radpose import fft
from radpose.errors import ShapeError
from radpose.rng import Rng


def test_impulse_flat_spectrum():
    out = fft.fft_1d(np.array([1, 0, 0, 0], dtype=complex), pad_to=4)
    assert np.allclose(out, np.ones(4), atol=1e-12)


def test_dc_signal():
    out = fft.fft_1d(np.ones(4, dtype=complex), pad_to=4)
    assert np.allclose(out, [4, 0, 0, 0], atol=1e-12)


def test_complex_exponential_peaks_at_bin_3():
    n = np.arange(8)
    x = np.exp(2j * np.pi * 3 * n / 8)
    out = fft.fft_1d(x, pad_to=8)
    oracle = naive_dft(x)
    assert np.allclose(out, oracle, atol=1e-9)
    mag = np.abs(out)
    assert np.argmax(mag) == 3
    mag[3] = 0.0
    assert np.all(mag < 1e-9)


def test_matches_bruteforce_dft_on_random_vectors():
    r = Rng(7)
    for n in (1, 2, 4, 8, 16, 64, 128):
        x = r.normal(n) + 1j * r.normal(n)
        assert np.allclose(fft.fft_1d(x, n), naive_dft(x), atol=1e-9)


def test_zero_padding_matches_padded_bruteforce():
    r = Rng(8)
    x = r.normal(5) + 1j * r.normal(5)
    padded = np.concatenate([x, np.zeros(3)])
    assert np.allclose(fft.fft_1d(x, 8), naive_dft(padded), atol=1e-9)


def test_parseval_unpadded():
    r = Rng(9)
    for n in (4, 16, 128):
        x = r.normal(n) + 1j * r.normal(n)
        spec = fft.fft_1d(x, n)
        lhs = np.sum(np.abs(x) ** 2)
        rhs = np.sum(np.abs(spec) ** 2) / n
        assert abs(lhs - rhs) / lhs < 1e-9


def test_rejects_bad_pad():
    x = np.ones(4, dtype=complex)
    with pytest.raises(ValueError):
        fft.fft_1d(x, 6)  # not a power of two
    with pytest.raises(ValueError):
        fft.fft_1d(x, 2)  # shorter than the input


def test_fft_along_shape_contract():
    t = np.zeros((3, 4), dtype=complex)
    assert fft.fft_along(t, axis=1, pad_to=8).shape == (3, 8)


def test_fft_along_impulse_rows():
    t = np.zeros((2, 4), dtype=complex)
    t[:, 0] = 1.0
    out = fft.fft_along(t, axis=1, pad_to=4)
    assert np.allclose(out, np.ones((2, 4)), atol=1e-12)


def test_fft_along_matches_fiber_loop_bitwise():
    r = Rng(10)
    t = r.normal((3, 4, 5)) + 1j * r.normal((3, 4, 5))
    for axis in range(3):
        pad = 8
        out = fft.fft_along(t, axis=axis, pad_to=pad)
        moved = np.moveaxis(t, axis, -1)
        expect = np.empty(moved.shape[:-1] + (pad,), dtype=complex)
        for idx in np.ndindex(moved.shape[:-1]):
            expect[idx] = fft.fft_1d(moved[idx], pad)
        assert np.array_equal(out, np.moveaxis(expect, -1, axis))


def test_fft_along_matches_bruteforce_all_small_shapes():
    r = Rng(11)
    for shape in itertools.product((1, 2, 4), repeat=3):
        t = r.normal(shape) + 1j * r.normal(shape)
        for axis in range(3):
            out = fft.fft_along(t, axis=axis, pad_to=shape[axis])
            moved = np.moveaxis(t, axis, -1)
            expect = np.stack([naive_dft(f) for f in moved.reshape(-1, shape[axis])])
            expect = np.moveaxis(expect.reshape(moved.shape), -1, axis)
            assert np.allclose(out, expect, atol=1e-9)


def test_fft_along_axis_out_of_range():
    with pytest.raises(ShapeError):
        fft.fft_along(np.zeros((2, 2), dtype=complex), axis=5, pad_to=2)


def test_center_along_constant_fiber():
    t = np.full((4,), 5.0 + 0j)
    assert np.allclose(fft.center_along(t, 0), np.zeros(4), atol=1e-15)


def test_center_along_zero_mean_unchanged():
    t = np.array([1.0, -1.0, 1.0, -1.0])
    assert np.allclose(fft.center_along(t, 0), t, atol=1e-15)


def test_center_along_removes_mean():
    r = Rng(12)
    t = r.normal((5, 6)) + 1j * r.normal((5, 6))
    for axis in (0, 1):
        centered = fft.center_along(t, axis)
        assert np.all(np.abs(centered.mean(axis=axis)) <= 1e-12)


def test_center_along_idempotent():
    r = Rng(13)
    t = r.normal((4, 3))
    once = fft.center_along(t, 0)
    twice = fft.center_along(once, 0)
    assert np.allclose(once, twice, atol=1e-12)

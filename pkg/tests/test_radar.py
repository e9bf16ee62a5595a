import numpy as np
import pytest

from radpose.errors import (
    BadMagicError,
    DimOverflowError,
    ShapeError,
    TruncatedPayloadError,
)
from radpose.radar import (
    RadarCube,
    RadarDims,
    preprocess,
    preprocess_frames,
    read_cube,
    read_poses,
    write_cube,
    write_poses,
)
from radpose.rng import Rng

SMALL = RadarDims(T=2, A=4, E=4, S=8, C=8)


def _random_cube(dims=SMALL, seed=0):
    r = Rng(seed)
    data = r.normal(dims.shape) + 1j * r.normal(dims.shape)
    return RadarCube(dims, data)


def test_dims_defaults_match_radar_table():
    d = RadarDims()
    assert d.shape == (8, 4, 4, 64, 128)
    assert (d.pad_S, d.pad_C, d.pad_A, d.pad_E) == (64, 128, 4, 4)


def test_dims_reject_bad_pads():
    with pytest.raises(ValueError):
        RadarDims(S=8, pad_S=6)
    with pytest.raises(ValueError):
        RadarDims(S=8, pad_S=4)


def test_cube_shape_checked():
    with pytest.raises(ShapeError):
        RadarCube(SMALL, np.zeros((2, 4, 4, 8, 9), dtype=complex))


def test_cube_rejects_nonfinite():
    data = np.zeros(SMALL.shape, dtype=complex)
    data[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        RadarCube(SMALL, data)


def test_static_scene_preprocesses_to_zero():
    r = Rng(1)
    frame = r.normal((SMALL.A, SMALL.E, SMALL.S)) + 1j * r.normal((SMALL.A, SMALL.E, SMALL.S))
    data = np.repeat(frame[None, :, :, :, None], SMALL.C, axis=4)
    data = np.repeat(data, SMALL.T, axis=0)
    cube = RadarCube(SMALL, data)
    out = preprocess(cube)
    in_energy = np.sum(np.abs(data) ** 2)
    assert np.sum(out**2) <= 1e-12 * in_energy


def test_paper_default_output_shape():
    dims = RadarDims()  # T=8, 4, 4, 64, 128
    cube = RadarCube(dims, np.zeros(dims.shape, dtype=complex))
    assert preprocess(cube).shape == (16, 128, 4, 4, 64)


def test_preprocess_linearity():
    a = _random_cube(seed=2)
    b = _random_cube(seed=3)
    combo = RadarCube(SMALL, 2.0 * a.data - 0.5 * b.data)
    lhs = preprocess(combo)
    rhs = 2.0 * preprocess(a) - 0.5 * preprocess(b)
    scale = np.abs(rhs).max()
    assert np.allclose(lhs, rhs, atol=1e-9 * max(scale, 1.0))


def test_single_entry_support_lands_in_its_time_slices():
    data = np.zeros(SMALL.shape, dtype=complex)
    t0 = 1
    data[t0, 2, 1, 3, 5] = 1.0
    out = preprocess(RadarCube(SMALL, data), center=False)
    energy_per_slice = (out**2).sum(axis=(1, 2, 3, 4))
    nonzero = np.nonzero(energy_per_slice > 1e-15)[0]
    # real part slice t0 and imaginary part slice t0 + T only
    assert set(nonzero) <= {t0, t0 + SMALL.T}
    assert energy_per_slice[t0] > 0


def test_preprocess_frames_matches_window_path():
    cube = _random_cube(seed=4)
    full = preprocess(cube).reshape(2 * SMALL.T, -1)
    frames = preprocess_frames(cube)
    rebuilt = np.concatenate([frames[:, 0], frames[:, 1]], axis=0)
    assert np.array_equal(full, rebuilt)


def test_cube_roundtrip_bit_identical(tmp_path):
    cube = _random_cube(seed=5)
    path = tmp_path / "cube.rpc1"
    write_cube(cube, path)
    back = read_cube(path)
    # payload is stored as complex64 pairs; compare at that precision
    assert np.array_equal(
        back.data.astype(np.complex64), cube.data.astype(np.complex64)
    )
    assert back.dims.shape == cube.dims.shape
    # a second write of the read-back cube is byte-identical
    path2 = tmp_path / "cube2.rpc1"
    write_cube(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.rpc1"
    cube = _random_cube(seed=6)
    write_cube(cube, path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagicError):
        read_cube(path)


def test_truncated_payload(tmp_path):
    import struct

    path = tmp_path / "trunc.rpc1"
    header = b"RPC1" + struct.pack("<IIIIII", 1, 1, 1, 1, 1, 10**9)
    path.write_bytes(header + b"\x00" * 64)
    with pytest.raises(TruncatedPayloadError):
        read_cube(path)


def test_dim_overflow(tmp_path):
    import struct

    path = tmp_path / "huge.rpc1"
    header = b"RPC1" + struct.pack("<IIIIII", 1, 10**9, 4, 4, 10**9, 10**9)
    path.write_bytes(header)
    with pytest.raises(DimOverflowError):
        read_cube(path)


def test_poses_roundtrip(tmp_path):
    r = Rng(7)
    poses = r.normal((5, 26, 3))
    path = tmp_path / "poses.csv"
    write_poses(poses, path)
    back = read_poses(path)
    assert np.array_equal(poses, back)  # repr round-trip is exact for f64

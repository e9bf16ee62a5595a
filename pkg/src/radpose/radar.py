"""Radar-cube preprocessing and on-disk formats.

The processing chain per window: center along chirps (static-clutter
removal), zero-padded FFTs over ADC samples -> range, chirps -> Doppler,
azimuth and elevation channels, permutation into
[time, Doppler, azimuth, elevation, range], and a complex->real split that
concatenates real and imaginary parts along the time axis.

RPC1 file format (little-endian):
    magic "RPC1" | u32 version=1 | u32 dims T,A,E,S,C | payload of
    T*A*E*S*C complex64 values as (f32 re, f32 im) pairs, row-major.

Pose sidecar: CSV with header ``frame_index,kp0_x,...,kp25_z``, meters.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fft
from .errors import (
    BadMagicError,
    DimOverflowError,
    ShapeError,
    TruncatedPayloadError,
)
from .skeleton import N_KEYPOINTS

_MAGIC = b"RPC1"
_VERSION = 1
# Element-count cap: anything above this cannot be a real desk-scale cube.
_MAX_ELEMENTS = 1 << 40


@dataclass
class RadarDims:
    """Raw cube dimensions plus FFT output sizes per transformed axis."""

    T: int = 8
    A: int = 4
    E: int = 4
    S: int = 64
    C: int = 128
    pad_S: int = 0
    pad_C: int = 0
    pad_A: int = 0
    pad_E: int = 0

    def __post_init__(self):
        for name in ("T", "A", "E", "S", "C"):
            if getattr(self, name) < 1:
                raise ValueError(f"dimension {name} must be positive")
        # pads default to the raw sizes
        self.pad_S = self.pad_S or self.S
        self.pad_C = self.pad_C or self.C
        self.pad_A = self.pad_A or self.A
        self.pad_E = self.pad_E or self.E
        for pad_name, raw_name in (("pad_S", "S"), ("pad_C", "C"), ("pad_A", "A"), ("pad_E", "E")):
            pad, raw = getattr(self, pad_name), getattr(self, raw_name)
            if not fft.is_power_of_two(pad):
                raise ValueError(f"{pad_name}={pad} is not a power of two")
            if pad < raw:
                raise ValueError(f"{pad_name}={pad} smaller than {raw_name}={raw}")

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        return (self.T, self.A, self.E, self.S, self.C)

    @property
    def processed_shape(self) -> tuple[int, int, int, int, int]:
        return (2 * self.T, self.pad_C, self.pad_A, self.pad_E, self.pad_S)

    @property
    def feature_dim(self) -> int:
        """Flattened size of one real/imag time slice after preprocessing."""
        return self.pad_C * self.pad_A * self.pad_E * self.pad_S

    def with_frames(self, T: int) -> "RadarDims":
        return RadarDims(T, self.A, self.E, self.S, self.C,
                         self.pad_S, self.pad_C, self.pad_A, self.pad_E)


@dataclass
class RadarCube:
    """Complex beat-signal tensor of shape [T, A, E, S, C]."""

    dims: RadarDims
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != self.dims.shape:
            raise ShapeError(
                f"cube data shape {self.data.shape} does not match dims {self.dims.shape}"
            )
        if not np.all(np.isfinite(self.data.view(np.float64))):
            raise ValueError("cube contains non-finite values")


def preprocess(cube: RadarCube, center: bool = True) -> np.ndarray:
    """Full preprocessing of one window; returns real [2T, pC, pA, pE, pS].

    The first T output slices are the real parts in time order, the next T
    the imaginary parts. ``center=False`` skips clutter removal (useful for
    inspecting static scenes; training always centers).
    """
    d = cube.dims
    x = cube.data
    if center:
        x = fft.center_along(x, axis=4)  # chirp axis
    x = fft.fft_along(x, axis=3, pad_to=d.pad_S)  # ADC samples -> range
    x = fft.fft_along(x, axis=4, pad_to=d.pad_C)  # chirps -> Doppler
    x = fft.fft_along(x, axis=1, pad_to=d.pad_A)  # azimuth channels
    x = fft.fft_along(x, axis=2, pad_to=d.pad_E)  # elevation channels
    # [T, A, E, S, C] -> [T, Doppler, azimuth, elevation, range]
    x = np.transpose(x, (0, 4, 1, 2, 3))
    return np.concatenate([x.real, x.imag], axis=0)


def preprocess_frames(cube: RadarCube, center: bool = True) -> np.ndarray:
    """Per-frame variant: real [T, 2, feature_dim] with re/im slices flattened.

    Assembling rows [re_0..re_{T-1}, im_0..im_{T-1}] reproduces
    ``preprocess(cube).reshape(2T, -1)`` exactly; the chain is frame-local.
    """
    full = preprocess(cube, center=center)
    t = cube.dims.T
    flat = full.reshape(2 * t, -1)
    return np.stack([flat[:t], flat[t:]], axis=1)


def write_cube(cube: RadarCube, path: str | Path) -> None:
    d = cube.dims
    payload = cube.data.astype(np.complex64)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIIIII", _VERSION, d.T, d.A, d.E, d.S, d.C))
        f.write(payload.tobytes(order="C"))


def read_cube(path: str | Path, dims: RadarDims | None = None) -> RadarCube:
    """Read an RPC1 file. ``dims`` may override FFT pad sizes (raw dims must match)."""
    with open(path, "rb") as f:
        head = f.read(4)
        if head != _MAGIC:
            raise BadMagicError(f"{path}: bad magic {head!r}")
        header = f.read(24)
        if len(header) != 24:
            raise TruncatedPayloadError(f"{path}: truncated header")
        version, t, a, e, s, c = struct.unpack("<IIIIII", header)
        if version != _VERSION:
            raise CubeVersionError(f"{path}: unsupported version {version}")
        n_elem = int(t) * int(a) * int(e) * int(s) * int(c)
        if min(t, a, e, s, c) < 1 or n_elem > _MAX_ELEMENTS:
            raise DimOverflowError(f"{path}: implausible dims {(t, a, e, s, c)}")
        # check the payload size before allocating a read buffer for it
        here = f.tell()
        f.seek(0, 2)
        available = f.tell() - here
        f.seek(here)
        if available < n_elem * 8:
            raise TruncatedPayloadError(
                f"{path}: payload holds {available} bytes, need {n_elem * 8}"
            )
        payload = f.read(n_elem * 8)
    data = np.frombuffer(payload, dtype=np.complex64).reshape(t, a, e, s, c)
    if dims is None:
        file_dims = RadarDims(t, a, e, s, c)
    else:
        if (t, a, e, s, c) != dims.with_frames(t).shape:
            raise ShapeError(
                f"{path}: file dims {(t, a, e, s, c)} do not match configured dims"
            )
        file_dims = dims.with_frames(t)
    return RadarCube(file_dims, data.astype(np.complex128))


class CubeVersionError(BadMagicError):
    """Unsupported RPC1 version byte."""


def write_poses(poses: np.ndarray, path: str | Path) -> None:
    """Write an [F, 26, 3] pose trajectory as the CSV sidecar format."""
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 3 or poses.shape[1:] != (N_KEYPOINTS, 3):
        raise ShapeError(f"poses must be [F, 26, 3], got {poses.shape}")
    header = ["frame_index"]
    for k in range(N_KEYPOINTS):
        header += [f"kp{k}_x", f"kp{k}_y", f"kp{k}_z"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for i, pose in enumerate(poses):
            w.writerow([i] + [repr(float(v)) for v in pose.reshape(-1)])


def read_poses(path: str | Path) -> np.ndarray:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if len(header) != 1 + 3 * N_KEYPOINTS:
            raise ShapeError(f"{path}: expected {1 + 3 * N_KEYPOINTS} columns, got {len(header)}")
        rows = [[float(v) for v in row[1:]] for row in r]
    return np.asarray(rows).reshape(len(rows), N_KEYPOINTS, 3)

"""FMCW TDM-MIMO beat-signal synthesizer for moving point scatterers.

Idealized phase model (far field, no range migration, no coupling, TDM
phase errors ignored): for virtual channel (a, e), chirp m, sample n,

    signal = sum_k rcs_k * exp(j*2*pi*( f_b(r_k) * n / f_s
                                       + f_d(v_k) * m * T_chirp
                                       + spacing * (a*u_az + e*u_el) ))

with beat frequency f_b = 2 r B / (c T_chirp), Doppler f_d = 2 v_r f_c / c,
and direction cosines u_az = x/r, u_el = z/r (radar at origin, +y boresight).
Masked cells of the virtual 4x4 array are zero. The simulator exists to
generate verifiable structure, not RF fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .radar import RadarCube, RadarDims
from .rng import Rng
from .skeleton import (
    HETEROSCEDASTIC_RCS,
    N_KEYPOINTS,
    UNIFORM_RCS,
)

C_LIGHT = 299_792_458.0


def default_array_mask() -> np.ndarray:
    """12 populated cells of the 4x4 virtual grid (far 2x2 corner empty)."""
    mask = np.ones((4, 4), dtype=bool)
    mask[2:, 2:] = False
    return mask


@dataclass
class RadarParams:
    """FMCW system parameters; defaults give a 60 GHz, 1.02 GHz-bandwidth radar."""

    f_c: float = 60e9
    B: float = 1.02e9
    T_chirp: float = 17e-6
    f_s: float = 3.8e6
    frame_rate: float = 15.0
    dims: RadarDims = field(default_factory=RadarDims)
    array_mask: np.ndarray = field(default_factory=default_array_mask)
    element_spacing: float = 0.5  # in wavelengths
    n_tx: int = 3

    def __post_init__(self):
        self.array_mask = np.asarray(self.array_mask, dtype=bool)
        if self.array_mask.shape != (self.dims.A, self.dims.E):
            raise ValueError(
                f"array_mask shape {self.array_mask.shape} must be "
                f"{(self.dims.A, self.dims.E)}"
            )
        if self.B <= 0 or self.T_chirp <= 0 or self.f_s <= 0:
            raise ValueError("bandwidth, chirp duration, and ADC rate must be positive")

    @property
    def range_resolution(self) -> float:
        return C_LIGHT / (2 * self.B)

    def beat_frequency(self, r: float) -> float:
        return 2.0 * r * self.B / (C_LIGHT * self.T_chirp)

    def doppler_frequency(self, v_radial: float) -> float:
        return 2.0 * v_radial * self.f_c / C_LIGHT

    @property
    def max_doppler(self) -> float:
        """TDM-unambiguous Doppler limit 1/(2 T_chirp n_tx)."""
        return 1.0 / (2.0 * self.T_chirp * self.n_tx)

    def range_bin(self, r: float) -> int:
        """Range FFT bin of a scatterer at range r (nearest bin)."""
        return round(self.beat_frequency(r) * self.dims.pad_S / self.f_s) % self.dims.pad_S

    def doppler_bin(self, v_radial: float) -> int:
        """Doppler FFT bin for a radial velocity (nearest bin, wrapped)."""
        f_d = self.doppler_frequency(v_radial)
        return round(f_d * self.T_chirp * self.dims.pad_C) % self.dims.pad_C


@dataclass
class Scatterer:
    position: np.ndarray  # 3-vector, meters
    velocity: np.ndarray  # 3-vector, m/s
    rcs: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("scatterer state must be finite")
        if self.rcs < 0:
            raise ValueError("rcs must be non-negative")


@dataclass
class MotionScript:
    """Skeleton trajectory with per-keypoint reflectivity weights."""

    trajectory: np.ndarray  # [F, 26, 3]
    rcs_weights: np.ndarray = field(default_factory=lambda: UNIFORM_RCS.copy())
    noise_std: float = 0.0

    def __post_init__(self):
        self.trajectory = np.asarray(self.trajectory, dtype=float)
        self.rcs_weights = np.asarray(self.rcs_weights, dtype=float)
        if self.trajectory.ndim != 3 or self.trajectory.shape[1:] != (N_KEYPOINTS, 3):
            raise ValueError(f"trajectory must be [F, 26, 3], got {self.trajectory.shape}")
        if self.rcs_weights.shape != (N_KEYPOINTS,):
            raise ValueError("rcs_weights must have one entry per keypoint")
        if len(self.trajectory) < 1:
            raise ValueError("empty script")


def rcs_profile(name: str) -> np.ndarray:
    if name == "uniform":
        return UNIFORM_RCS.copy()
    if name == "heteroscedastic":
        return HETEROSCEDASTIC_RCS.copy()
    raise ValueError(f"unknown rcs profile {name!r}")


def _frame_signal(params: RadarParams, scatterers: list[Scatterer]) -> np.ndarray:
    d = params.dims
    out = np.zeros((d.A, d.E, d.S, d.C), dtype=np.complex128)
    n = np.arange(d.S)
    m = np.arange(d.C)
    a = np.arange(d.A)
    e = np.arange(d.E)
    for sc in scatterers:
        if sc.rcs == 0.0:
            continue
        r = float(np.linalg.norm(sc.position))
        if sc.position[1] <= 0:
            raise ValueError(
                f"scatterer at {sc.position} is behind the radar (+y boresight)"
            )
        v_radial = float(sc.velocity @ sc.position) / r
        f_b = params.beat_frequency(r)
        f_d = params.doppler_frequency(v_radial)
        u_az = sc.position[0] / r
        u_el = sc.position[2] / r
        ph_n = np.exp(2j * np.pi * f_b * n / params.f_s)
        ph_m = np.exp(2j * np.pi * f_d * m * params.T_chirp)
        ph_a = np.exp(2j * np.pi * params.element_spacing * u_az * a)
        ph_e = np.exp(2j * np.pi * params.element_spacing * u_el * e)
        out += sc.rcs * (
            ph_a[:, None, None, None]
            * ph_e[None, :, None, None]
            * ph_n[None, None, :, None]
            * ph_m[None, None, None, :]
        )
    out[~params.array_mask] = 0.0
    return out


def synthesize(
    params: RadarParams,
    frames: list[list[Scatterer]],
    rng: Rng,
    noise_std: float = 0.0,
) -> RadarCube:
    """Synthesize a cube of len(frames) frames; dims follow params.dims.

    noise_std is the per-component standard deviation of the complex AWGN
    added to every sample (populated and masked cells alike stay masked).
    """
    dims = params.dims.with_frames(len(frames))
    data = np.empty(dims.shape, dtype=np.complex128)
    for t, scatterers in enumerate(frames):
        data[t] = _frame_signal(params, list(scatterers))
    if noise_std > 0.0:
        shape = data.shape
        noise = noise_std * (rng.normal(shape) + 1j * rng.normal(shape))
        noise[:, ~params.array_mask] = 0.0
        data = data + noise
    return RadarCube(dims, data)


def script_scatterers(script: MotionScript, frame_rate: float) -> list[list[Scatterer]]:
    """One scatterer per keypoint per frame; velocity by forward differences."""
    traj = script.trajectory
    n_frames = len(traj)
    vel = np.zeros_like(traj)
    if n_frames > 1:
        vel[:-1] = (traj[1:] - traj[:-1]) * frame_rate
        vel[-1] = vel[-2]
    out = []
    for t in range(n_frames):
        out.append(
            [
                Scatterer(traj[t, k], vel[t, k], float(script.rcs_weights[k]))
                for k in range(N_KEYPOINTS)
                if script.rcs_weights[k] > 0.0
            ]
        )
    return out


def check_ambiguity(params: RadarParams, frames: list[list[Scatterer]]) -> None:
    """Reject scripts whose Doppler would alias under TDM multiplexing."""
    limit = params.max_doppler
    for t, scatterers in enumerate(frames):
        for sc in scatterers:
            r = float(np.linalg.norm(sc.position))
            v_radial = abs(float(sc.velocity @ sc.position) / r)
            if params.doppler_frequency(v_radial) >= limit:
                raise ValueError(
                    f"frame {t}: radial velocity {v_radial:.2f} m/s exceeds the "
                    f"TDM-unambiguous Doppler limit {limit:.0f} Hz"
                )


def script_to_dataset(
    script: MotionScript,
    params: RadarParams,
    rng: Rng,
) -> list[tuple[RadarCube, np.ndarray]]:
    """Sliding windows of T frames (stride 1), labeled with the last frame's pose."""
    t_win = params.dims.T
    n_frames = len(script.trajectory)
    if n_frames < t_win:
        raise ValueError(f"script has {n_frames} frames, need at least {t_win}")
    all_frames = script_scatterers(script, params.frame_rate)
    check_ambiguity(params, all_frames)
    full_cube = synthesize(params, all_frames, rng, noise_std=script.noise_std)
    windows = []
    for start in range(n_frames - t_win + 1):
        window = RadarCube(params.dims, full_cube.data[start : start + t_win])
        label = script.trajectory[start + t_win - 1].copy()
        windows.append((window, label))
    return windows

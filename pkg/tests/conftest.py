"""Shared test helpers: independent oracles and small dataset builders."""

import numpy as np

from radpose.radar import RadarDims
from radpose.rng import Rng
from radpose.simulate import MotionScript, RadarParams, script_scatterers, synthesize
from radpose.skeleton import HETEROSCEDASTIC_RCS, make_trajectory
from radpose.train import WindowedDataset, recording_from_cube


def naive_dft(x: np.ndarray) -> np.ndarray:
    """Brute-force O(N^2) DFT, unnormalized forward convention."""
    x = np.asarray(x, dtype=np.complex128)
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def small_dataset(
    n_subjects: int = 4,
    n_frames: int = 80,
    seed: int = 42,
    dims: RadarDims | None = None,
    activity: int = 8,
    rcs=None,
    noise_std: float = 0.02,
) -> tuple[WindowedDataset, RadarParams]:
    """Synthetic multi-subject dataset at mini desk scale."""
    dims = dims or RadarDims(T=4, A=4, E=4, S=16, C=16)
    params = RadarParams(dims=dims)
    root = Rng(seed)
    recs = []
    for subj in range(n_subjects):
        traj = make_trajectory(activity, n_frames, params.frame_rate,
                               root.derive(subj), depth=3.0)
        weights = HETEROSCEDASTIC_RCS if rcs is None else rcs
        script = MotionScript(traj, weights, noise_std=noise_std)
        frames = script_scatterers(script, params.frame_rate)
        cube = synthesize(params, frames, root.derive(subj, 1), noise_std=noise_std)
        recs.append(recording_from_cube(cube, traj, subj, activity))
    return WindowedDataset(dims, recs), params

import numpy as np
import pytest

from radpose.radar import RadarDims, preprocess
from radpose.rng import Rng
from radpose.simulate import (
    MotionScript,
    RadarParams,
    Scatterer,
    check_ambiguity,
    default_array_mask,
    rcs_profile,
    script_scatterers,
    script_to_dataset,
    synthesize,
)
from radpose.skeleton import UNIFORM_RCS, make_trajectory


def _range_doppler_power(params, cube, center):
    pt = preprocess(cube, center=center)
    t = cube.dims.T
    power = pt[:t] ** 2 + pt[t:] ** 2  # [T, C, A, E, S]
    return power.sum(axis=(0, 2, 3))  # [Doppler, range]


def test_zero_scatterers_zero_cube():
    params = RadarParams()
    cube = synthesize(params, [[]], Rng(0), noise_std=0.0)
    assert np.all(cube.data == 0)


def test_deterministic_given_seed():
    params = RadarParams(dims=RadarDims(T=1, S=16, C=16))
    sc = [Scatterer([0.3, 2.0, 0.4], [0.1, 0.5, 0.0], 1.0)]
    a = synthesize(params, [sc], Rng(3), noise_std=0.1)
    b = synthesize(params, [sc], Rng(3), noise_std=0.1)
    assert np.array_equal(a.data, b.data)


def test_rcs_linearity():
    params = RadarParams(dims=RadarDims(T=1, S=16, C=16))
    sc1 = [Scatterer([0.0, 2.0, 0.0], [0.0, 1.0, 0.0], 1.0)]
    sc2 = [Scatterer([0.0, 2.0, 0.0], [0.0, 1.0, 0.0], 2.0)]
    a = synthesize(params, [sc1], Rng(0))
    b = synthesize(params, [sc2], Rng(0))
    assert np.allclose(b.data, 2.0 * a.data, atol=1e-12)


def test_behind_radar_rejected():
    params = RadarParams()
    with pytest.raises(ValueError):
        synthesize(params, [[Scatterer([0.0, -1.0, 0.0], [0, 0, 0], 1.0)]], Rng(0))


def test_static_scatterer_range_bin_oracle():
    params = RadarParams()  # Table defaults: 0.147 m range resolution
    assert abs(params.range_resolution - 0.147) < 5e-4
    sc = Scatterer([0.0, 1.47, 0.0], [0.0, 0.0, 0.0], 1.0)
    cube = synthesize(params, [[sc]], Rng(1))
    prof = _range_doppler_power(params, cube, center=False)
    dop, rng_bin = np.unravel_index(np.argmax(prof), prof.shape)
    assert dop == 0
    assert rng_bin == 10  # round(1.47 / 0.147)
    assert rng_bin == params.range_bin(1.47)


def test_moving_scatterer_doppler_bin_oracle():
    params = RadarParams()
    # radial velocity 1 m/s: doppler 2 * 1 * 60e9 / c = 400 Hz
    assert abs(params.doppler_frequency(1.0) - 400.0) < 0.5
    sc = Scatterer([0.0, 2.0, 0.0], [0.0, 1.0, 0.0], 1.0)
    cube = synthesize(params, [[sc]], Rng(2))
    prof = _range_doppler_power(params, cube, center=True)
    dop, _ = np.unravel_index(np.argmax(prof), prof.shape)
    expected = round(400.0 * params.dims.C * params.T_chirp) % params.dims.pad_C
    assert expected == 1
    assert abs(int(dop) - expected) <= 1


def test_peak_bins_for_random_draws():
    params = RadarParams()
    r = Rng(50)
    for _ in range(20):
        rng_m = 0.8 + 6.0 * r.uniform()
        v = (1.5 + 10.0 * r.uniform()) * (1 if r.uniform() < 0.5 else -1)
        sc = Scatterer([0.0, rng_m, 0.0], [0.0, v, 0.0], 1.0)
        cube = synthesize(params, [[sc]], r.derive(1))
        prof = _range_doppler_power(params, cube, center=True)
        dop, rng_bin = np.unravel_index(np.argmax(prof), prof.shape)
        want_r = params.range_bin(rng_m)
        want_d = params.doppler_bin(v)
        wrap = params.dims.pad_C
        d_err = min(abs(dop - want_d), wrap - abs(dop - want_d))
        assert abs(int(rng_bin) - want_r) <= 1
        assert d_err <= 1


def test_masked_cells_are_zero():
    params = RadarParams(dims=RadarDims(T=1, S=8, C=8))
    sc = [Scatterer([0.5, 2.0, 0.3], [0, 0, 0], 1.0)]
    cube = synthesize(params, [sc], Rng(0), noise_std=0.5)
    mask = default_array_mask()
    assert np.all(cube.data[:, ~mask] == 0)
    assert np.any(cube.data[:, mask] != 0)


def test_window_count_and_labels():
    dims = RadarDims(T=8, S=8, C=8)
    params = RadarParams(dims=dims)
    traj = make_trajectory(8, 10, params.frame_rate, Rng(4))
    script = MotionScript(traj, UNIFORM_RCS, noise_std=0.0)
    windows = script_to_dataset(script, params, Rng(5))
    assert len(windows) == 3  # 10 frames, window 8, stride 1
    for w, (cube, label) in enumerate(windows):
        assert cube.dims.T == 8
        assert np.array_equal(label, traj[w + 7])


def test_constant_pose_script_has_identical_labels():
    dims = RadarDims(T=4, S=8, C=8)
    params = RadarParams(dims=dims)
    pose = make_trajectory(8, 1, params.frame_rate, Rng(6))[0]
    traj = np.repeat(pose[None], 6, axis=0)
    script = MotionScript(traj, UNIFORM_RCS, noise_std=0.0)
    windows = script_to_dataset(script, params, Rng(7))
    labels = np.stack([label for _, label in windows])
    assert np.all(labels == labels[0])


def test_empty_script_rejected():
    with pytest.raises(ValueError):
        MotionScript(np.zeros((0, 26, 3)), UNIFORM_RCS)


def test_too_short_script_rejected():
    dims = RadarDims(T=8, S=8, C=8)
    params = RadarParams(dims=dims)
    traj = make_trajectory(0, 4, params.frame_rate, Rng(8))
    with pytest.raises(ValueError):
        script_to_dataset(MotionScript(traj, UNIFORM_RCS), params, Rng(9))


def test_ambiguity_guard_rejects_fast_scripts():
    params = RadarParams()
    # 30 m/s radial exceeds the TDM-unambiguous limit (about 24.5 m/s)
    frames = [[Scatterer([0.0, 2.0, 0.0], [0.0, 30.0, 0.0], 1.0)]]
    with pytest.raises(ValueError):
        check_ambiguity(params, frames)
    frames_ok = [[Scatterer([0.0, 2.0, 0.0], [0.0, 3.0, 0.0], 1.0)]]
    check_ambiguity(params, frames_ok)


def test_script_velocities_from_differences():
    dims = RadarDims(T=2, S=8, C=8)
    params = RadarParams(dims=dims)
    traj = np.zeros((3, 26, 3))
    traj[:, :, 1] = 2.0
    traj[1, 0, 1] = 2.1  # hips move 0.1 m in one frame
    script = MotionScript(traj, UNIFORM_RCS)
    frames = script_scatterers(script, params.frame_rate)
    hips0 = frames[0][0]
    assert abs(hips0.velocity[1] - 0.1 * params.frame_rate) < 1e-12


def test_rcs_profiles():
    assert np.all(rcs_profile("uniform") == 1.0)
    het = rcs_profile("heteroscedastic")
    assert het[16] < het[0]  # hands weaker than hips
    with pytest.raises(ValueError):
        rcs_profile("nope")

import numpy as np
import pytest

from radpose import autodiff as ad
from radpose.errors import ShapeError
from radpose.model import (
    ModelConfig,
    PoseModel,
    decode,
    forward,
    predictive_moments,
    sample_latent,
)
from radpose.radar import RadarDims
from radpose.rng import Rng

DIMS = RadarDims(T=2, A=2, E=2, S=8, C=8)  # feature_dim 256


def _small_config(**kw):
    base = dict(d_lat=6, n_samples=16, feature_dim=16, d_k=8, reducer_patch=32,
                reducer_patch_out=4, decoder_hidden=10)
    base.update(kw)
    return ModelConfig(**base)


def _model(seed=0, **kw):
    return PoseModel(_small_config(**kw), DIMS, rng=Rng(seed))


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(n_samples=1)
    with pytest.raises(ValueError):
        ModelConfig(d_lat=0)
    with pytest.raises(ValueError):
        ModelConfig(latent_family="cauchy")
    with pytest.raises(ValueError):
        ModelConfig(likelihood="poisson")


def test_zero_input_zero_heads_gives_bias():
    m = _model()
    m.params["head.mu.w"].value = np.zeros_like(m.params["head.mu.w"].value)
    bias = Rng(9).normal(m.config.d_lat)
    m.params["head.mu.b"].value = bias.copy()
    ld = m.encode(np.zeros((2 * DIMS.T, DIMS.feature_dim)))
    assert np.allclose(ld.mu.value, bias, atol=1e-12)
    ld2 = m.encode(np.zeros((2 * DIMS.T, DIMS.feature_dim)))
    assert np.array_equal(ld.mu.value, ld2.mu.value)


def test_single_frame_window_is_finite():
    dims = RadarDims(T=1, A=2, E=2, S=8, C=8)
    cfg = _small_config()
    m = PoseModel(cfg, dims, rng=Rng(1))
    x = Rng(2).normal((2, dims.feature_dim))
    ld = m.encode(x)
    assert np.all(np.isfinite(ld.mu.value))
    assert np.all(np.isfinite(ld.log_var.value))
    assert ld.mu.value.shape == (cfg.d_lat,)


def test_encode_shape_mismatch():
    m = _model()
    with pytest.raises(ShapeError):
        m.encode(np.zeros((3, 7)))


def test_time_slice_permutation_keeps_output_finite():
    m = _model()
    x = Rng(3).normal((2 * DIMS.T, DIMS.feature_dim))
    swapped = x.copy()
    swapped[[0, 1]] = swapped[[1, 0]]
    for inp in (x, swapped):
        ld = m.encode(inp)
        assert ld.mu.value.shape == (m.config.d_lat,)
        assert np.all(np.isfinite(ld.mu.value))


def test_attention_projection_gradients():
    m = _model(seed=4)
    x = Rng(5).normal((2 * DIMS.T, DIMS.feature_dim))
    y = Rng(6).normal(m.config.d_lat)

    def loss_for(names):
        def build(vs):
            for name, v in zip(names, vs):
                m.params._params[name] = v
            ld = m.encode(x)
            return ad.vsum(ad.square(ad.sub(ld.mu, ad.lift(y))))
        return build

    names = ["attn.wq", "attn.wk", "attn.wv"]
    originals = [m.params[n].value.copy() for n in names]
    worst = ad.gradcheck(loss_for(names), originals, h=1e-5, rtol=1e-4)
    assert worst < 1e-4


def test_sample_latent_alpha_zero_returns_mu():
    m = _model()
    m.params["alpha_raw"].value = np.array(-60.0)  # softplus -> ~0 (underflows)
    x = Rng(7).normal((2 * DIMS.T, DIMS.feature_dim))
    ld = m.encode(x)
    z = sample_latent(ld, 8, rng=Rng(8))
    assert np.allclose(z.value, np.tile(ld.mu.value, (8, 1)), atol=1e-20)


def test_laplace_median_and_quartile_samples():
    from radpose.model import LatentDistribution

    mu = ad.lift(np.zeros(4))
    raw_b = ad.lift(np.array([0.5413248546129181] * 4))  # softplus -> 1.0
    ld = LatentDistribution("laplace", mu, raw_b=raw_b)
    z_median = sample_latent(ld, 1, noise=np.full((1, 4), 0.5))
    assert np.allclose(z_median.value, 0.0, atol=1e-12)
    z_75 = sample_latent(ld, 1, noise=np.full((1, 4), 0.75))
    assert np.allclose(z_75.value, np.log(2.0), atol=1e-6)


def test_decode_row_independence_and_bias():
    m = _model(seed=9)
    z_row = Rng(10).normal(m.config.d_lat)
    z1 = decode(z_row[None, :], m.params, m.config)
    z500 = decode(np.tile(z_row, (500, 1)), m.params, m.config)
    assert z500.value.shape == (500, 78)
    assert np.allclose(z500.value, z1.value, atol=1e-12)

    for name in ("dec.w1", "dec.w2"):
        m.params[name].value = np.zeros_like(m.params[name].value)
    bias = Rng(11).normal(78)
    m.params["dec.b2"].value = bias.copy()
    out = decode(np.zeros((5, m.config.d_lat)), m.params, m.config)
    assert np.allclose(out.value, np.tile(bias, (5, 1)), atol=1e-12)


def test_decode_shape_check():
    m = _model()
    with pytest.raises(ShapeError):
        decode(np.zeros((4, m.config.d_lat + 1)), m.params, m.config)


def test_moments_two_sample_example():
    samples = np.zeros((2, 3))
    samples[1] = 2.0
    pred = predictive_moments(samples, "gauss_diag")
    assert np.allclose(pred.mean, 1.0)
    assert np.allclose(pred.var, 2.0)  # unbiased


def test_moments_need_two_samples():
    with pytest.raises(ValueError):
        predictive_moments(np.zeros((1, 3)), "gauss_diag")


def test_moments_degenerate_floor_and_ridge():
    samples = np.ones((8, 4))
    pred = predictive_moments(samples, "gauss_diag", var_floor=1e-6)
    assert np.allclose(pred.var, 1e-6)
    pred_cov = predictive_moments(samples, "gauss_cov", cov_ridge=1e-4)
    assert np.allclose(pred_cov.cov, 1e-4 * np.eye(4), atol=1e-15)
    assert pred_cov.chol is not None
    pred_lap = predictive_moments(samples, "laplace", var_floor=1e-6)
    assert np.allclose(pred_lap.scale_b, 1e-6)


def test_moments_mean_is_column_mean_and_order_invariant():
    r = Rng(12)
    samples = r.normal((50, 6))
    pred = predictive_moments(samples, "gauss_diag")
    assert np.allclose(pred.mean, samples.mean(axis=0), atol=1e-12)
    perm = Rng(13).permutation(50)
    pred2 = predictive_moments(samples[perm], "gauss_diag")
    assert np.allclose(pred.mean, pred2.mean, atol=1e-12)
    assert np.allclose(pred.var, pred2.var, atol=1e-12)


def test_moments_monte_carlo_variance():
    n = 1_000_000
    draws = Rng(14).normal((n, 1))
    pred = predictive_moments(draws, "gauss_diag")
    s = np.sqrt(2.0 / n)  # sampling std of the variance estimate
    assert abs(float(pred.var[0]) - 1.0) < 3 * s


def test_laplace_scale_estimator_converges():
    n = 1_000_000
    u = Rng(15).uniform((n, 1))
    b_true = 0.7
    draws = -b_true * np.sign(u - 0.5) * np.log(1 - 2 * np.abs(u - 0.5))
    pred = predictive_moments(draws, "laplace")
    assert abs(float(pred.scale_b[0]) - b_true) / b_true < 0.02


def test_cov_cholesky_always_succeeds():
    r = Rng(16)
    for _ in range(1000):
        samples = r.normal((5, 78)) * (0.01 + r.uniform())
        pred = predictive_moments(samples, "gauss_cov", cov_ridge=1e-4)
        assert pred.chol is not None


def test_paper_scale_decode_shape():
    cfg = ModelConfig(d_lat=256, n_samples=500, feature_dim=16, d_k=8,
                      reducer_patch=32, reducer_patch_out=4, decoder_hidden=32)
    dims = RadarDims(T=2, A=2, E=2, S=8, C=8)
    m = PoseModel(cfg, dims, rng=Rng(17))
    z = Rng(18).normal((500, 256))
    out = decode(z, m.params, cfg)
    assert out.value.shape == (500, 78)
    pred = predictive_moments(out.value, "gauss_diag")
    assert pred.mean.reshape(26, 3).shape == (26, 3)


def test_forward_uses_frozen_noise():
    m = _model(seed=19)
    x = Rng(20).normal((2 * DIMS.T, DIMS.feature_dim))
    noise = Rng(21).normal((m.config.n_samples, m.config.d_lat))
    _, pred1 = forward(m, x, noise=noise)
    _, pred2 = forward(m, x, noise=noise)
    assert np.array_equal(pred1.mean.value, pred2.mean.value)

"""Variational radar-to-pose network at desk scale.

Encoder: a shared two-layer reducer (patchwise linear + relu, then a dense
linear) maps each of the 2T real/imag time slices of the preprocessed
tensor to a feature vector, self-attention with a residual connection and
an output linear mixes the slices, and two linear heads emit the latent
mean and dispersion. Latents are sampled with the reparameterization trick
(Gaussian: mu + alpha * eps * sigma; Laplace: inverse-CDF transform of
uniform draws). A two-layer decoder maps all latent samples to 78 pose
coordinates in one batched pass; predictive moments are estimated from the
sample matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ShapeError
from .optim import ParamStore
from .radar import RadarDims
from .rng import Rng
from .skeleton import N_KEYPOINTS

POSE_DIM = 3 * N_KEYPOINTS  # 78

LATENT_FAMILIES = ("gauss", "laplace")
LIKELIHOODS = ("gauss_diag", "gauss_cov", "laplace")


@dataclass
class ModelConfig:
    d_lat: int = 256
    n_samples: int = 500
    latent_family: str = "gauss"
    likelihood: str = "gauss_diag"
    feature_dim: int = 128
    d_k: int = 64
    reducer_patch: int = 64
    reducer_patch_out: int = 8
    decoder_hidden: int = 128
    decoder_relu: bool = True
    var_floor: float = 1e-6
    cov_ridge: float = 1e-4
    alpha_init: float = 0.1

    def __post_init__(self):
        if self.d_lat < 1:
            raise ValueError("d_lat must be >= 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2 (moments need two samples)")
        if self.latent_family not in LATENT_FAMILIES:
            raise ValueError(f"latent_family must be one of {LATENT_FAMILIES}")
        if self.likelihood not in LIKELIHOODS:
            raise ValueError(f"likelihood must be one of {LIKELIHOODS}")


@dataclass
class LatentDistribution:
    """Per-dimension latent location and dispersion (fields are graph nodes)."""

    family: str
    mu: Var
    log_var: Var | None = None   # Gaussian family
    raw_b: Var | None = None     # Laplace family (pre-softplus)
    alpha: Var | None = None     # Gaussian global sampling scale

    @property
    def sigma(self) -> Var:
        return ad.exp(ad.mul(self.log_var, ad.lift(0.5)))

    @property
    def b(self) -> Var:
        # softplus keeps the scale positive; tiny floor guards f64 underflow
        return ad.maximum_scalar(ad.softplus(self.raw_b), 1e-12)

    @property
    def mu_array(self) -> np.ndarray:
        return self.mu.value

    @property
    def sigma_array(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var.value)

    @property
    def b_array(self) -> np.ndarray:
        return np.maximum(np.logaddexp(0.0, self.raw_b.value), 1e-12)

    @property
    def alpha_value(self) -> float:
        return float(self.alpha.value) if self.alpha is not None else 0.0


@dataclass
class PredictiveDistribution:
    """Pose mean plus dispersion derived from decoder samples."""

    kind: str
    mean: np.ndarray | Var
    var: np.ndarray | Var | None = None
    cov: np.ndarray | Var | None = None
    chol: np.ndarray | None = None
    scale_b: np.ndarray | Var | None = None
    samples: np.ndarray | Var | None = field(default=None, repr=False)

    def marginal_std(self) -> np.ndarray:
        """Per-dimension standard deviation (cov models use the diagonal)."""
        if self.kind == "laplace":
            raise ValueError("Laplace dispersion has no Gaussian marginal std")
        if self.var is not None:
            return np.sqrt(np.asarray(self.var, dtype=float))
        return np.sqrt(np.diag(np.asarray(self.cov)))

    def marginal_variances(self) -> np.ndarray:
        """Per-dimension variance; Laplace uses Var = 2 b^2."""
        if self.kind == "laplace":
            return 2.0 * np.asarray(self.scale_b, dtype=float) ** 2
        if self.var is not None:
            return np.asarray(self.var, dtype=float)
        return np.diag(np.asarray(self.cov)).astype(float)


def _init_scaled(rng: Rng, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> np.ndarray:
    return gain * math.sqrt(2.0 / fan_in) * rng.normal(shape)


class PoseModel:
    """Parameterized network; all state lives in the ParamStore."""

    def __init__(self, config: ModelConfig, dims: RadarDims, store: ParamStore | None = None,
                 rng: Rng | None = None):
        self.config = config
        self.dims = dims
        self.d_in = dims.feature_dim
        if self.d_in % config.reducer_patch != 0:
            raise ShapeError(
                f"flattened slice size {self.d_in} not divisible by "
                f"reducer_patch {config.reducer_patch}"
            )
        self.n_patches = self.d_in // config.reducer_patch
        self.n_slices = 2 * dims.T
        if store is None:
            if rng is None:
                raise ValueError("need an rng to initialize parameters")
            store = self._init_params(rng)
        self.params = store

    def _init_params(self, rng: Rng) -> ParamStore:
        cfg = self.config
        store = ParamStore()
        patch, p_out, f, dk = cfg.reducer_patch, cfg.reducer_patch_out, cfg.feature_dim, cfg.d_k
        store.add("reducer.w1", _init_scaled(rng, (patch, p_out), patch))
        store.add("reducer.b1", np.zeros(p_out))
        store.add("reducer.w2", _init_scaled(rng, (self.n_patches * p_out, f), self.n_patches * p_out))
        store.add("reducer.b2", np.zeros(f))
        store.add("attn.wq", _init_scaled(rng, (f, dk), f, gain=0.7))
        store.add("attn.wk", _init_scaled(rng, (f, dk), f, gain=0.7))
        store.add("attn.wv", _init_scaled(rng, (f, f), f, gain=0.7))
        store.add("attn.wo", _init_scaled(rng, (f, f), f, gain=0.7))
        store.add("attn.bo", np.zeros(f))
        fused = self.n_slices * f
        # near-zero heads: initial latents stay small, so the first
        # predictions sit at the decoder output bias instead of a large
        # random function of the input
        store.add("head.mu.w", 0.05 * _init_scaled(rng, (fused, cfg.d_lat), fused))
        store.add("head.mu.b", np.zeros(cfg.d_lat))
        store.add("head.disp.w", 0.05 * _init_scaled(rng, (fused, cfg.d_lat), fused))
        store.add("head.disp.b", -2.0 * np.ones(cfg.d_lat))
        store.add("dec.w1", _init_scaled(rng, (cfg.d_lat, cfg.decoder_hidden), cfg.d_lat))
        store.add("dec.b1", np.zeros(cfg.decoder_hidden))
        store.add("dec.w2", _init_scaled(rng, (cfg.decoder_hidden, POSE_DIM), cfg.decoder_hidden))
        store.add("dec.b2", np.zeros(POSE_DIM))
        if cfg.latent_family == "gauss":
            raw = math.log(math.expm1(cfg.alpha_init))
            store.add("alpha_raw", np.array(raw))
        return store

    def encode(self, pt: np.ndarray | Var) -> LatentDistribution:
        """Map a preprocessed window to the latent distribution parameters.

        The window is standardized to unit RMS before the reducer; raw FFT
        outputs carry the unnormalized transform gain, which would swamp
        the linear stack.
        """
        cfg, p = self.config, self.params
        x = pt if isinstance(pt, Var) else ad.lift(np.asarray(pt, dtype=np.float64))
        if x.value.size != self.n_slices * self.d_in:
            raise ShapeError(
                f"encoder input has {x.value.size} values, expected "
                f"{self.n_slices}x{self.d_in}"
            )
        rms = float(np.sqrt(np.mean(x.value * x.value)))
        if rms > 0:
            x = ad.mul(x, ad.lift(1.0 / rms))
        x = ad.reshape(x, (self.n_slices * self.n_patches, cfg.reducer_patch))
        h = ad.relu(ad.add(ad.matmul(x, p["reducer.w1"]), p["reducer.b1"]))
        h = ad.reshape(h, (self.n_slices, self.n_patches * cfg.reducer_patch_out))
        feats = ad.add(ad.matmul(h, p["reducer.w2"]), p["reducer.b2"])  # [2T, f]

        q = ad.matmul(feats, p["attn.wq"])
        k = ad.matmul(feats, p["attn.wk"])
        v = ad.matmul(feats, p["attn.wv"])
        scores = ad.mul(ad.matmul(q, ad.transpose(k)), ad.lift(1.0 / math.sqrt(cfg.d_k)))
        attn = ad.matmul(ad.softmax(scores), v)
        mixed = ad.add(feats, attn)  # residual
        mixed = ad.add(ad.matmul(mixed, p["attn.wo"]), p["attn.bo"])

        fused = ad.reshape(mixed, (1, self.n_slices * cfg.feature_dim))
        mu = ad.reshape(ad.add(ad.matmul(fused, p["head.mu.w"]), p["head.mu.b"]), (cfg.d_lat,))
        disp = ad.reshape(ad.add(ad.matmul(fused, p["head.disp.w"]), p["head.disp.b"]), (cfg.d_lat,))
        if cfg.latent_family == "gauss":
            alpha = ad.softplus(p["alpha_raw"])
            return LatentDistribution("gauss", mu, log_var=disp, alpha=alpha)
        return LatentDistribution("laplace", mu, raw_b=disp)


def sample_latent(
    ld: LatentDistribution,
    n: int,
    rng: Rng | None = None,
    noise: np.ndarray | None = None,
) -> Var:
    """Draw n latent vectors, differentiable via reparameterization.

    ``noise`` fixes the raw draws (standard-normal eps for Gaussian,
    uniforms for Laplace); gradient checks rely on this to freeze the
    sampling path.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    d = ld.mu.value.shape[0]
    if ld.family == "gauss":
        eps = rng.normal((n, d)) if noise is None else np.asarray(noise, dtype=float)
        scaled = ad.mul(ld.alpha, ad.mul(ad.lift(eps), ld.sigma))
        return ad.add(ld.mu, scaled)
    u = rng.uniform((n, d)) if noise is None else np.asarray(noise, dtype=float)
    # inverse CDF of Laplace(0, 1): -sgn(u - 1/2) * ln(1 - 2|u - 1/2|)
    spread = -np.sign(u - 0.5) * np.log(np.maximum(1.0 - 2.0 * np.abs(u - 0.5), 1e-300))
    return ad.add(ld.mu, ad.mul(ld.b, ad.lift(spread)))


def decode(z: Var | np.ndarray, params: ParamStore, config: ModelConfig) -> Var:
    """Row-wise two-layer decoder: [n, d_lat] -> [n, 78] in one batched pass."""
    z = z if isinstance(z, Var) else ad.lift(np.asarray(z, dtype=np.float64))
    if z.value.ndim != 2 or z.value.shape[1] != config.d_lat:
        raise ShapeError(f"decoder expects [n, {config.d_lat}], got {z.value.shape}")
    h = ad.add(ad.matmul(z, params["dec.w1"]), params["dec.b1"])
    if config.decoder_relu:
        h = ad.relu(h)
    return ad.add(ad.matmul(h, params["dec.w2"]), params["dec.b2"])


def predictive_moments(
    samples: Var | np.ndarray,
    likelihood: str,
    var_floor: float = 1e-6,
    cov_ridge: float = 1e-4,
) -> PredictiveDistribution:
    """Mean and dispersion of the decoder sample matrix [n, d].

    gauss_diag: per-column unbiased variance, floored. gauss_cov: sample
    covariance plus ridge * I (Cholesky factor cached on the numpy path).
    laplace: per-column mean absolute deviation (Laplace MLE), floored.
    Differentiable when given a graph node; plain arrays come back as plain
    arrays.
    """
    if likelihood not in LIKELIHOODS:
        raise ValueError(f"unknown likelihood {likelihood!r}")
    is_var = isinstance(samples, Var)
    s = samples if is_var else ad.lift(np.asarray(samples, dtype=np.float64))
    if s.value.ndim != 2:
        raise ShapeError(f"samples must be a matrix, got shape {s.value.shape}")
    n, d = s.value.shape
    if n < 2:
        raise ValueError("need at least two samples to estimate moments")

    mean = ad.vmean(s, axis=0)
    dev = ad.sub(s, mean)
    if likelihood == "gauss_diag":
        var = ad.mul(ad.vmean(ad.square(dev), axis=0), ad.lift(n / (n - 1.0)))
        var = ad.maximum_scalar(var, var_floor)
        if is_var:
            return PredictiveDistribution("gauss_diag", mean, var=var, samples=s)
        return PredictiveDistribution(
            "gauss_diag", mean.value, var=var.value, samples=s.value
        )
    if likelihood == "gauss_cov":
        cov = ad.mul(ad.matmul(ad.transpose(dev), dev), ad.lift(1.0 / (n - 1.0)))
        cov = ad.add(cov, ad.lift(cov_ridge * np.eye(d)))
        if is_var:
            return PredictiveDistribution("gauss_cov", mean, cov=cov, samples=s)
        chol = np.linalg.cholesky(cov.value)
        return PredictiveDistribution(
            "gauss_cov", mean.value, cov=cov.value, chol=chol, samples=s.value
        )
    b = ad.maximum_scalar(ad.vmean(ad.absolute(dev), axis=0), var_floor)
    if is_var:
        return PredictiveDistribution("laplace", mean, scale_b=b, samples=s)
    return PredictiveDistribution("laplace", mean.value, scale_b=b.value, samples=s.value)


def forward(
    model: PoseModel,
    pt: np.ndarray,
    rng: Rng | None = None,
    noise: np.ndarray | None = None,
    n_samples: int | None = None,
) -> tuple[LatentDistribution, PredictiveDistribution]:
    """Full differentiable pass: encode, sample, decode, moments."""
    cfg = model.config
    n = n_samples or cfg.n_samples
    ld = model.encode(pt)
    z = sample_latent(ld, n, rng=rng, noise=noise)
    samples = decode(z, model.params, cfg)
    pred = predictive_moments(samples, cfg.likelihood, cfg.var_floor, cfg.cov_ridge)
    return ld, pred


def predict(model: PoseModel, pt: np.ndarray, rng: Rng) -> PredictiveDistribution:
    """Inference-path prediction with numpy-valued moments."""
    ld = model.encode(pt)
    z = sample_latent(ld, model.config.n_samples, rng=rng)
    samples = decode(z, model.params, model.config)
    return predictive_moments(
        samples.value, model.config.likelihood, model.config.var_floor, model.config.cov_ridge
    )

"""Training objectives: latent KL divergences and the three likelihood NLLs.

All functions accept graph nodes or plain arrays and return a scalar graph
node, so the same code serves training and closed-form unit checks. The
full objective is NLL(variant) + beta * KL(latent family); with fixed
dispersion the Gaussian NLL is an affine function of the squared error and
the Laplace NLL of the absolute error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .model import LatentDistribution, PredictiveDistribution


@dataclass
class LossWeights:
    beta: float = 1e-3   # KL weight
    gamma: float = 1.0   # dispersion-regularizer weight

    def __post_init__(self):
        if not (np.isfinite(self.beta) and np.isfinite(self.gamma)):
            raise ValueError("loss weights must be finite")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    total: Var
    nll: Var
    kl: Var
    residuals: np.ndarray  # per-dimension |y - mu| diagnostics

    @property
    def total_value(self) -> float:
        return float(self.total.value)

    @property
    def nll_value(self) -> float:
        return float(self.nll.value)

    @property
    def kl_value(self) -> float:
        return float(self.kl.value)


def kl_gauss(mu_l, log_var_l) -> Var:
    """KL( N(mu, sigma^2) || N(0, I) ) summed over dimensions."""
    mu_l, log_var_l = ad.lift(mu_l), ad.lift(log_var_l)
    var = ad.exp(log_var_l)
    inner = ad.add(ad.add(ad.lift(1.0), log_var_l), ad.mul(ad.lift(-1.0), ad.add(ad.square(mu_l), var)))
    return ad.mul(ad.vsum(inner), ad.lift(-0.5))


def kl_laplace(mu_l, b_l) -> Var:
    """KL( Laplace(mu, b) || Laplace(0, 1) ): sum of -ln b + |mu| + b e^{-|mu|/b} - 1."""
    mu_l, b_l = ad.lift(mu_l), ad.lift(b_l)
    if np.any(b_l.value <= 0):
        raise ValueError("Laplace scale must be positive")
    abs_mu = ad.absolute(mu_l)
    decay = ad.exp(ad.mul(ad.lift(-1.0), ad.div(abs_mu, b_l)))
    per_dim = ad.add(
        ad.add(ad.mul(ad.lift(-1.0), ad.log(b_l)), abs_mu),
        ad.add(ad.mul(b_l, decay), ad.lift(-1.0)),
    )
    return ad.vsum(per_dim)


def nll_gauss_diag(y, mu, var, gamma: float = 1.0) -> Var:
    """Heteroscedastic diagonal-Gaussian NLL: sum r^2/var + gamma * sum log var."""
    y, mu, var = ad.lift(y), ad.lift(mu), ad.lift(var)
    resid = ad.square(ad.sub(y, mu))
    return ad.add(ad.vsum(ad.div(resid, var)), ad.mul(ad.lift(gamma), ad.vsum(ad.log(var))))


def nll_laplace(y, mu, b, gamma: float = 1.0) -> Var:
    """Heteroscedastic Laplace NLL: sum |r|/b + gamma * sum log(2b)."""
    y, mu, b = ad.lift(y), ad.lift(mu), ad.lift(b)
    resid = ad.absolute(ad.sub(y, mu))
    return ad.add(
        ad.vsum(ad.div(resid, b)),
        ad.mul(ad.lift(gamma), ad.vsum(ad.log(ad.mul(ad.lift(2.0), b)))),
    )


def _cov_quad_logdet(resid: Var, cov: Var) -> tuple[Var, Var]:
    """Fused node computing (r^T Sigma^-1 r, log|Sigma|) via Cholesky solves.

    Backward uses the analytic gradients d(logdet)/dSigma = Sigma^-1 and
    d(quad)/dSigma = -Sigma^-1 r r^T Sigma^-1.
    """
    sigma = cov.value
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc
    r = resid.value
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, r))  # Sigma^-1 r
    quad_val = float(r @ alpha)
    logdet_val = 2.0 * float(np.sum(np.log(np.diag(chol))))
    d = sigma.shape[0]
    identity = np.eye(d)
    sigma_inv = np.linalg.solve(chol.T, np.linalg.solve(chol, identity))

    quad = Var(
        np.asarray(quad_val),
        (
            (resid, lambda g: g * 2.0 * alpha),
            (cov, lambda g: g * (-np.outer(alpha, alpha))),
        ),
    )
    logdet = Var(np.asarray(logdet_val), ((cov, lambda g: g * sigma_inv),))
    return quad, logdet


def nll_gauss_cov(y, mu, cov, gamma: float = 1.0) -> Var:
    """Multivariate Gaussian NLL: gamma * log|Sigma| + r^T Sigma^-1 r.

    ``cov`` must be symmetric positive definite (a Cholesky factorization
    is taken internally; a singular matrix raises).
    """
    y, mu, cov = ad.lift(y), ad.lift(mu), ad.lift(cov)
    resid = ad.sub(y, mu)
    quad, logdet = _cov_quad_logdet(resid, cov)
    return ad.add(ad.mul(ad.lift(gamma), logdet), quad)


def total_loss(
    pred: PredictiveDistribution,
    ld: LatentDistribution,
    y: np.ndarray,
    weights: LossWeights,
    variant: str,
) -> LossReport:
    """Full objective for one example: NLL(variant) + beta * KL(latent family)."""
    if variant != pred.kind:
        raise ValueError(f"variant {variant!r} does not match prediction kind {pred.kind!r}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if variant == "gauss_diag":
        nll = nll_gauss_diag(y, pred.mean, pred.var, weights.gamma)
    elif variant == "gauss_cov":
        nll = nll_gauss_cov(y, pred.mean, pred.cov, weights.gamma)
    elif variant == "laplace":
        nll = nll_laplace(y, pred.mean, pred.scale_b, weights.gamma)
    else:
        raise ValueError(f"unknown variant {variant!r}")

    if ld.family == "gauss":
        kl = kl_gauss(ld.mu, ld.log_var)
    else:
        kl = kl_laplace(ld.mu, ld.b)
    total = ad.add(nll, ad.mul(ad.lift(weights.beta), kl))
    mean_value = pred.mean.value if isinstance(pred.mean, Var) else np.asarray(pred.mean)
    return LossReport(total=total, nll=nll, kl=kl, residuals=np.abs(y - mean_value))

"""Pose accuracy metrics and the uncertainty calibration suite.

Covers per-keypoint MPJPE, Procrustes-aligned MPJPE (similarity alignment
with scale), per-keypoint uncertainty (variances summed over x/y/z),
coverage curves from pooled PIT values, expected calibration error (L1,
20 equally spaced levels by default), isotonic recalibration of the
predictive CDF, quantile-integration variances of the recalibrated
distributions, sharpness, and error-uncertainty correlation.

All distances are meters and variances m^2; report emitters convert to
cm / cm^2 for human-readable tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ShapeError
from .model import PredictiveDistribution
from .skeleton import BODY_GROUPS, KEYPOINT_NAMES, N_KEYPOINTS

DEFAULT_LEVELS = np.arange(1, 21) / 20.0  # p_j = j/20
QUANTILE_GRID_SIZE = 1000
_LEVEL_GUARD = 1e-10  # keeps inverse-CDF arguments inside (0, 1)
POSE_FLAT = 3 * N_KEYPOINTS


# ---------------------------------------------------------------------------
# pose accuracy


def mpjpe(preds: np.ndarray, gts: np.ndarray) -> tuple[np.ndarray, float]:
    """Mean per-joint position error: per-keypoint vector and overall mean."""
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape or preds.ndim != 3 or preds.shape[1:] != (N_KEYPOINTS, 3):
        raise ShapeError(f"expected matching [N, 26, 3] arrays, got {preds.shape} vs {gts.shape}")
    if len(preds) == 0:
        raise ValueError("no frames to evaluate")
    dists = np.linalg.norm(preds - gts, axis=2)  # [N, 26]
    per_kp = dists.mean(axis=0)
    return per_kp, float(per_kp.mean())


def procrustes_align(x: np.ndarray, y: np.ndarray) -> np.ndarray | None:
    """Best similarity transform (scale, rotation, translation) of x onto y.

    Returns the aligned copy of x, or None when either joint cloud is
    degenerate (rank < 2), in which case the caller should skip the frame.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cx, cy = x.mean(axis=0), y.mean(axis=0)
    x0, y0 = x - cx, y - cy
    if np.linalg.matrix_rank(x0) < 2 or np.linalg.matrix_rank(y0) < 2:
        return None
    h = x0.T @ y0
    u, s, vt = np.linalg.svd(h)
    d = np.ones(3)
    d[-1] = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag(d) @ u.T
    denom = (x0 * x0).sum()
    scale = float((s * d).sum() / denom)
    return scale * x0 @ rot.T + cy


def p_mpjpe(preds: np.ndarray, gts: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Procrustes-aligned MPJPE; returns (per_keypoint, overall, n_skipped)."""
    preds = np.asarray(preds, dtype=float)
    gts = np.asarray(gts, dtype=float)
    if preds.shape != gts.shape or preds.ndim != 3:
        raise ShapeError(f"expected matching [N, 26, 3] arrays, got {preds.shape} vs {gts.shape}")
    if len(preds) == 0:
        raise ValueError("no frames to evaluate")
    aligned = []
    kept_gts = []
    skipped = 0
    for x, y in zip(preds, gts):
        ax = procrustes_align(x, y)
        if ax is None:
            skipped += 1
            continue
        aligned.append(ax)
        kept_gts.append(y)
    if not aligned:
        raise ValueError("every frame was degenerate")
    per_kp, overall = mpjpe(np.stack(aligned), np.stack(kept_gts))
    return per_kp, overall, skipped


def joint_uncertainty(pred: PredictiveDistribution) -> np.ndarray:
    """Per-keypoint uncertainty: variances summed over the 3 spatial dims."""
    variances = pred.marginal_variances().reshape(N_KEYPOINTS, 3)
    return variances.sum(axis=1)


# ---------------------------------------------------------------------------
# predictive CDFs / PIT values


def _laplace_cdf(y: np.ndarray, mu: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = (y - mu) / b
    return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))


def _laplace_quantile(p: np.ndarray, mu: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.where(p < 0.5, mu + b * np.log(2.0 * p), mu - b * np.log(2.0 * (1.0 - p)))


def pit_values(pred: PredictiveDistribution, y: np.ndarray) -> np.ndarray:
    """Predicted CDF evaluated at the target, per scalar dimension."""
    y = np.asarray(y, dtype=float).reshape(-1)
    mean = np.asarray(pred.mean, dtype=float).reshape(-1)
    if pred.kind == "laplace":
        return _laplace_cdf(y, mean, np.asarray(pred.scale_b, dtype=float))
    sigma = pred.marginal_std()
    return ndtr((y - mean) / sigma)


def pooled_pit(preds: Sequence[PredictiveDistribution], gts: np.ndarray) -> np.ndarray:
    """PIT values pooled over all frames and output dimensions."""
    gts = np.asarray(gts, dtype=float).reshape(len(preds), -1)
    return np.concatenate([pit_values(p, y) for p, y in zip(preds, gts)])


# ---------------------------------------------------------------------------
# coverage and calibration error


@dataclass
class CoverageCurve:
    levels: np.ndarray
    empirical: np.ndarray

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.empirical = np.asarray(self.empirical, dtype=float)
        if self.levels.shape != self.empirical.shape:
            raise ShapeError("levels and empirical coverage must align")
        if np.any(self.empirical < 0) or np.any(self.empirical > 1):
            raise ValueError("empirical coverage must lie in [0, 1]")
        if np.any(np.diff(self.empirical) < 0):
            raise ValueError("empirical coverage must be non-decreasing")


def coverage_from_pit(pit: np.ndarray, levels: np.ndarray = DEFAULT_LEVELS) -> CoverageCurve:
    levels = np.asarray(levels, dtype=float)
    if np.any(np.diff(levels) < 0) or np.any(levels < 0) or np.any(levels > 1):
        raise ValueError("levels must be sorted within [0, 1]")
    pit = np.sort(np.asarray(pit, dtype=float))
    counts = np.searchsorted(pit, levels, side="right")
    return CoverageCurve(levels, counts / len(pit))


def coverage(
    preds: Sequence[PredictiveDistribution],
    gts: np.ndarray,
    levels: np.ndarray = DEFAULT_LEVELS,
) -> CoverageCurve:
    """Empirical coverage of predicted quantiles at each level, pooled."""
    return coverage_from_pit(pooled_pit(preds, gts), levels)


def ece(curve: CoverageCurve) -> float:
    """Expected calibration error: mean absolute gap to the diagonal (L1)."""
    if curve.levels.size == 0:
        raise ValueError("empty coverage curve")
    return float(np.mean(np.abs(curve.empirical - curve.levels)))


# ---------------------------------------------------------------------------
# isotonic recalibration


def pav(values: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Pool-adjacent-violators: least-squares monotone fit to a sequence."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=float)
    # blocks of (mean, weight, count), merged while out of order
    means: list[float] = []
    wsum: list[float] = []
    count: list[int] = []
    for v, w in zip(values, weights):
        means.append(float(v))
        wsum.append(float(w))
        count.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wsum.pop(), count.pop()
            m1, w1, c1 = means.pop(), wsum.pop(), count.pop()
            w = w1 + w2
            means.append((m1 * w1 + m2 * w2) / w)
            wsum.append(w)
            count.append(c1 + c2)
    out = np.empty(n)
    i = 0
    for m, c in zip(means, count):
        out[i : i + c] = m
        i += c
    return out


@dataclass
class CalibrationMap:
    """Monotone map from predicted CDF level to empirical coverage."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.breakpoints.shape != self.values.shape:
            raise ShapeError("breakpoints and values must align")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("fitted values must be non-decreasing")
        if self.breakpoints[0] != 0.0 or self.breakpoints[-1] != 1.0:
            raise ValueError("breakpoints must span [0, 1]")

    @classmethod
    def identity(cls) -> "CalibrationMap":
        return cls(np.array([0.0, 1.0]), np.array([0.0, 1.0]))

    def apply(self, p):
        """R(p): piecewise-linear interpolation between breakpoints."""
        return np.interp(p, self.breakpoints, self.values)

    def inverse(self, q):
        """Generalized inverse R^-1(q) = inf{p : R(p) >= q}."""
        q = np.asarray(q, dtype=float)
        scalar = q.ndim == 0
        q = np.atleast_1d(np.clip(q, 0.0, 1.0))
        idx = np.searchsorted(self.values, q, side="left")
        out = np.empty_like(q)
        lo = idx == 0
        out[lo] = self.breakpoints[0]
        hi = ~lo
        i = np.clip(idx[hi], 1, len(self.values) - 1)
        v0, v1 = self.values[i - 1], self.values[i]
        x0, x1 = self.breakpoints[i - 1], self.breakpoints[i]
        frac = (q[hi] - v0) / (v1 - v0)
        out[hi] = x0 + frac * (x1 - x0)
        return float(out[0]) if scalar else out


def fit_isotonic(u_values: np.ndarray, levels: np.ndarray = DEFAULT_LEVELS) -> CalibrationMap:
    """Fit the recalibration map on held-out PIT values.

    Computes the empirical coverage at each level, runs pool-adjacent
    violators, and appends the (0,0) and (1,1) endpoints.
    """
    u_values = np.asarray(u_values, dtype=float)
    if u_values.size < 10:
        raise ValueError(f"need at least 10 calibration points, got {u_values.size}")
    curve = coverage_from_pit(u_values, levels)
    fitted = np.clip(pav(curve.empirical), 0.0, 1.0)
    xs = [0.0]
    vs = [0.0]
    for x, v in zip(curve.levels, fitted):
        if x <= xs[-1]:
            continue
        xs.append(float(x))
        vs.append(float(v))
    if xs[-1] < 1.0:
        xs.append(1.0)
        vs.append(1.0)
    else:
        vs[-1] = 1.0
    return CalibrationMap(np.array(xs), np.array(vs))


# ---------------------------------------------------------------------------
# recalibrated quantiles and variances


def _raw_quantile(pred: PredictiveDistribution, dim: int, level) -> np.ndarray:
    level = np.clip(np.asarray(level, dtype=float), _LEVEL_GUARD, 1.0 - _LEVEL_GUARD)
    mu = float(np.asarray(pred.mean).reshape(-1)[dim])
    if pred.kind == "laplace":
        b = float(np.asarray(pred.scale_b)[dim])
        return _laplace_quantile(level, mu, b)
    sigma = float(pred.marginal_std()[dim])
    return mu + sigma * ndtri(level)


def recalibrated_quantile(
    pred: PredictiveDistribution,
    cal_map: CalibrationMap,
    k: int,
    d: int,
    p: float,
) -> float:
    """Quantile of the recalibrated distribution F_cal = R o F, in meters."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    level = cal_map.inverse(p)
    return float(_raw_quantile(pred, 3 * k + d, level))


def calibrated_variance(
    pred: PredictiveDistribution,
    cal_map: CalibrationMap,
    k: int,
    grid_size: int = QUANTILE_GRID_SIZE,
) -> float:
    """Variance of the recalibrated distribution for keypoint k, summed over
    the three spatial dims (midpoint rule over the quantile function)."""
    grid = (np.arange(grid_size) + 0.5) / grid_size
    levels = cal_map.inverse(grid)
    total = 0.0
    for d in range(3):
        q = _raw_quantile(pred, 3 * k + d, levels)
        total += float(np.mean((q - q.mean()) ** 2))
    return total


def calibrated_variances_all(
    preds: Sequence[PredictiveDistribution],
    cal_map: CalibrationMap,
    grid_size: int = QUANTILE_GRID_SIZE,
) -> np.ndarray:
    """Per-dimension calibrated variances [N, 78] via the same integral.

    The raw quantile is affine in (mu, sigma) for both families, so the
    integral reduces to sigma^2 (or b^2) times the grid variance of the
    unit quantile; this is exactly the midpoint-rule value.
    """
    grid = (np.arange(grid_size) + 0.5) / grid_size
    levels = np.clip(cal_map.inverse(grid), _LEVEL_GUARD, 1.0 - _LEVEL_GUARD)
    z_gauss = ndtri(levels)
    factor_gauss = float(np.mean((z_gauss - z_gauss.mean()) ** 2))
    z_lap = _laplace_quantile(levels, 0.0, 1.0)
    factor_lap = float(np.mean((z_lap - z_lap.mean()) ** 2))
    out = np.empty((len(preds), POSE_FLAT))
    for i, pred in enumerate(preds):
        if pred.kind == "laplace":
            out[i] = np.asarray(pred.scale_b, dtype=float) ** 2 * factor_lap
        else:
            out[i] = pred.marginal_std() ** 2 * factor_gauss
    return out


def calibrated_variances_per_dim(
    preds: Sequence[PredictiveDistribution],
    maps: Sequence[CalibrationMap],
    grid_size: int = QUANTILE_GRID_SIZE,
) -> np.ndarray:
    """Per-dimension calibrated variances with one map per output dimension."""
    grid = (np.arange(grid_size) + 0.5) / grid_size
    f_gauss = np.empty(len(maps))
    f_lap = np.empty(len(maps))
    for d, m in enumerate(maps):
        levels = np.clip(m.inverse(grid), _LEVEL_GUARD, 1.0 - _LEVEL_GUARD)
        z = ndtri(levels)
        f_gauss[d] = np.mean((z - z.mean()) ** 2)
        zl = _laplace_quantile(levels, 0.0, 1.0)
        f_lap[d] = np.mean((zl - zl.mean()) ** 2)
    out = np.empty((len(preds), len(maps)))
    for i, pred in enumerate(preds):
        if pred.kind == "laplace":
            out[i] = np.asarray(pred.scale_b, dtype=float) ** 2 * f_lap
        else:
            out[i] = pred.marginal_std() ** 2 * f_gauss
    return out


def sharpness(variances: np.ndarray) -> float:
    """Mean predicted variance over all datapoints and dimensions."""
    variances = np.asarray(variances, dtype=float)
    if variances.size == 0:
        raise ValueError("no variances given")
    return float(variances.mean())


def error_uncertainty_correlation(errors: np.ndarray, u: np.ndarray) -> float:
    """Pearson correlation between errors and predicted uncertainties."""
    errors = np.asarray(errors, dtype=float).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if errors.shape != u.shape:
        raise ShapeError("errors and uncertainties must align")
    if errors.size < 3:
        raise ValueError("need at least 3 pairs")
    if np.ptp(errors) == 0 or np.ptp(u) == 0:
        raise ValueError("constant series have no correlation")
    return float(np.corrcoef(errors, u)[0, 1])


# ---------------------------------------------------------------------------
# aggregate report


def group_means(per_keypoint: np.ndarray) -> dict[str, float]:
    return {
        name: float(np.mean(per_keypoint[list(idx)])) for name, idx in BODY_GROUPS.items()
    }


def build_report(
    preds: Sequence[PredictiveDistribution],
    gts: np.ndarray,
    cal_map: CalibrationMap | None = None,
    levels: np.ndarray = DEFAULT_LEVELS,
) -> dict:
    """Everything the report tables need, as one JSON-able dict (SI units)."""
    gts = np.asarray(gts, dtype=float)
    n = len(preds)
    means = np.stack([np.asarray(p.mean, dtype=float) for p in preds]).reshape(n, N_KEYPOINTS, 3)
    gts3 = gts.reshape(n, N_KEYPOINTS, 3)
    per_kp_mpjpe, overall_mpjpe = mpjpe(means, gts3)
    per_kp_pmpjpe, overall_pmpjpe, skipped = p_mpjpe(means, gts3)
    u = np.stack([joint_uncertainty(p) for p in preds])  # [N, 26]
    u_mean = u.mean(axis=0)

    pit_mat = np.stack(
        [pit_values(p, y) for p, y in zip(preds, gts.reshape(n, -1))]
    )
    curve_uncal = coverage_from_pit(pit_mat.reshape(-1), levels)
    ece_uncal = ece(curve_uncal)
    raw_vars = np.stack([p.marginal_variances() for p in preds])
    sharp_uncal = sharpness(raw_vars)

    if cal_map is None:
        cal_map = CalibrationMap.identity()
    if isinstance(cal_map, (list, tuple)):
        maps = list(cal_map)
        pit_cal = np.stack(
            [maps[d].apply(pit_mat[:, d]) for d in range(pit_mat.shape[1])], axis=1
        ).reshape(-1)
        cal_vars = calibrated_variances_per_dim(preds, maps)
    else:
        pit_cal = np.asarray(cal_map.apply(pit_mat)).reshape(-1)
        cal_vars = calibrated_variances_all(preds, cal_map)
    curve_cal = coverage_from_pit(pit_cal, levels)
    ece_cal = ece(curve_cal)
    sharp_cal = sharpness(cal_vars)
    u_cal_mean = cal_vars.reshape(n, N_KEYPOINTS, 3).sum(axis=2).mean(axis=0)

    per_frame_err = np.linalg.norm(means - gts3, axis=2)  # [N, 26]
    pearson = error_uncertainty_correlation(per_frame_err.reshape(-1), u.reshape(-1))
    pearson_kp = error_uncertainty_correlation(per_kp_mpjpe, u_mean)

    return {
        "schema": 1,
        "frames": n,
        "skipped_procrustes_frames": skipped,
        "mpjpe_overall_m": overall_mpjpe,
        "p_mpjpe_overall_m": overall_pmpjpe,
        "ece_uncalibrated": ece_uncal,
        "ece_calibrated": ece_cal,
        "sharpness_uncalibrated_m2": sharp_uncal,
        "sharpness_calibrated_m2": sharp_cal,
        "pearson_r_per_joint_frame": pearson,
        "pearson_r_per_keypoint": pearson_kp,
        "mpjpe_groups_m": group_means(per_kp_mpjpe),
        "p_mpjpe_groups_m": group_means(per_kp_pmpjpe),
        "uncertainty_groups_m2": group_means(u_mean),
        "keypoints": [
            {
                "index": k,
                "name": KEYPOINT_NAMES[k],
                "mpjpe_m": float(per_kp_mpjpe[k]),
                "p_mpjpe_m": float(per_kp_pmpjpe[k]),
                "uncertainty_m2": float(u_mean[k]),
                "calibrated_uncertainty_m2": float(u_cal_mean[k]),
            }
            for k in range(N_KEYPOINTS)
        ],
        "coverage": {
            "levels": [float(v) for v in levels],
            "uncalibrated": [float(v) for v in curve_uncal.empirical],
            "calibrated": [float(v) for v in curve_cal.empirical],
        },
    }

"""Shrinkage correction and calibration.

Regressions with random predictors under-disperse their predictions.
A simulation with matched station-level correlation measures that
attenuation as a ratio of seasonal-mean standard deviations; the
measured factor then rescales predicted regional means, and station
deviations from the corrected mean are pulled toward it with the
classic (1 - (n-2)/||X||^2) shrinkage. A final affine calibration maps
combined predictions onto the observation scale over a prior window.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .seeding import derive_rng

N_HOLDOUT = 4  # predicted points per station, treated as pseudo-seasons


@dataclass
class ShrinkageReport:
    shrinkage_factor: float
    n_replicates: int
    sd_observed: float
    sd_predicted: float
    signal_noise_ratio: float  # sigma_R^2 implied by factor = s/(1+s)
    seed: int
    n_stations: int
    n_points: int
    target_r: float
    mean_sample_corr: float = np.nan
    mean_fit_slope: float = np.nan

    def __post_init__(self):
        if not 0.0 < self.shrinkage_factor <= 1.0:
            raise ValueError("shrinkage_factor must lie in (0, 1]")
        if self.sd_observed <= 0.0 or self.sd_predicted <= 0.0:
            raise ValueError("sd fields must be positive")
        ratio = self.sd_predicted / self.sd_observed
        if abs(ratio - self.shrinkage_factor) > 1e-9 * max(1.0, ratio):
            raise ValueError("shrinkage_factor must equal sd_predicted/sd_observed")


def bootstrap_shrinkage(n_stations: int, n_points: int = 100,
                        target_r: float = 1.0 / 3.0, n_reps: int = 2000,
                        seed: int = 0) -> ShrinkageReport:
    """Measure prediction shrinkage on a matched Gaussian toy system.

    Per replicate and station: a latent standard-normal signal X1 of
    ``n_points`` values; predictor X2 = X1 + noise and response
    Y = X1 + independent noise, with noise variance 1/target_r - 1 so
    corr(Y, X2) = target_r (variance 2 at the default 1/3). Y is
    regressed on X2 over all but the last four points, the last four are
    predicted, and those four indices are averaged across stations as
    pseudo-seasons. The factor is the replicate-averaged sd of predicted
    seasonal means over the sd of observed ones.
    """
    if n_reps < 100:
        raise ValueError("n_reps must be >= 100")
    if n_stations < 1:
        raise ValueError("n_stations must be >= 1")
    if n_points <= N_HOLDOUT + 2:
        raise ValueError(f"n_points must exceed {N_HOLDOUT + 2}")
    if not 0.0 < target_r < 1.0:
        raise ValueError("target_r must lie in (0, 1)")
    noise_var = 1.0 / target_r - 1.0
    rng = derive_rng(seed, "bootstrap-shrinkage")
    n_fit = n_points - N_HOLDOUT

    sd_obs_sum = sd_pred_sum = corr_sum = slope_sum = 0.0
    done = 0
    block = max(1, min(20_000, int(2e7 // (n_stations * n_points)) or 1))
    while done < n_reps:
        b = min(block, n_reps - done)
        shape = (b, n_stations, n_points)
        x1 = rng.standard_normal(shape)
        x2 = x1 + np.sqrt(noise_var) * rng.standard_normal(shape)
        y = x1 + np.sqrt(noise_var) * rng.standard_normal(shape)

        xf, yf = x2[..., :n_fit], y[..., :n_fit]
        xm = xf.mean(axis=2, keepdims=True)
        ym = yf.mean(axis=2, keepdims=True)
        sxx = np.sum((xf - xm) ** 2, axis=2)
        sxy = np.sum((xf - xm) * (yf - ym), axis=2)
        slope = sxy / sxx
        intercept = ym[..., 0] - slope * xm[..., 0]

        pred = intercept[..., None] + slope[..., None] * x2[..., n_fit:]
        obs = y[..., n_fit:]
        pred_season = pred.mean(axis=1)  # (b, N_HOLDOUT) means across stations
        obs_season = obs.mean(axis=1)
        sd_pred_sum += float(np.sum(pred_season.std(axis=1, ddof=1)))
        sd_obs_sum += float(np.sum(obs_season.std(axis=1, ddof=1)))

        full_corr = _rowwise_corr(x2.reshape(b * n_stations, n_points),
                                  y.reshape(b * n_stations, n_points))
        corr_sum += float(np.sum(full_corr)) / n_stations
        slope_sum += float(np.sum(slope)) / n_stations
        done += b

    sd_obs = sd_obs_sum / n_reps
    sd_pred = sd_pred_sum / n_reps
    factor = min(sd_pred / sd_obs, 1.0)
    return ShrinkageReport(
        shrinkage_factor=factor, n_replicates=n_reps,
        sd_observed=sd_obs, sd_predicted=sd_obs * factor,
        signal_noise_ratio=factor / (1.0 - factor) if factor < 1.0 else np.inf,
        seed=seed, n_stations=n_stations, n_points=n_points,
        target_r=target_r,
        mean_sample_corr=corr_sum / n_reps,
        mean_fit_slope=slope_sum / n_reps)


def _rowwise_corr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    num = np.sum(da * db, axis=1)
    den = np.sqrt(np.sum(da * da, axis=1) * np.sum(db * db, axis=1))
    return num / den


def apply_bias_correction(raw_means, factor: float):
    """Invert the measured shrinkage: divide predicted means by the factor."""
    if factor <= 0.0:
        raise ValueError("shrinkage factor must be positive")
    return np.asarray(raw_means, dtype=float) / factor


def james_stein(X, mu_bc, n: int | None = None, positive_part: bool = False):
    """(1 - (n-2)/||X||^2) X + mu_bc across the station dimension.

    X holds station deviations from the corrected regional mean mu_bc.
    Requires n >= 3; smaller vectors pass through unshrunk with a
    warning. A zero deviation vector returns mu_bc. The plain factor may
    go negative when ||X||^2 < n - 2; that sign behavior is kept unless
    ``positive_part`` clamps it at zero.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0] if n is None else n
    if n < 3:
        warnings.warn("James-Stein needs dimension >= 3; returning inputs unshrunk",
                      stacklevel=2)
        return X + mu_bc
    norm2 = float(X @ X) if X.ndim == 1 else float(np.sum(X * X))
    if norm2 == 0.0:
        return np.zeros_like(X) + mu_bc
    factor = 1.0 - (n - 2) / norm2
    if positive_part:
        factor = max(factor, 0.0)
    return factor * X + mu_bc


def stein_adjust(pred: np.ndarray, shrink_factor: float,
                 positive_part: bool = False) -> np.ndarray:
    """Bias-correct and shrink a (stations, seasons) prediction matrix.

    The measured shrinkage is inverted on the predictions (restoring
    them to the anomaly scale, so the per-season regional mean is the
    corrected mean), then station deviations from the corrected mean are
    pulled toward it with the James-Stein factor. The rescaling is what
    puts ||X||^2 on the scale where the factor's signal-to-noise
    approximation holds. NaN columns pass through untouched; fewer than
    3 stations disables the deviation shrinkage (the bias correction
    still applies).
    """
    pred = np.asarray(pred, dtype=float)
    if pred.ndim != 2:
        raise ValueError("pred must be (stations, seasons)")
    n = pred.shape[0]
    corrected = apply_bias_correction(pred, shrink_factor)
    out = np.full_like(pred, np.nan)
    for t in range(pred.shape[1]):
        col = corrected[:, t]
        if not np.all(np.isfinite(col)):
            continue
        mu_bc = float(col.mean())
        if n < 3:
            out[:, t] = col
            continue
        dev = col - mu_bc
        out[:, t] = james_stein(dev, mu_bc, n, positive_part=positive_part)
    return out


@dataclass
class CalibrationResult:
    slope: float
    intercept: float
    degenerate: bool = False

    def apply(self, predictions):
        return self.slope * np.asarray(predictions, dtype=float) + self.intercept


def calibrate(predictions, observations,
              direction: str = "obs_on_pred") -> CalibrationResult:
    """Affine map from combined predictions to the observation scale.

    Fitted over a window preceding prediction. The default regresses
    observations on predictions; ``direction="pred_on_obs"`` fits the
    reverse regression and inverts it. Zero-variance predictions
    degenerate to climatology (slope 0, intercept = window mean).
    """
    p = np.asarray(predictions, dtype=float).ravel()
    o = np.asarray(observations, dtype=float).ravel()
    if p.shape != o.shape:
        raise ValueError("predictions and observations must align")
    ok = np.isfinite(p) & np.isfinite(o)
    if ok.sum() < 3:
        raise ValueError("need at least 3 paired seasons to calibrate")
    p, o = p[ok], o[ok]
    vp = float(np.var(p))
    vo = float(np.var(o))
    if direction not in ("obs_on_pred", "pred_on_obs"):
        raise ValueError("unknown calibration direction")
    if vp <= 1e-24 or (direction == "pred_on_obs" and vo <= 1e-24):
        return CalibrationResult(slope=0.0, intercept=float(o.mean()), degenerate=True)
    cov = float(np.mean((p - p.mean()) * (o - o.mean())))
    if direction == "obs_on_pred":
        slope = cov / vp
        intercept = float(o.mean() - slope * p.mean())
    else:
        b = cov / vo  # pred = b * obs + a, inverted
        if abs(b) < 1e-24:
            return CalibrationResult(slope=0.0, intercept=float(o.mean()), degenerate=True)
        slope = 1.0 / b
        intercept = float(o.mean() - slope * p.mean())
    return CalibrationResult(slope=slope, intercept=intercept)

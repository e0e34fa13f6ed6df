import numpy as np
import pytest

from chaoscast.shrinkage import (
    CalibrationResult,
    apply_bias_correction,
    bootstrap_shrinkage,
    calibrate,
    james_stein,
    stein_adjust,
)


def test_bootstrap_population_correlation_and_slope():
    # corr(Y, X2) = cov/sqrt(var*var) = 1/(1+2) and slope(Y~X2) = 1/3
    rep = bootstrap_shrinkage(n_stations=5, n_reps=10_000, seed=3)
    assert rep.mean_sample_corr == pytest.approx(1.0 / 3.0, abs=0.02)
    assert rep.mean_fit_slope == pytest.approx(1.0 / 3.0, abs=0.02)


def test_bootstrap_factor_agrees_with_larger_oracle():
    rep = bootstrap_shrinkage(n_stations=4, n_reps=2000, seed=5)
    oracle = bootstrap_shrinkage(n_stations=4, n_reps=20_000, seed=6)
    assert rep.shrinkage_factor == pytest.approx(oracle.shrinkage_factor, rel=0.02)


def test_bootstrap_report_invariants():
    rep = bootstrap_shrinkage(n_stations=3, n_reps=500, seed=7)
    assert 0.0 < rep.shrinkage_factor <= 1.0
    assert rep.sd_predicted / rep.sd_observed == pytest.approx(rep.shrinkage_factor)
    assert rep.signal_noise_ratio == pytest.approx(
        rep.shrinkage_factor / (1.0 - rep.shrinkage_factor))
    with pytest.raises(ValueError):
        bootstrap_shrinkage(n_stations=3, n_reps=50, seed=0)


def test_bias_correction_identity_and_inverse():
    assert np.allclose(apply_bias_correction([0.3, -0.2], 1.0), [0.3, -0.2])
    assert apply_bias_correction(np.array([0.2]), 0.5)[0] == pytest.approx(0.4)
    with pytest.raises(ValueError):
        apply_bias_correction([1.0], 0.0)


def test_bias_correction_round_trip_recovers_sd():
    # shrink a signal by the measured factor, correct, compare sd
    rng = np.random.default_rng(8)
    rep = bootstrap_shrinkage(n_stations=5, n_reps=2000, seed=9)
    signal = rng.standard_normal(5000)
    shrunk = signal * rep.shrinkage_factor
    restored = apply_bias_correction(shrunk, rep.shrinkage_factor)
    assert restored.std() == pytest.approx(signal.std(), rel=1e-12)


def test_james_stein_hand_case():
    X = np.ones(5)
    out = james_stein(X, 2.0)
    assert np.allclose(out, 0.4 * X + 2.0)


def test_james_stein_exact_collapse_to_mean():
    # ||X||^2 = n - 2 makes the factor exactly zero
    n = 6
    X = np.zeros(n)
    X[0] = np.sqrt(n - 2)
    out = james_stein(X, 1.5)
    assert np.allclose(out, 1.5)


def test_james_stein_zero_vector_and_small_n():
    assert np.allclose(james_stein(np.zeros(4), 0.7), 0.7)
    with pytest.warns(UserWarning):
        out = james_stein(np.array([1.0, -1.0]), 0.5)
    assert np.allclose(out, np.array([1.5, -0.5]))


def test_james_stein_negative_factor_documented_not_clamped():
    n = 10
    X = np.full(n, 0.1)  # ||X||^2 = 0.1 < n - 2, factor = 1 - 8/0.1 = -79
    out = james_stein(X, 0.0)
    factor = 1.0 - (n - 2) / float(X @ X)
    assert factor < 0.0
    assert np.allclose(out, factor * X)
    clamped = james_stein(X, 0.0, positive_part=True)
    assert np.allclose(clamped, 0.0)


def test_james_stein_never_inflates_deviation_for_factor_in_unit_range():
    rng = np.random.default_rng(10)
    for _ in range(50):
        X = rng.standard_normal(8) * rng.uniform(0.5, 3.0)
        out = james_stein(X, 0.0)
        factor = 1.0 - 6.0 / float(X @ X)
        if 0.0 <= factor <= 1.0:
            assert np.linalg.norm(out) <= np.linalg.norm(X) + 1e-12


def test_james_stein_dominates_raw_estimator():
    # classic risk dominance for a dim-10 Gaussian mean of moderate norm
    rng = np.random.default_rng(11)
    dim, reps = 10, 10_000
    theta = rng.standard_normal(dim)
    theta *= 2.0 / np.linalg.norm(theta)
    Z = theta + rng.standard_normal((reps, dim))
    norm2 = np.sum(Z * Z, axis=1)
    factor = 1.0 - (dim - 2) / norm2
    js = factor[:, None] * Z
    raw_risk = np.mean(np.sum((Z - theta) ** 2, axis=1))
    js_risk = np.mean(np.sum((js - theta) ** 2, axis=1))
    assert js_risk < raw_risk


def test_stein_adjust_matrix_shape_and_nan_columns():
    pred = np.array([[1.0, np.nan], [2.0, 1.0], [3.0, 2.0]])
    out = stein_adjust(pred, shrink_factor=0.5)
    assert out.shape == pred.shape
    assert np.all(np.isnan(out[:, 1]))
    corrected = pred[:, 0] / 0.5  # scale restored before taking deviations
    mu = corrected.mean()
    want = james_stein(corrected - mu, mu, 3)
    assert np.allclose(out[:, 0], want)


def test_stein_adjust_regional_mean_matches_corrected_mean():
    # the per-season mean of the adjusted matrix is the bias-corrected
    # regional mean: deviations are centered so JS moves nothing net
    rng = np.random.default_rng(21)
    pred = rng.standard_normal((5, 7)) * 0.4
    out = stein_adjust(pred, shrink_factor=0.35)
    want = pred.mean(axis=0) / 0.35
    assert np.allclose(out.mean(axis=0), want)


def test_calibrate_identity_and_scaling():
    rng = np.random.default_rng(12)
    obs = rng.standard_normal(20)
    fit = calibrate(obs, obs)
    assert fit.slope == pytest.approx(1.0)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)

    fit2 = calibrate(0.5 * obs, obs)
    assert fit2.slope == pytest.approx(2.0)
    assert fit2.intercept == pytest.approx(0.0, abs=1e-12)


def test_calibrate_matches_closed_form():
    rng = np.random.default_rng(13)
    pred = rng.standard_normal(40)
    obs = 1.7 * pred - 0.4 + 0.3 * rng.standard_normal(40)
    fit = calibrate(pred, obs)
    vp = np.var(pred)
    cov = np.mean((pred - pred.mean()) * (obs - obs.mean()))
    assert fit.slope == pytest.approx(cov / vp, rel=1e-12)
    assert fit.intercept == pytest.approx(obs.mean() - fit.slope * pred.mean(), rel=1e-9)


def test_calibrate_degenerate_predictions_fall_back_to_climatology():
    obs = np.array([1.0, 2.0, 3.0, 4.0])
    fit = calibrate(np.zeros(4), obs)
    assert fit.degenerate
    assert fit.slope == 0.0
    assert fit.intercept == pytest.approx(obs.mean())


def test_calibrate_idempotent():
    rng = np.random.default_rng(14)
    pred = rng.standard_normal(30)
    obs = 0.6 * pred + 0.2 + 0.1 * rng.standard_normal(30)
    first = calibrate(pred, obs)
    calibrated = first.apply(pred)
    second = calibrate(calibrated, obs)
    assert second.slope == pytest.approx(1.0, abs=1e-8)
    assert second.intercept == pytest.approx(0.0, abs=1e-8)


def test_calibrate_reverse_direction_inverts():
    rng = np.random.default_rng(15)
    obs = rng.standard_normal(50)
    pred = 0.5 * obs + 0.1 * rng.standard_normal(50)
    fit = calibrate(pred, obs, direction="pred_on_obs")
    b = np.mean((pred - pred.mean()) * (obs - obs.mean())) / np.var(obs)
    assert fit.slope == pytest.approx(1.0 / b, rel=1e-9)
    with pytest.raises(ValueError):
        calibrate(pred, obs, direction="sideways")


def test_calibration_result_apply():
    fit = CalibrationResult(slope=2.0, intercept=-1.0)
    assert np.allclose(fit.apply([0.0, 1.0]), [-1.0, 1.0])

import itertools

import numpy as np
import pytest

from chaoscast.subset import best_subsets, mallows_cp, ols_fit, select_model


def exhaustive_best(X, y, max_size):
    """Oracle: enumerate every subset, refit from the raw columns."""
    n, p = X.shape
    yc = y - y.mean()
    best = {}
    for k in range(1, max_size + 1):
        for subset in itertools.combinations(range(p), k):
            Xc = X[:, list(subset)] - X[:, list(subset)].mean(axis=0)
            beta, *_ = np.linalg.lstsq(Xc, yc, rcond=None)
            resid = yc - Xc @ beta
            rss = float(resid @ resid)
            if k not in best or rss < best[k][0]:
                best[k] = (rss, subset)
    return best


def test_ols_exact_proportional_fit():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 1))
    fit = ols_fit(x, 2.0 * x[:, 0])
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-10)
    assert fit.intercept == pytest.approx(0.0, abs=1e-10)
    assert fit.rss == pytest.approx(0.0, abs=1e-18)


def test_ols_orthogonal_columns_give_univariate_projections():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 3)))
    Q = Q - Q.mean(axis=0)  # re-centering keeps columns nearly orthogonal
    Q, _ = np.linalg.qr(Q)
    y = Q @ np.array([1.5, -2.0, 0.7]) + 0.01 * rng.standard_normal(40)
    fit = ols_fit(Q, y)
    yc = y - y.mean()
    for j in range(3):
        uni = float(Q[:, j] @ yc / (Q[:, j] @ Q[:, j]))
        assert fit.coefficients[j] == pytest.approx(uni, abs=1e-8)


def test_ols_matches_normal_equations_oracle():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 3))
    y = X @ np.array([1.0, -0.5, 2.0]) + rng.standard_normal(20)
    fit = ols_fit(X, y)
    A = np.column_stack([np.ones(20), X])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    assert fit.intercept == pytest.approx(beta[0], rel=1e-8, abs=1e-10)
    assert np.allclose(fit.coefficients, beta[1:], rtol=1e-8, atol=1e-10)
    resid = y - A @ beta
    assert fit.rss == pytest.approx(float(resid @ resid), rel=1e-8)


def test_ols_drops_dependent_columns_with_report():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(25)
    X = np.column_stack([x, 2.0 * x, rng.standard_normal(25)])
    fit = ols_fit(X, x + 1.0)
    assert fit.dropped == (1,)
    assert fit.coefficients[1] == 0.0
    assert fit.rss == pytest.approx(0.0, abs=1e-18)


def test_ols_constant_response_and_validation():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((10, 2))
    fit = ols_fit(X, np.full(10, 3.0))
    assert np.allclose(fit.coefficients, 0.0, atol=1e-12)
    assert fit.intercept == pytest.approx(3.0)
    with pytest.raises(ValueError):
        ols_fit(np.empty((0, 2)), np.empty(0))
    with pytest.raises(ValueError):
        ols_fit(X[:2], np.ones(2))  # rows < columns + 1


def test_ols_residuals_orthogonal_to_columns():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((50, 6))
    y = rng.standard_normal(50)
    fit = ols_fit(X, y)
    resid = y - (fit.intercept + X @ fit.coefficients)
    bound = 1e-8 * np.linalg.norm(X) * np.linalg.norm(y)
    assert np.all(np.abs(X.T @ resid) <= bound)


def test_mallows_cp_identities():
    # full model: rss = sigma2 * (n - p_full) gives Cp = p_full
    assert mallows_cp(2.0 * (30 - 5), 2.0, 30, 5) == pytest.approx(5.0)
    assert mallows_cp(0.7 * (20 - 3), 0.7, 20, 3) == pytest.approx(3.0)
    # hand computation on a 10-row toy: 4.5/1.5 - 10 + 2*2 = -3
    assert mallows_cp(4.5, 1.5, 10, 2) == pytest.approx(-3.0)
    with pytest.raises(ValueError):
        mallows_cp(1.0, 0.0, 10, 2)


@pytest.mark.parametrize("p,n_instances", [(4, 8), (8, 6), (12, 4)])
def test_best_subsets_equals_exhaustive(p, n_instances):
    rng = np.random.default_rng(100 + p)
    for _ in range(n_instances):
        n = 40
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[rng.choice(p, size=max(1, p // 3), replace=False)] = rng.standard_normal(max(1, p // 3))
        y = X @ beta + rng.standard_normal(n)
        got = best_subsets(X, y, max_size=p)
        want = exhaustive_best(X, y, p)
        for k in range(1, p + 1):
            assert got[k].columns == want[k][1], f"size {k} subsets differ"
            assert got[k].rss == pytest.approx(want[k][0], rel=1e-8, abs=1e-10)


def test_rss_monotone_under_nesting():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((60, 10))
    y = rng.standard_normal(60)
    per_size = best_subsets(X, y)
    scale = float(y @ y)
    sizes = sorted(per_size)
    for a, b in zip(sizes, sizes[1:]):
        assert per_size[b].rss <= per_size[a].rss + 1e-9 * scale


def test_best_subsets_excludes_dependent_columns():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(40)
    X = np.column_stack([x, rng.standard_normal(40), x * 1.0])
    y = x + 0.1 * rng.standard_normal(40)
    per_size = best_subsets(X, y, max_size=2)
    assert per_size[1].dropped == (2,)
    assert 2 not in per_size[1].columns


def test_select_model_single_column():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((20, 1))
    y = 0.5 * x[:, 0] + 0.1 * rng.standard_normal(20)
    model = select_model(x, y)
    assert model.columns == (0,)
    assert np.isfinite(model.cp)


def test_select_model_prefers_small_models_on_noise():
    rng = np.random.default_rng(9)
    full_wins = small_wins = 0
    for _ in range(200):
        X = rng.standard_normal((40, 8))
        y = rng.standard_normal(40)
        model = select_model(X, y)
        full_wins += model.size == 8
        small_wins += model.size <= 2
    assert small_wins > 5 * max(full_wins, 1)
    assert full_wins < 40


def test_select_model_recovers_planted_columns():
    # both informative columns must appear in the chosen subset; the
    # chance a pure-noise column sneaks in alongside them is scale-free
    # under Cp, so exact-set equality is not the contract
    rng = np.random.default_rng(10)
    hits = 0
    for _ in range(100):
        X = rng.standard_normal((60, 8))
        y = 2.0 * X[:, 1] - 1.5 * X[:, 5] + 0.05 * rng.standard_normal(60)
        model = select_model(X, y)
        hits += {1, 5} <= set(model.columns)
    assert hits >= 90


def test_prediction_scales_affinely_with_zero_intercept():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((50, 4))
    X -= X.mean(axis=0)  # centered columns force a zero intercept
    y = X @ np.array([1.0, 0.0, -2.0, 0.5])
    model = select_model(X, y)
    assert model.intercept == pytest.approx(0.0, abs=1e-10)
    a = 3.7
    assert np.allclose(model.predict(a * X), a * model.predict(X), atol=1e-8)


def test_best_subsets_validation():
    rng = np.random.default_rng(12)
    with pytest.raises(ValueError):
        best_subsets(rng.standard_normal((5, 6)), rng.standard_normal(5))
    with pytest.raises(ValueError):
        best_subsets(rng.standard_normal((40, 31)), rng.standard_normal(40))

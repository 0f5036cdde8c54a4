import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condcorr.exceptions import InputError
from condcorr.inference import (
    aic,
    chi2_critical_value,
    lr_test,
    numerical_scores,
    robust_se,
    rolling_correlation,
    sandwich_from_obs,
)
from condcorr.simulation import SimSpec, simulate_garch
from condcorr.volatility import fit_garch


def test_lr_examples():
    r = lr_test(-409.454, -406.795, 2)
    assert r.statistic == pytest.approx(5.318, abs=1e-9)
    assert r.reject and r.critical_value_10pct == pytest.approx(4.605, abs=1e-3)
    r = lr_test(-406.795, -406.725, 1)
    assert r.statistic == pytest.approx(0.140, abs=1e-9)
    assert not r.reject and r.critical_value_10pct == pytest.approx(2.706, abs=1e-3)
    r = lr_test(-10.0, -10.0, 1)
    assert r.statistic == 0.0 and not r.reject


def test_lr_floor_and_dof_guard():
    assert lr_test(-1.0, -2.0, 1).statistic == 0.0
    with pytest.raises(InputError):
        lr_test(0.0, 0.0, 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e4, 0), st.floats(0, 50), st.floats(-1e4, 1e4))
def test_lr_shift_invariance(lr_, gain, shift):
    a = lr_test(lr_, lr_ + gain, 2).statistic
    b = lr_test(lr_ + shift, lr_ + gain + shift, 2).statistic
    assert b == pytest.approx(a, abs=1e-10 * max(1.0, abs(shift), abs(lr_)))


def test_chi2_general_dof_matches_scipy():
    stats = pytest.importorskip("scipy.stats")
    for dof in (1, 2, 3, 7):
        assert chi2_critical_value(dof) == pytest.approx(stats.chi2.ppf(0.9, dof), rel=1e-10)
    assert chi2_critical_value(3, 0.05) == pytest.approx(stats.chi2.ppf(0.95, 3), rel=1e-10)


@pytest.mark.parametrize("k,expected", [(0, 4.962), (2, 4.986), (3, 4.998)])
def test_aic_examples(k, expected):
    assert aic(-411.807, k, 166) == pytest.approx(expected, abs=1e-3)


def test_aic_zero_and_guard():
    assert aic(0.0, 0, 17) == 0.0
    with pytest.raises(InputError):
        aic(1.0, 1, 0)


def test_aic_ranking_matches_penalized_loglik():
    rng = np.random.default_rng(0)
    ll = rng.uniform(-500, -400, 6)
    k = rng.integers(0, 4, 6)
    by_aic = np.argsort([aic(a, b, 166) for a, b in zip(ll, k)])
    by_raw = np.argsort(2 * k - 2 * ll)
    np.testing.assert_array_equal(by_aic, by_raw)


def test_robust_se_of_mean():
    y = np.random.default_rng(1).standard_normal(2000) * 2.5 + 1.0
    s2 = np.var(y)

    def obs(theta):
        return -0.5 * (np.log(2 * np.pi * s2) + (y - theta[0]) ** 2 / s2)

    sw = sandwich_from_obs(obs, np.array([y.mean()]))
    oracle = y.std() / np.sqrt(y.size)
    assert sw.se[0] == pytest.approx(oracle, rel=0.10)


def test_robust_and_hessian_se_agree_for_garch():
    ratios = []
    for seed in range(30):
        y = simulate_garch(SimSpec("garch_univariate", 3000, {"omega": 0.1, "alpha": 0.1, "beta": 0.85}, seed=seed))
        fit = fit_garch(y)
        ratios.append(fit.std_errors / fit.hessian_std_errors)
    mean_ratio = np.nanmean(ratios, axis=0)
    assert np.all(np.abs(mean_ratio - 1.0) <= 0.25), mean_ratio


def test_pinned_coordinate_reports_zero():
    y = np.random.default_rng(2).standard_normal(500)

    def obs(theta):
        return -0.5 * (np.log(2 * np.pi) + (y - theta[0] - theta[1]) ** 2)

    theta = np.array([y.mean(), 0.0])
    scores = numerical_scores(obs, theta)
    sw = robust_se(lambda th: float(np.mean(obs(th))), theta, scores, pinned=[False, True])
    assert sw.se[1] == 0.0
    assert np.isfinite(sw.se[0]) and sw.se[0] > 0


def test_singular_hessian_marks_unavailable():
    y = np.random.default_rng(3).standard_normal(500)

    def obs(theta):
        return -0.5 * (y - theta[0] - theta[1]) ** 2

    theta = np.array([y.mean() / 2, y.mean() / 2])
    sw = robust_se(lambda th: float(np.mean(obs(th))), theta, numerical_scores(obs, theta))
    assert np.all(np.isnan(sw.se))
    assert not np.any(sw.available)


def test_scores_shape_checked():
    with pytest.raises(InputError, match="scores"):
        robust_se(lambda th: 0.0, np.zeros(2), np.zeros((10, 3)))


# rolling correlation


def _naive_rolling(x, window):
    t, n = x.shape
    out = []
    for end in range(window, t + 1):
        seg = x[end - window:end]
        row = []
        for i in range(n):
            for j in range(i + 1, n):
                row.append(np.corrcoef(seg[:, i], seg[:, j])[0, 1])
        out.append(row)
    return np.array(out)


@pytest.mark.parametrize("seed", range(10))
def test_rolling_matches_naive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    x = rng.standard_normal((int(rng.integers(10, 100)), n))
    window = int(rng.integers(2, 10))
    path = rolling_correlation(x, window)
    np.testing.assert_allclose(path.values, _naive_rolling(x, window), atol=1e-12)
    assert path.values.shape[0] == x.shape[0] - window + 1


def test_rolling_collinear_is_one():
    x = np.random.default_rng(4).standard_normal(40)
    path = rolling_correlation(np.column_stack([x, 3 * x + 2]), 5)
    np.testing.assert_allclose(path.values, 1.0, atol=1e-12)


def test_rolling_full_window():
    x = np.random.default_rng(5).standard_normal((30, 2))
    path = rolling_correlation(x, 30)
    assert path.values.shape == (1, 1)
    assert path.values[0, 0] == pytest.approx(np.corrcoef(x.T)[0, 1], abs=1e-12)


def test_rolling_affine_invariance():
    x = np.random.default_rng(6).standard_normal((60, 2))
    base = rolling_correlation(x, 5).values
    y = x * np.array([4.0, 0.3]) + np.array([-7.0, 100.0])
    np.testing.assert_allclose(rolling_correlation(y, 5).values, base, atol=1e-12)


def test_rolling_flat_window_is_missing():
    x = np.random.default_rng(7).standard_normal((20, 2))
    x[5:12, 1] = 3.0
    path = rolling_correlation(x, 5)
    assert np.all(np.isnan(path.values[7:8, 0]))
    assert np.isfinite(path.values[0, 0])
    assert np.all(np.abs(path.values[np.isfinite(path.values)]) <= 1.0)


def test_rolling_guards():
    x = np.zeros((4, 2))
    with pytest.raises(InputError):
        rolling_correlation(x, 1)
    with pytest.raises(InputError):
        rolling_correlation(x, 5)

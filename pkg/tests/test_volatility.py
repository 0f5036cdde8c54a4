import numpy as np
import pytest

from condcorr.diagnostics import ArmaSpec, arch_lm_test
from condcorr.exceptions import InputError
from condcorr.simulation import SimSpec, simulate_garch
from condcorr.volatility import (
    GARCH11,
    FirstStep,
    GarchParams,
    degarch,
    first_step,
    fit_garch,
    garch_filter,
    garch_loglik,
    unconditional_fit,
)

TRUE = {"omega": 0.1, "alpha": 0.05, "beta": 0.90}


def _garch(seed, n, **params):
    return simulate_garch(SimSpec("garch_univariate", n, params or TRUE, seed=seed))


def _loop_filter(y, omega, alpha, beta, h0):
    h = [h0]
    for t in range(1, len(y)):
        h.append(omega + alpha * y[t - 1] ** 2 + beta * h[-1])
    return np.array(h)


def test_params_invariants():
    with pytest.raises(InputError, match="stationarity"):
        GarchParams(0.1, 0.5, 0.5)
    with pytest.raises(InputError, match="positivity"):
        GarchParams(0.0, 0.1, 0.1)
    with pytest.raises(InputError, match="positivity"):
        GarchParams(0.1, -0.01, 0.1)
    assert GarchParams(**TRUE).unconditional_variance == pytest.approx(2.0)


def test_filter_constant_variance():
    y = np.random.default_rng(0).standard_normal(50)
    h = garch_filter(y, GarchParams(2.0, 0.0, 0.0))
    np.testing.assert_array_equal(h[1:], 2.0)


def test_filter_zero_input_converges_to_fixed_point():
    h = garch_filter(np.zeros(200), GarchParams(0.1, 0.3, 0.5), h0=1.0)
    expected = 0.2 + 0.8 * 0.5 ** np.arange(200)
    np.testing.assert_allclose(h, expected, atol=1e-14)
    assert h[-1] == pytest.approx(0.2, abs=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_filter_matches_loop(seed):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(rng.integers(2, 100)) * rng.uniform(0.1, 10)
    a = rng.uniform(0, 0.3)
    b = rng.uniform(0, 0.99 - a)
    p = GarchParams(rng.uniform(0.01, 1), a, b)
    ours = garch_filter(y, p)
    oracle = _loop_filter(y, p.omega, p.alpha, p.beta, np.var(y))
    np.testing.assert_allclose(ours, oracle, rtol=1e-14, atol=1e-14 * np.max(oracle))


def test_loglik_consistency():
    y = _garch(1, 1500)
    fit = fit_garch(y)
    h = garch_filter(y, fit.params)
    assert garch_loglik(y, h) == pytest.approx(fit.loglik, abs=1e-8)
    np.testing.assert_array_equal(h, fit.h_path)
    assert np.all(fit.h_path > 0)
    assert fit.h0 == pytest.approx(np.var(y))


def test_scale_equivariance():
    y = _garch(2, 2000)
    base = fit_garch(y)
    for c in (0.01, 7.0, 300.0):
        scaled = fit_garch(c * y)
        assert scaled.params.omega == pytest.approx(c**2 * base.params.omega, rel=1e-4)
        assert scaled.params.alpha == pytest.approx(base.params.alpha, abs=1e-4)
        assert scaled.params.beta == pytest.approx(base.params.beta, abs=1e-4)
        np.testing.assert_allclose(degarch(c * y, scaled), degarch(y, base), atol=1e-6)


def test_monte_carlo_recovery_within_3se():
    hits = np.zeros(3)
    reps = 200
    for seed in range(reps):
        fit = fit_garch(_garch(1000 + seed, 5000))
        err = np.abs(fit.params.to_array() - np.array([0.1, 0.05, 0.90]))
        hits += err <= 3 * fit.std_errors
    assert np.all(hits / reps >= 0.95), hits / reps


def test_iid_input_gives_small_alpha():
    rng = np.random.default_rng(3)
    small = [fit_garch(rng.standard_normal(1000), compute_se=False).params.alpha <= 0.05 for _ in range(100)]
    assert np.mean(small) >= 0.90


def test_constant_input_rejected():
    with pytest.raises(InputError, match="zero variance"):
        fit_garch(np.full(100, 3.0))


def test_short_input_rejected():
    with pytest.raises(InputError, match="at least 50"):
        fit_garch(np.random.default_rng(0).standard_normal(40))


def test_degarch_identities():
    h = np.linspace(0.5, 2.0, 30)
    np.testing.assert_allclose(degarch(np.sqrt(h), h), 1.0, atol=1e-15)
    with pytest.raises(InputError, match="length mismatch"):
        degarch(np.ones(29), h)


def test_fallback_has_unit_variance():
    y = np.random.default_rng(4).standard_normal(120) * 3 + 1
    fit = unconditional_fit(y)
    assert not fit.used_garch
    np.testing.assert_array_equal(fit.h_path, np.var(y))
    assert np.var(degarch(y, fit)) == pytest.approx(1.0, abs=1e-12)


def test_degarch_whitens_garch_data():
    passed = []
    for seed in range(200):
        y, h = simulate_garch(SimSpec("garch_univariate", 1000, {"omega": 0.1, "alpha": 0.1, "beta": 0.85},
                                      seed=seed), return_variance=True)
        fit = fit_garch(y, compute_se=False)
        passed.append(not arch_lm_test(degarch(y, fit), 5).heteroskedastic_at_5pct)
    assert np.mean(passed) >= 0.85


def test_degarched_variance_near_one():
    for seed in range(20):
        y = _garch(seed, 2000)
        v = np.var(degarch(y, fit_garch(y, compute_se=False)))
        assert 0.8 <= v <= 1.2


def _panel(seed, n_cols, garch_cols, length=600):
    rng = np.random.default_rng(seed)
    cols = []
    for j in range(n_cols):
        if j in garch_cols:
            cols.append(_garch(seed * 10 + j, length, omega=0.05, alpha=0.15, beta=0.8))
        else:
            cols.append(rng.standard_normal(length))
    return np.column_stack(cols)


def test_first_step_all_fallback():
    x = _panel(0, 3, ())
    out = first_step(x, [(0, 0)] * 3, [False] * 3)
    resid = x - x.mean(axis=0)
    np.testing.assert_allclose(out.matrix, resid / resid.std(axis=0), atol=1e-12)
    assert out.provenance == ("unconditional",) * 3


@pytest.mark.parametrize("flags,expected", [
    ((False, True, True, True, False), 3),
    ((False, True, False, True, False), 2),
])
def test_first_step_flag_patterns(flags, expected):
    x = _panel(1, 5, {i for i, f in enumerate(flags) if f})
    out = first_step(x, [ArmaSpec(0, 0)] * 5, list(flags))
    assert out.n_garch == expected
    assert [p == "garch" for p in out.provenance] == list(flags)
    assert all(0.8 <= v <= 1.2 for v in out.matrix.var(axis=0))


def test_first_step_errors_name_the_series():
    x = _panel(2, 2, ())
    x[:, 1] = 1.0
    with pytest.raises(InputError, match="s2"):
        first_step(x, [(0, 0), (0, 0)], [False, False])
    with pytest.raises(InputError):
        first_step(x, [(0, 0)], [False, False])


def test_first_step_short_series_falls_back():
    x = _panel(3, 2, {0}, length=40)
    with pytest.warns(UserWarning, match="too short"):
        out = first_step(x, [(0, 0), (0, 0)], [True, False])
    assert out.n_garch == 0


def test_garch11_estimator():
    y = _garch(5, 1500)
    model = GARCH11().fit(y)
    np.testing.assert_allclose(model.transform(y), degarch(y, model.fit_), atol=1e-12)
    assert model.score(y) == pytest.approx(model.fit_.loglik, abs=1e-8)
    assert model.get_params() == {"compute_se": True}


def test_first_step_estimator():
    x = _panel(6, 3, {0, 2}, length=800)
    fs = FirstStep(arma_orders=[(0, 0)] * 3)
    out = fs.fit_transform(x)
    assert fs.heteroskedastic_ == (True, False, True)
    np.testing.assert_allclose(fs.transform(x), out, atol=1e-10)

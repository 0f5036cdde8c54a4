import numpy as np
import pytest

from condcorr.correlation import DccParams, NlarcParams, dcc_filter, nlarc_filter
from condcorr.exceptions import InputError
from condcorr.simulation import (
    SimSpec,
    equicorrelation,
    make_rng,
    recovery_experiment,
    simulate_corr_panel,
    simulate_garch,
)


def _dcc(seed=0, length=2000, a=0.05, b=0.90, n=2, rho=0.5, kind="dcc", **extra):
    params = {"a": a, "b": b, **extra}
    return SimSpec(kind, length, params, r_bar=equicorrelation(n, rho), seed=seed)


def test_rng_is_pcg64():
    assert isinstance(make_rng(1).bit_generator, np.random.PCG64)
    assert make_rng(5).standard_normal() == np.random.Generator(np.random.PCG64(5)).standard_normal()


def test_garch_constant_variance():
    y = simulate_garch(SimSpec("garch_univariate", 10_000, {"omega": 1.7, "alpha": 0.0, "beta": 0.0}, seed=1))
    assert np.var(y) == pytest.approx(1.7, rel=0.05)


def test_garch_unconditional_moment():
    y = simulate_garch(SimSpec("garch_univariate", 10_000, {"omega": 0.1, "alpha": 0.05, "beta": 0.90}, seed=2))
    assert np.var(y) == pytest.approx(2.0, rel=0.10)


def test_garch_determinism():
    spec = SimSpec("garch_univariate", 500, {"omega": 0.1, "alpha": 0.05, "beta": 0.90}, seed=3)
    assert simulate_garch(spec).tobytes() == simulate_garch(spec).tobytes()
    other = SimSpec("garch_univariate", 500, {"omega": 0.1, "alpha": 0.05, "beta": 0.90}, seed=4)
    assert simulate_garch(spec).tobytes() != simulate_garch(other).tobytes()


def test_spec_validation():
    with pytest.raises(InputError, match="burn_in"):
        SimSpec("garch_univariate", 10, {"omega": 0.1, "alpha": 0.0, "beta": 0.0}, burn_in=50)
    with pytest.raises(InputError):
        SimSpec("dcc", 10, {"a": 0.5, "b": 0.6}, r_bar=np.eye(2))
    with pytest.raises(InputError):
        SimSpec("dcc", 10, {"a": 0.05, "b": 0.9}, r_bar=np.array([[1.0, 1.2], [1.2, 1.0]]))
    with pytest.raises(InputError):
        SimSpec("nlarc", 10, {"a": 0.05, "b": 0.9, "phi_A": -1}, r_bar=np.eye(2))
    with pytest.raises(InputError, match="unknown"):
        SimSpec("bekk", 10)


def test_constant_correlation_panel():
    spec = SimSpec("dcc", 5000, {"a": 0.0, "b": 0.9}, r_bar=np.array(
        [[1.0, 0.5, -0.2], [0.5, 1.0, 0.1], [-0.2, 0.1, 1.0]]), seed=5)
    sim = simulate_corr_panel(spec)
    np.testing.assert_allclose(np.corrcoef(sim.eps.T), spec.r_bar, atol=0.05)


def test_nlarc_zero_gate_is_dcc_bit_for_bit():
    a = simulate_corr_panel(_dcc(seed=6, length=800, n=3))
    b = simulate_corr_panel(_dcc(seed=6, length=800, n=3, kind="nlarc", phi_A=0.0))
    assert a.eps.tobytes() == b.eps.tobytes()
    assert a.r_path.tobytes() == b.r_path.tobytes()


@pytest.mark.parametrize("kind,params", [("dcc", DccParams(0.05, 0.90)), ("nlarc", NlarcParams(0.04, 0.79, 2.0))])
def test_generator_filter_duality(kind, params):
    spec = SimSpec(kind, 1000, dict(params.as_dict()), r_bar=equicorrelation(3, 0.4), seed=7)
    sim = simulate_corr_panel(spec)
    filt = dcc_filter if kind == "dcc" else nlarc_filter
    path = filt(sim.eps, params, spec.r_bar, q_init=sim.q_path[0])
    np.testing.assert_allclose(path.matrices, sim.r_path, rtol=0, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(sim.r_path)) > 0


def test_garch_layer_wraps_selected_columns():
    spec = SimSpec("dcc", 3000, {"a": 0.05, "b": 0.9}, r_bar=equicorrelation(2, 0.3), seed=8,
                   garch=((0.1, 0.05, 0.9), None))
    sim = simulate_corr_panel(spec)
    np.testing.assert_array_equal(sim.data[:, 1], sim.eps[:, 1])
    np.testing.assert_allclose(sim.data[:, 0], sim.eps[:, 0] * np.sqrt(sim.variances[:, 0]), rtol=1e-13)
    assert np.var(sim.data[:, 0]) == pytest.approx(2.0, rel=0.2)


def test_recovery_report_is_deterministic():
    spec = _dcc(seed=9, length=500)
    r1, r2 = recovery_experiment(spec, 1), recovery_experiment(spec, 1)
    assert r1.estimates.tobytes() == r2.estimates.tobytes()
    assert r1.std_errors.tobytes() == r2.std_errors.tobytes()
    assert r1.rows() == r2.rows()
    with pytest.raises(InputError):
        recovery_experiment(spec, 0)


def test_recovery_coverage_of_two_se_intervals():
    report = recovery_experiment(_dcc(seed=10_000), 200)
    cov = report.coverage(2.0)
    assert report.failures == 0
    assert np.all((cov >= 0.88) & (cov <= 0.99)), cov
    assert report.min_eigenvalue > 1e-10
    assert report.max_diag_error < 1e-12


def test_lr_power_against_ccc():
    report = recovery_experiment(_dcc(seed=20_000, a=0.1, b=0.85), 100)
    assert report.lr_rejection_rate() >= 0.80

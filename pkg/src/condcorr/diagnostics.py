"""Preliminary series diagnostics: unit roots, ARMA identification, ARCH effects."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, stats
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._kernels import arma_objective, schur_stable
from ._validation import check_series
from .exceptions import InputError, NumericalError

logger = logging.getLogger(__name__)

__all__ = [
    "AdfResult",
    "ArmaSpec",
    "ArmaFit",
    "ArchLmResult",
    "adf_test",
    "adf_critical_values",
    "adf_pvalue",
    "default_adf_max_lag",
    "fit_arma",
    "arma_residuals",
    "select_arma_order",
    "arch_lm_test",
    "ARMA",
]

# Response surface for the constant-only Dickey-Fuller t-statistic, one row per
# level: b0 + b1/T + b2/T**2 + b3/T**3 (MacKinnon 2010, N=1).
_ADF_SURFACE_C = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.040),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}
# Normal-approximation p-value polynomials (MacKinnon 1994, constant case, N=1).
_ADF_P_SMALL = (2.1659, 1.4412, 0.038269)
_ADF_P_LARGE = (1.7339, 0.93202, -0.12745, -0.010368)
_ADF_TAU_MAX, _ADF_TAU_MIN, _ADF_TAU_STAR = 2.74, -18.83, -1.61


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    lags_used: int
    nobs: int
    critical_values: dict
    p_value: float
    reject_unit_root_at_5pct: bool

    @property
    def stationary(self):
        return self.reject_unit_root_at_5pct


@dataclass(frozen=True)
class ArmaSpec:
    p: int = 0
    q: int = 0

    def __post_init__(self):
        if int(self.p) != self.p or int(self.q) != self.q or self.p < 0 or self.q < 0:
            raise InputError(f"ARMA orders must be non-negative integers, got ({self.p}, {self.q})")

    @property
    def label(self):
        return f"ARMA({self.p},{self.q})"

    @property
    def n_params(self):
        # mean, AR, MA and the innovation variance
        return self.p + self.q + 2


@dataclass(frozen=True)
class ArmaFit:
    spec: ArmaSpec
    mean: float
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    sigma2: float
    residuals: np.ndarray = field(repr=False)
    loglik: float
    aic: float
    converged: bool = True

    @property
    def intercept(self):
        return self.mean * (1.0 - float(np.sum(self.ar_coeffs)))


@dataclass(frozen=True)
class ArchLmResult:
    statistic: float
    lags: int
    nobs: int
    p_value: float
    heteroskedastic_at_5pct: bool


def _ols(y, X):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    return beta, resid, rank


def default_adf_max_lag(nobs):
    return int(np.floor(12.0 * (nobs / 100.0) ** 0.25))


def adf_critical_values(nobs):
    """Finite-sample critical values for the constant-only ADF regression."""
    out = {}
    for level, (b0, b1, b2, b3) in _ADF_SURFACE_C.items():
        out[level] = b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3
    return out


def adf_pvalue(statistic):
    if statistic > _ADF_TAU_MAX:
        return 1.0
    if statistic < _ADF_TAU_MIN:
        return 0.0
    coefs = _ADF_P_SMALL if statistic <= _ADF_TAU_STAR else _ADF_P_LARGE
    return float(stats.norm.cdf(np.polyval(coefs[::-1], statistic)))


def _adf_design(x, dx, lag, nobs):
    """Regressors [const, x_{t-1}, dx_{t-1}, ..., dx_{t-lag}] over the last nobs diffs."""
    m = len(dx)
    cols = [np.ones(nobs), x[m - nobs:m]]
    for k in range(1, lag + 1):
        cols.append(dx[m - nobs - k:m - k])
    return np.column_stack(cols), dx[m - nobs:]


def adf_test(series, max_lag=None):
    """Augmented Dickey-Fuller test with a constant and AIC lag selection.

    The lag order is chosen over ``0..max_lag`` on a common sample, then the
    regression is re-estimated on the longest sample available for that lag.
    """
    x = check_series(series, "series")
    n = len(x)
    if max_lag is None:
        max_lag = default_adf_max_lag(n)
    max_lag = int(max_lag)
    if max_lag < 0:
        raise InputError("max_lag must be non-negative")
    if n < max_lag + 10:
        raise InputError(f"ADF needs at least max_lag + 10 = {max_lag + 10} observations, got {n}")
    if np.ptp(x) == 0.0:
        raise InputError("series has zero variance")
    dx = np.diff(x)
    if np.ptp(dx) == 0.0:
        raise InputError("differenced series has zero variance")

    nobs = len(dx) - max_lag
    best = None
    for lag in range(max_lag + 1):
        X, y = _adf_design(x, dx, lag, nobs)
        _, resid, _ = _ols(y, X)
        ssr = float(resid @ resid)
        llf = -0.5 * nobs * (np.log(2.0 * np.pi) + np.log(ssr / nobs) + 1.0)
        aic = -2.0 * llf + 2.0 * X.shape[1]
        if best is None or aic < best[0]:
            best = (aic, lag)
    lag = best[1]

    nobs = len(dx) - lag
    X, y = _adf_design(x, dx, lag, nobs)
    beta, resid, rank = _ols(y, X)
    if rank < X.shape[1]:
        raise NumericalError("ADF regression is rank deficient")
    dof = nobs - X.shape[1]
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    stat = float(beta[1] / np.sqrt(cov[1, 1]))
    crit = adf_critical_values(nobs)
    return AdfResult(
        statistic=stat,
        lags_used=lag,
        nobs=nobs,
        critical_values=crit,
        p_value=adf_pvalue(stat),
        reject_unit_root_at_5pct=bool(stat < crit["5%"]),
    )


def arma_residuals(y, mean, ar, ma):
    """Conditional ARMA residuals with pre-sample deviations and shocks set to zero."""
    ar = np.atleast_1d(np.asarray(ar, dtype=np.float64))
    ma = np.atleast_1d(np.asarray(ma, dtype=np.float64))
    return signal.lfilter(np.r_[1.0, -ar], np.r_[1.0, ma], np.asarray(y, dtype=np.float64) - mean)


def _admissible(ar, ma):
    """AR stationarity and MA invertibility."""
    return schur_stable(-np.asarray(ar, dtype=np.float64)) and schur_stable(np.asarray(ma, dtype=np.float64))


def _hannan_rissanen(z, p, q):
    """Two-stage regression start values on a standardized series."""
    n = len(z)
    m = min(max(p, q) + 6, n // 4)
    k = max(p, q)
    if m < 1 or n - m - k < p + q + 5:
        return None
    Xl = np.column_stack([z[m - i:n - i] for i in range(1, m + 1)])
    phi, _, _ = _ols(z[m:], Xl)
    e = np.zeros(n)
    e[m:] = z[m:] - Xl @ phi
    start = m + k
    cols = [z[start - i:n - i] for i in range(1, p + 1)] + [e[start - j:n - j] for j in range(1, q + 1)]
    beta, _, _ = _ols(z[start:], np.column_stack(cols))
    ar, ma = beta[:p], beta[p:]
    if not _admissible(ar, ma):
        return None
    return np.r_[0.0, ar, ma]


def _arma_objective(theta, z, p, q):
    return arma_objective(np.ascontiguousarray(theta, dtype=np.float64), z, p, q)


def fit_arma(series, spec, starts=None, maxiter=400):
    """Conditional Gaussian maximum likelihood for ARMA(p, q) with a mean.

    Pre-sample deviations and innovations are zero, so residuals have the same
    length as the input.  The innovation variance is concentrated out.  AR
    stationarity and MA invertibility are enforced by rejecting candidates
    whose roots violate them.

    Parameters
    ----------
    series : array_like
        Observed (stationary) series.
    spec : ArmaSpec or tuple
        Orders ``(p, q)``.
    starts : list of array_like, optional
        Extra starting points ``[mean, ar..., ma...]`` on the data scale, e.g.
        the optimum of a nested smaller model padded with zeros.
    """
    if not isinstance(spec, ArmaSpec):
        spec = ArmaSpec(*spec)
    p, q = spec.p, spec.q
    y = check_series(series, "series", min_length=p + q + 10, allow_constant=False)
    loc = float(np.mean(y))
    scale = float(np.std(y))
    z = (y - loc) / scale

    candidates = [np.zeros(1 + p + q)]
    for s in starts or ():
        s = np.asarray(s, dtype=np.float64).copy()
        if s.shape != (1 + p + q,):
            raise InputError(f"start vector has shape {s.shape}, expected {(1 + p + q,)}")
        s[0] = (s[0] - loc) / scale
        candidates.append(s)
    if p + q > 0:
        hr = _hannan_rissanen(z, p, q)
        if hr is not None:
            candidates.append(hr)

    best_theta, best_val, converged = None, np.inf, False
    for x0 in candidates:
        f0 = _arma_objective(x0, z, p, q)[0]
        if not np.isfinite(f0):
            continue
        if p + q == 0:
            theta, val, ok = x0, f0, True
        else:
            with warnings.catch_warnings():
                # rejected candidates evaluate to inf during line searches
                warnings.simplefilter("ignore", RuntimeWarning)
                res = optimize.minimize(_arma_objective, x0, args=(z, p, q), jac=True, method="BFGS",
                                        options={"gtol": 1e-7, "maxiter": maxiter})
            theta, val, ok = res.x, float(res.fun), bool(res.success)
            if not np.isfinite(val) or val > f0:
                theta, val = x0, f0
        if val < best_val:
            best_theta, best_val, converged = theta, val, ok
        elif val == best_val:
            converged = converged or ok
    if best_theta is None:
        raise NumericalError(f"{spec.label}: no admissible starting point")
    if p + q == 0:
        best_theta = np.zeros(1)  # ARMA(0,0) is exact demeaning

    mean = loc + scale * float(best_theta[0])
    ar = np.array(best_theta[1:1 + p], dtype=np.float64)
    ma = np.array(best_theta[1 + p:], dtype=np.float64)
    resid = arma_residuals(y, mean, ar, ma)
    n = len(y)
    sigma2 = float(np.mean(resid * resid))
    loglik = -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)
    aic = 2.0 * spec.n_params - 2.0 * loglik
    return ArmaFit(spec, mean, ar, ma, sigma2, resid, float(loglik), float(aic), converged)


def _pad_start(fit, p, q):
    ar = np.zeros(p)
    ar[:fit.spec.p] = fit.ar_coeffs
    ma = np.zeros(q)
    ma[:fit.spec.q] = fit.ma_coeffs
    return np.r_[fit.mean, ar, ma]


def select_arma_order(series, p_max=3, q_max=3, return_fits=False):
    """Pick (p, q) on the grid by AIC; ties go to smaller p + q, then smaller q.

    Each cell is warm-started from its nested neighbours (p-1, q) and
    (p, q-1), so the maximized log-likelihood is monotone along the grid.
    """
    if p_max < 0 or q_max < 0:
        raise InputError("p_max and q_max must be non-negative")
    fits = {}
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            starts = [_pad_start(fits[k], p, q) for k in ((p - 1, q), (p, q - 1)) if k in fits]
            try:
                fits[(p, q)] = fit_arma(series, ArmaSpec(p, q), starts=starts)
            except (NumericalError, InputError) as exc:
                logger.debug("ARMA(%d,%d) failed: %s", p, q, exc)
    if not fits:
        raise NumericalError("every ARMA candidate failed to fit")
    (p, q) = min(fits, key=lambda k: (fits[k].aic, k[0] + k[1], k[1]))
    spec = ArmaSpec(p, q)
    return (spec, fits) if return_fits else spec


def arch_lm_test(residuals, lags=5):
    """Engle's LM test: regress squared residuals on ``lags`` of themselves.

    The statistic is ``n * R^2`` with ``n = T - lags`` usable observations,
    referred to a chi-squared distribution with ``lags`` degrees of freedom.
    """
    lags = int(lags)
    if lags < 1:
        raise InputError("lags must be at least 1")
    e = check_series(residuals, "residuals", min_length=lags + 10)
    e2 = e * e
    if np.ptp(e2) == 0.0:
        raise InputError("residuals have zero variance in squares")
    n = len(e2) - lags
    y = e2[lags:]
    X = np.column_stack([np.ones(n)] + [e2[lags - k:len(e2) - k] for k in range(1, lags + 1)])
    _, resid, _ = _ols(y, X)
    yc = y - y.mean()
    r2 = 1.0 - float(resid @ resid) / float(yc @ yc)
    stat = n * r2
    pval = float(stats.chi2.sf(stat, lags))
    return ArchLmResult(float(stat), lags, n, pval, bool(pval < 0.05))


class ARMA(BaseEstimator, TransformerMixin):
    """ARMA mean filter with scikit-learn's estimator interface.

    ``order=None`` selects the orders by AIC over ``0..p_max`` x ``0..q_max``.
    ``transform`` returns conditional residuals computed with the fitted
    coefficients.
    """

    def __init__(self, order=None, p_max=3, q_max=3):
        self.order = order
        self.p_max = p_max
        self.q_max = q_max

    def fit(self, y, _=None):
        y = check_series(y, "y")
        if self.order is None:
            spec = select_arma_order(y, self.p_max, self.q_max)
        else:
            spec = ArmaSpec(*self.order)
        self.fit_ = fit_arma(y, spec)
        self.order_ = (spec.p, spec.q)
        return self

    def transform(self, y):
        check_is_fitted(self, "fit_")
        f = self.fit_
        return arma_residuals(check_series(y, "y"), f.mean, f.ar_coeffs, f.ma_coeffs)

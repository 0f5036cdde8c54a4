"""Sandwich standard errors, likelihood-ratio tests, AIC and rolling correlations."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from ._validation import unpack_panel
from .exceptions import InputError

__all__ = [
    "LrResult",
    "SandwichResult",
    "RollingPath",
    "CHI2_10PCT",
    "chi2_critical_value",
    "chi2_sf",
    "lr_test",
    "aic",
    "fd_steps",
    "numerical_hessian",
    "numerical_scores",
    "robust_se",
    "sandwich_from_obs",
    "rolling_correlation",
]

# 10% upper-tail chi-squared quantiles for 1 and 2 degrees of freedom.
CHI2_10PCT = {1: 2.705543454095404, 2: 4.605170185988091}


def chi2_critical_value(dof, level=0.10):
    """Upper-tail chi-squared quantile via the inverse regularized incomplete gamma."""
    if dof < 1:
        raise InputError("dof must be at least 1")
    if level == 0.10 and dof in CHI2_10PCT:
        return CHI2_10PCT[dof]
    return float(2.0 * special.gammainccinv(0.5 * dof, level))


def chi2_sf(x, dof):
    return float(special.gammaincc(0.5 * dof, 0.5 * max(x, 0.0)))


@dataclass(frozen=True)
class LrResult:
    statistic: float
    dof: int
    critical_value_10pct: float
    p_value: float
    reject: bool


def lr_test(l_restricted, l_unrestricted, dof):
    """Likelihood-ratio test against the 10% chi-squared critical value.

    When the restriction sits on the parameter boundary (e.g. a = 0) the
    chi-squared reference is only approximate; it is used as is.
    """
    dof = int(dof)
    if dof < 1:
        raise InputError("dof must be at least 1")
    stat = max(0.0, 2.0 * (float(l_unrestricted) - float(l_restricted)))
    crit = chi2_critical_value(dof)
    return LrResult(stat, dof, crit, chi2_sf(stat, dof), bool(stat > crit))


def aic(loglik, n_params, t_obs):
    """Per-observation Akaike criterion, (2k - 2L) / T."""
    if t_obs <= 0:
        raise InputError("t_obs must be positive")
    return (2.0 * n_params - 2.0 * float(loglik)) / t_obs


def fd_steps(theta, rel=1e-5):
    theta = np.asarray(theta, dtype=np.float64)
    return rel * np.maximum(1.0, np.abs(theta))


def numerical_hessian(fun, theta, steps=None):
    """Central-difference Hessian of a scalar function."""
    theta = np.asarray(theta, dtype=np.float64)
    k = theta.size
    h = fd_steps(theta) if steps is None else np.asarray(steps, dtype=np.float64)
    f0 = fun(theta)
    hess = np.empty((k, k))
    ee = np.diag(h)
    for i in range(k):
        hess[i, i] = (fun(theta + ee[i]) - 2.0 * f0 + fun(theta - ee[i])) / h[i] ** 2
        for j in range(i):
            fpp = fun(theta + ee[i] + ee[j])
            fpm = fun(theta + ee[i] - ee[j])
            fmp = fun(theta - ee[i] + ee[j])
            fmm = fun(theta - ee[i] - ee[j])
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return hess


def numerical_scores(obs_fun, theta, steps=None):
    """Forward-difference per-observation scores, a T x k matrix."""
    theta = np.asarray(theta, dtype=np.float64)
    h = fd_steps(theta) if steps is None else np.asarray(steps, dtype=np.float64)
    base = np.asarray(obs_fun(theta), dtype=np.float64)
    scores = np.empty((base.size, theta.size))
    for i in range(theta.size):
        step = np.zeros_like(theta)
        step[i] = h[i]
        scores[:, i] = (np.asarray(obs_fun(theta + step)) - base) / h[i]
    return scores


@dataclass(frozen=True)
class SandwichResult:
    se: np.ndarray
    hessian_se: np.ndarray
    cov: np.ndarray
    hessian: np.ndarray
    available: np.ndarray
    pinned: np.ndarray


def robust_se(loglik_fn, theta_hat, per_obs_scores, pinned=None, steps=None):
    """White sandwich standard errors.

    Parameters
    ----------
    loglik_fn : callable
        Average log-likelihood as a function of the full parameter vector.
    theta_hat : array_like
        The optimum, of length k.
    per_obs_scores : ndarray
        T x k matrix of per-observation score vectors at ``theta_hat``.
    pinned : array_like of bool, optional
        Coordinates fixed at a boundary.  They get a standard error of 0 and
        are excluded from the Hessian and score outer product.

    Returns
    -------
    SandwichResult
        ``se`` holds the robust errors, NaN where the Hessian is singular in
        that direction.  ``hessian_se`` holds the plain inverse-Hessian errors.
    """
    theta = np.asarray(theta_hat, dtype=np.float64)
    k = theta.size
    scores = np.asarray(per_obs_scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] != k:
        raise InputError(f"scores must be T x {k}, got {scores.shape}")
    nobs = scores.shape[0]
    pinned = np.zeros(k, dtype=bool) if pinned is None else np.asarray(pinned, dtype=bool)
    free = np.flatnonzero(~pinned)
    h_all = fd_steps(theta) if steps is None else np.asarray(steps, dtype=np.float64)

    se = np.zeros(k)
    hse = np.zeros(k)
    cov = np.zeros((k, k))
    hess = np.full((k, k), np.nan)
    available = np.ones(k, dtype=bool)
    if free.size == 0:
        return SandwichResult(se, hse, cov, hess, available, pinned)

    def sub_fn(x):
        full = theta.copy()
        full[free] = x
        return loglik_fn(full)

    h_free = numerical_hessian(sub_fn, theta[free], h_all[free])
    hess[np.ix_(free, free)] = h_free
    s_free = scores[:, free]
    meat = s_free.T @ s_free / nobs

    bad = np.zeros(free.size, dtype=bool)
    if not np.all(np.isfinite(h_free)) or not np.all(np.isfinite(meat)):
        bad[:] = True
        hinv = np.full_like(h_free, np.nan)
    else:
        sym = 0.5 * (h_free + h_free.T)
        w, v = np.linalg.eigh(sym)
        scale = max(np.max(np.abs(w)), 1e-300)
        # central second differences carry rounding noise of order eps |f| / h^2
        f0 = abs(sub_fn(theta[free]))
        noise = 8.0 * free.size * np.finfo(float).eps * max(f0, 1e-300) / np.min(h_all[free]) ** 2
        null = np.abs(w) <= max(1e-10 * scale, noise)
        if np.any(null):
            bad |= np.any(np.abs(v[:, null]) > 1e-6, axis=1)
        winv = np.where(null, 0.0, 1.0 / np.where(null, 1.0, w))
        hinv = (v * winv) @ v.T

    cov_free = hinv @ meat @ hinv / nobs
    hcov_free = -hinv / nobs
    dr = np.diag(cov_free)
    dh = np.diag(hcov_free)
    se_free = np.where(bad | ~(dr >= 0), np.nan, np.sqrt(np.abs(dr)))
    hse_free = np.where(bad | ~(dh >= 0), np.nan, np.sqrt(np.abs(dh)))
    se[free] = se_free
    hse[free] = hse_free
    cov[np.ix_(free, free)] = cov_free
    available[free] = np.isfinite(se_free)
    return SandwichResult(se, hse, cov, hess, available, pinned)


def sandwich_from_obs(obs_loglik_fn, theta_hat, pinned=None, steps=None):
    """Robust standard errors from a per-observation log-likelihood function."""
    theta = np.asarray(theta_hat, dtype=np.float64)
    h = fd_steps(theta) if steps is None else np.asarray(steps, dtype=np.float64)
    scores = numerical_scores(obs_loglik_fn, theta, h)
    return robust_se(lambda th: float(np.mean(obs_loglik_fn(th))), theta, scores, pinned, h)


@dataclass(frozen=True)
class RollingPath:
    window: int
    dates: np.ndarray
    pairs: tuple
    values: np.ndarray  # (T - window + 1) x n_pairs, NaN where a window has no variance

    def series(self, pair):
        return self.values[:, self.pairs.index(tuple(pair))]


def rolling_correlation(eps, window=5):
    """Pearson correlation of every pair over a trailing window of observations."""
    x, dates, names = unpack_panel(eps, min_cols=2)
    window = int(window)
    if window < 2:
        raise InputError("window must be at least 2")
    t, n = x.shape
    if t < window:
        raise InputError(f"window {window} exceeds the sample length {t}")
    w = sliding_window_view(x, window, axis=0)  # (t - window + 1, n, window)
    d = w - w.mean(axis=2, keepdims=True)
    cov = np.einsum("kiw,kjw->kij", d, d)
    var = np.einsum("kii->ki", cov).copy()
    var[var <= 1e-14 * np.max(np.abs(x)) ** 2 * window] = 0.0
    iu, ju = np.triu_indices(n, k=1)
    denom = np.sqrt(var[:, iu] * var[:, ju])
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = np.where(denom > 0.0, cov[:, iu, ju] / np.where(denom > 0.0, denom, 1.0), np.nan)
    rho = np.clip(rho, -1.0, 1.0)
    pairs = tuple((names[i], names[j]) for i, j in combinations(range(n), 2))
    end_dates = None if dates is None else np.asarray(dates)[window - 1:]
    return RollingPath(window, end_dates, pairs, rho)

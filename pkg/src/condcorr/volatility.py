"""First step: univariate GARCH(1,1) filtering, estimation and de-GARCHing."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal, special
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_series, unpack_panel
from .diagnostics import ArmaFit, ArmaSpec, arch_lm_test, arma_residuals, fit_arma, select_arma_order
from .exceptions import InputError, NumericalError
from .inference import fd_steps, sandwich_from_obs

logger = logging.getLogger(__name__)

__all__ = [
    "GarchParams",
    "GarchFit",
    "DegarchPanel",
    "garch_filter",
    "garch_loglik",
    "fit_garch",
    "unconditional_fit",
    "degarch",
    "first_step",
    "GARCH11",
    "FirstStep",
    "GARCH_MIN_LENGTH",
    "GARCH_STARTS",
]

LOG_2PI = np.log(2.0 * np.pi)
GARCH_MIN_LENGTH = 50
GARCH_STARTS = ((0.05, 0.90), (0.10, 0.80), (0.02, 0.95))
GARCH_GTOL = 1e-6
GARCH_MAXITER = 500
_LOGIT_BOUND = 30.0


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        o, a, b = float(self.omega), float(self.alpha), float(self.beta)
        if not (np.isfinite(o) and np.isfinite(a) and np.isfinite(b)):
            raise InputError("GARCH parameters must be finite")
        if o <= 0.0 or a < 0.0 or b < 0.0:
            raise InputError(f"GARCH positivity violated: omega={o}, alpha={a}, beta={b}")
        if a + b >= 1.0:
            raise InputError(f"GARCH stationarity violated: alpha + beta = {a + b}")

    @property
    def persistence(self):
        return self.alpha + self.beta

    @property
    def unconditional_variance(self):
        return self.omega / (1.0 - self.alpha - self.beta)

    def to_array(self):
        return np.array([self.omega, self.alpha, self.beta])


@dataclass(frozen=True)
class GarchFit:
    params: GarchParams
    h_path: np.ndarray = field(repr=False)
    loglik: float
    std_errors: np.ndarray
    converged: bool
    used_garch: bool = True
    hessian_std_errors: np.ndarray = None
    boundary: tuple = ()
    h0: float = None

    @property
    def volatility(self):
        return np.sqrt(self.h_path)


def _variance_path(y2, omega, alpha, beta, h0):
    """h_t = omega + alpha y_{t-1}^2 + beta h_{t-1}, h_1 = h0, as a linear filter."""
    h = np.empty(y2.shape[0])
    h[0] = h0
    if h.shape[0] > 1:
        h[1:] = signal.lfilter([1.0], [1.0, -beta], omega + alpha * y2[:-1], zi=[beta * h0])[0]
    return h


def garch_filter(y, params, h0=None):
    """Conditional variance path of a GARCH(1,1).

    ``h0`` defaults to the sample variance of ``y``.
    """
    if not isinstance(params, GarchParams):
        params = GarchParams(*params)
    y = check_series(y, "y")
    h0 = float(np.var(y)) if h0 is None else float(h0)
    if not h0 > 0.0:
        raise InputError("h0 must be positive")
    return _variance_path(y * y, params.omega, params.alpha, params.beta, h0)


def _obs_loglik(y2, h):
    return -0.5 * (LOG_2PI + np.log(h) + y2 / h)


def garch_loglik(y, h_path):
    """Gaussian log-likelihood of ``y`` given a conditional variance path."""
    y = check_series(y, "y")
    h = np.asarray(h_path, dtype=np.float64)
    if h.shape != y.shape:
        raise InputError("variance path length does not match y")
    if np.any(h <= 0.0):
        raise NumericalError("variance path is not strictly positive")
    return float(np.sum(_obs_loglik(y * y, h)))


def _to_natural(x):
    """Unconstrained (log omega, logit persistence, logit alpha-share) -> (omega, alpha, beta)."""
    lo = np.clip(x[0], -700.0, 700.0)
    s = special.expit(np.clip(x[1], -_LOGIT_BOUND, _LOGIT_BOUND))
    w = special.expit(np.clip(x[2], -_LOGIT_BOUND, _LOGIT_BOUND))
    omega, alpha, beta = np.exp(lo), s * w, s * (1.0 - w)
    if not (omega > 0.0 and alpha >= 0.0 and beta >= 0.0 and alpha + beta < 1.0):
        raise NumericalError(f"reparameterization left the feasible set: {omega}, {alpha}, {beta}")
    return omega, alpha, beta, s, w


def _to_unconstrained(omega, alpha, beta):
    s = alpha + beta
    return np.array([np.log(omega), special.logit(s), special.logit(alpha / s)])


def _neg_loglik_and_grad(x, y2, h0):
    """Average negative log-likelihood and its gradient in the unconstrained space."""
    omega, alpha, beta, s, w = _to_natural(x)
    h = _variance_path(y2, omega, alpha, beta, h0)
    n = y2.shape[0]
    if np.any(h <= 0.0) or not np.all(np.isfinite(h)):
        return np.inf, np.zeros(3)
    f = -np.mean(_obs_loglik(y2, h))
    # d h_t = [1, y2_{t-1}, h_{t-1}] + beta d h_{t-1}, d h_1 = 0
    dh = np.zeros((3, n))
    if n > 1:
        drivers = np.vstack([np.ones(n - 1), y2[:-1], h[:-1]])
        dh[:, 1:] = signal.lfilter([1.0], [1.0, -beta], drivers, axis=1)
    g_nat = 0.5 * dh @ ((1.0 - y2 / h) / h) / n
    # chain rule through the map, clipped coordinates have zero derivative
    ds = s * (1.0 - s) * (abs(x[1]) < _LOGIT_BOUND)
    dw = w * (1.0 - w) * (abs(x[2]) < _LOGIT_BOUND)
    grad = np.array([
        g_nat[0] * omega,
        g_nat[1] * w * ds + g_nat[2] * (1.0 - w) * ds,
        g_nat[1] * s * dw - g_nat[2] * s * dw,
    ])
    return f, grad


def _natural_obs_loglik(theta, y2, h0):
    h = _variance_path(y2, theta[0], theta[1], theta[2], h0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = _obs_loglik(y2, h)
    return np.where(h > 0.0, out, -np.inf)


def unconditional_fit(y):
    """Homoskedastic fallback: constant variance equal to the sample variance."""
    y = check_series(y, "y", min_length=2, allow_constant=False)
    var = float(np.var(y))
    h = np.full(y.shape[0], var)
    return GarchFit(
        params=GarchParams(var, 0.0, 0.0),
        h_path=h,
        loglik=float(np.sum(_obs_loglik(y * y, h))),
        std_errors=np.full(3, np.nan),
        converged=True,
        used_garch=False,
        h0=var,
    )


def fit_garch(y, starts=GARCH_STARTS, compute_se=True):
    """Gaussian quasi-maximum-likelihood GARCH(1,1).

    The series is rescaled to unit standard deviation for optimization and the
    intercept is mapped back, so estimates are scale equivariant.  Each start
    in ``starts`` is an ``(alpha, beta)`` pair; the best optimum is kept.
    Standard errors are White sandwich errors on ``(omega, alpha, beta)``.
    """
    y = check_series(y, "y", allow_constant=False)
    n = y.shape[0]
    if n < GARCH_MIN_LENGTH:
        raise InputError(f"GARCH estimation needs at least {GARCH_MIN_LENGTH} observations, got {n}")
    scale = float(np.std(y))
    z = y / scale
    z2 = z * z
    h0z = float(np.var(z))

    best = None
    for alpha0, beta0 in starts:
        x0 = _to_unconstrained(h0z * (1.0 - alpha0 - beta0), alpha0, beta0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(_neg_loglik_and_grad, x0, args=(z2, h0z), jac=True, method="BFGS",
                                    options={"gtol": GARCH_GTOL, "maxiter": GARCH_MAXITER})
        if not np.isfinite(res.fun):
            continue
        ok = bool(res.success) or float(np.max(np.abs(res.jac))) < GARCH_GTOL
        if best is None or res.fun < best[0].fun:
            best = (res, ok)
    if best is None:
        raise NumericalError("GARCH optimization failed from every start")
    res, converged = best
    omega_z, alpha, beta, _, _ = _to_natural(res.x)
    params = GarchParams(omega_z * scale**2, float(alpha), float(beta))
    h0 = float(np.var(y))
    h = _variance_path(y * y, params.omega, params.alpha, params.beta, h0)
    loglik = float(np.sum(_obs_loglik(y * y, h)))

    se = hse = np.full(3, np.nan)
    boundary = ()
    if compute_se:
        theta_z = np.array([omega_z, alpha, beta])
        pinned = np.array([False, alpha < fd_steps(theta_z)[1], beta < fd_steps(theta_z)[2]])
        boundary = tuple(name for name, p in zip(("omega", "alpha", "beta"), pinned) if p)
        sw = sandwich_from_obs(lambda th: _natural_obs_loglik(th, z2, h0z), theta_z, pinned=pinned)
        factor = np.array([scale**2, 1.0, 1.0])
        se, hse = sw.se * factor, sw.hessian_se * factor
    return GarchFit(params, h, loglik, se, converged, True, hse, boundary, h0)


def degarch(y, fit):
    """Standardize ``y`` by the fitted conditional standard deviations."""
    y = check_series(y, "y")
    h = np.asarray(fit.h_path if isinstance(fit, GarchFit) else fit, dtype=np.float64)
    if h.shape != y.shape:
        raise InputError(f"length mismatch: y has {y.shape[0]} observations, variance path {h.shape[0]}")
    if np.any(h <= 0.0):
        raise NumericalError("variance path is not strictly positive")
    return y / np.sqrt(h)


@dataclass(frozen=True)
class DegarchPanel:
    """De-GARCHed residual panel plus the first-step fits that produced it."""

    matrix: np.ndarray
    names: tuple
    provenance: tuple
    dates: np.ndarray = None
    arma_fits: tuple = ()
    garch_fits: tuple = ()

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def n_garch(self):
        return sum(p == "garch" for p in self.provenance)


def first_step(panel, arma_specs, hetero_flags, min_length=GARCH_MIN_LENGTH):
    """ARMA residuals, then GARCH or unconditional scaling, column by column.

    ``arma_specs`` holds one :class:`ArmaSpec`, ``(p, q)`` tuple or already
    fitted :class:`ArmaFit` per column.

    Series flagged heteroskedastic get a GARCH(1,1) fit and are de-GARCHed;
    the others are divided by their sample standard deviation.  Series that
    are too short for GARCH, or whose GARCH fit does not converge, fall back to
    the unconditional scale with a warning.
    """
    x, dates, names = unpack_panel(panel, "panel")
    n = x.shape[1]
    if len(arma_specs) != n or len(hetero_flags) != n:
        raise InputError(f"need one ARMA spec and one flag per column ({n} columns)")
    cols, prov, arma_fits, garch_fits = [], [], [], []
    for j, name in enumerate(names):
        item = arma_specs[j]
        try:
            if isinstance(item, ArmaFit):
                afit = item
                if afit.residuals.shape[0] != x.shape[0]:
                    raise InputError("fitted ARMA residuals do not match the column length")
            else:
                afit = fit_arma(x[:, j], item if isinstance(item, ArmaSpec) else ArmaSpec(*item))
            resid = afit.residuals
            fit = None
            if hetero_flags[j]:
                if resid.shape[0] < min_length:
                    warnings.warn(f"{name}: {resid.shape[0]} observations, too short for GARCH; "
                                  "using the unconditional scale", stacklevel=2)
                else:
                    fit = fit_garch(resid)
                    if not fit.converged:
                        warnings.warn(f"{name}: GARCH did not converge; using the unconditional scale",
                                      stacklevel=2)
                        fit = None
            if fit is None:
                fit = unconditional_fit(resid)
            cols.append(degarch(resid, fit))
        except (InputError, NumericalError) as exc:
            raise type(exc)(f"{name}: {exc}") from exc
        prov.append("garch" if fit.used_garch else "unconditional")
        arma_fits.append(afit)
        garch_fits.append(fit)
    return DegarchPanel(np.column_stack(cols), tuple(names), tuple(prov), dates,
                        tuple(arma_fits), tuple(garch_fits))


class GARCH11(BaseEstimator, TransformerMixin):
    """GARCH(1,1) volatility model as a scikit-learn transformer.

    ``fit`` estimates the parameters; ``transform`` returns de-GARCHed values
    of a series filtered with the fitted parameters.
    """

    def __init__(self, compute_se=True):
        self.compute_se = compute_se

    def fit(self, y, _=None):
        self.fit_ = fit_garch(y, compute_se=self.compute_se)
        self.params_ = self.fit_.params
        return self

    def transform(self, y):
        check_is_fitted(self, "fit_")
        y = check_series(y, "y")
        return degarch(y, garch_filter(y, self.params_))

    def score(self, y, _=None):
        check_is_fitted(self, "fit_")
        y = check_series(y, "y")
        return garch_loglik(y, garch_filter(y, self.params_))


class FirstStep(BaseEstimator, TransformerMixin):
    """Per-series ARMA mean plus GARCH(1,1) or unconditional scaling.

    Parameters
    ----------
    arma_orders : list of (p, q), optional
        Fixed orders per series.  ``None`` selects each by AIC on the grid
        ``0..p_max`` x ``0..q_max``.
    heteroskedastic : list of bool or "auto"
        ``"auto"`` fits GARCH where the ARCH-LM test on the ARMA residuals
        rejects at 5%.
    arch_lags : int
        Lags for the ARCH-LM gate.
    """

    def __init__(self, arma_orders=None, heteroskedastic="auto", arch_lags=5, p_max=3, q_max=3):
        self.arma_orders = arma_orders
        self.heteroskedastic = heteroskedastic
        self.arch_lags = arch_lags
        self.p_max = p_max
        self.q_max = q_max

    def fit(self, X, _=None):
        x, _, names = unpack_panel(X, "X")
        if self.arma_orders is None:
            specs = [select_arma_order(x[:, j], self.p_max, self.q_max) for j in range(x.shape[1])]
        else:
            specs = [ArmaSpec(*o) for o in self.arma_orders]
        if isinstance(self.heteroskedastic, str):
            if self.heteroskedastic != "auto":
                raise InputError("heteroskedastic must be 'auto' or a list of booleans")
            self.arch_tests_ = tuple(
                arch_lm_test(fit_arma(x[:, j], specs[j]).residuals, self.arch_lags)
                for j in range(x.shape[1])
            )
            flags = [r.heteroskedastic_at_5pct for r in self.arch_tests_]
        else:
            flags = [bool(f) for f in self.heteroskedastic]
        self.arma_specs_ = tuple(specs)
        self.heteroskedastic_ = tuple(flags)
        self.panel_ = first_step(X, specs, flags)
        return self

    def transform(self, X):
        check_is_fitted(self, "panel_")
        x, _, _ = unpack_panel(X, "X")
        if x.shape[1] != len(self.arma_specs_):
            raise InputError(f"expected {len(self.arma_specs_)} columns, got {x.shape[1]}")
        out = np.empty_like(x)
        for j, (afit, gfit) in enumerate(zip(self.panel_.arma_fits, self.panel_.garch_fits)):
            resid = arma_residuals(x[:, j], afit.mean, afit.ar_coeffs, afit.ma_coeffs)
            if gfit.used_garch:
                out[:, j] = degarch(resid, garch_filter(resid, gfit.params))
            else:
                out[:, j] = resid / np.sqrt(gfit.params.omega)
        return out

    def fit_transform(self, X, y=None, **_):
        return self.fit(X).panel_.matrix

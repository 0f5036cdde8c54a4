"""Second step: constant, dynamic (corrected DCC) and NLARC conditional correlations."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._kernels import corr_recursion, gaussian_corr_obs_loglik
from ._validation import check_correlation_matrix, unpack_panel
from .exceptions import InputError, NumericalError
from .inference import aic, fd_steps, sandwich_from_obs

logger = logging.getLogger(__name__)

__all__ = [
    "DccParams",
    "NlarcParams",
    "CorrelationPath",
    "CorrFit",
    "TargetingResult",
    "MODEL_KINDS",
    "sample_correlation",
    "hadamard_gate",
    "dcc_filter",
    "nlarc_filter",
    "corr_obs_loglik",
    "corr_loglik",
    "target_r_bar",
    "ccc_estimate",
    "fit_corr",
    "ConditionalCorrelation",
]

MODEL_KINDS = ("CCC", "DCC", "NLARC")
N_PARAMS = {"CCC": 0, "DCC": 2, "NLARC": 3}
DCC_STARTS = ((0.02, 0.95), (0.05, 0.90), (0.10, 0.80))
NLARC_PHI_STARTS = (0.1, 1.0, 5.0)
TARGET_TOL = 1e-8
TARGET_MAX_ITER = 50
_LOGIT_BOUND = 30.0
_LOG_PHI_BOUNDS = (-30.0, 7.0)


@dataclass(frozen=True)
class DccParams:
    a: float
    b: float

    def __post_init__(self):
        a, b = float(self.a), float(self.b)
        if not (np.isfinite(a) and np.isfinite(b)) or a < 0.0 or b < 0.0:
            raise InputError(f"DCC parameters must be finite and non-negative, got a={a}, b={b}")
        if a + b >= 1.0:
            raise InputError(f"DCC stationarity violated: a + b = {a + b}")

    def as_dict(self):
        return {"a": float(self.a), "b": float(self.b)}


@dataclass(frozen=True)
class NlarcParams(DccParams):
    phi_A: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not np.isfinite(self.phi_A) or self.phi_A < 0.0:
            raise InputError(f"phi_A must be finite and non-negative, got {self.phi_A}")

    def as_dict(self):
        return {"phi_A": float(self.phi_A), "a": float(self.a), "b": float(self.b)}


@dataclass(frozen=True)
class CorrelationPath:
    matrices: np.ndarray = field(repr=False)
    q_matrices: np.ndarray = field(repr=False)
    min_eigenvalue: float = None
    dates: np.ndarray = field(default=None, repr=False)
    names: tuple = None

    def __post_init__(self):
        if self.min_eigenvalue is None:
            eig = np.linalg.eigvalsh(self.matrices)[:, 0] if len(self.matrices) else np.array([np.inf])
            object.__setattr__(self, "min_eigenvalue", float(np.min(eig)))

    def __len__(self):
        return self.matrices.shape[0]

    @property
    def max_diagonal_error(self):
        return float(np.max(np.abs(np.diagonal(self.matrices, axis1=1, axis2=2) - 1.0)))

    def pair_series(self):
        """Yield ``((name_i, name_j), rho_t)`` for every pair i < j."""
        n = self.matrices.shape[1]
        names = self.names or tuple(f"s{i + 1}" for i in range(n))
        for i in range(n):
            for j in range(i + 1, n):
                yield (names[i], names[j]), self.matrices[:, i, j]


@dataclass(frozen=True)
class TargetingResult:
    r_bar: np.ndarray
    n_iter: int
    converged: bool
    max_change: float


@dataclass(frozen=True)
class CorrFit:
    kind: str
    params: dict
    r_bar: np.ndarray
    path: CorrelationPath
    loglik: float
    robust_se: dict
    n_params: int
    nobs: int
    boundary: tuple = ()
    converged: bool = True
    hessian_se: dict = None
    targeting: TargetingResult = None

    @property
    def aic(self):
        return aic(self.loglik, self.n_params, self.nobs)

    @property
    def at_boundary(self):
        return bool(self.boundary)


def sample_correlation(x):
    """Pearson correlation matrix of the columns, with an exactly unit diagonal."""
    x = np.asarray(x, dtype=np.float64)
    d = x - x.mean(axis=0)
    cov = d.T @ d
    sd = np.sqrt(np.diag(cov))
    if np.any(sd == 0.0):
        raise NumericalError("a column has zero variance")
    r = cov / np.outer(sd, sd)
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return r


def hadamard_gate(r_prev, phi_A):
    """Element-wise news gate exp(phi_A * (R_{t-1} - 1)); entries in (0, 1]."""
    r_prev = np.asarray(r_prev, dtype=np.float64)
    if phi_A < 0.0:
        raise InputError("phi_A must be non-negative")
    if np.any(np.abs(r_prev) > 1.0 + 1e-12):
        raise InputError("r_prev entries must lie in [-1, 1]")
    return np.exp(phi_A * (r_prev - 1.0))


def _check_params(kind, params):
    kind = kind.upper()
    if kind == "DCC":
        if not isinstance(params, DccParams):
            params = DccParams(*params) if not isinstance(params, dict) else DccParams(params["a"], params["b"])
        return kind, params.a, params.b, 0.0
    if kind == "NLARC":
        if isinstance(params, dict):
            params = NlarcParams(params["a"], params["b"], params["phi_A"])
        elif not isinstance(params, NlarcParams):
            params = NlarcParams(*params)
        return kind, params.a, params.b, params.phi_A
    raise InputError(f"unknown dynamic model {kind!r}")


def _run(eps, a, b, phi, r_bar, gated, q_init=None):
    q0 = r_bar if q_init is None else q_init
    return corr_recursion(eps, float(a), float(b), float(phi), r_bar, np.ascontiguousarray(q0, dtype=np.float64),
                          gated)


def _make_path(q, r, dates=None, names=None):
    bad = ~np.isfinite(r).all(axis=(1, 2))
    if np.any(bad):
        raise NumericalError(f"correlation recursion became non-finite at t={int(np.argmax(bad)) + 1}")
    return CorrelationPath(r, q, dates=dates, names=names)


def dcc_filter(eps, params, r_bar, q_init=None):
    """Corrected-DCC path with Q_1 = ``q_init`` (default R-bar)."""
    x, dates, names = unpack_panel(eps)
    _, a, b, _ = _check_params("DCC", params)
    rb = check_correlation_matrix(r_bar, x.shape[1])
    q, r = _run(x, a, b, 0.0, rb, False, q_init)
    return _make_path(q, r, dates, names)


def nlarc_filter(eps, params, r_bar, q_init=None):
    """NLARC path: the DCC recursion with the news term gated by the lagged correlations."""
    x, dates, names = unpack_panel(eps)
    _, a, b, phi = _check_params("NLARC", params)
    rb = check_correlation_matrix(r_bar, x.shape[1])
    q, r = _run(x, a, b, phi, rb, True, q_init)
    return _make_path(q, r, dates, names)


def corr_obs_loglik(eps, path):
    """Per-observation Gaussian log-densities; raises if some R_t is not PD."""
    x, _, _ = unpack_panel(eps)
    r = path.matrices if isinstance(path, CorrelationPath) else np.asarray(path, dtype=np.float64)
    if r.shape[0] != x.shape[0] or r.shape[1:] != (x.shape[1], x.shape[1]):
        raise InputError(f"path shape {r.shape} does not match panel shape {x.shape}")
    out = gaussian_corr_obs_loglik(x, np.ascontiguousarray(r))
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"R_t is not positive definite at t={int(np.argmax(~np.isfinite(out))) + 1}")
    return out


def corr_loglik(eps, path):
    return float(np.sum(corr_obs_loglik(eps, path)))


def _target(x, a, b, phi, gated, r_init=None, tol=TARGET_TOL, max_iter=TARGET_MAX_ITER):
    """Fixed point R = corr(D_t e_t); also returns the path filtered with the final R."""
    r_bar = sample_correlation(x) if r_init is None else r_init
    change = np.inf
    q = r = None
    for it in range(1, max_iter + 1):
        q, r = _run(x, a, b, phi, r_bar, gated)
        d = np.sqrt(np.diagonal(q, axis1=1, axis2=2))
        if not np.all(np.isfinite(d)):
            raise NumericalError("quasi-correlation diagonal became non-positive during targeting")
        new = sample_correlation(d * x)
        change = float(np.max(np.abs(new - r_bar)))
        same = change == 0.0
        r_bar = new
        if change < tol:
            if not same:
                q, r = _run(x, a, b, phi, r_bar, gated)
            return TargetingResult(r_bar, it, True, change), q, r
    q, r = _run(x, a, b, phi, r_bar, gated)
    return TargetingResult(r_bar, max_iter, False, change), q, r


def target_r_bar(eps, kind, params, tol=TARGET_TOL, max_iter=TARGET_MAX_ITER):
    """Correlation target as the fixed point of the sample correlation of Q~_t e_t.

    Starts from the sample correlation of ``eps`` and alternates filtering and
    re-estimation until the largest entry change is below ``tol``.  When the
    iteration limit is hit the last iterate is returned with
    ``converged=False``.
    """
    x, _, _ = unpack_panel(eps, min_cols=2)
    kind = kind.upper()
    if kind == "CCC":
        return TargetingResult(sample_correlation(x), 1, True, 0.0)
    kind, a, b, phi = _check_params(kind, params)
    res, _, _ = _target(x, a, b, phi, kind == "NLARC", tol=tol, max_iter=max_iter)
    if not res.converged:
        logger.warning("correlation targeting did not converge (max change %.3g)", res.max_change)
    return res


def _check_estimation_panel(eps):
    x, dates, names = unpack_panel(eps, min_cols=2)
    t, n = x.shape
    if t <= n + 5:
        raise InputError(f"need T > N + 5 observations, got T={t}, N={n}")
    r = sample_correlation(x)
    if np.linalg.eigvalsh(r)[0] <= 1e-12:
        raise NumericalError("singular correlation: the residual columns are collinear")
    return x, dates, names, r


def ccc_estimate(eps):
    """Constant correlation at the sample correlation of the residuals."""
    x, dates, names, r = _check_estimation_panel(eps)
    t = x.shape[0]
    mats = np.broadcast_to(r, (t,) + r.shape).copy()
    path = CorrelationPath(mats, mats.copy(), float(np.linalg.eigvalsh(r)[0]), dates, names)
    loglik = float(np.sum(corr_obs_loglik(x, path)))
    return CorrFit("CCC", {}, r, path, loglik, {}, 0, t, (), True, {},
                   TargetingResult(r, 1, True, 0.0))


def _natural(z, gated):
    """Unconstrained (logit a+b, logit a-share[, log phi]) -> (a, b, phi)."""
    s = special.expit(np.clip(z[0], -_LOGIT_BOUND, _LOGIT_BOUND))
    w = special.expit(np.clip(z[1], -_LOGIT_BOUND, _LOGIT_BOUND))
    phi = float(np.exp(np.clip(z[2], *_LOG_PHI_BOUNDS))) if gated else 0.0
    return s * w, s * (1.0 - w), phi


def _unconstrained(a, b, phi=None):
    s = a + b
    out = [special.logit(s), special.logit(a / s)]
    if phi is not None:
        out.append(np.log(phi))
    return np.array(out)


class _Objective:
    """Average log-likelihood with the correlation target profiled out."""

    def __init__(self, x, gated):
        self.x = x
        self.gated = gated
        self.r0 = sample_correlation(x)

    def obs(self, a, b, phi):
        if a < 0.0 or b < 0.0 or phi < 0.0:
            return np.full(self.x.shape[0], -np.inf)
        try:
            _, _, r = _target(self.x, a, b, phi, self.gated, r_init=self.r0)
        except NumericalError:
            return np.full(self.x.shape[0], -np.inf)
        return gaussian_corr_obs_loglik(self.x, r)

    def mean(self, a, b, phi):
        ll = self.obs(a, b, phi)
        return float(np.mean(ll)) if np.all(np.isfinite(ll)) else -np.inf

    def neg(self, z):
        return -self.mean(*_natural(z, self.gated))


def _optimize(obj, starts, maxiter=500, gtol=1e-6):
    best = None
    for z0 in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(obj.neg, z0, method="BFGS", options={"gtol": gtol, "maxiter": maxiter})
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise NumericalError("correlation likelihood optimization failed from every start")
    return best


def fit_corr(eps, kind="DCC", compute_se=True):
    """Maximum-likelihood fit of a CCC, DCC or NLARC correlation model.

    The correlation target is profiled inside every likelihood evaluation.
    Parameters are optimized on an unconstrained scale (logistic allocation of
    a + b < 1, log map for phi_A) from a fixed grid of starts.  Optima that
    are not beaten by the matching boundary point (a = 0, or phi_A = 0) are
    moved onto the boundary and flagged, so the nesting NLARC >= DCC >= CCC
    always holds for the maximized log-likelihoods.
    """
    kind = kind.upper()
    if kind not in MODEL_KINDS:
        raise InputError(f"unknown model {kind!r}, expected one of {MODEL_KINDS}")
    if kind == "CCC":
        return ccc_estimate(eps)
    x, dates, names, _ = _check_estimation_panel(eps)
    gated = kind == "NLARC"
    obj = _Objective(x, gated)

    if gated:
        dcc = fit_corr(eps, "DCC", compute_se=False)
        starts = [_unconstrained(a, b, phi) for a, b in DCC_STARTS for phi in NLARC_PHI_STARTS]
    else:
        starts = [_unconstrained(a, b) for a, b in DCC_STARTS]
    res = _optimize(obj, starts)
    a, b, phi = _natural(res.x, gated)
    best_ll = -res.fun
    converged = bool(res.success) or float(np.max(np.abs(res.jac))) < 1e-4
    boundary = []

    if gated:
        if dcc.loglik / x.shape[0] >= best_ll:
            a, b, phi = dcc.params["a"], dcc.params["b"], 0.0
            best_ll = dcc.loglik / x.shape[0]
            converged = dcc.converged
            boundary = list(dcc.boundary)
            if "phi_A" not in boundary:
                boundary.append("phi_A")
    if "a" not in boundary:
        at_zero = obj.mean(0.0, b, phi)
        if at_zero >= best_ll:
            a, best_ll = 0.0, at_zero
            boundary.insert(0, "a")
    if gated and "phi_A" not in boundary and phi < fd_steps([phi])[0]:
        boundary.append("phi_A")
    if "a" not in boundary and a < fd_steps([a])[0]:
        boundary.insert(0, "a")

    targeting, q, r = _target(x, a, b, phi, gated, r_init=obj.r0)
    path = _make_path(q, r, dates, names)
    obs = gaussian_corr_obs_loglik(x, r)
    if not np.all(np.isfinite(obs)):
        raise NumericalError("fitted correlation path is not positive definite")
    loglik = float(np.sum(obs))
    params = NlarcParams(a, b, phi).as_dict() if gated else DccParams(a, b).as_dict()
    names_p = list(params)

    se = {k: np.nan for k in names_p}
    hse = dict(se)
    if compute_se:
        theta = np.array([params[k] for k in names_p])
        pinned = np.array([k in boundary for k in names_p])

        def obs_fn(th):
            p = dict(zip(names_p, th))
            return obj.obs(p["a"], p["b"], p.get("phi_A", 0.0))

        sw = sandwich_from_obs(obs_fn, theta, pinned=pinned)
        se = {k: float(v) for k, v in zip(names_p, sw.se)}
        hse = {k: float(v) for k, v in zip(names_p, sw.hessian_se)}
    return CorrFit(kind, params, targeting.r_bar, path, loglik, se, N_PARAMS[kind], x.shape[0],
                   tuple(boundary), converged, hse, targeting)


class ConditionalCorrelation(BaseEstimator):
    """Conditional correlation model with the scikit-learn estimator interface.

    Parameters
    ----------
    model : {"ccc", "dcc", "nlarc"}
    compute_se : bool
        Attach robust standard errors after fitting.

    Attributes
    ----------
    fit_ : CorrFit
    params_ : dict
    r_bar_ : ndarray
    loglik_ : float
    """

    def __init__(self, model="dcc", compute_se=True):
        self.model = model
        self.compute_se = compute_se

    def fit(self, X, _=None):
        self.fit_ = fit_corr(X, self.model, compute_se=self.compute_se)
        self.params_ = dict(self.fit_.params)
        self.r_bar_ = self.fit_.r_bar
        self.loglik_ = self.fit_.loglik
        self.se_ = dict(self.fit_.robust_se)
        return self

    def _path(self, X):
        check_is_fitted(self, "fit_")
        x, dates, names = unpack_panel(X, min_cols=2)
        kind = self.fit_.kind
        if kind == "CCC":
            r = np.broadcast_to(self.r_bar_, (x.shape[0],) + self.r_bar_.shape).copy()
            return CorrelationPath(r, r.copy(), dates=dates, names=names)
        if kind == "DCC":
            return dcc_filter(X, self.params_, self.r_bar_)
        return nlarc_filter(X, self.params_, self.r_bar_)

    def predict(self, X):
        """Conditional correlation matrices R_t for a residual panel, shape (T, N, N)."""
        return self._path(X).matrices

    def score(self, X, _=None):
        """Log-likelihood of ``X`` under the fitted parameters and target."""
        return corr_loglik(X, self._path(X))

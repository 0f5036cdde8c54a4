"""Exact data-generating processes and Monte Carlo parameter-recovery harness.

All randomness comes from ``numpy.random.Generator(PCG64(seed))``; normal
draws use numpy's ziggurat sampler, so ``(spec, seed)`` fixes the output.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_correlation_matrix
from .correlation import fit_corr
from .diagnostics import ArmaSpec
from .exceptions import InputError, NumericalError
from .inference import lr_test
from .volatility import GarchParams, first_step, fit_garch

logger = logging.getLogger(__name__)

__all__ = [
    "SimSpec",
    "SimulatedPanel",
    "RecoveryReport",
    "make_rng",
    "equicorrelation",
    "simulate_garch",
    "simulate_corr_panel",
    "recovery_experiment",
]

SIM_KINDS = ("garch_univariate", "ccc", "dcc", "nlarc")


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(int(seed)))


def equicorrelation(n, rho):
    r = np.full((n, n), float(rho))
    np.fill_diagonal(r, 1.0)
    return r


@dataclass(frozen=True)
class SimSpec:
    """What to simulate.

    ``params`` holds ``omega/alpha/beta`` for ``garch_univariate`` and
    ``a/b[/phi_A]`` for the correlation models.  ``garch`` optionally wraps
    each column of a correlation panel in a GARCH(1,1) variance layer; use
    ``None`` entries for columns that stay homoskedastic.
    """

    kind: str
    length: int
    params: dict = field(default_factory=dict)
    n_series: int = 1
    r_bar: np.ndarray = None
    burn_in: int = 500
    seed: int = 0
    garch: tuple = None

    def __post_init__(self):
        if self.kind not in SIM_KINDS:
            raise InputError(f"unknown simulation kind {self.kind!r}")
        if self.length < 1:
            raise InputError("length must be positive")
        if self.burn_in < 100:
            raise InputError("burn_in must be at least 100")
        if self.kind == "garch_univariate":
            GarchParams(**self.params)
            return
        if self.r_bar is None:
            raise InputError("correlation simulations need r_bar")
        rb = check_correlation_matrix(self.r_bar)
        object.__setattr__(self, "r_bar", rb)
        object.__setattr__(self, "n_series", rb.shape[0])
        if self.kind in ("dcc", "nlarc"):
            a, b = float(self.params.get("a", 0.0)), float(self.params.get("b", 0.0))
            if a < 0 or b < 0 or a + b >= 1:
                raise InputError(f"invalid DCC parameters a={a}, b={b}")
        if self.kind == "nlarc" and float(self.params.get("phi_A", 0.0)) < 0:
            raise InputError("phi_A must be non-negative")
        if self.garch is not None:
            layers = tuple(None if g is None else (g if isinstance(g, GarchParams) else GarchParams(*g))
                           for g in self.garch)
            if len(layers) != rb.shape[0]:
                raise InputError("need one GARCH layer (or None) per column")
            object.__setattr__(self, "garch", layers)


@dataclass(frozen=True)
class SimulatedPanel:
    data: np.ndarray  # observed y (GARCH layers applied)
    eps: np.ndarray  # standardized correlated shocks
    variances: np.ndarray  # conditional variances, ones for plain columns
    r_path: np.ndarray = field(repr=False)
    q_path: np.ndarray = field(repr=False)
    spec: SimSpec = None


def simulate_garch(spec, return_variance=False):
    """Simulate y_t = h_t z_t from a GARCH(1,1), started at the unconditional variance."""
    if spec.kind != "garch_univariate":
        raise InputError("simulate_garch needs kind='garch_univariate'")
    p = GarchParams(**spec.params)
    z = make_rng(spec.seed).standard_normal(spec.burn_in + spec.length)
    y, h = _garch_layer(z, p)
    y, h = y[spec.burn_in:], h[spec.burn_in:]
    return (y, h) if return_variance else y


def _garch_layer(z, p):
    n = z.shape[0]
    y = np.empty(n)
    h = np.empty(n)
    ht = p.unconditional_variance
    for t in range(n):
        h[t] = ht
        y[t] = np.sqrt(ht) * z[t]
        ht = p.omega + p.alpha * y[t] * y[t] + p.beta * ht
    return y, h


def simulate_corr_panel(spec):
    """Run a correlation model forward, drawing e_t ~ N(0, R_t) via a Cholesky factor.

    The recorded ``q_path[0]`` is the quasi-correlation matrix at the first
    kept date, so filtering ``eps`` from that state reproduces ``r_path``.
    """
    if spec.kind == "garch_univariate":
        raise InputError("use simulate_garch for univariate simulations")
    n, total = spec.n_series, spec.burn_in + spec.length
    rb = spec.r_bar
    z = make_rng(spec.seed).standard_normal((total, n))
    a = float(spec.params.get("a", 0.0)) if spec.kind != "ccc" else 0.0
    b = float(spec.params.get("b", 0.0)) if spec.kind != "ccc" else 0.0
    phi = float(spec.params.get("phi_A", 0.0))
    gated = spec.kind == "nlarc"

    eps = np.empty((total, n))
    q_path = np.empty((total, n, n))
    r_path = np.empty((total, n, n))
    q = rb.copy()
    for t in range(total):
        d = np.sqrt(np.diag(q))
        r = q / np.outer(d, d)
        np.fill_diagonal(r, 1.0)
        q_path[t] = q
        r_path[t] = r
        try:
            chol = np.linalg.cholesky(r)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"simulated R_t lost positive definiteness at t={t}") from exc
        eps[t] = chol @ z[t]
        u = d * eps[t]
        shock = np.outer(u, u)
        if gated:
            shock = shock * np.exp(phi * (r - 1.0))
        q = rb + a * (shock - rb) + b * (q - rb)

    data = eps.copy()
    variances = np.ones_like(eps)
    for j, layer in enumerate(spec.garch or ()):
        if layer is not None:
            data[:, j], variances[:, j] = _garch_layer(eps[:, j], layer)
    keep = slice(spec.burn_in, None)
    return SimulatedPanel(data[keep], eps[keep], variances[keep], r_path[keep], q_path[keep], spec)


@dataclass
class RecoveryReport:
    spec: SimSpec
    names: tuple
    truth: np.ndarray
    estimates: np.ndarray  # replications x parameters
    std_errors: np.ndarray
    converged: np.ndarray
    failures: int
    lr_dcc_vs_ccc: np.ndarray = None
    min_eigenvalue: float = np.inf
    max_diag_error: float = 0.0
    errors: list = field(default_factory=list)

    @property
    def replications(self):
        return self.estimates.shape[0]

    def bias(self):
        return np.nanmean(self.estimates, axis=0) - self.truth

    def rmse(self):
        return np.sqrt(np.nanmean((self.estimates - self.truth) ** 2, axis=0))

    def coverage(self, k=2.0):
        """Share of replications whose +-k SE interval covers the truth.

        Failed replications and unavailable standard errors count as misses.
        """
        hit = np.abs(self.estimates - self.truth) <= k * self.std_errors
        return np.mean(np.where(np.isfinite(self.std_errors), hit, False), axis=0)

    def rows(self, k=2.0):
        cov = self.coverage(k)
        mean = np.nanmean(self.estimates, axis=0)
        rmse = self.rmse()
        return [
            {"parameter": n, "truth": float(t), "mean_estimate": float(m), "rmse": float(r),
             "coverage": float(c)}
            for n, t, m, r, c in zip(self.names, self.truth, mean, rmse, cov)
        ]

    def lr_rejection_rate(self):
        if self.lr_dcc_vs_ccc is None:
            return np.nan
        return float(np.mean([s > 4.605170185988091 for s in self.lr_dcc_vs_ccc if np.isfinite(s)]))


def _param_names(spec, fit_kind):
    if spec.kind == "garch_univariate":
        return ("omega", "alpha", "beta")
    names = ["a", "b"] if fit_kind == "DCC" else ["phi_A", "a", "b"] if fit_kind == "NLARC" else []
    for j, layer in enumerate(spec.garch or ()):
        if layer is not None:
            names += [f"alpha[{j + 1}]", f"beta[{j + 1}]"]
    return tuple(names)


def _truth(spec, names):
    out = []
    for name in names:
        if "[" in name:
            base, j = name[:-1].split("[")
            out.append(getattr(spec.garch[int(j) - 1], base))
        else:
            out.append(float(spec.params.get(name, 0.0)))
    return np.array(out)


def _one_replication(spec, fit_kind):
    if spec.kind == "garch_univariate":
        fit = fit_garch(simulate_garch(spec))
        return fit.params.to_array(), fit.std_errors, fit.converged, np.nan, None

    sim = simulate_corr_panel(spec)
    est, se = [], []
    if spec.garch is not None:
        n = spec.n_series
        flags = [g is not None for g in spec.garch]
        panel = first_step(sim.data, [ArmaSpec(0, 0)] * n, flags)
        eps = panel.matrix
        garch_part = [(g.params.alpha, g.params.beta, g.std_errors[1], g.std_errors[2], g.converged)
                      for g, f in zip(panel.garch_fits, flags) if f]
    else:
        eps, garch_part = sim.eps, []
    fit = fit_corr(eps, fit_kind)
    ccc = fit_corr(eps, "CCC")
    for k in fit.params:
        est.append(fit.params[k])
        se.append(fit.robust_se[k])
    converged = fit.converged
    for a_, b_, sa, sb, ok in garch_part:
        est += [a_, b_]
        se += [sa, sb]
        converged = converged and ok
    lr = lr_test(ccc.loglik, fit.loglik, 2).statistic if fit_kind != "CCC" else np.nan
    return np.array(est), np.array(se), converged, lr, fit.path


def recovery_experiment(spec, replications, fit_kind=None):
    """Simulate, estimate and summarize ``replications`` times.

    Replication ``i`` uses seed ``spec.seed + i``.  Panels with GARCH layers
    go through the full two-step estimator (demeaning, GARCH on the layered
    columns, de-GARCHing) before the correlation fit.  Failures are counted,
    never raised.
    """
    if replications < 1:
        raise InputError("replications must be at least 1")
    fit_kind = (fit_kind or ("DCC" if spec.kind == "ccc" else spec.kind)).upper()
    if spec.kind == "garch_univariate":
        fit_kind = "GARCH"
    names = _param_names(spec, fit_kind)
    k = len(names)
    est = np.full((replications, k), np.nan)
    se = np.full((replications, k), np.nan)
    conv = np.zeros(replications, dtype=bool)
    lr = np.full(replications, np.nan)
    failures, errors = 0, []
    min_eig, max_diag = np.inf, 0.0
    for i in range(replications):
        rep = replace(spec, seed=spec.seed + i)
        try:
            e, s, ok, stat, path = _one_replication(rep, fit_kind)
        except (InputError, NumericalError) as exc:
            failures += 1
            errors.append(f"replication {i}: {exc}")
            logger.warning("replication %d failed: %s", i, exc)
            continue
        est[i], se[i], conv[i], lr[i] = e, s, ok, stat
        if path is not None:
            min_eig = min(min_eig, path.min_eigenvalue)
            max_diag = max(max_diag, path.max_diagonal_error)
    return RecoveryReport(spec, names, _truth(spec, names), est, se, conv, failures,
                          lr if spec.kind != "garch_univariate" else None, min_eig, max_diag, errors)

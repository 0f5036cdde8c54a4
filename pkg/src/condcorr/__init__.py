"""Two-step conditional-correlation estimation: GARCH(1,1) first step, CCC/DCC/NLARC second step."""
__version__ = "0.1.0"

from .correlation import (
    ConditionalCorrelation,
    CorrFit,
    DccParams,
    NlarcParams,
    dcc_filter,
    fit_corr,
    nlarc_filter,
    corr_loglik,
    target_r_bar,
)
from .data import AlignedPanel, RawSeries, TransformSpec, align_panel, apply_transform, load_series_csv
from .diagnostics import ARMA, ArmaSpec, adf_test, arch_lm_test, fit_arma, select_arma_order
from .exceptions import (
    CondCorrError,
    ConfigError,
    FetchError,
    InputError,
    NumericalError,
    PipelineError,
)
from .inference import aic, lr_test, robust_se, rolling_correlation
from .simulation import SimSpec, recovery_experiment, simulate_corr_panel, simulate_garch
from .volatility import GARCH11, FirstStep, GarchParams, first_step, fit_garch, garch_filter

__all__ = [
    "ARMA",
    "AlignedPanel",
    "ArmaSpec",
    "CondCorrError",
    "ConditionalCorrelation",
    "ConfigError",
    "CorrFit",
    "DccParams",
    "FetchError",
    "FirstStep",
    "GARCH11",
    "GarchParams",
    "InputError",
    "NlarcParams",
    "NumericalError",
    "PipelineError",
    "RawSeries",
    "SimSpec",
    "TransformSpec",
    "adf_test",
    "aic",
    "align_panel",
    "apply_transform",
    "arch_lm_test",
    "corr_loglik",
    "dcc_filter",
    "first_step",
    "fit_arma",
    "fit_corr",
    "fit_garch",
    "garch_filter",
    "load_series_csv",
    "lr_test",
    "nlarc_filter",
    "recovery_experiment",
    "robust_se",
    "rolling_correlation",
    "select_arma_order",
    "simulate_corr_panel",
    "simulate_garch",
    "target_r_bar",
]

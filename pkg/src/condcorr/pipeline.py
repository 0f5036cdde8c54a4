"""Config-driven orchestration from raw CSVs to tables, paths and a manifest.

Config files are INI text with one ``[run]`` section and one
``[series NAME]`` section per input, in column order::

    [run]
    start = 2020-03-05
    end = 2020-11-03
    models = CCC, DCC, NLARC
    output = out/2020

    [series polls]
    path = data/polls.csv
    value_column = pct
    log = auto
    diff = auto

Keys of ``[run]``: start, end, models, output, seed, arma_max_p, arma_max_q,
arch_lags, rolling_window, adf_max_lag, cache_dir.  Keys of a series section:
path or url, date_column, value_column, log (auto/true/false), diff
(auto/0/1).  Any other key or section is an error.  Relative paths resolve
against the config file's directory.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import logging
import shutil
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .correlation import DCC_STARTS, MODEL_KINDS, NLARC_PHI_STARTS, TARGET_MAX_ITER, TARGET_TOL, fit_corr
from .data import (
    TransformSpec,
    align_panel,
    apply_transform,
    fetch_remote_series,
    load_series_csv,
    window_series,
    write_panel_csv,
)
from .diagnostics import adf_test, arch_lm_test, select_arma_order
from .exceptions import CondCorrError, ConfigError, InputError, PipelineError
from .inference import aic, lr_test, rolling_correlation
from .report import emit_garch_table, emit_table1, emit_table2, write_pair_paths
from .volatility import GARCH_GTOL, GARCH_MAXITER, GARCH_MIN_LENGTH, GARCH_STARTS, first_step

logger = logging.getLogger(__name__)

__all__ = ["SeriesSource", "PipelineConfig", "PipelineResult", "load_config", "parse_config", "run_pipeline"]

_RUN_KEYS = {"start", "end", "models", "output", "seed", "arma_max_p", "arma_max_q", "arch_lags",
             "rolling_window", "adf_max_lag", "cache_dir"}
_SERIES_KEYS = {"path", "url", "date_column", "value_column", "log", "diff"}


@dataclass(frozen=True)
class SeriesSource:
    name: str
    path: str = None
    url: str = None
    date_column: str = "date"
    value_column: str = "value"
    log: str = "auto"
    diff: str = "auto"

    def __post_init__(self):
        if (self.path is None) == (self.url is None):
            raise ConfigError(f"series {self.name!r}: give exactly one of path or url")
        if self.log not in ("auto", "true", "false"):
            raise ConfigError(f"series {self.name!r}: log must be auto, true or false")
        if self.diff not in ("auto", "0", "1"):
            raise ConfigError(f"series {self.name!r}: diff must be auto, 0 or 1")


@dataclass(frozen=True)
class PipelineConfig:
    series: tuple
    start: str = None
    end: str = None
    models: tuple = MODEL_KINDS
    output: str = "condcorr-out"
    seed: int = 0
    arma_max_p: int = 3
    arma_max_q: int = 3
    arch_lags: int = 5
    rolling_window: int = 5
    adf_max_lag: int = None
    cache_dir: str = ".condcorr-cache"

    def __post_init__(self):
        if len(self.series) < 2:
            raise ConfigError("need at least two series")
        names = [s.name for s in self.series]
        if len(set(names)) != len(names):
            raise ConfigError("series names must be unique")
        for label in ("start", "end"):
            value = getattr(self, label)
            if value is not None:
                try:
                    np.datetime64(value, "D")
                except ValueError:
                    raise ConfigError(f"{label}: cannot parse date {value!r}") from None
        if self.start is not None and self.end is not None:
            if np.datetime64(self.start, "D") >= np.datetime64(self.end, "D"):
                raise ConfigError("window start must be before end")
        models = tuple(m.upper() for m in self.models)
        if not models:
            raise ConfigError("request at least one model")
        bad = [m for m in models if m not in MODEL_KINDS]
        if bad:
            raise ConfigError(f"unknown models {bad}; choose from {MODEL_KINDS}")
        object.__setattr__(self, "models", tuple(m for m in MODEL_KINDS if m in models))
        for key in ("arma_max_p", "arma_max_q"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative")
        if self.arch_lags < 1:
            raise ConfigError("arch_lags must be at least 1")
        if self.rolling_window < 2:
            raise ConfigError("rolling_window must be at least 2")

    def to_dict(self):
        out = asdict(self)
        out["series"] = [asdict(s) for s in self.series]
        out["models"] = list(self.models)
        return out


def _int(section, key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}") from None


def _resolve(base, value):
    if value is None:
        return None
    p = Path(value)
    return str(p if p.is_absolute() or base is None else (base / p))


def parse_config(text, base_dir=None):
    """Parse INI text into a :class:`PipelineConfig`."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    base = None if base_dir is None else Path(base_dir)
    run, sources = {}, []
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "run":
            unknown = set(items) - _RUN_KEYS
            if unknown:
                raise ConfigError(f"[run]: unknown keys {sorted(unknown)}")
            run = items
        elif section.startswith("series "):
            name = section[len("series "):].strip()
            unknown = set(items) - _SERIES_KEYS
            if not name:
                raise ConfigError(f"[{section}]: missing series name")
            if unknown:
                raise ConfigError(f"[{section}]: unknown keys {sorted(unknown)}")
            items["path"] = _resolve(base, items.get("path"))
            items["log"] = items.get("log", "auto").lower()
            items["diff"] = items.get("diff", "auto").lower()
            sources.append(SeriesSource(name=name, **items))
        else:
            raise ConfigError(f"unknown section [{section}]")
    kwargs = {"series": tuple(sources)}
    for key in ("start", "end"):
        if key in run:
            kwargs[key] = run[key].strip()
    if "models" in run:
        kwargs["models"] = tuple(m.strip() for m in run["models"].split(",") if m.strip())
    for key in ("seed", "arma_max_p", "arma_max_q", "arch_lags", "rolling_window", "adf_max_lag"):
        if key in run:
            kwargs[key] = _int("run", key, run[key])
    kwargs["output"] = _resolve(base, run.get("output", "condcorr-out"))
    kwargs["cache_dir"] = _resolve(base, run.get("cache_dir", ".condcorr-cache"))
    return PipelineConfig(**kwargs)


def config_from_dict(d):
    d = dict(d)
    unknown = set(d) - _RUN_KEYS - {"series"}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        sources = tuple(SeriesSource(**s) for s in d.pop("series"))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad series entry: {exc}") from exc
    if "models" in d:
        d["models"] = tuple(d["models"])
    return PipelineConfig(series=sources, **d)


def load_config(path):
    """Read an INI config, or the ``config`` block of a run manifest (JSON)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if "config" not in doc:
            raise ConfigError(f"{path}: not a run manifest (no 'config' block)")
        return config_from_dict(doc["config"])
    return parse_config(text, base_dir=path.parent)


@dataclass
class PipelineResult:
    config: PipelineConfig
    output_dir: Path
    manifest: dict
    panel: object = None
    degarched: object = None
    fits: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    rolling: object = None
    files: list = field(default_factory=list)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _float(x):
    x = float(x)
    return x if np.isfinite(x) else None


class _Run:
    def __init__(self, config):
        self.config = config
        self.out = Path(config.output)
        self.files = []
        self.stage = "setup"
        self.series = None

    def path(self, name):
        p = self.out / name
        self.files.append(name)
        return p

    def table(self, table, stem):
        table.write(self.out / stem)
        self.files += [f"{stem}.csv", f"{stem}.txt"]

    def fail(self, exc):
        failed = self.out / "failed"
        failed.mkdir(parents=True, exist_ok=True)
        for name in self.files:
            src = self.out / name
            if src.exists():
                shutil.move(str(src), str(failed / name))
        report = {"stage": self.stage, "series": self.series, "error": str(exc),
                  "error_type": type(exc).__name__}
        (failed / "error.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _load(src, cfg):
    if src.url is not None:
        return fetch_remote_series(src.url, src.date_column, src.value_column, name=src.name,
                                   cache_dir=cfg.cache_dir)
    return load_series_csv(src.path, src.date_column, src.value_column, name=src.name)


def _input_hash(src, raw):
    h = hashlib.sha256()
    h.update(np.asarray(raw.dates, dtype="datetime64[D]").astype(np.int64).tobytes())
    h.update(np.ascontiguousarray(raw.values, dtype=np.float64).tobytes())
    return h.hexdigest()


def run_pipeline(config):
    """Run every stage, write all artifacts and return a :class:`PipelineResult`.

    On failure the partial artifacts are moved to ``<output>/failed/`` next to
    an ``error.json`` and a :class:`PipelineError` naming the stage (and the
    series, when one is to blame) is raised.
    """
    run = _Run(config)
    run.out.mkdir(parents=True, exist_ok=True)
    if (run.out / "failed").exists():
        shutil.rmtree(run.out / "failed")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = _execute(run)
        for w in caught:
            logger.warning("%s", w.message)
        return result
    except CondCorrError as exc:
        run.fail(exc)
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(run.stage, str(exc), run.series, exc) from exc
    except (ValueError, ArithmeticError, OSError) as exc:
        run.fail(exc)
        raise PipelineError(run.stage, str(exc), run.series, exc) from exc


def _execute(run):
    cfg = run.config
    manifest = {"package": "condcorr", "version": __version__, "config": cfg.to_dict(), "seed": cfg.seed}

    run.stage = "load"
    raws = []
    for src in cfg.series:
        run.series = src.name
        raws.append(_load(src, cfg))
    run.series = None
    manifest["inputs"] = [{"series": s.name, "rows": len(r), "dropped_rows": r.dropped,
                           "sha256": _input_hash(s, r)} for s, r in zip(cfg.series, raws)]

    run.stage = "window"
    windowed = []
    for r in raws:
        run.series = r.name
        w = window_series(r, cfg.start, cfg.end)
        if len(w) == 0:
            raise InputError("no observations inside the window")
        windowed.append(w)
    run.series = None

    run.stage = "align"
    aligned = align_panel(windowed)
    manifest["alignment"] = {"policy": "inner_join", "rows": int(aligned.matrix.shape[0]),
                             "first_date": str(aligned.dates[0]), "last_date": str(aligned.dates[-1])}

    run.stage = "adf"
    specs, stationarity = [], []
    for j, src in enumerate(cfg.series):
        run.series = src.name
        x = aligned.matrix[:, j]
        use_log = {"true": True, "false": False}.get(src.log, bool(np.all(x > 0.0)))
        level = np.log(x) if use_log else x
        if src.diff == "auto":
            adf = adf_test(level, cfg.adf_max_lag)
            order = 0 if adf.stationary else 1
            record = {"series": src.name, "log": use_log, "adf_statistic": adf.statistic,
                      "adf_lags": adf.lags_used, "adf_nobs": adf.nobs,
                      "adf_critical_5pct": adf.critical_values["5%"], "adf_p_value": adf.p_value,
                      "difference": order, "decided_by": "adf_5pct"}
        else:
            order = int(src.diff)
            record = {"series": src.name, "log": use_log, "difference": order, "decided_by": "config"}
        specs.append(TransformSpec(use_log, order))
        stationarity.append(record)
    run.series = None
    manifest["transforms"] = stationarity

    run.stage = "transform"
    panel = apply_transform(aligned, specs)
    panel.require_estimable()
    write_panel_csv(run.path("panel.csv"), panel.dates, panel.matrix, panel.names)

    run.stage = "arma"
    arma_fits = []
    for j, name in enumerate(panel.names):
        run.series = name
        spec, fits = select_arma_order(panel.matrix[:, j], cfg.arma_max_p, cfg.arma_max_q, return_fits=True)
        arma_fits.append(fits[(spec.p, spec.q)])
    run.series = None

    run.stage = "arch"
    arch = []
    for name, af in zip(panel.names, arma_fits):
        run.series = name
        arch.append(arch_lm_test(af.residuals, cfg.arch_lags))
    run.series = None
    flags = [r.heteroskedastic_at_5pct for r in arch]
    table1 = emit_table1({"series": n, "differenced": s.differencing_order == 1, "p": f.spec.p,
                          "q": f.spec.q, "arch_pvalue": r.p_value}
                         for n, s, f, r in zip(panel.names, specs, arma_fits, arch))
    run.table(table1, "table1")
    manifest["diagnostics"] = [
        {"series": n, "arma_order": [f.spec.p, f.spec.q], "arma_aic": f.aic, "arma_converged": f.converged,
         "arch_lm_statistic": r.statistic, "arch_lm_lags": r.lags, "arch_lm_p_value": r.p_value,
         "heteroskedastic": r.heteroskedastic_at_5pct}
        for n, f, r in zip(panel.names, arma_fits, arch)]

    run.stage = "garch"
    deg = first_step(panel, arma_fits, flags)
    write_panel_csv(run.path("degarched.csv"), deg.dates, deg.matrix, deg.names)
    run.table(emit_garch_table(deg.names, deg.garch_fits), "garch")
    manifest["first_step"] = [
        {"series": n, "scale": prov, "omega": g.params.omega, "alpha": g.params.alpha, "beta": g.params.beta,
         "robust_se": [_float(v) for v in g.std_errors], "loglik": g.loglik, "converged": g.converged,
         "boundary": list(g.boundary), "h0": g.h0}
        for n, prov, g in zip(deg.names, deg.provenance, deg.garch_fits)]

    run.stage = "corr"
    fits = {}
    for kind in cfg.models:
        run.series = kind
        fits[kind] = fit_corr(deg, kind)
        fit = fits[kind]
        write_pair_paths(run.path(f"corr_{kind.lower()}.csv"), deg.dates, fit.path.pair_series())
    run.series = None

    run.stage = "lr"
    tests = {}
    if "CCC" in fits and "DCC" in fits:
        tests["DCC_vs_CCC"] = lr_test(fits["CCC"].loglik, fits["DCC"].loglik, 2)
    if "DCC" in fits and "NLARC" in fits:
        tests["DCC_vs_NLARC"] = lr_test(fits["DCC"].loglik, fits["NLARC"].loglik, 1)
    run.table(emit_table2(fits, tests), "table2")
    manifest["models"] = {
        k: {"params": dict(f.params), "robust_se": {p: _float(v) for p, v in f.robust_se.items()},
            "loglik": f.loglik, "aic": aic(f.loglik, f.n_params, f.nobs), "n_params": f.n_params,
            "nobs": f.nobs, "boundary": list(f.boundary), "converged": f.converged,
            "min_eigenvalue": f.path.min_eigenvalue,
            "targeting_iterations": None if f.targeting is None else f.targeting.n_iter}
        for k, f in fits.items()}
    manifest["lr_tests"] = {k: {"statistic": t.statistic, "dof": t.dof, "critical_value_10pct": t.critical_value_10pct,
                                "p_value": t.p_value, "reject_at_10pct": t.reject} for k, t in tests.items()}
    manifest["aic_table"] = [{"model": k, "aic": aic(f.loglik, f.n_params, f.nobs)} for k, f in fits.items()]

    run.stage = "rolling"
    roll = rolling_correlation(panel, cfg.rolling_window)
    write_pair_paths(run.path("rolling.csv"), roll.dates, zip(roll.pairs, roll.values.T))

    run.stage = "manifest"
    manifest["settings"] = {
        "alignment": "inner_join",
        "stationarity_gate": "ADF with constant, AIC lag choice, 5% level, on the (log-)level",
        "log_rule": "auto = log when every aligned value is strictly positive",
        "arch_gate_level": 0.05,
        "garch_min_length": GARCH_MIN_LENGTH,
        "garch_starts": [list(s) for s in GARCH_STARTS],
        "garch_gtol": GARCH_GTOL,
        "garch_maxiter": GARCH_MAXITER,
        "corr_starts": [list(s) for s in DCC_STARTS],
        "nlarc_phi_starts": list(NLARC_PHI_STARTS),
        "targeting_tol": TARGET_TOL,
        "targeting_max_iter": TARGET_MAX_ITER,
        "lr_level": 0.10,
        "rolling_window": cfg.rolling_window,
        "rolling_input": "transformed panel",
    }
    manifest["outputs"] = {name: _sha256(run.out / name) for name in sorted(run.files)}
    mpath = run.out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, allow_nan=False,
                                default=_json_default) + "\n", encoding="utf-8")
    return PipelineResult(cfg, run.out, manifest, panel, deg, fits, tests, roll, sorted(run.files) + ["manifest.json"])

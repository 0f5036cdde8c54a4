"""Command-line interface.

Exit codes: 0 success, 1 input or config error, 2 numerical failure,
3 network failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .correlation import MODEL_KINDS, fit_corr
from .data import (
    align_panel,
    fetch_remote_series,
    load_series_csv,
    read_panel_csv,
    window_series,
    write_panel_csv,
)
from .diagnostics import ArmaSpec, adf_test, arch_lm_test, select_arma_order
from .exceptions import CondCorrError, InputError
from .inference import aic, lr_test, rolling_correlation
from .report import Table, emit_garch_table, emit_table1, emit_table2, fmt3, write_pair_paths
from .simulation import SimSpec, equicorrelation, recovery_experiment, simulate_corr_panel, simulate_garch
from .volatility import GarchParams, first_step

logger = logging.getLogger("condcorr")


def _record(**fields):
    print(json.dumps(fields, default=float))


def _columns(panel, wanted):
    if not wanted:
        return list(range(len(panel.names)))
    missing = [w for w in wanted if w not in panel.names]
    if missing:
        raise InputError(f"unknown columns {missing}; panel has {list(panel.names)}")
    return [panel.names.index(w) for w in wanted]


def _parse_source(text):
    name, sep, src = text.partition("=")
    if not sep or not name or not src:
        raise InputError(f"expected NAME=PATH_OR_URL, got {text!r}")
    return name, src


def cmd_ingest(args):
    series = []
    for item in args.series:
        name, src = _parse_source(item)
        if src.startswith(("http://", "https://")):
            s = fetch_remote_series(src, args.date_column, args.value_column, name=name, cache_dir=args.cache_dir)
        else:
            s = load_series_csv(src, args.date_column, args.value_column, name=name)
        series.append(window_series(s, args.start, args.end))
        if s.dropped:
            logger.warning("%s: dropped %d unparseable rows", name, s.dropped)
    panel = align_panel(series)
    write_panel_csv(args.out, panel.dates, panel.matrix, panel.names)
    _record(name="ingest", rows=int(panel.matrix.shape[0]), columns=list(panel.names),
            dropped={s.name: s.dropped for s in series}, output=str(args.out))
    return 0


def cmd_diagnose(args):
    panel = read_panel_csv(args.panel)
    rows = []
    for j in _columns(panel, args.column):
        name, x = panel.names[j], panel.matrix[:, j]
        adf = adf_test(x, args.adf_max_lag)
        _record(name="adf", series=name, statistic=adf.statistic, p_value=adf.p_value,
                decision="stationary" if adf.stationary else "unit_root")
        spec, fits = select_arma_order(x, args.p_max, args.q_max, return_fits=True)
        fit = fits[(spec.p, spec.q)]
        _record(name="arma", series=name, order=spec.label, aic=fit.aic, loglik=fit.loglik)
        lm = arch_lm_test(fit.residuals, args.arch_lags)
        _record(name="arch_lm", series=name, statistic=lm.statistic, p_value=lm.p_value,
                decision="heteroskedastic" if lm.heteroskedastic_at_5pct else "homoskedastic")
        rows.append({"series": name, "differenced": name in (args.differenced or ()), "p": spec.p,
                     "q": spec.q, "arch_pvalue": lm.p_value})
    if args.table:
        print(emit_table1(rows).to_text(), end="")
    return 0


def cmd_fit_garch(args):
    panel = read_panel_csv(args.panel)
    n = len(panel.names)
    if args.auto:
        specs, flags = [], []
        for j in range(n):
            spec, fits = select_arma_order(panel.matrix[:, j], args.p_max, args.q_max, return_fits=True)
            fit = fits[(spec.p, spec.q)]
            specs.append(fit)
            flags.append(arch_lm_test(fit.residuals, args.arch_lags).heteroskedastic_at_5pct)
    else:
        specs, flags = [ArmaSpec(0, 0)] * n, [True] * n
    deg = first_step(panel, specs, flags)
    table = emit_garch_table(deg.names, deg.garch_fits)
    print(table.to_text(), end="")
    if args.table_out:
        table.write(Path(args.table_out).with_suffix(""))
    if args.out:
        write_panel_csv(args.out, deg.dates, deg.matrix, deg.names)
    return 0


def cmd_fit_corr(args):
    panel = read_panel_csv(args.panel)
    fit = fit_corr(panel, args.model.upper())
    print(emit_table2({fit.kind: fit}).to_text(), end="")
    if args.table_out:
        emit_table2({fit.kind: fit}).write(Path(args.table_out).with_suffix(""))
    if args.path_out:
        write_pair_paths(args.path_out, panel.dates, fit.path.pair_series())
    if fit.boundary:
        logger.warning("boundary optimum in %s", ", ".join(fit.boundary))
    return 0


def cmd_test(args):
    if args.test == "lr":
        res = lr_test(args.restricted, args.unrestricted, args.dof)
        _record(name="lr", statistic=res.statistic, p_value=res.p_value, dof=res.dof,
                critical_value_10pct=res.critical_value_10pct, decision="reject" if res.reject else "fail_to_reject")
        return 0
    panel = read_panel_csv(args.panel)
    for j in _columns(panel, args.column):
        name, x = panel.names[j], panel.matrix[:, j]
        if args.test == "adf":
            res = adf_test(x, args.max_lag)
            _record(name="adf", series=name, statistic=res.statistic, p_value=res.p_value,
                    lags=res.lags_used, decision="stationary" if res.stationary else "unit_root")
        else:
            res = arch_lm_test(x - x.mean(), args.lags)
            _record(name="arch_lm", series=name, statistic=res.statistic, p_value=res.p_value,
                    decision="heteroskedastic" if res.heteroskedastic_at_5pct else "homoskedastic")
    return 0


def cmd_rolling(args):
    panel = read_panel_csv(args.panel)
    roll = rolling_correlation(panel, args.window)
    out = args.out or sys.stdout
    write_pair_paths(out, roll.dates, zip(roll.pairs, roll.values.T))
    return 0


def _garch_layers(args, n):
    if args.garch is None:
        return None
    omega, alpha, beta = args.garch
    return tuple(GarchParams(omega, alpha, beta) for _ in range(n))


def _corr_spec(args):
    params = {}
    if args.kind in ("dcc", "nlarc"):
        params = {"a": args.a, "b": args.b}
    if args.kind == "nlarc":
        params["phi_A"] = args.phi_a
    r_bar = equicorrelation(args.n_series, args.rho)
    return SimSpec(args.kind, args.length, params, r_bar=r_bar, burn_in=args.burn_in, seed=args.seed,
                   garch=_garch_layers(args, args.n_series))


def cmd_simulate(args):
    dates = np.busday_offset(np.datetime64(args.start_date, "D"), np.arange(args.length), roll="forward")
    if args.kind == "garch_univariate":
        if args.garch is None:
            raise InputError("--garch OMEGA ALPHA BETA is required for garch_univariate")
        omega, alpha, beta = args.garch
        spec = SimSpec("garch_univariate", args.length, {"omega": omega, "alpha": alpha, "beta": beta},
                       burn_in=args.burn_in, seed=args.seed)
        write_panel_csv(args.out, dates, simulate_garch(spec)[:, None], ["y"])
        return 0
    sim = simulate_corr_panel(_corr_spec(args))
    names = [f"s{j + 1}" for j in range(args.n_series)]
    write_panel_csv(args.out, dates, sim.data, names)
    return 0


def cmd_recover(args):
    spec = _corr_spec(args)
    rep = recovery_experiment(spec, args.reps, args.fit)
    rows = tuple((r["parameter"], fmt3(r["truth"]), fmt3(r["mean_estimate"]), fmt3(r["rmse"]),
                  fmt3(r["coverage"])) for r in rep.rows(args.k))
    table = Table(("parameter", "truth", "mean estimate", "RMSE", "coverage"), rows,
                  f"Recovery over {rep.replications} replications ({rep.failures} failed)")
    print(table.to_text(), end="")
    if args.out:
        table.write(Path(args.out).with_suffix(""))
    return 0


def cmd_run(args):
    from .pipeline import load_config, run_pipeline

    res = run_pipeline(load_config(args.config))
    _record(name="run", output=str(res.output_dir), files=res.files)
    return 0


def cmd_report(args):
    if args.report == "aic":
        value = aic(args.loglik, args.k, args.t)
        _record(name="aic", value=value, formatted=fmt3(value))
        return 0
    run_dir = Path(args.run_dir)
    for stem in ("table1", "garch", "table2"):
        p = run_dir / f"{stem}.txt"
        if not p.is_file():
            raise InputError(f"missing {p}; is {run_dir} a finished run directory?")
        print(p.read_text(encoding="utf-8"))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="condcorr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, window and align series into a panel CSV")
    p.add_argument("series", nargs="+", metavar="NAME=SOURCE")
    p.add_argument("--date-column", default="date")
    p.add_argument("--value-column", default="value")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--cache-dir", default=".condcorr-cache")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("diagnose", help="ADF, ARMA order and ARCH-LM per column")
    p.add_argument("panel")
    p.add_argument("--column", action="append")
    p.add_argument("--p-max", type=int, default=3)
    p.add_argument("--q-max", type=int, default=3)
    p.add_argument("--arch-lags", type=int, default=5)
    p.add_argument("--adf-max-lag", type=int)
    p.add_argument("--differenced", action="append", metavar="NAME", help="label NAME with a difference prefix")
    p.add_argument("--table", action="store_true", help="also print the DGP / ARCH-LM table")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("fit-garch", help="first step: GARCH(1,1) per column, write the de-GARCHed panel")
    p.add_argument("panel")
    p.add_argument("-o", "--out")
    p.add_argument("--table-out")
    p.add_argument("--auto", action="store_true", help="select ARMA orders and gate GARCH on ARCH-LM at 5%%")
    p.add_argument("--p-max", type=int, default=3)
    p.add_argument("--q-max", type=int, default=3)
    p.add_argument("--arch-lags", type=int, default=5)
    p.set_defaults(func=cmd_fit_garch)

    p = sub.add_parser("fit-corr", help="second step: CCC, DCC or NLARC on a de-GARCHed panel")
    p.add_argument("panel")
    p.add_argument("--model", choices=[m.lower() for m in MODEL_KINDS], default="dcc")
    p.add_argument("--path-out")
    p.add_argument("--table-out")
    p.set_defaults(func=cmd_fit_corr)

    p = sub.add_parser("test", help="likelihood-ratio, ADF or ARCH-LM test")
    tsub = p.add_subparsers(dest="test", required=True)
    t = tsub.add_parser("lr")
    t.add_argument("--restricted", type=float, required=True, help="restricted log-likelihood")
    t.add_argument("--unrestricted", type=float, required=True)
    t.add_argument("--dof", type=int, required=True)
    t = tsub.add_parser("adf")
    t.add_argument("panel")
    t.add_argument("--column", action="append")
    t.add_argument("--max-lag", type=int)
    t = tsub.add_parser("arch")
    t.add_argument("panel")
    t.add_argument("--column", action="append")
    t.add_argument("--lags", type=int, default=5)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("rolling", help="rolling pairwise correlations (date, pair, rho)")
    p.add_argument("panel")
    p.add_argument("--window", type=int, default=5)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_rolling)

    for name, func, helptext in (("simulate", cmd_simulate, "simulate a panel CSV"),
                                 ("recover", cmd_recover, "Monte Carlo parameter recovery")):
        p = sub.add_parser(name, help=helptext)
        kinds = ("ccc", "dcc", "nlarc") + (("garch_univariate",) if name == "simulate" else ())
        p.add_argument("--kind", choices=kinds, default="dcc")
        p.add_argument("--length", type=int, default=1000)
        p.add_argument("--n-series", type=int, default=2)
        p.add_argument("--rho", type=float, default=0.5, help="equicorrelation of the target matrix")
        p.add_argument("--a", type=float, default=0.05)
        p.add_argument("--b", type=float, default=0.90)
        p.add_argument("--phi-a", type=float, default=0.0)
        p.add_argument("--garch", type=float, nargs=3, metavar=("OMEGA", "ALPHA", "BETA"))
        p.add_argument("--burn-in", type=int, default=500)
        p.add_argument("--seed", type=int, default=0)
        if name == "simulate":
            p.add_argument("--start-date", default="2000-01-03")
            p.add_argument("-o", "--out", required=True)
        else:
            p.add_argument("--reps", type=int, default=100)
            p.add_argument("--fit", choices=("dcc", "nlarc"))
            p.add_argument("--k", type=float, default=2.0, help="coverage half-width in standard errors")
            p.add_argument("-o", "--out")
        p.set_defaults(func=func)

    p = sub.add_parser("run", help="full pipeline from a config file or a run manifest")
    p.add_argument("config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="AIC arithmetic or re-print a run's tables")
    rsub = p.add_subparsers(dest="report", required=True)
    r = rsub.add_parser("aic")
    r.add_argument("--loglik", type=float, required=True)
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--t", type=int, required=True)
    r = rsub.add_parser("tables")
    r.add_argument("run_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CondCorrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

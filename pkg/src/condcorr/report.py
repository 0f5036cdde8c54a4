"""Table and CSV rendering. Text tables are views of the same cells written to CSV."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .inference import aic

__all__ = [
    "Table",
    "fmt3",
    "fmt_se",
    "emit_table1",
    "emit_table2",
    "emit_garch_table",
    "write_pair_paths",
    "DELTA",
]

DELTA = "Δ"


def fmt3(x):
    if x is None or not np.isfinite(x):
        return "n/a"
    out = f"{float(x):.3f}"
    return "0.000" if out == "-0.000" else out


def fmt_se(x):
    return f"({fmt3(x)})"


@dataclass(frozen=True)
class Table:
    header: tuple
    rows: tuple
    title: str = ""

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(self.header)
        writer.writerows(self.rows)
        return buf.getvalue()

    def to_text(self):
        cells = [list(self.header)] + [list(r) for r in self.rows]
        widths = [max(len(str(row[i])) for row in cells) for i in range(len(self.header))]
        lines = [self.title] if self.title else []
        for k, row in enumerate(cells):
            parts = [str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(row, widths))]
            lines.append("  ".join(parts).rstrip())
            if k == 0:
                lines.append("-" * len(lines[-1]))
        return "\n".join(lines) + "\n"

    def write(self, stem):
        stem = Path(stem)
        stem.with_suffix(".csv").write_text(self.to_csv(), encoding="utf-8", newline="")
        stem.with_suffix(".txt").write_text(self.to_text(), encoding="utf-8")


def emit_table1(rows):
    """Identified DGP and ARCH-LM p-value per series.

    ``rows`` is an iterable of mappings with keys ``series``, ``differenced``,
    ``p``, ``q`` and ``arch_pvalue``.
    """
    out = []
    for r in rows:
        name = (DELTA if r["differenced"] else "") + r["series"]
        dgp = f"ARMA({r['p']},{r['q']})"
        out.append((name, dgp, fmt3(r["arch_pvalue"]), f"{name} {dgp}"))
    return Table(("series", "DGP", "p-value ARCH test", "label"), tuple(out),
                 "Data-generating process and ARCH-LM p-value")


def emit_table2(fits, tests=None):
    """Second-step estimates with robust standard errors, log-likelihood, AIC and LR tests.

    ``fits`` maps model kind to :class:`CorrFit`; ``tests`` maps
    ``"DCC_vs_CCC"``/``"DCC_vs_NLARC"`` to :class:`LrResult`.
    """
    order = [k for k in ("CCC", "DCC", "NLARC") if k in fits]
    tests = tests or {}
    rows = []
    for pname in ("phi_A", "a", "b"):
        if not any(pname in fits[k].params for k in order):
            continue
        est = [fmt3(fits[k].params[pname]) if pname in fits[k].params else "" for k in order]
        se = [fmt_se(fits[k].robust_se.get(pname)) if pname in fits[k].params else "" for k in order]
        rows.append((pname, *est))
        rows.append(("", *se))
    rows.append(("Log-likelihood", *(fmt3(fits[k].loglik) for k in order)))
    rows.append(("AIC", *(fmt3(aic(fits[k].loglik, fits[k].n_params, fits[k].nobs)) for k in order)))
    blank = ("",) * (len(order) - 1)
    if "DCC_vs_CCC" in tests:
        t = tests["DCC_vs_CCC"]
        rows.append(("LR_DCC_vs_CCC", fmt3(t.statistic), *blank))
        rows.append((f"chi2_0.1,{t.dof}", fmt_se(t.critical_value_10pct), *blank))
    if "DCC_vs_NLARC" in tests:
        t = tests["DCC_vs_NLARC"]
        rows.append(("LR_DCC_vs_NLARC", fmt3(t.statistic), *blank))
        rows.append((f"chi2_0.1,{t.dof}", fmt_se(t.critical_value_10pct), *blank))
    return Table(("", *order), tuple(rows), "Estimated correlation models (robust standard errors)")


def emit_garch_table(names, fits):
    rows = []
    for name, f in zip(names, fits):
        p, se = f.params, f.std_errors
        if f.used_garch:
            rows.append((name, "garch", fmt3(p.omega), fmt_se(se[0]), fmt3(p.alpha), fmt_se(se[1]),
                         fmt3(p.beta), fmt_se(se[2]), fmt3(f.loglik)))
        else:
            rows.append((name, "unconditional", fmt3(p.omega), "", "", "", "", "", fmt3(f.loglik)))
    return Table(("series", "scale", "omega", "se", "alpha", "se", "beta", "se", "loglik"), tuple(rows),
                 "First-step GARCH(1,1) estimates (robust standard errors)")


def write_pair_paths(path_or_buffer, dates, pairs_and_values):
    """Long-format ``date, pair, rho`` CSV; missing values are written empty."""
    own = not hasattr(path_or_buffer, "write")
    fh = open(path_or_buffer, "w", newline="", encoding="utf-8") if own else path_or_buffer
    try:
        writer = csv.writer(fh)
        writer.writerow(["date", "pair", "rho"])
        labels = [(f"{a}~{b}", np.asarray(v)) for (a, b), v in pairs_and_values]
        n = len(labels[0][1]) if labels else 0
        if dates is None:
            dates = [str(i + 1) for i in range(n)]
        else:
            dates = [str(d) for d in np.asarray(dates)]
        for label, values in labels:
            for d, v in zip(dates, values):
                writer.writerow([d, label, "" if not np.isfinite(v) else repr(float(v))])
    finally:
        if own:
            fh.close()

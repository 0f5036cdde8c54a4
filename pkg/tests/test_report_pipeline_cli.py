import csv
import io
import json
import shutil
from types import SimpleNamespace

import numpy as np
import pytest
from _bundle import NAMES, write_bundle

from condcorr.cli import main
from condcorr.exceptions import ConfigError, PipelineError
from condcorr.inference import lr_test
from condcorr.pipeline import load_config, parse_config, run_pipeline
from condcorr.report import emit_table1, emit_table2, fmt3, write_pair_paths
from condcorr.volatility import GarchParams


def _fit(params, se, loglik, k, nobs=166):
    return SimpleNamespace(params=params, robust_se=se, loglik=loglik, n_params=k, nobs=nobs)


# tables


def test_table1_labels_and_rounding():
    t = emit_table1([
        {"series": "polls", "differenced": True, "p": 0, "q": 0, "arch_pvalue": 0.4321},
        {"series": "ADS", "differenced": False, "p": 2, "q": 1, "arch_pvalue": 0.0004},
    ])
    assert t.rows[0][3] == "Δpolls ARMA(0,0)"
    assert t.rows[1][0] == "ADS" and t.rows[1][1] == "ARMA(2,1)"
    assert t.rows[1][2] == "0.000"
    assert t.rows[0][2] == "0.432"


def test_fmt3_edge_cases():
    assert fmt3(-0.0001) == "0.000"
    assert fmt3(float("nan")) == "n/a"
    assert fmt3(5.3175) in ("5.317", "5.318")


def _reference_table2():
    fits = {
        "CCC": _fit({}, {}, -409.454, 0),
        "DCC": _fit({"a": 0.032, "b": 0.795}, {"a": 0.019, "b": 0.117}, -406.795, 2),
        "NLARC": _fit({"phi_A": 0.15, "a": 0.04, "b": 0.79}, {"phi_A": 0.4, "a": 0.02, "b": 0.1}, -406.725, 3),
    }
    tests = {"DCC_vs_CCC": lr_test(-409.454, -406.795, 2), "DCC_vs_NLARC": lr_test(-406.795, -406.725, 1)}
    return emit_table2(fits, tests)


def test_table2_dcc_column_formatting():
    t = _reference_table2()
    assert t.header == ("", "CCC", "DCC", "NLARC")
    rows = {r[0]: r for r in t.rows if r[0]}
    assert rows["a"][2] == "0.032" and rows["b"][2] == "0.795"
    se_rows = [r for r in t.rows if r[0] == ""]
    assert se_rows[1][2] == "(0.019)"
    assert rows["Log-likelihood"][2] == "-406.795"
    assert rows["AIC"][1:] == ("4.933", "4.925", "4.936")
    assert rows["LR_DCC_vs_CCC"][1] == "5.318"
    assert rows["chi2_0.1,2"][1] == "(4.605)"
    assert rows["LR_DCC_vs_NLARC"][1] == "0.140"
    assert rows["chi2_0.1,1"][1] == "(2.706)"


def test_table2_boundary_and_subset():
    fits = {"CCC": _fit({}, {}, -411.807, 0), "DCC": _fit({"a": 0.0, "b": 0.975}, {"a": 0.0, "b": 0.5}, -411.807, 2)}
    t = emit_table2(fits, {"DCC_vs_CCC": lr_test(-411.807, -411.807, 2)})
    assert "NLARC" not in t.header
    assert not any(r[0] == "LR_DCC_vs_NLARC" for r in t.rows)
    a_idx = [r[0] for r in t.rows].index("a")
    assert t.rows[a_idx][2] == "0.000" and t.rows[a_idx + 1][2] == "(0.000)"
    assert not any(r[0] == "phi_A" for r in t.rows)


def test_text_table_is_a_view_of_the_csv():
    t = _reference_table2()
    cells = [c for row in csv.reader(io.StringIO(t.to_csv())) for c in row if c]
    text = t.to_text()
    for c in cells:
        assert c in text


def test_pair_paths_format():
    buf = io.StringIO()
    write_pair_paths(buf, np.array(["2020-03-05", "2020-03-06"], dtype="datetime64[D]"),
                     [(("a", "b"), np.array([0.5, np.nan]))])
    assert buf.getvalue().splitlines() == ["date,pair,rho", "2020-03-05,a~b,0.5", "2020-03-06,a~b,"]


# config


def test_config_parsing(tmp_path):
    text = "[run]\nstart = 2020-03-05\nend = 2020-11-03\nmodels = dcc, ccc\n\n[series polls]\npath = p.csv\n" \
           "[series vix]\nurl = http://example.org/vix.csv\nvalue_column = close\n"
    cfg = parse_config(text, tmp_path)
    assert cfg.models == ("CCC", "DCC")
    assert cfg.series[0].path == str(tmp_path / "p.csv")
    assert cfg.series[1].value_column == "close"


@pytest.mark.parametrize("text,msg", [
    ("[run]\nmodles = DCC\n[series a]\npath=a\n[series b]\npath=b\n", "unknown keys"),
    ("[run]\nstart=2020-05-01\nend=2020-03-01\n[series a]\npath=a\n[series b]\npath=b\n", "start must be before"),
    ("[run]\nmodels =\n[series a]\npath=a\n[series b]\npath=b\n", "at least one model"),
    ("[run]\n[series a]\npath=a\n[series b]\npath=b\ncolour=red\n", "unknown keys"),
    ("[run]\n[series a]\npath=a\n[extra]\nx=1\n", "unknown section"),
    ("[run]\n[series a]\npath=a\nurl=u\n[series b]\npath=b\n", "exactly one"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


# pipeline


@pytest.fixture(scope="module")
def bundle_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundle")
    cfg = write_bundle(root)
    result = run_pipeline(load_config(cfg))
    return root, cfg, result


def test_pipeline_outputs(bundle_run):
    root, _, result = bundle_run
    out = root / "out"
    for name in ("panel.csv", "table1.csv", "table1.txt", "degarched.csv", "table2.csv", "table2.txt",
                 "corr_ccc.csv", "corr_dcc.csv", "corr_nlarc.csv", "rolling.csv", "manifest.json"):
        assert (out / name).exists(), name
    m = json.loads((out / "manifest.json").read_text())
    assert m["seed"] == 0
    assert len(m["diagnostics"]) == 5 and len(m["transforms"]) == 5
    assert set(m["lr_tests"]) == {"DCC_vs_CCC", "DCC_vs_NLARC"}
    for t in m["transforms"]:
        assert t["difference"] == (0 if t["adf_statistic"] < t["adf_critical_5pct"] else 1)
    for f in result.fits.values():
        assert f.path.min_eigenvalue > 1e-10 and f.path.max_diagonal_error < 1e-12
    assert result.fits["NLARC"].loglik >= result.fits["DCC"].loglik - 1e-6 >= result.fits["CCC"].loglik - 2e-6
    text = (out / "table1.txt").read_text(encoding="utf-8")
    for t in m["transforms"]:
        assert (f"Δ{t['series']} ARMA(" in text) == (t["difference"] == 1)


def test_pipeline_is_deterministic(bundle_run, tmp_path):
    root, cfg, _ = bundle_run
    first = {p.name: p.read_bytes() for p in (root / "out").iterdir() if p.is_file()}
    again = tmp_path / "again"
    shutil.copytree(root, again, ignore=shutil.ignore_patterns("out"))
    run_pipeline(load_config(again / "run.ini"))
    second = {p.name: p.read_bytes() for p in (again / "out").iterdir() if p.is_file()}
    assert first.keys() == second.keys()
    for name in first:
        if name != "manifest.json":
            assert first[name] == second[name], name
    m1, m2 = json.loads(first["manifest.json"]), json.loads(second["manifest.json"])
    for m in (m1, m2):
        m["config"].pop("output"), m["config"].pop("cache_dir")
        m["config"].pop("series")
    assert m1 == m2


def test_rerun_from_manifest_reproduces_outputs(bundle_run, tmp_path):
    root, _, result = bundle_run
    manifest = json.loads((root / "out" / "manifest.json").read_text())
    manifest["config"]["output"] = str(tmp_path / "from_manifest")
    mpath = tmp_path / "manifest.json"
    mpath.write_text(json.dumps(manifest))
    rerun = run_pipeline(load_config(mpath))
    assert rerun.manifest["outputs"] == result.manifest["outputs"]


def test_ccc_only_run(tmp_path):
    cfg = write_bundle(tmp_path, models="CCC")
    result = run_pipeline(load_config(cfg))
    assert result.tests == {}
    rows = [r[0] for r in csv.reader(io.StringIO((tmp_path / "out" / "table2.csv").read_text()))]
    assert "AIC" in rows and not any(r.startswith("LR_") for r in rows)
    assert result.manifest["aic_table"] == [{"model": "CCC", "aic": pytest.approx(result.fits["CCC"].aic)}]


def test_failure_keeps_partial_artifacts(tmp_path):
    cfg = write_bundle(tmp_path)
    (tmp_path / "vix.csv").write_text("date,value\n" + "".join(f"2020-03-{d:02d},1.0\n" for d in range(5, 30)))
    with pytest.raises(PipelineError) as info:
        run_pipeline(load_config(cfg))
    err = json.loads((tmp_path / "out" / "failed" / "error.json").read_text())
    assert err["stage"] == info.value.stage
    assert info.value.exit_code == 1
    assert str(info.value).startswith(info.value.stage)


def test_failure_names_the_series(tmp_path):
    cfg = write_bundle(tmp_path)
    (tmp_path / "ads.csv").write_text("date,value\n")
    with pytest.raises(PipelineError) as info:
        run_pipeline(load_config(cfg))
    assert info.value.stage == "load" and info.value.series == "ads"
    assert (tmp_path / "out" / "failed" / "error.json").exists()


def test_garch_columns_flagged_end_to_end(tmp_path):
    hits = 0
    seeds = range(30)
    for seed in seeds:
        cfg = write_bundle(tmp_path / str(seed), length=800, seed=seed, garch_cols=(0, 1, 2, 3),
                           layer=GarchParams(0.05, 0.3, 0.6), models="CCC")
        m = run_pipeline(load_config(cfg)).manifest
        flagged = tuple(d["heteroskedastic"] for d in m["diagnostics"])
        hits += flagged == (True, True, True, True, False)
    assert hits / len(seeds) >= 0.90


# CLI


def test_cli_report_and_lr(capsys):
    assert main(["report", "aic", "--loglik", "-411.807", "--k", "2", "--t", "166"]) == 0
    assert "4.986" in capsys.readouterr().out
    assert main(["test", "lr", "--restricted", "-409.454", "--unrestricted", "-406.795", "--dof", "2"]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["statistic"] == pytest.approx(5.318, abs=1e-9)
    assert rec["decision"] == "reject"


def test_cli_run_and_tables(tmp_path, capsys):
    cfg = write_bundle(tmp_path, models="CCC, DCC")
    assert main(["run", str(cfg)]) == 0
    assert main(["report", "tables", str(tmp_path / "out")]) == 0
    assert "LR_DCC_vs_CCC" in capsys.readouterr().out


def test_cli_simulate_fit_pipeline(tmp_path):
    panel = tmp_path / "sim.csv"
    assert main(["simulate", "--kind", "dcc", "--length", "400", "--n-series", "3", "--seed", "4",
                 "--garch", "0.1", "0.1", "0.8", "-o", str(panel)]) == 0
    deg = tmp_path / "deg.csv"
    assert main(["fit-garch", str(panel), "-o", str(deg), "--table-out", str(tmp_path / "g")]) == 0
    assert main(["fit-corr", str(deg), "--model", "dcc", "--path-out", str(tmp_path / "p.csv"),
                 "--table-out", str(tmp_path / "t2")]) == 0
    assert (tmp_path / "t2.csv").exists() and (tmp_path / "p.csv").exists()
    assert main(["rolling", str(deg), "--window", "5", "-o", str(tmp_path / "r.csv")]) == 0
    assert main(["diagnose", str(panel), "--table"]) == 0
    assert main(["test", "adf", str(panel)]) == 0
    assert main(["test", "arch", str(panel)]) == 0


def test_cli_exit_codes(tmp_path):
    assert main(["run", str(tmp_path / "missing.ini")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nmodles = DCC\n")
    assert main(["run", str(bad)]) == 1
    x = np.random.default_rng(0).standard_normal(60)
    dup = tmp_path / "dup.csv"
    dup.write_text("date,a,b\n" + "".join(f"{np.datetime64('2020-01-01') + i},{v!r},{v!r}\n"
                                          for i, v in enumerate(x.tolist())))
    assert main(["fit-corr", str(dup), "--model", "ccc"]) == 2
    assert main(["ingest", "x=http://127.0.0.1:9/x.csv", "y=http://127.0.0.1:9/y.csv",
                 "--cache-dir", str(tmp_path / "c"), "-o", str(tmp_path / "o.csv")]) == 3


def test_bundle_names():
    assert NAMES == ("polls", "ads", "infl", "vix", "tpu")

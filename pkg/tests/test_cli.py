import csv
import io
import json

import numpy as np
import pytest

from gnar_edge.cli import main
from gnar_edge.graph import read_edge_csv
from gnar_edge.panel import read_panel_csv


def run(*args):
    return main([str(a) for a in args])


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


@pytest.fixture
def workdir(tmp_path):
    g = tmp_path / "g.csv"
    p = tmp_path / "p.csv"
    assert run("graph-gen", "--model", "er", "--nodes", 20, "--edges", 168, "--seed", 1,
               "--out", g) == 0
    assert run("simulate", "--graph", g, "--regime", "regime4", "--seed", 2, "--out", p) == 0
    return tmp_path


def test_graph_gen_models(tmp_path):
    for model, extra in (("er", ["--density", "0.1"]), ("sbm", []), ("rdp", ["--radius", "0.7"])):
        out = tmp_path / f"{model}.csv"
        assert run("graph-gen", "--model", model, "--nodes", 20, "--seed", 3, "--out", out,
                   *extra) == 0
        g = read_edge_csv(out, n=20)
        assert g.n_self_loops == 0 and g.K > 0
        man = json.loads((tmp_path / f"{model}.csv.manifest.json").read_text())
        assert man["seed"] == 3 and man["rng"] == "numpy.random.Philox"
        assert man["outputs"][str(out)]
    assert read_edge_csv(tmp_path / "er.csv").K == 38


def test_fit_predict_evaluate_diagnose(workdir):
    g, p = workdir / "g.csv", workdir / "p.csv"
    m, ar, var = workdir / "m.json", workdir / "ar.json", workdir / "var.json"
    assert run("fit", "--graph", g, "--panel", p, "--lag", 3, "--stages", "2,2,2", "--out", m) == 0
    doc = json.loads(m.read_text())
    assert doc["model_type"] == "gnar_edge" and doc["n_params"] == 9
    assert run("fit", "--graph", g, "--panel", p, "--lag", 3, "--model-type", "ar",
               "--out", ar) == 0
    # 168 edges at lag 2 are too many for an unrestricted VAR on 200 columns
    assert run("fit", "--graph", g, "--panel", p, "--lag", 2, "--model-type", "var",
               "--out", var) == 1
    assert run("fit", "--graph", g, "--panel", p, "--lag", 1, "--model-type", "var",
               "--out", var) == 0
    f = workdir / "f.csv"
    assert run("predict", "--model", m, "--panel", p, "--out", f) == 0
    assert len(read_csv(f)) == 168
    r = workdir / "rmse.csv"
    assert run("evaluate", "--models", f"{m},{ar}", "--panel", p, "--holdout", 2,
               "--out", r) == 0
    rows = read_csv(r)
    assert [row["model_type"] for row in rows] == ["gnar_edge", "ar"]
    assert all(0.5 < float(row["rmse"]) < 2 for row in rows)
    d = workdir / "diag"
    assert run("diagnose", "--model", m, "--panel", p, "--out", d) == 0
    assert (d / "normality.csv").exists() and (d / "manifest.json").exists()
    assert run("diagnose", "--model", ar, "--panel", p, "--out", workdir / "diag_ar") == 0


def test_zero_coefficient_forecast(tmp_path):
    g = tmp_path / "g.csv"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"lag": 1, "stages": [1], "alpha": [0.0], "beta": [[0.0]],
                                "T": 300}))
    run("graph-gen", "--model", "er", "--nodes", 10, "--edges", 30, "--seed", 0, "--out", g)
    p = tmp_path / "p.csv"
    assert run("simulate", "--graph", g, "--spec", spec, "--seed", 1, "--out", p) == 0
    m = tmp_path / "m.json"
    assert run("fit", "--graph", g, "--panel", p, "--lag", 1, "--stages", "1", "--out", m) == 0
    f = tmp_path / "f.csv"
    assert run("predict", "--model", m, "--panel", p, "--out", f) == 0
    vals = np.array([float(r["forecast"]) for r in read_csv(f)])
    assert np.all(np.abs(vals) < 0.5)


def test_sparsify_all_edges_is_canonical(workdir):
    g, p = workdir / "g.csv", workdir / "p.csv"
    out = workdir / "sp"
    assert run("sparsify", "--graph", g, "--panel", p, "--top-k", 168, "--out", out) == 0
    assert (out / "graph.csv").read_bytes() == g.read_bytes()
    assert read_panel_csv(out / "panel.csv") == read_panel_csv(p)
    assert run("sparsify", "--graph", g, "--panel", p, "--top-k", 20,
               "--out-graph", workdir / "g20.csv", "--out-panel", workdir / "p20.csv") == 0
    g20 = read_edge_csv(workdir / "g20.csv")
    assert g20.K == 20
    assert read_panel_csv(workdir / "p20.csv", graph=g20).K == 20


def test_experiment_regime4(tmp_path):
    out = tmp_path / "ex"
    assert run("experiment", "--name", "regime4", "--reps", 50, "--seed", 1,
               "--graph-model", "er", "--out", out) == 0
    assert (out / "estimates.csv").read_text().startswith("# rng=numpy.random.Philox; seed=1")
    summ = read_csv(out / "summary.csv")
    assert len(summ) == 9
    for row in summ:
        assert 0.85 <= float(row["coverage"]) <= 1.0
        limit = 0.01 if row["parameter"].startswith("alpha") else 0.10
        assert float(row["rmse"]) <= limit
    assert len(read_csv(out / "estimates.csv")) == 50 * 9


def test_experiment_misspec_and_prediction(tmp_path):
    for name in ("misspec-heavy-tail", "misspec-corr-innov", "misspec-rewire", "prediction"):
        out = tmp_path / name
        assert run("experiment", "--name", name, "--reps", 3, "--seed", 0, "--out", out) == 0
        assert (out / "summary.csv").exists() and (out / "manifest.json").exists()


def test_round_trips(workdir):
    from gnar_edge.graph import edges_to_csv
    from gnar_edge.panel import panel_to_csv

    g, p = workdir / "g.csv", workdir / "p.csv"
    assert edges_to_csv(read_edge_csv(g)) == g.read_text()
    assert panel_to_csv(read_panel_csv(p)) == p.read_text()


@pytest.mark.parametrize("argv,kind,code", [
    (["experiment", "--name", "regime42", "--out", "x"], "UsageError", 2),
    (["fit"], "UsageError", 2),
    (["bogus"], "UsageError", 2),
])
def test_usage_errors_single_line(capsys, argv, kind, code):
    assert main(argv) == code
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith(f"error: {kind}: ")


def test_malformed_csv_reports_line(tmp_path, capsys, workdir):
    bad = tmp_path / "bad.csv"
    bad.write_text("source,target\n0,1\n1,x\n")
    assert run("fit", "--graph", bad, "--panel", workdir / "p.csv", "--lag", 1, "--stages", "1",
               "--out", tmp_path / "m.json") == 1
    err = capsys.readouterr().err
    assert err.startswith("error: CsvFormatError: line 3:") and err.count("\n") == 1


def test_dimension_mismatch(tmp_path, capsys, workdir):
    other = tmp_path / "g2.csv"
    run("graph-gen", "--model", "er", "--nodes", 20, "--edges", 100, "--seed", 9, "--out", other)
    assert run("fit", "--graph", other, "--panel", workdir / "p.csv", "--lag", 1, "--stages", "1",
               "--out", tmp_path / "m.json") == 1
    assert "PanelError" in capsys.readouterr().err


def test_simulate_needs_one_source(tmp_path, workdir):
    assert run("simulate", "--graph", workdir / "g.csv", "--out", tmp_path / "x.csv") == 2

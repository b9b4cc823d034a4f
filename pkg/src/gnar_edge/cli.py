"""Command-line front end: ``gnar-edge <subcommand> ...``.

Every output is accompanied by a JSON run manifest (``<file>.manifest.json``
or ``<dir>/manifest.json``) holding the resolved arguments, the seed, the RNG
algorithm, SHA-256 digests of inputs and outputs and the tool version.  No
timestamps are recorded, so a fixed seed gives byte-identical files.
Errors are reported as one line ``error: <Kind>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import RNG_ALGORITHM, make_rng
from .baselines import ArPerEdgeModel, VarModel, fit_ar, fit_var, load_model, predict_baseline
from .diagnostics import residual_report
from .errors import GnarEdgeError
from .gnar import (
    EDGE_SPECIFIC,
    GLOBAL,
    CoefficientSet,
    FittedGnarEdge,
    GnarEdgeSpec,
    fit_gnar_edge,
    fitted_residuals,
    predict_one_step,
    save_model,
)
from .graph import edges_to_csv, read_edge_csv
from .leadlag import leadingness_to_csv, panel_leadingness, sparsify_top_k
from .panel import EdgePanel, panel_to_csv, preprocess, read_panel_csv
from .simulate import InnovationModel, equal_blocks, gen_er, gen_rdp, gen_sbm, simulate_gnar_edge

EXIT_USAGE = 2
EXIT_ERROR = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --- small helpers ----------------------------------------------------------------


def _f(x) -> str:
    return repr(float(x))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


class Run:
    """Collects outputs and writes the manifest for one invocation."""

    def __init__(self, args, inputs=()):
        self.args = args
        self.inputs = [Path(p) for p in inputs if p]
        self.outputs: list[Path] = []

    def write(self, path, text: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
        self.outputs.append(path)
        return path

    def write_json(self, path, doc) -> Path:
        return self.write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def manifest(self, path) -> None:
        params = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func",)}
        doc = {
            "subcommand": self.args.command,
            "parameters": params,
            "seed": getattr(self.args, "seed", None),
            "rng": RNG_ALGORITHM,
            "inputs": {str(p): _digest(p) for p in self.inputs},
            "outputs": {str(p): _digest(p) for p in self.outputs},
            "tool": {"name": "gnar-edge", "version": __version__},
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8", newline="")


def _file_manifest(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _need(args, name):
    if getattr(args, name, None) is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return getattr(args, name)


def _load_graph(args):
    return read_edge_csv(_need(args, "graph"), n=args.nodes)


# --- subcommands ------------------------------------------------------------------


def cmd_graph_gen(args) -> None:
    out = Path(_need(args, "out"))
    n = _need(args, "nodes")
    rng = make_rng(args.seed)
    if args.model == "er":
        if args.density is not None:
            slots = n * n if args.self_loops else n * (n - 1)
            g = gen_er(n, m_edges=int(round(args.density * slots)), seed=rng,
                       self_loops=args.self_loops)
        elif args.edges is not None:
            g = gen_er(n, m_edges=args.edges, seed=rng, self_loops=args.self_loops)
        else:
            g = gen_er(n, p_edge=args.p_edge if args.p_edge is not None else 0.44, seed=rng,
                       self_loops=args.self_loops)
    elif args.model == "sbm":
        P = json.loads(args.block_probs) if args.block_probs else [[0.7, 0.1], [0.2, 0.7]]
        blocks = equal_blocks(n, len(P))
        g = gen_sbm(n, blocks, P, seed=rng, self_loops=args.self_loops)
    else:
        g = gen_rdp(n, args.radius, seed=rng, self_loops=args.self_loops)
    run = Run(args)
    run.write(out, edges_to_csv(g))
    run.manifest(_file_manifest(out))


def _spec_from_file(path) -> tuple[GnarEdgeSpec, CoefficientSet, dict]:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GnarEdgeError(f"{path}: invalid JSON at line {exc.lineno}") from None
    spec = GnarEdgeSpec(int(d["lag"]), tuple(d["stages"]))
    coefs = CoefficientSet(d["alpha"], tuple(tuple(b) for b in d["beta"]),
                           float(d.get("intercept", 0.0)))
    return spec, coefs, d


def cmd_simulate(args) -> None:
    out = Path(_need(args, "out"))
    g = _load_graph(args)
    if (args.regime is None) == (args.spec is None):
        raise UsageError("give exactly one of --regime or --spec")
    if args.regime is not None:
        from .experiments import get_regime

        reg = get_regime(args.regime)
        spec, coefs, T = reg.spec, reg.coefficients, reg.T
    else:
        spec, coefs, d = _spec_from_file(args.spec)
        T = d.get("T", 200)
    T = args.T or T
    kinds = {
        "gaussian": lambda: InnovationModel.gaussian(args.sigma),
        "student_t": lambda: InnovationModel.student_t(args.df),
        "time_correlated": lambda: InnovationModel.time_correlated(args.rho),
        "edge_correlated": lambda: InnovationModel.edge_correlated(args.rho),
        "none": InnovationModel.zero,
    }
    panel = simulate_gnar_edge(g, spec, coefs, T, kinds[args.innovation](), seed=args.seed,
                               burn_in=args.burn_in)
    run = Run(args, [args.graph, args.spec])
    run.write(out, panel_to_csv(panel))
    run.manifest(_file_manifest(out))


def cmd_fit(args) -> None:
    out = Path(_need(args, "out"))
    g = _load_graph(args)
    panel = read_panel_csv(_need(args, "panel"), graph=g)
    L = _need(args, "lag")
    if args.model_type == "gnar":
        stages = _int_list(_need(args, "stages"))
        spec = GnarEdgeSpec(L, tuple(stages), EDGE_SPECIFIC if args.edge_alpha else GLOBAL,
                            args.intercept)
        doc = fit_gnar_edge(panel, spec).to_document()
    elif args.model_type == "ar":
        doc = fit_ar(panel, L, intercept=not args.no_ar_intercept).to_document()
    else:
        doc = fit_var(panel, L).to_document()
    run = Run(args, [args.graph, args.panel])
    save_model(doc, out)
    run.outputs.append(out)
    run.manifest(_file_manifest(out))


def _forecast(model, panel: EdgePanel) -> np.ndarray:
    if isinstance(model, FittedGnarEdge):
        return predict_one_step(model, panel)
    return predict_baseline(model, panel)


def cmd_predict(args) -> None:
    out = Path(_need(args, "out"))
    model = load_model(_need(args, "model"))
    panel = read_panel_csv(_need(args, "panel"), graph=model.graph)
    f = _forecast(model, panel)
    run = Run(args, [args.model, args.panel])
    run.write(out, _csv(["source", "target", "forecast"],
                        [[s, t, _f(v)] for (s, t), v in zip(model.graph.edges, f)]))
    run.manifest(_file_manifest(out))


def cmd_evaluate(args) -> None:
    """Score fixed models on the last ``holdout`` columns (no refitting)."""
    out = Path(_need(args, "out"))
    paths = [p for p in _need(args, "models").split(",") if p]
    if args.holdout < 1:
        raise UsageError("--holdout must be at least 1")
    rows = []
    for path in paths:
        model = load_model(path)
        panel = read_panel_csv(_need(args, "panel"), graph=model.graph)
        if panel.T <= args.holdout:
            raise GnarEdgeError(f"panel has {panel.T} columns, cannot hold out {args.holdout}")
        errs = []
        for h in range(args.holdout):
            stop = panel.T - args.holdout + h
            errs.append(_forecast(model, panel.window(0, stop)) - panel.values[:, stop])
        rmse = float(np.sqrt(np.mean(np.square(errs))))
        rows.append([path, model.to_document()["model_type"], _f(rmse), args.holdout])
    run = Run(args, [*paths, args.panel])
    run.write(out, _csv(["model", "model_type", "rmse", "holdout"], rows))
    run.manifest(_file_manifest(out))


def cmd_sparsify(args) -> None:
    g = _load_graph(args)
    panel = read_panel_csv(_need(args, "panel"), graph=g)
    base = Path(args.out) if args.out else None
    out_graph = Path(args.out_graph) if args.out_graph else (base / "graph.csv" if base else None)
    out_panel = Path(args.out_panel) if args.out_panel else (base / "panel.csv" if base else None)
    if out_graph is None or out_panel is None:
        raise UsageError("give --out-graph and --out-panel, or an --out directory")
    scored = preprocess(panel)[0] if args.score_on == "preprocessed" else panel
    scores = panel_leadingness(scored)
    sub, sub_panel = sparsify_top_k(g, panel, _need(args, "top_k"), scores)
    run = Run(args, [args.graph, args.panel])
    run.write(out_graph, edges_to_csv(sub))
    run.write(out_panel, panel_to_csv(sub_panel))
    scores_path = Path(args.out_scores) if args.out_scores else (
        base / "leadingness.csv" if base else None)
    if scores_path is not None:
        run.write(scores_path, leadingness_to_csv(g, scores))
    run.manifest(base / "manifest.json" if base else _file_manifest(out_graph))


def cmd_diagnose(args) -> None:
    out = Path(_need(args, "out"))
    model = load_model(_need(args, "model"))
    panel = read_panel_csv(_need(args, "panel"), graph=model.graph)
    if isinstance(model, FittedGnarEdge):
        resid = fitted_residuals(model, panel)
    else:
        L = model.L
        resid = np.column_stack([
            panel.values[:, t] - _forecast(model, panel.window(0, t)) for t in range(L, panel.T)
        ])
    L = model.spec.L if isinstance(model, FittedGnarEdge) else model.L
    times = None if panel.times is None else panel.times[L:]
    report = residual_report(resid, max_lag=min(args.max_lag, resid.shape[1] - 1), times=times)
    run = Run(args, [args.model, args.panel])
    out.mkdir(parents=True, exist_ok=True)
    run.outputs.extend(report.write(out))
    run.manifest(out / "manifest.json")


# --- experiments ---------------------------------------------------------------------

REGIME_NAMES = ("regime1", "regime2", "regime3", "regime4", "regime5", "large1", "large2")
MISSPEC_NAMES = ("misspec-heavy-tail", "misspec-corr-innov", "misspec-rewire")
EXPERIMENT_NAMES = REGIME_NAMES + MISSPEC_NAMES + ("prediction", "pipeline")


def _header(args) -> str:
    return f"# rng={RNG_ALGORITHM}; seed={args.seed}\n"


def _coverage_files(run, out: Path, rep, truth, args, prefix="") -> None:
    from .experiments import REPORT_COLUMNS

    rows = [[r[c] if not isinstance(r[c], float) else _f(r[c]) for c in REPORT_COLUMNS]
            for r in rep.rows]
    run.write(out / f"{prefix}estimates.csv", _header(args) + _csv(REPORT_COLUMNS, rows))
    summ = rep.summary()
    run.write(out / f"{prefix}summary.csv", _header(args) + _csv(
        ["parameter", "true_value", "coverage", "rmse", "n"],
        [[k, _f(truth[k]), _f(v["coverage"]), _f(v["rmse"]), v["n"]] for k, v in summ.items()],
    ))
    run.write(out / f"{prefix}failures.csv", _csv(["replication", "error"], rep.failures))


def cmd_experiment(args) -> None:
    from . import experiments as ex

    out = Path(_need(args, "out"))
    name = args.name
    seed = 0 if args.seed is None else args.seed
    run = Run(args)
    out.mkdir(parents=True, exist_ok=True)
    if name in REGIME_NAMES:
        reg = ex.get_regime(name, args.graph_model)
        if args.density is not None:
            reg = reg.with_graph(ex.sparse_recipe(args.graph_model or "er", reg.graph["n"],
                                                  args.density))
        rep = ex.coverage_experiment(reg, seed, args.reps, args.jobs)
        _coverage_files(run, out, rep, reg.truth, args)
    elif name in MISSPEC_NAMES:
        reg = ex.get_regime(args.regime, args.graph_model)
        kind = {"misspec-heavy-tail": "heavy_tail", "misspec-corr-innov": "corr_innov",
                "misspec-rewire": "rewire"}[name]
        probs = [float(x) for x in args.probabilities.split(",")]
        res = ex.misspecification_suite(kind, reg, seed, args.reps, args.jobs, df=args.df,
                                        rho=args.rho, probabilities=probs, across=args.across)
        if kind == "rewire":
            rows = []
            for p, rep in res.estimation.items():
                for k, v in rep.summary().items():
                    rows.append([_f(p), _f(res.hamming[p]), k, _f(v["coverage"]),
                                 _f(v["rmse"]), v["n"]])
            run.write(out / "summary.csv", _header(args) + _csv(
                ["probability", "mean_hamming", "parameter", "coverage", "rmse", "n"], rows))
        else:
            rows = []
            for label, rep in res.estimation.items():
                for k, v in rep.summary().items():
                    err = rep.abs_errors(k)
                    rows.append([label, k, _f(v["coverage"]), _f(v["rmse"]),
                                 _f(np.median(err)), v["n"]])
            run.write(out / "summary.csv", _header(args) + _csv(
                ["innovations", "parameter", "coverage", "rmse", "median_abs_error", "n"], rows))
            pred = [[label, i, _f(v)] for label, arr in res.prediction.items()
                    for i, v in enumerate(arr)]
            run.write(out / "prediction.csv", _header(args) + _csv(
                ["innovations", "replication", "rmse"], pred))
    elif name == "prediction":
        reg = ex.get_regime(args.regime)
        reg = reg.with_graph(ex.sparse_recipe(args.graph_model or "er", reg.graph["n"],
                                              args.density if args.density is not None else 0.1))
        L, R = reg.spec.L, reg.spec.R
        models = [ex.ModelConfig.gnar(L, R), ex.ModelConfig.gnar(L, [0] * L),
                  ex.ModelConfig.ar(L), ex.ModelConfig.truth()]
        res = ex.prediction_experiment(reg, models, seed, args.reps, args.jobs)
        names = list(res.rmse)
        reps = len(res.rmse[names[0]])
        run.write(out / "rmse.csv", _header(args) + _csv(
            ["replication", *names], [[i, *(_f(res.rmse[n][i]) for n in names)]
                                      for i in range(reps)]))
        run.write(out / "summary.csv", _header(args) + _csv(
            ["model", "mean_rmse", "median_rmse"],
            [[n, _f(res.mean()[n]), _f(res.median()[n])] for n in names]))
    else:  # pipeline
        from .pipeline import run_pipeline, synthetic_standin

        levels = synthetic_standin(n=args.nodes or 90, seed=seed)
        r = run_pipeline(levels, top_k=args.top_k)
        run.write(out / "grid.csv", _header(args) + _csv(
            ["lag", "stages", "rmse"], [[L, R, _f(v)] for (L, R), v in sorted(r.grid.items())]))
        sw = r.small_world
        run.write(out / "summary.csv", _header(args) + _csv(["quantity", "value"], [
            ["top_k", r.top_k], ["density", _f(r.sparsified_density)],
            ["best_lag", r.best[0]], ["best_stages", r.best[1]], ["best_rmse", _f(r.grid[r.best])],
            ["stage1_best_lag", r.best_lag], ["gnar_stage1_rmse", _f(r.gnar_rmse_best_lag)],
            ["ar_rmse", _f(r.ar_rmse_best_lag)],
            ["avg_local_clustering", _f(sw.avg_local_clustering)],
            ["avg_shortest_path", _f(sw.avg_shortest_path)],
            ["er_expected_clustering", _f(sw.er_expected_clustering)],
            ["er_expected_aspl", _f(sw.er_expected_aspl)],
        ]))
        run.outputs.extend(r.report.write(out / "diagnostics"))
    run.manifest(out / "manifest.json")


# --- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--jobs", type=int, default=None)
    common.add_argument("--out", default=None)
    common.add_argument("--nodes", type=int, default=None,
                        help="node count (graph-gen) or override for edge-list inference")

    p = _Parser(prog="gnar-edge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("graph-gen", parents=[common], help="draw a random directed graph")
    s.add_argument("--model", choices=("er", "sbm", "rdp"), required=True)
    s.add_argument("--edges", type=int, help="ER: exact edge count")
    s.add_argument("--p-edge", type=float, help="ER: independent edge probability")
    s.add_argument("--density", type=float, help="ER: target density")
    s.add_argument("--block-probs", help="SBM: JSON matrix of block probabilities")
    s.add_argument("--radius", type=float, default=0.7, help="RDP: latent radius")
    s.add_argument("--self-loops", action="store_true")
    s.set_defaults(func=cmd_graph_gen)

    s = sub.add_parser("simulate", parents=[common], help="simulate a GNAR-edge panel")
    s.add_argument("--graph")
    s.add_argument("--regime")
    s.add_argument("--spec", help="JSON with lag, stages, alpha, beta[, intercept, T]")
    s.add_argument("--T", type=int)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--innovation", default="gaussian",
                   choices=("gaussian", "student_t", "time_correlated", "edge_correlated", "none"))
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--df", type=float, default=3.0)
    s.add_argument("--rho", type=float, default=0.5)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", parents=[common], help="fit a model to a panel")
    s.add_argument("--graph")
    s.add_argument("--panel")
    s.add_argument("--lag", type=int)
    s.add_argument("--stages")
    s.add_argument("--edge-alpha", action="store_true")
    s.add_argument("--intercept", action="store_true")
    s.add_argument("--model-type", choices=("gnar", "ar", "var"), default="gnar")
    s.add_argument("--no-ar-intercept", action="store_true")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", parents=[common], help="one-step forecast")
    s.add_argument("--model")
    s.add_argument("--panel")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common], help="hold-out RMSE of fitted models")
    s.add_argument("--models")
    s.add_argument("--panel")
    s.add_argument("--holdout", type=int, default=1)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sparsify", parents=[common], help="keep the top-k leading edges")
    s.add_argument("--graph")
    s.add_argument("--panel")
    s.add_argument("--top-k", type=int)
    s.add_argument("--out-graph")
    s.add_argument("--out-panel")
    s.add_argument("--out-scores")
    s.add_argument("--score-on", choices=("preprocessed", "raw"), default="preprocessed")
    s.set_defaults(func=cmd_sparsify)

    s = sub.add_parser("diagnose", parents=[common], help="residual diagnostics")
    s.add_argument("--model")
    s.add_argument("--panel")
    s.add_argument("--max-lag", type=int, default=20)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("experiment", parents=[common], help="run a named simulation study")
    s.add_argument("--name", choices=EXPERIMENT_NAMES, required=True)
    s.add_argument("--reps", type=int)
    s.add_argument("--graph-model", choices=("er", "sbm", "rdp"))
    s.add_argument("--density", type=float)
    s.add_argument("--regime", default="regime4", help="base regime for misspec/prediction")
    s.add_argument("--df", type=float, default=3.0)
    s.add_argument("--rho", type=float, default=0.5)
    s.add_argument("--across", choices=("time", "edge"), default="time")
    s.add_argument("--probabilities", default="0,0.05,0.1,0.15,0.2")
    s.add_argument("--top-k", type=int, default=801)
    s.set_defaults(func=cmd_experiment)
    return p


def _one_line(kind: str, message: str) -> str:
    return f"error: {kind}: {' '.join(str(message).split())}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(_one_line("UsageError", exc), file=sys.stderr)
        return EXIT_USAGE
    except (GnarEdgeError, KeyError, OSError, ValueError) as exc:
        print(_one_line(type(exc).__name__, exc), file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Simulation regimes and Monte-Carlo harnesses for coverage, prediction and misspecification.

Replication ``i`` of an experiment seeded with ``seed`` draws everything (graph,
initial values, innovations, rewiring) from one Philox stream seeded with
``seed + i``, so any single replication can be re-run in isolation.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from ._rng import RNG_ALGORITHM, make_rng
from .baselines import fit_ar, fit_var, predict_baseline
from .errors import GnarEdgeError
from .gnar import (
    CoefficientSet,
    GnarEdgeSpec,
    _one_step,
    fit_gnar_edge,
    parameter_names,
    predict_one_step,
)
from .graph import DirectedGraph, _rewire_pairs, build_graph, hamming, rewire_alignment
from .panel import EdgePanel
from .simulate import (
    InnovationModel,
    equal_blocks,
    er_edges_for_density,
    gen_er,
    gen_rdp,
    gen_sbm,
    simulate_gnar_edge,
)

JOBS_ENV = "GNAR_EDGE_JOBS"


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


# --- regimes -----------------------------------------------------------------


def _manifest() -> dict:
    return json.loads(resources.files("gnar_edge").joinpath("regimes.json").read_text("utf-8"))


GRAPH_RECIPES: dict = _manifest()["graphs"]


@dataclass(frozen=True)
class SimulationRegime:
    name: str
    spec: GnarEdgeSpec
    coefficients: CoefficientSet
    T: int
    graph: dict
    innovation: InnovationModel = field(default_factory=InnovationModel)
    replications: int = 50

    @property
    def truth(self) -> dict[str, float]:
        return dict(zip(parameter_names(self.spec), self.coefficients.to_vector(self.spec)))

    def with_graph(self, graph_model: str | dict) -> "SimulationRegime":
        recipe = GRAPH_RECIPES[graph_model] if isinstance(graph_model, str) else graph_model
        return replace(self, graph=dict(recipe))


def builtin_regimes() -> dict[str, SimulationRegime]:
    out = {}
    for name, d in _manifest()["regimes"].items():
        spec = GnarEdgeSpec(d["lag"], tuple(d["stages"]))
        coefs = CoefficientSet(d["alpha"], tuple(d["beta"]))
        out[name] = SimulationRegime(name, spec, coefs, d["T"], dict(GRAPH_RECIPES[d["graph"]]),
                                     replications=d["replications"])
    return out


def get_regime(name: str, graph_model: str | None = None) -> SimulationRegime:
    regimes = builtin_regimes()
    if name not in regimes:
        raise GnarEdgeError(f"unknown regime {name!r}; choose from {sorted(regimes)}")
    reg = regimes[name]
    if graph_model is not None:
        if name.startswith("large") and graph_model != "er":
            raise GnarEdgeError("large regimes are defined on ER graphs only")
        if not name.startswith("large"):
            reg = reg.with_graph(graph_model)
    return reg


def make_graph(recipe: dict, seed=None) -> DirectedGraph:
    """Draw a graph from a recipe dict (``model`` in er | sbm | rdp)."""
    rng = make_rng(seed)
    model = recipe["model"]
    n = recipe["n"]
    if model == "er":
        m = recipe.get("m_edges")
        if m is None and "density" in recipe:
            m = er_edges_for_density(n, recipe["density"])
        if m is None:
            return gen_er(n, p_edge=recipe["p_edge"], seed=rng)
        return gen_er(n, m_edges=m, seed=rng)
    if model == "sbm":
        blocks = recipe.get("blocks") or equal_blocks(n, recipe.get("n_blocks", 2))
        return gen_sbm(n, blocks, recipe["P"], seed=rng)
    if model == "rdp":
        return gen_rdp(n, recipe.get("radius", 0.7), seed=rng)
    raise GnarEdgeError(f"unknown graph model {model!r}")


def sparse_recipe(graph_model: str, n: int = 20, density: float = 0.1) -> dict:
    """Recipe of the given family scaled down to roughly ``density``."""
    if graph_model == "er":
        return {"model": "er", "n": n, "m_edges": er_edges_for_density(n, density)}
    if graph_model == "sbm":
        scale = density / 0.41
        P = (np.array(GRAPH_RECIPES["sbm"]["P"]) * scale).tolist()
        return {"model": "sbm", "n": n, "n_blocks": 2, "P": P}
    if graph_model == "rdp":
        # expected density is radius^2 * 8 / pi^2 for quarter-circle angles
        return {"model": "rdp", "n": n, "radius": math.sqrt(density * math.pi**2 / 8)}
    raise GnarEdgeError(f"unknown graph model {graph_model!r}")


# --- running replications ----------------------------------------------------


def _run(fn: Callable, args: Sequence, jobs: int | None) -> list:
    jobs = default_jobs() if jobs is None else jobs
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args))


def _simulate_rep(regime: SimulationRegime, rng, innovation: InnovationModel | None = None):
    g = make_graph(regime.graph, rng)
    panel = simulate_gnar_edge(g, regime.spec, regime.coefficients, regime.T,
                               innovation or regime.innovation, seed=rng)
    return g, panel


REPORT_COLUMNS = ("regime", "replication", "parameter", "estimate", "ci_low", "ci_high",
                  "covered", "abs_error")


def _estimate_rows(regime, rep, model, truth) -> list[dict]:
    lo, hi = model.ci95
    rows = []
    for name, est, a, b in zip(model.names, model.params, lo, hi):
        true = truth[name]
        rows.append({
            "regime": regime.name, "replication": rep, "parameter": name,
            "estimate": float(est), "ci_low": float(a), "ci_high": float(b),
            "covered": bool(a <= true <= b), "abs_error": float(abs(est - true)),
        })
    return rows


@dataclass
class CoverageReport:
    regime: str
    rows: list[dict]
    failures: list[tuple[int, str]]
    seed: int
    rng: str = RNG_ALGORITHM
    extra: dict = field(default_factory=dict)

    def parameters(self) -> list[str]:
        return list(dict.fromkeys(r["parameter"] for r in self.rows))

    def summary(self) -> dict[str, dict]:
        """Per-parameter coverage, RMSE and replication count."""
        out = {}
        for name in self.parameters():
            sel = [r for r in self.rows if r["parameter"] == name]
            err = np.array([r["abs_error"] for r in sel])
            out[name] = {
                "coverage": float(np.mean([r["covered"] for r in sel])),
                "rmse": float(np.sqrt(np.mean(err**2))),
                "n": len(sel),
            }
        return out

    def abs_errors(self, name: str) -> np.ndarray:
        return np.array([r["abs_error"] for r in self.rows if r["parameter"] == name])


def _coverage_rep(args):
    regime, seed, rep, fit_transform = args
    rng = make_rng(seed + rep)
    try:
        g, panel = _simulate_rep(regime, rng)
        if fit_transform is not None:
            panel = fit_transform(panel, rng)
        model = fit_gnar_edge(panel, regime.spec)
        return _estimate_rows(regime, rep, model, regime.truth), None
    except Exception as exc:  # recorded, not fatal
        return [], (rep, f"{type(exc).__name__}: {exc}")


def coverage_experiment(
    regime: SimulationRegime,
    seed: int = 0,
    replications: int | None = None,
    jobs: int | None = None,
) -> CoverageReport:
    """Fresh graph and panel per replication; fit the true spec and score the CIs."""
    reps = regime.replications if replications is None else replications
    if reps < 1:
        raise GnarEdgeError("need at least one replication")
    results = _run(_coverage_rep, [(regime, seed, i, None) for i in range(reps)], jobs)
    rows = [r for rs, _ in results for r in rs]
    failures = [f for _, f in results if f is not None]
    return CoverageReport(regime.name, rows, failures, seed)


# --- prediction --------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    """A forecasting model to compare: ``kind`` in gnar | ar | var | truth."""

    name: str
    kind: str
    spec: GnarEdgeSpec | None = None
    lag: int | None = None

    @classmethod
    def gnar(cls, L: int, R: Sequence[int], name: str | None = None):
        spec = GnarEdgeSpec(L, tuple(R))
        return cls(name or str(spec), "gnar", spec=spec)

    @classmethod
    def ar(cls, L: int):
        return cls(f"AR({L})", "ar", lag=L)

    @classmethod
    def var(cls, L: int):
        return cls(f"VAR({L})", "var", lag=L)

    @classmethod
    def truth(cls):
        return cls("truth", "truth")


def rmse(forecast: np.ndarray, actual: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(forecast) - np.asarray(actual)) ** 2)))


def forecast_last(cfg: ModelConfig, train: EdgePanel, regime: SimulationRegime | None = None):
    if cfg.kind == "gnar":
        return predict_one_step(fit_gnar_edge(train, cfg.spec), train)
    if cfg.kind == "ar":
        return predict_baseline(fit_ar(train, cfg.lag), train)
    if cfg.kind == "var":
        return predict_baseline(fit_var(train, cfg.lag), train)
    if cfg.kind == "truth":
        return _one_step(regime.coefficients, train.graph, train.values)
    raise GnarEdgeError(f"unknown model kind {cfg.kind!r}")


def _prediction_rep(args):
    regime, models, seed, rep, innovation = args
    rng = make_rng(seed + rep)
    try:
        g, panel = _simulate_rep(regime, rng, innovation)
    except Exception as exc:
        return {m.name: math.nan for m in models}, (rep, f"{type(exc).__name__}: {exc}")
    train, actual = panel.window(0, panel.T - 1), panel.values[:, -1]
    out, err = {}, None
    for m in models:
        try:
            out[m.name] = rmse(forecast_last(m, train, regime), actual)
        except Exception as exc:
            out[m.name] = math.nan
            err = (rep, f"{m.name}: {type(exc).__name__}: {exc}")
    return out, err


@dataclass
class PredictionReport:
    regime: str
    rmse: dict[str, np.ndarray]
    failures: list[tuple[int, str]]
    seed: int
    rng: str = RNG_ALGORITHM

    def mean(self) -> dict[str, float]:
        return {k: float(np.nanmean(v)) for k, v in self.rmse.items()}

    def median(self) -> dict[str, float]:
        return {k: float(np.nanmedian(v)) for k, v in self.rmse.items()}


def prediction_experiment(
    regime: SimulationRegime,
    models: Sequence[ModelConfig],
    seed: int = 0,
    replications: int | None = None,
    jobs: int | None = None,
    innovation: InnovationModel | None = None,
) -> PredictionReport:
    """Hold out the last column, fit every model on the rest and score one-step RMSE."""
    if not models:
        raise GnarEdgeError("need at least one model")
    reps = regime.replications if replications is None else replications
    results = _run(_prediction_rep,
                   [(regime, list(models), seed, i, innovation) for i in range(reps)], jobs)
    names = list(dict.fromkeys(m.name for m in models))
    rm = {n: np.array([r[n] for r, _ in results]) for n in names}
    return PredictionReport(regime.name, rm, [e for _, e in results if e is not None], seed)


# --- misspecification ----------------------------------------------------------


@dataclass
class MisspecificationReport:
    kind: str
    regime: str
    estimation: dict  # label -> CoverageReport
    prediction: dict  # label -> np.ndarray of RMSE
    hamming: dict = field(default_factory=dict)  # rewiring probability -> mean Hamming
    seed: int = 0
    rng: str = RNG_ALGORITHM


def _misspec_rep(args):
    regime, seed, rep, innovation = args
    rng = make_rng(seed + rep)
    try:
        g, panel = _simulate_rep(regime, rng, innovation)
        train = panel.window(0, panel.T - 1)
        model = fit_gnar_edge(train, regime.spec)
        pred = rmse(predict_one_step(model, train), panel.values[:, -1])
        return _estimate_rows(regime, rep, model, regime.truth), pred, None
    except Exception as exc:
        return [], math.nan, (rep, f"{type(exc).__name__}: {exc}")


def _rewire_rep(args):
    regime, seed, rep, probs = args
    rng = make_rng(seed + rep)
    out = {}
    try:
        g, panel = _simulate_rep(regime, rng)
    except Exception as exc:
        return {p: ([], math.nan, (rep, f"{type(exc).__name__}: {exc}")) for p in probs}
    for p in probs:
        # every probability gets its own stream so p=0 consumes nothing shared
        prng = make_rng(np.random.SeedSequence([seed + rep, int(round(p * 1e6))]).generate_state(1)[0])
        try:
            edges, source_rows = rewire_alignment(_rewire_pairs(g, p, prng))
            g2 = build_graph(g.n, edges)
            fitted_panel = EdgePanel(g2, panel.values[source_rows])
            model = fit_gnar_edge(fitted_panel, regime.spec)
            out[p] = (_estimate_rows(regime, rep, model, regime.truth), hamming(g, g2), None)
        except Exception as exc:
            out[p] = ([], math.nan, (rep, f"{type(exc).__name__}: {exc}"))
    return out


def misspecification_suite(
    kind: str,
    regime: SimulationRegime,
    seed: int = 0,
    replications: int | None = None,
    jobs: int | None = None,
    df: float = 3.0,
    rho: float = 0.5,
    probabilities: Sequence[float] = (0.0, 0.05, 0.1, 0.15, 0.2),
    across: str = "time",
) -> MisspecificationReport:
    """Fit the standard model to data violating one of its assumptions.

    ``heavy_tail`` and ``corr_innov`` run the same seeds under the standard
    Gaussian noise (label ``baseline``) and under the altered noise (label
    ``misspecified``).  ``rewire`` simulates on the true graph and fits on
    rewired copies, one per probability; when rewired edges merge, the
    series of the lowest original label is kept and the others are dropped.
    """
    reps = regime.replications if replications is None else replications
    if kind in ("heavy_tail", "corr_innov"):
        if kind == "heavy_tail":
            alt = InnovationModel.student_t(df)
        elif across == "time":
            alt = InnovationModel.time_correlated(rho)
        else:
            alt = InnovationModel.edge_correlated(rho)
        estimation, prediction = {}, {}
        for label, innov in (("baseline", InnovationModel()), ("misspecified", alt)):
            res = _run(_misspec_rep, [(regime, seed, i, innov) for i in range(reps)], jobs)
            rows = [r for rs, _, _ in res for r in rs]
            estimation[label] = CoverageReport(regime.name, rows, [e for *_, e in res if e], seed)
            prediction[label] = np.array([p for _, p, _ in res])
        return MisspecificationReport(kind, regime.name, estimation, prediction, seed=seed)
    if kind == "rewire":
        probs = [float(p) for p in probabilities]
        res = _run(_rewire_rep, [(regime, seed, i, probs) for i in range(reps)], jobs)
        estimation, ham = {}, {}
        for p in probs:
            rows = [r for d in res for r in d[p][0]]
            fails = [d[p][2] for d in res if d[p][2]]
            estimation[p] = CoverageReport(regime.name, rows, fails, seed, extra={"p": p})
            ham[p] = float(np.nanmean([d[p][1] for d in res]))
        return MisspecificationReport(kind, regime.name, estimation, {}, ham, seed=seed)
    raise GnarEdgeError(f"unknown misspecification kind {kind!r}")

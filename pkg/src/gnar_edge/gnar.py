"""GNAR-edge model: design construction, least-squares fitting and forecasting.

Each edge weight regresses on its own lags and, per lag ``l``, on the
equally weighted averages of its r-stage neighbours for ``r = 1..R_l``.
The design has one row per (edge, time) pair, edge-major, and columns in a
fixed order: own-lag columns by lag, then neighbour columns by (lag, stage),
then the optional intercept.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import GnarEdgeError, InsufficientHistoryError, SingularDesignError
from .graph import DirectedGraph, build_graph
from .panel import EdgePanel

Z_95 = 1.959964

GLOBAL = "global"
EDGE_SPECIFIC = "edge_specific"


@dataclass(frozen=True)
class GnarEdgeSpec:
    """GNAR-edge(L, [R_1..R_L]) with global or edge-specific own-lag coefficients."""

    L: int
    R: tuple[int, ...]
    alpha_mode: str = GLOBAL
    intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "R", tuple(int(r) for r in self.R))
        if self.L < 1:
            raise GnarEdgeError(f"lag must be at least 1, got {self.L}")
        if len(self.R) != self.L:
            raise GnarEdgeError(f"need {self.L} stage entries, got {len(self.R)}")
        if any(r < 0 for r in self.R):
            raise GnarEdgeError("stages must be non-negative")
        if self.alpha_mode not in (GLOBAL, EDGE_SPECIFIC):
            raise GnarEdgeError(f"unknown alpha mode {self.alpha_mode!r}")

    @property
    def max_stage(self) -> int:
        return max(self.R)

    @property
    def beta_index(self) -> list[tuple[int, int]]:
        return [(l, r) for l in range(1, self.L + 1) for r in range(1, self.R[l - 1] + 1)]

    def __str__(self):
        return f"GNAR-edge({self.L}, [{','.join(map(str, self.R))}])"

    def to_dict(self) -> dict:
        return {"lag": self.L, "stages": list(self.R), "alpha_mode": self.alpha_mode,
                "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d: dict) -> "GnarEdgeSpec":
        return cls(int(d["lag"]), tuple(d["stages"]), d.get("alpha_mode", GLOBAL),
                   bool(d.get("intercept", False)))


def parameter_names(spec: GnarEdgeSpec, graph: DirectedGraph | None = None) -> list[str]:
    if spec.alpha_mode == GLOBAL:
        names = [f"alpha_{l}" for l in range(1, spec.L + 1)]
    else:
        if graph is None:
            raise GnarEdgeError("edge-specific names need the graph")
        names = [f"alpha_{l}[{s}->{t}]" for l in range(1, spec.L + 1) for s, t in graph.edges]
    names += [f"beta_{l}_{r}" for l, r in spec.beta_index]
    if spec.intercept:
        names.append("intercept")
    return names


@dataclass(frozen=True)
class CoefficientSet:
    """Own-lag coefficients ``alpha`` ((L,) or (K, L)), ``beta[l-1][r-1]``, intercept."""

    alpha: np.ndarray
    beta: tuple[np.ndarray, ...]
    intercept: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", tuple(np.atleast_1d(np.asarray(b, dtype=float))
                                               for b in self.beta))
        if len(self.beta) != self.L:
            raise GnarEdgeError(f"{len(self.beta)} beta groups for {self.L} lags")

    @property
    def L(self) -> int:
        return self.alpha.shape[-1]

    @property
    def R(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.beta)

    @property
    def edge_specific(self) -> bool:
        return self.alpha.ndim == 2

    def alpha_matrix(self, K: int) -> np.ndarray:
        """Own-lag coefficients broadcast to K x L."""
        return np.broadcast_to(self.alpha, (K, self.L)) if not self.edge_specific else self.alpha

    @classmethod
    def from_vector(cls, spec: GnarEdgeSpec, vec: Sequence[float], K: int | None = None):
        vec = np.asarray(vec, dtype=float)
        if spec.alpha_mode == GLOBAL:
            alpha, pos = vec[: spec.L], spec.L
        else:
            alpha = vec[: K * spec.L].reshape(spec.L, K).T
            pos = K * spec.L
        beta = []
        for R in spec.R:
            beta.append(vec[pos : pos + R])
            pos += R
        intercept = float(vec[pos]) if spec.intercept else 0.0
        return cls(alpha, tuple(beta), intercept)

    def to_vector(self, spec: GnarEdgeSpec) -> np.ndarray:
        parts = [self.alpha.T.ravel() if self.edge_specific else self.alpha]
        parts += list(self.beta)
        if spec.intercept:
            parts.append([self.intercept])
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Stacked regression for a GNAR-edge fit (rows edge-major, t = L..T-1)."""

    spec: GnarEdgeSpec
    graph: DirectedGraph
    y: np.ndarray
    own: np.ndarray  # n_obs x L own lagged values
    neighbors: np.ndarray  # n_obs x n_beta stage averages
    edge: np.ndarray
    time: np.ndarray
    n_times: int  # T - L
    names: list[str]

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def n_params(self) -> int:
        return len(self.names)

    def shared_columns(self) -> np.ndarray:
        cols = [self.neighbors]
        if self.spec.intercept:
            cols.append(np.ones((self.n_obs, 1)))
        return np.hstack(cols) if cols else np.empty((self.n_obs, 0))

    def dense(self) -> np.ndarray:
        """Full regressor matrix in parameter-name order."""
        if self.spec.alpha_mode == GLOBAL:
            alpha_cols = self.own
        else:
            K, L = self.graph.K, self.spec.L
            alpha_cols = np.zeros((self.n_obs, L * K))
            rows = np.arange(self.n_obs)
            for l in range(L):
                alpha_cols[rows, l * K + self.edge] = self.own[:, l]
        return np.hstack([alpha_cols, self.shared_columns()])


def stage_averages(g: DirectedGraph, values: np.ndarray, r_max: int) -> list[np.ndarray]:
    """``[W^(r) @ values for r in 1..r_max]``; empty neighbourhoods give zeros."""
    return [np.asarray(g.stage_operator(r) @ values) for r in range(1, r_max + 1)]


def build_design(p: EdgePanel, g: DirectedGraph, spec: GnarEdgeSpec) -> DesignMatrix:
    if p.graph != g:
        raise GnarEdgeError("panel is not aligned to the given graph")
    L, T, K = spec.L, p.T, g.K
    if T <= L:
        raise InsufficientHistoryError(f"need more than {L} time points, got {T}")
    if spec.max_stage > g.max_stage:
        raise GnarEdgeError(
            f"stage {spec.max_stage} requested but the graph has no neighbours beyond stage {g.max_stage}"
        )
    V = p.values
    m = T - L
    y = V[:, L:].ravel()
    own = np.column_stack([V[:, L - l : T - l].ravel() for l in range(1, L + 1)])
    avgs = stage_averages(g, V, spec.max_stage)
    nb = [avgs[r - 1][:, L - l : T - l].ravel() for l, r in spec.beta_index]
    neighbors = np.column_stack(nb) if nb else np.empty((K * m, 0))
    edge = np.repeat(np.arange(K), m)
    time = np.tile(np.arange(L, T), K)
    return DesignMatrix(spec, g, y, own, neighbors, edge, time, m, parameter_names(spec, g))


@dataclass(frozen=True, eq=False)
class FittedGnarEdge:
    spec: GnarEdgeSpec
    graph: DirectedGraph
    params: np.ndarray
    std_errors: np.ndarray
    sigma2: float
    n_obs: int
    names: list[str]
    residuals: np.ndarray | None = None  # K x (T - L)
    extra: dict = field(default_factory=dict)

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def coefficients(self) -> CoefficientSet:
        return CoefficientSet.from_vector(self.spec, self.params, self.graph.K)

    @property
    def ci95(self) -> tuple[np.ndarray, np.ndarray]:
        return self.params - Z_95 * self.std_errors, self.params + Z_95 * self.std_errors

    def param(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def summary(self) -> list[dict]:
        lo, hi = self.ci95
        return [
            {"name": n, "estimate": float(b), "std_error": float(s), "ci_low": float(a),
             "ci_high": float(c)}
            for n, b, s, a, c in zip(self.names, self.params, self.std_errors, lo, hi)
        ]

    def to_document(self) -> dict:
        return {
            "model_type": "gnar_edge",
            "spec": self.spec.to_dict(),
            "graph": {"n": self.graph.n, "edges": [list(e) for e in self.graph.edges]},
            "coefficients": self.summary(),
            "sigma2": float(self.sigma2),
            "n_obs": int(self.n_obs),
            "n_params": int(self.n_params),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "FittedGnarEdge":
        if doc.get("model_type") != "gnar_edge":
            raise GnarEdgeError(f"not a gnar_edge document: {doc.get('model_type')!r}")
        spec = GnarEdgeSpec.from_dict(doc["spec"])
        graph = build_graph(doc["graph"]["n"], doc["graph"]["edges"])
        coefs = doc["coefficients"]
        names = [c["name"] for c in coefs]
        if names != parameter_names(spec, graph):
            raise GnarEdgeError("coefficient names do not match the model spec")
        return cls(spec, graph, np.array([c["estimate"] for c in coefs]),
                   np.array([c["std_error"] for c in coefs]), float(doc["sigma2"]),
                   int(doc["n_obs"]), names)


def _qr_solve(Z: np.ndarray, y: np.ndarray, names: Sequence[str]):
    """Least squares via pivoted QR; returns (coef, (Z'Z)^{-1})."""
    n, p = Z.shape
    if p == 0:
        return np.empty(0), np.empty((0, 0))
    if n < p:
        raise SingularDesignError(f"{n} observations for {p} parameters", names)
    Q, R, piv = sla.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * diag[0] if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < p or diag[0] == 0:
        bad = [names[i] for i in piv[rank:]]
        raise SingularDesignError(f"design is rank deficient; collinear columns: {bad}", bad)
    b_piv = sla.solve_triangular(R, Q.T @ y)
    Rinv = sla.solve_triangular(R, np.eye(p))
    cov_piv = Rinv @ Rinv.T
    inv = np.empty(p, dtype=int)
    inv[piv] = np.arange(p)
    return b_piv[inv], cov_piv[np.ix_(inv, inv)]


def fit(d: DesignMatrix) -> FittedGnarEdge:
    """Ordinary least squares with homoskedastic standard errors and 95% CIs."""
    if d.spec.alpha_mode == GLOBAL:
        Z = d.dense()
        coef, zz_inv = _qr_solve(Z, d.y, d.names)
        resid = d.y - Z @ coef
        var_diag = np.diag(zz_inv)
    else:
        coef, var_diag, resid = _fit_edge_specific(d)
    dof = d.n_obs - d.n_params
    if dof <= 0:
        raise SingularDesignError(f"no residual degrees of freedom ({d.n_obs} obs, {d.n_params} params)",
                                  d.names)
    sigma2 = float(resid @ resid / dof)
    se = np.sqrt(sigma2 * var_diag)
    return FittedGnarEdge(d.spec, d.graph, coef, se, sigma2, d.n_obs, list(d.names),
                          resid.reshape(d.graph.K, d.n_times))


def _fit_edge_specific(d: DesignMatrix):
    """Joint least squares with per-edge own-lag columns, by partitioned regression.

    Own-lag columns of different edges never share a row, so they are
    projected out edge by edge and the shared columns are solved on the
    residualised data.
    """
    K, L, m = d.graph.K, d.spec.L, d.n_times
    A = d.own.reshape(K, m, L)
    B_flat = d.shared_columns()
    P = B_flat.shape[1]
    B = B_flat.reshape(K, m, P)
    y = d.y.reshape(K, m)
    alpha_names = np.array(d.names[: K * L]).reshape(L, K).T
    G = np.einsum("kml,kmj->klj", A, A)
    try:
        G_inv = np.linalg.inv(G)
        bad = [k for k in range(K) if np.linalg.cond(G[k]) > 1e12]
    except np.linalg.LinAlgError:
        bad = [k for k in range(K) if np.linalg.matrix_rank(G[k]) < L]
    if bad:
        cols = [str(n) for n in alpha_names[bad[0]]]
        raise SingularDesignError(f"own-lag columns are collinear for edge {d.graph.edges[bad[0]]}", cols)
    H_y = np.einsum("klj,kmj,km->kl", G_inv, A, y)  # per-edge own-lag fit of y
    if P:
        H_B = np.einsum("klj,kmj,kmp->klp", G_inv, A, B)
        y_res = y - np.einsum("kml,kl->km", A, H_y)
        B_res = B - np.einsum("kml,klp->kmp", A, H_B)
        beta, M_inv = _qr_solve(B_res.reshape(K * m, P), y_res.ravel(), d.names[K * L :])
        alpha = H_y - H_B @ beta
        var_alpha = np.diagonal(G_inv, axis1=1, axis2=2) + np.einsum(
            "klp,pq,klq->kl", H_B, M_inv, H_B
        )
        var_beta = np.diag(M_inv)
    else:
        beta, var_beta = np.empty(0), np.empty(0)
        alpha = H_y
        var_alpha = np.diagonal(G_inv, axis1=1, axis2=2)
    fitted = np.einsum("kml,kl->km", A, alpha)
    if P:
        fitted = fitted + B @ beta
    coef = np.concatenate([alpha.T.ravel(), beta])
    var_diag = np.concatenate([var_alpha.T.ravel(), var_beta])
    return coef, var_diag, (y - fitted).ravel()


def fit_gnar_edge(p: EdgePanel, spec: GnarEdgeSpec) -> FittedGnarEdge:
    return fit(build_design(p, p.graph, spec))


def _one_step(coefs: CoefficientSet, g: DirectedGraph, history: np.ndarray) -> np.ndarray:
    L = coefs.L
    alpha = coefs.alpha_matrix(g.K)
    out = np.full(g.K, coefs.intercept, dtype=float)
    for l in range(1, L + 1):
        x = history[:, -l]
        out += alpha[:, l - 1] * x
        for r, b in enumerate(coefs.beta[l - 1], start=1):
            out += b * np.asarray(g.stage_operator(r) @ x)
    return out


def predict_one_step(m: FittedGnarEdge, p: EdgePanel) -> np.ndarray:
    """Forecast of the column following the last one in ``p``."""
    if p.graph != m.graph:
        raise GnarEdgeError("panel is not aligned to the model's graph")
    if p.T < m.spec.L:
        raise InsufficientHistoryError(f"need {m.spec.L} trailing columns, got {p.T}")
    return _one_step(m.coefficients, m.graph, p.values)


def fitted_residuals(m: FittedGnarEdge, p: EdgePanel) -> np.ndarray:
    """Observed minus one-step fitted values of ``m`` on ``p`` (K x (T - L))."""
    d = build_design(p, m.graph, m.spec)
    return (d.y - d.dense() @ m.params).reshape(m.graph.K, d.n_times)


@dataclass(frozen=True)
class StationarityResult:
    satisfied: bool
    value: float


def stationarity_check(c: CoefficientSet) -> StationarityResult:
    """Sufficient (not necessary) stationarity condition: max_e sum_l(|a| + sum_r |b|) < 1."""
    beta_abs = sum(float(np.abs(b).sum()) for b in c.beta)
    alpha_abs = np.abs(c.alpha).sum(axis=-1)
    value = float(np.max(alpha_abs)) + beta_abs if np.size(alpha_abs) else beta_abs
    return StationarityResult(value < 1.0, value)


def to_var_matrices(m, g: DirectedGraph | None = None) -> list[sp.csr_matrix]:
    """Restricted-VAR matrices ``Psi_l = diag(alpha_l) + sum_r beta_{l,r} W^(r)``.

    ``m`` is a fitted model or a :class:`CoefficientSet` (then ``g`` is required).
    """
    if isinstance(m, FittedGnarEdge):
        coefs, g = m.coefficients, g or m.graph
    else:
        coefs = m
        if g is None:
            raise GnarEdgeError("a graph is required with a bare coefficient set")
    alpha = coefs.alpha_matrix(g.K)
    mats = []
    for l in range(1, coefs.L + 1):
        psi = sp.diags(np.ascontiguousarray(alpha[:, l - 1]), format="csr")
        for r, b in enumerate(coefs.beta[l - 1], start=1):
            psi = psi + b * sp.csr_matrix(g.stage_operator(r))
        mats.append(sp.csr_matrix(psi))
    return mats


@dataclass(frozen=True)
class MultivariateCovariance:
    """Innovation covariance and, when identifiable, the VAR-form ``(Z Z')^{-1}``."""

    sigma_u: np.ndarray
    zz_inv: np.ndarray | None
    n_times: int

    def kron(self) -> np.ndarray:
        """``sigma_u (x) (Z Z')^{-1}``, the covariance of the VAR-form coefficients."""
        if self.zz_inv is None:
            raise GnarEdgeError("lagged regressor matrix is singular (K * L exceeds the sample)")
        return np.kron(self.sigma_u, self.zz_inv)


def multivariate_covariance(m: FittedGnarEdge, p: EdgePanel | None = None) -> MultivariateCovariance:
    """``sigma_u = U U' / n`` from the K x n residual panel.

    With the training panel ``p`` the stacked-lag cross-product inverse is
    added when ``K * L`` does not exceed the number of residual columns.
    """
    if m.residuals is None:
        raise GnarEdgeError("model carries no residuals")
    U = m.residuals
    n = U.shape[1]
    sigma_u = U @ U.T / n
    zz_inv = None
    if p is not None and m.graph.K * m.spec.L <= n:
        L, T = m.spec.L, p.T
        Z = np.vstack([p.values[:, L - l : T - l] for l in range(1, L + 1)])
        zz = Z @ Z.T
        if np.linalg.matrix_rank(zz) == zz.shape[0]:
            zz_inv = np.linalg.inv(zz)
    return MultivariateCovariance(sigma_u, zz_inv, n)


def save_model(doc_or_model, path) -> None:
    doc = doc_or_model.to_document() if hasattr(doc_or_model, "to_document") else doc_or_model
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

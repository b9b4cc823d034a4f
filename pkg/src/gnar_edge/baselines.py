"""Per-edge AR(L) and unrestricted VAR(L) baselines sharing the one-step forecast contract."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateEdgeError,
    GnarEdgeError,
    InsufficientHistoryError,
    SingularDesignError,
    UnderdeterminedError,
)
from .graph import DirectedGraph, build_graph
from .panel import EdgePanel


def _lagged(values: np.ndarray, L: int) -> np.ndarray:
    """(L, K, T - L) array whose slice l-1 holds lag-l regressors."""
    T = values.shape[1]
    return np.stack([values[:, L - l : T - l] for l in range(1, L + 1)])


def _graph_doc(g: DirectedGraph) -> dict:
    return {"n": g.n, "edges": [list(e) for e in g.edges]}


@dataclass(frozen=True, eq=False)
class ArPerEdgeModel:
    """Independent AR(L) per edge; ``coefs[e] = (c, phi_1, .., phi_L)``."""

    graph: DirectedGraph
    L: int
    coefs: np.ndarray  # K x (L + 1)
    sigma2: np.ndarray  # K
    intercept: bool = True

    def to_document(self) -> dict:
        return {
            "model_type": "ar",
            "lag": self.L,
            "intercept": self.intercept,
            "graph": _graph_doc(self.graph),
            "coefficients": self.coefs.tolist(),
            "sigma2": self.sigma2.tolist(),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "ArPerEdgeModel":
        g = build_graph(doc["graph"]["n"], doc["graph"]["edges"])
        coefs = np.array(doc["coefficients"], dtype=float).reshape(g.K, doc["lag"] + 1)
        return cls(g, int(doc["lag"]), coefs, np.array(doc["sigma2"], dtype=float),
                   bool(doc["intercept"]))


def fit_ar(p: EdgePanel, L: int, intercept: bool = True) -> ArPerEdgeModel:
    """Per-edge OLS of each series on its own L lags (plus a constant by default)."""
    if L < 1:
        raise GnarEdgeError("lag must be at least 1")
    K, T = p.K, p.T
    n = T - L
    k = L + int(intercept)
    if n <= k:
        raise InsufficientHistoryError(f"AR({L}) needs more than {k} usable columns, got {n}")
    v = p.values
    flat = np.flatnonzero(np.ptp(v, axis=1) == 0)
    if flat.size:
        e = int(flat[0])
        raise DegenerateEdgeError(f"edge {p.graph.edges[e]} (label {e}) is constant", edge=e)
    lags = np.moveaxis(_lagged(v, L), 0, -1)  # K x n x L
    X = np.concatenate([np.ones((K, n, 1)), lags], axis=2) if intercept else lags
    y = v[:, L:]
    Q, R = np.linalg.qr(X)  # batched over edges
    d = np.abs(np.diagonal(R, axis1=1, axis2=2))
    tol = n * np.finfo(float).eps * d.max(axis=1, keepdims=True)
    bad = np.flatnonzero((d <= tol).any(axis=1))
    if bad.size:
        e = int(bad[0])
        raise SingularDesignError(f"AR design for edge label {e} is rank deficient", [str(e)])
    qty = np.einsum("kni,kn->ki", Q, y)
    b = np.linalg.solve(R, qty[..., None])[..., 0]
    resid = y - np.einsum("kni,ki->kn", X, b)
    sigma2 = (resid**2).sum(axis=1) / (n - k)
    coefs = b if intercept else np.concatenate([np.zeros((K, 1)), b], axis=1)
    return ArPerEdgeModel(p.graph, L, coefs, sigma2, intercept)


@dataclass(frozen=True, eq=False)
class VarModel:
    graph: DirectedGraph
    L: int
    v: np.ndarray  # K
    A: tuple[np.ndarray, ...]  # L matrices, K x K
    sigma_u: np.ndarray

    def to_document(self) -> dict:
        return {
            "model_type": "var",
            "lag": self.L,
            "graph": _graph_doc(self.graph),
            "intercept": self.v.tolist(),
            "A": [a.tolist() for a in self.A],
            "sigma_u": self.sigma_u.tolist(),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "VarModel":
        g = build_graph(doc["graph"]["n"], doc["graph"]["edges"])
        A = tuple(np.array(a, dtype=float).reshape(g.K, g.K) for a in doc["A"])
        return cls(g, int(doc["lag"]), np.array(doc["intercept"], dtype=float), A,
                   np.array(doc["sigma_u"], dtype=float).reshape(g.K, g.K))


def fit_var(p: EdgePanel, L: int) -> VarModel:
    """Equation-wise OLS of X_t = v + sum_l A_l X_{t-l} + U_t."""
    if L < 1:
        raise GnarEdgeError("lag must be at least 1")
    K, T = p.K, p.T
    n = T - L
    k = K * L + 1
    if n <= k:
        raise UnderdeterminedError(
            f"VAR({L}) on {K} edges needs more than {k} usable columns, got {n}; "
            "fit a GNAR-edge or per-edge AR model instead"
        )
    Z = np.vstack([np.ones((1, n)), *_lagged(p.values, L)])  # k x n
    Y = p.values[:, L:]
    B, _, rank, _ = np.linalg.lstsq(Z.T, Y.T, rcond=None)
    if rank < k:
        raise SingularDesignError("VAR regressors are collinear", [])
    B = B.T  # K x k
    U = Y - B @ Z
    sigma_u = U @ U.T / (n - k)
    A = tuple(B[:, 1 + l * K : 1 + (l + 1) * K].copy() for l in range(L))
    return VarModel(p.graph, L, B[:, 0].copy(), A, sigma_u)


def predict_baseline(model: ArPerEdgeModel | VarModel, p: EdgePanel) -> np.ndarray:
    """One-step forecast of the column following the last one in ``p``."""
    if p.graph != model.graph:
        raise GnarEdgeError("panel is not aligned to the model's graph")
    if p.T < model.L:
        raise InsufficientHistoryError(f"need {model.L} trailing columns, got {p.T}")
    hist = p.values
    if isinstance(model, ArPerEdgeModel):
        out = model.coefs[:, 0].copy()
        for l in range(1, model.L + 1):
            out += model.coefs[:, l] * hist[:, -l]
        return out
    out = model.v.copy()
    for l, a in enumerate(model.A, start=1):
        out += a @ hist[:, -l]
    return out


def load_model_document(doc: dict):
    """Rebuild any fitted model from its document via the ``model_type`` field."""
    kind = doc.get("model_type")
    if kind == "ar":
        return ArPerEdgeModel.from_document(doc)
    if kind == "var":
        return VarModel.from_document(doc)
    if kind == "gnar_edge":
        from .gnar import FittedGnarEdge

        return FittedGnarEdge.from_document(doc)
    raise GnarEdgeError(f"unknown model_type {kind!r}")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GnarEdgeError(f"{path}: invalid JSON at line {exc.lineno}") from None
    return load_model_document(doc)

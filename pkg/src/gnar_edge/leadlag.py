"""Lead-lag scores between edge series and top-k sparsification by leadingness.

Convention: ``S[a, b] = corr(a_{t-1}, b_t) - corr(a_t, b_{t-1})``, so a positive
score means series ``a`` leads series ``b``.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PanelError
from .graph import DirectedGraph, build_graph
from .panel import EdgePanel


class ConstantSeriesWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class LeadLagMatrix:
    scores: np.ndarray  # K x K, skew-symmetric
    edges: tuple[tuple[int, int], ...]


def _standardized_windows(p: EdgePanel) -> tuple[np.ndarray, np.ndarray]:
    """Row-standardised lagged (``x[:, :-1]``) and leading (``x[:, 1:]``) windows.

    Rows are scaled by ``1/sqrt(T-1)`` too, so inner products are correlations.
    Constant windows become zero rows (their scores are 0) with a warning.
    """
    if p.T < 4:
        raise PanelError(f"lead-lag needs at least 4 columns, got {p.T}")
    out = []
    flat = set()
    for w in (p.values[:, :-1], p.values[:, 1:]):
        c = w - w.mean(axis=1, keepdims=True)
        norm = np.sqrt((c**2).sum(axis=1))
        zero = norm <= 1e-12 * np.maximum(1.0, np.abs(w).max(axis=1))
        flat.update(np.flatnonzero(zero).tolist())
        out.append(np.divide(c, norm[:, None], out=np.zeros_like(c), where=~zero[:, None]))
    if flat:
        warnings.warn(
            f"{len(flat)} edge series are constant over a lead-lag window; their scores are 0",
            ConstantSeriesWarning,
            stacklevel=3,
        )
    return out[0], out[1]


def leadlag_matrix(p: EdgePanel) -> LeadLagMatrix:
    zlag, zlead = _standardized_windows(p)
    c = zlag @ zlead.T  # c[a, b] = corr(a_{t-1}, b_t)
    s = c - c.T
    np.fill_diagonal(s, 0.0)
    return LeadLagMatrix(s, p.graph.edges)


def leadingness(m: LeadLagMatrix) -> np.ndarray:
    """Row sums of the lead-lag matrix."""
    return m.scores.sum(axis=1)


def panel_leadingness(p: EdgePanel) -> np.ndarray:
    """Leadingness without forming the K x K matrix (linear in K)."""
    zlag, zlead = _standardized_windows(p)
    return zlag @ zlead.sum(axis=0) - zlead @ zlag.sum(axis=0)


def top_k_labels(scores: np.ndarray, k: int) -> np.ndarray:
    """Labels of the k largest scores, ties to the smaller label, returned sorted."""
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    return np.sort(order[:k])


def sparsify_top_k(
    g: DirectedGraph, p: EdgePanel, k: int, scores: np.ndarray | None = None
) -> tuple[DirectedGraph, EdgePanel]:
    """Keep the ``k`` most leading edges (same node set) and their panel rows."""
    if p.graph != g:
        raise PanelError("panel is not aligned to the graph")
    if not 1 <= k <= g.K:
        raise PanelError(f"k must lie in [1, {g.K}], got {k}")
    if scores is None:
        scores = panel_leadingness(p)
    keep = top_k_labels(scores, k)
    sub = build_graph(g.n, [g.edges[i] for i in keep])
    # keep is ascending and labels are lexicographic, so rows stay canonical
    return sub, EdgePanel(sub, p.values[keep], p.times)


def ranks(scores: np.ndarray) -> np.ndarray:
    """1-based rank (1 = most leading), ties by ascending label."""
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    r = np.empty(len(scores), dtype=int)
    r[order] = np.arange(1, len(scores) + 1)
    return r


def leadingness_to_csv(g: DirectedGraph, scores: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "score", "rank"])
    for (s, t), sc, r in zip(g.edges, scores, ranks(scores)):
        w.writerow([s, t, repr(float(sc)), int(r)])
    return buf.getvalue()


def write_leadingness_csv(g: DirectedGraph, scores: np.ndarray, path) -> None:
    Path(path).write_text(leadingness_to_csv(g, scores), encoding="utf-8", newline="")

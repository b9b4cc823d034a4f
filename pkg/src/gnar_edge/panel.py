"""Edge-indexed panels of time series and their preprocessing."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CsvFormatError, DegenerateEdgeError, PanelError
from .graph import DirectedGraph, build_graph


@dataclass(frozen=True, eq=False)
class EdgePanel:
    """K x T matrix of edge weights aligned to ``graph``'s edge labels."""

    graph: DirectedGraph
    values: np.ndarray
    times: tuple[str, ...] | None = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 1 and self.graph.K == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] != self.graph.K:
            raise PanelError(f"panel must have {self.graph.K} rows, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise PanelError("panel contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.times is not None:
            times = tuple(str(t) for t in self.times)
            if len(times) != v.shape[1]:
                raise PanelError(f"{len(times)} time labels for {v.shape[1]} columns")
            object.__setattr__(self, "times", times)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, EdgePanel):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.times == other.times
            and np.array_equal(self.values, other.values)
        )

    def window(self, start: int = 0, stop: int | None = None) -> "EdgePanel":
        """Columns ``start:stop`` as a new panel."""
        times = None if self.times is None else self.times[start:stop]
        return EdgePanel(self.graph, self.values[:, start:stop], times)

    def labels(self) -> list[str]:
        return list(self.times) if self.times is not None else [f"t{i}" for i in range(self.T)]


@dataclass(frozen=True)
class ScalingRecord:
    sd: np.ndarray
    last_level: np.ndarray
    differenced: bool = True


def preprocess(p: EdgePanel) -> tuple[EdgePanel, ScalingRecord]:
    """First-difference each row and divide it by its sample standard deviation."""
    if p.T < 3:
        raise PanelError(f"need at least 3 columns to preprocess, got {p.T}")
    diff = np.diff(p.values, axis=1)
    sd = diff.std(axis=1, ddof=1)
    bad = np.flatnonzero(~(sd > 0))
    if bad.size:
        e = int(bad[0])
        raise DegenerateEdgeError(
            f"edge {p.graph.edges[e]} (label {e}) has zero variance after differencing", edge=e
        )
    times = None if p.times is None else p.times[1:]
    rec = ScalingRecord(sd=sd, last_level=p.values[:, -1].copy())
    return EdgePanel(p.graph, diff / sd[:, None], times), rec


def apply_preprocess(p: EdgePanel, rec: ScalingRecord) -> EdgePanel:
    """Difference ``p`` and scale it with previously computed statistics."""
    if rec.sd.shape[0] != p.K:
        raise PanelError("scaling record does not match the panel's edge count")
    times = None if p.times is None else p.times[1:]
    return EdgePanel(p.graph, np.diff(p.values, axis=1) / rec.sd[:, None], times)


def postprocess_forecast(scaled_forecast, rec: ScalingRecord) -> np.ndarray:
    """Map a forecast of the scaled increments back to raw levels."""
    f = np.asarray(scaled_forecast, dtype=float)
    if f.shape != rec.sd.shape:
        raise PanelError(f"forecast has shape {f.shape}, expected {rec.sd.shape}")
    if not rec.differenced:
        return f * rec.sd
    return rec.last_level + rec.sd * f


# --- wide panel CSV ------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def panel_to_csv(p: EdgePanel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", *p.labels()])
    for (s, t), row in zip(p.graph.edges, p.values):
        w.writerow([s, t, *(_fmt(x) for x in row)])
    return buf.getvalue()


def write_panel_csv(p: EdgePanel, path: str | Path) -> None:
    Path(path).write_text(panel_to_csv(p), encoding="utf-8", newline="")


def parse_panel_csv(
    text: str, graph: DirectedGraph | None = None, n: int | None = None
) -> EdgePanel:
    """Parse a wide panel; rows are re-sorted into canonical edge order.

    When ``graph`` is given the rows must cover exactly its edges.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0][:2]] != ["source", "target"]:
        raise CsvFormatError("expected header starting with 'source,target'", line=1)
    times = tuple(c.strip() for c in rows[0][2:])
    width = len(rows[0])
    recs = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise CsvFormatError(f"expected {width} fields, got {len(row)}", line=lineno)
        try:
            key = (int(row[0]), int(row[1]))
            vals = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise CsvFormatError(str(exc), line=lineno) from None
        if key in recs:
            raise CsvFormatError(f"duplicate edge {key}", line=lineno)
        recs[key] = vals
    if graph is None:
        if n is None:
            n = max((max(k) for k in recs), default=-1) + 1
        graph = build_graph(n, recs)
    elif set(recs) != set(graph.edges):
        missing = sorted(set(graph.edges) - set(recs))[:3]
        extra = sorted(set(recs) - set(graph.edges))[:3]
        raise PanelError(f"panel rows do not match graph edges (missing {missing}, extra {extra})")
    values = np.array([recs[e] for e in graph.edges], dtype=float).reshape(graph.K, len(times))
    if times == tuple(f"t{i}" for i in range(len(times))):
        times = None
    return EdgePanel(graph, values, times)


def read_panel_csv(path, graph: DirectedGraph | None = None, n: int | None = None) -> EdgePanel:
    return parse_panel_csv(Path(path).read_text(encoding="utf-8"), graph=graph, n=n)

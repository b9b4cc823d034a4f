"""Fixed directed graphs carrying edge time series.

Edges are labelled ``0..K-1`` in lexicographic ``(source, target)`` order.
Two edges are 1-stage neighbours when they share an endpoint (direction of
incidence is ignored); r-stage neighbours are the edges at exactly distance
``r`` in that edge-adjacency relation.  Because an edge path of length ``d``
between two distinct edges corresponds to a node path of length ``d - 1``
between their endpoint sets, all stage sets are read off one node-distance
matrix instead of running a BFS per edge.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from ._rng import make_rng
from .errors import CsvFormatError, GraphError

#: Sentinel stored in the edge-distance matrix for edges in different components.
UNREACHABLE = np.iinfo(np.uint16).max

# stage operators denser than this are kept as dense arrays
_DENSE_STAGE_FRACTION = 0.25


@dataclass(frozen=True, eq=True)
class DirectedGraph:
    """Immutable directed graph on nodes ``0..n-1``; self-loops allowed."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 0:
            raise GraphError(f"node count must be non-negative, got {self.n}")
        seen = set()
        for s, t in self.edges:
            if not (0 <= s < self.n and 0 <= t < self.n):
                raise GraphError(f"edge ({s}, {t}) out of range for n={self.n}")
            if (s, t) in seen:
                raise GraphError(f"duplicate edge ({s}, {t})")
            seen.add((s, t))
        if list(self.edges) != sorted(self.edges):
            raise GraphError("edges must be in lexicographic order; use build_graph")

    @property
    def K(self) -> int:
        return len(self.edges)

    @cached_property
    def label(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edges)}

    @cached_property
    def sources(self) -> np.ndarray:
        return np.array([s for s, _ in self.edges], dtype=np.intp)

    @cached_property
    def targets(self) -> np.ndarray:
        return np.array([t for _, t in self.edges], dtype=np.intp)

    @property
    def n_self_loops(self) -> int:
        return sum(1 for s, t in self.edges if s == t)

    @property
    def density(self) -> float:
        """|E| / n**2, counting self-loop slots."""
        return self.K / self.n**2 if self.n else 0.0

    @property
    def density_no_loops(self) -> float:
        """Non-loop edges over n(n-1) slots."""
        slots = self.n * (self.n - 1)
        return (self.K - self.n_self_loops) / slots if slots else 0.0

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=np.int8)
        if self.K:
            a[self.sources, self.targets] = 1
        return a

    # --- edge neighbourhoods -------------------------------------------------

    @cached_property
    def edge_distances(self) -> np.ndarray:
        """K x K matrix of edge-adjacency distances (``UNREACHABLE`` if none)."""
        K, n = self.K, self.n
        out = np.zeros((K, K), dtype=np.uint16)
        if K == 0:
            return out
        src, tgt = self.sources, self.targets
        keep = src != tgt
        adj = sp.coo_matrix(
            (np.ones(int(keep.sum())), (src[keep], tgt[keep])), shape=(n, n)
        ).tocsr()
        node_dist = csgraph.shortest_path(adj, directed=False, unweighted=True)
        to_node = np.minimum(node_dist[src], node_dist[tgt])  # K x n
        step = max(1, 2**22 // K)
        for lo in range(0, K, step):
            block = to_node[lo : lo + step]
            d = np.minimum(block[:, src], block[:, tgt]) + 1.0
            d[~np.isfinite(d)] = UNREACHABLE
            out[lo : lo + step] = d.astype(np.uint16)
        np.fill_diagonal(out, 0)
        return out

    @cached_property
    def max_stage(self) -> int:
        """Largest finite edge distance (the edge-graph diameter within components)."""
        d = self.edge_distances
        finite = d[d != UNREACHABLE]
        return int(finite.max()) if finite.size else 0

    def stage_sizes(self, r: int) -> np.ndarray:
        """|N^r(e)| for every edge label e."""
        return (self.edge_distances == r).sum(axis=1)

    def stage_operator(self, r: int):
        """Row-normalised stage-r weight operator, dense when that is cheaper.

        Cached per stage; the return value supports ``@`` with a K or K x T array.
        """
        cache = self.__dict__.setdefault("_stage_ops", {})
        if r not in cache:
            w = neighbor_weights(self, r)
            if self.K and w.nnz > _DENSE_STAGE_FRACTION * self.K**2:
                w = w.toarray()
            cache[r] = w
        return cache[r]


def build_graph(n: int, edges: Iterable[Sequence[int]]) -> DirectedGraph:
    """Validate ``edges`` and return the graph with canonical labelling."""
    pairs = [(int(s), int(t)) for s, t in edges]
    for s, t in pairs:
        if not (0 <= s < n and 0 <= t < n):
            raise GraphError(f"edge ({s}, {t}) out of range for n={n}")
    if len(set(pairs)) != len(pairs):
        dup = next(p for p in pairs if pairs.count(p) > 1)
        raise GraphError(f"duplicate edge {dup}")
    return DirectedGraph(int(n), tuple(sorted(pairs)))


@dataclass(frozen=True)
class NeighborStages:
    edge: int
    stages: tuple[frozenset[int], ...]  # stages[r-1] is N^r(edge)

    def __getitem__(self, r: int) -> frozenset[int]:
        return self.stages[r - 1]


def _check_edge(g: DirectedGraph, e: int) -> None:
    if not (0 <= e < g.K):
        raise GraphError(f"invalid edge label {e} for K={g.K}")


def neighbor_stages(g: DirectedGraph, e: int, r_max: int) -> NeighborStages:
    """Stage sets N^1(e) .. N^{r_max}(e); stages beyond the component are empty."""
    _check_edge(g, e)
    if r_max < 1:
        raise GraphError("r_max must be at least 1")
    row = g.edge_distances[e]
    stages = tuple(frozenset(np.flatnonzero(row == r).tolist()) for r in range(1, r_max + 1))
    return NeighborStages(e, stages)


def neighbor_weights(g: DirectedGraph, r: int) -> sp.csr_matrix:
    """Sparse K x K matrix with ``1/|N^r(e)|`` at ``(e, f)`` for f in N^r(e)."""
    if r < 1:
        raise GraphError("stage must be at least 1")
    K = g.K
    if K == 0:
        return sp.csr_matrix((0, 0))
    rows, cols = np.nonzero(g.edge_distances == r)
    counts = np.bincount(rows, minlength=K)
    data = 1.0 / counts[rows]
    return sp.csr_matrix((data, (rows, cols)), shape=(K, K))


MERGE = "merge"
REDRAW = "redraw"


def rewire(
    g: DirectedGraph,
    p: float,
    seed: int | np.random.Generator | None = None,
    self_loops: bool = False,
    on_collision: str = MERGE,
) -> DirectedGraph:
    """Move edge endpoints at random.

    Every (edge, endpoint) pair is visited in label order and, with
    probability ``p``, that endpoint moves to a node drawn uniformly from
    all nodes except its current one (and, without ``self_loops``, except
    the edge's other endpoint).  With ``on_collision="merge"`` an edge that
    lands on an occupied slot merges with it, so the result can have fewer
    edges; ``"redraw"`` instead draws only among free slots and keeps K
    (an endpoint with no free slot stays put).
    """
    return build_graph(g.n, set(_rewire_pairs(g, p, seed, self_loops, on_collision)))


def _rewire_pairs(g: DirectedGraph, p: float, seed=None, self_loops: bool = False,
                  on_collision: str = MERGE):
    """Rewired endpoints in the original label order (entry i replaces edge i; may repeat)."""
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"rewiring probability must lie in [0, 1], got {p}")
    if on_collision not in (MERGE, REDRAW):
        raise GraphError(f"on_collision must be {MERGE!r} or {REDRAW!r}")
    rng = make_rng(seed)
    current = list(g.edges)
    present = set(current)
    for idx in range(len(current)):
        for end in (0, 1):
            if rng.random() >= p:
                continue
            s, t = current[idx]
            here, other = (s, t) if end == 0 else (t, s)
            make = (lambda v: (v, t)) if end == 0 else (lambda v: (s, v))
            if on_collision == REDRAW:
                ok = [make(v) for v in range(g.n)
                      if v != here and make(v) not in present and (self_loops or v != other)]
                if not ok:
                    continue
                new = ok[int(rng.integers(len(ok)))]
                present.discard((s, t))
                present.add(new)
            else:
                # uniform over nodes other than `here` (and `other` when loops are barred)
                banned = sorted({here} if self_loops or here == other else {here, other})
                n_ok = g.n - len(banned)
                if n_ok <= 0:
                    continue
                v = int(rng.integers(n_ok))
                for b in banned:
                    v += v >= b
                new = make(v)
            current[idx] = new
    return current


def rewire_alignment(pairs: Sequence[tuple[int, int]]) -> tuple[list[tuple[int, int]], list[int]]:
    """Canonical edges of a rewired pair list and, per edge, the first original label mapped to it."""
    first: dict[tuple[int, int], int] = {}
    for i, e in enumerate(pairs):
        first.setdefault(tuple(e), i)
    edges = sorted(first)
    return edges, [first[e] for e in edges]


def hamming(gA: DirectedGraph, gB: DirectedGraph, self_loops: bool | None = None) -> float:
    """Fraction of adjacency slots on which the two graphs disagree.

    The denominator is ``n(n-1)`` unless self-loops are counted, which by
    default happens only when either graph contains one.
    """
    if gA.n != gB.n:
        raise GraphError(f"node counts differ: {gA.n} vs {gB.n}")
    if self_loops is None:
        self_loops = bool(gA.n_self_loops or gB.n_self_loops)
    slots = gA.n**2 if self_loops else gA.n * (gA.n - 1)
    if slots == 0:
        return 0.0
    return len(set(gA.edges) ^ set(gB.edges)) / slots


@dataclass(frozen=True)
class SmallWorldStats:
    avg_local_clustering: float
    avg_shortest_path: float
    er_expected_clustering: float
    er_expected_aspl: float
    unreachable_pairs: int


def small_world_stats(g: DirectedGraph) -> SmallWorldStats:
    """Clustering on the undirected simple projection, path lengths on the digraph."""
    import networkx as nx

    if g.n == 0:
        raise GraphError("graph has no nodes")
    und = nx.Graph()
    und.add_nodes_from(range(g.n))
    und.add_edges_from((s, t) for s, t in g.edges if s != t)
    clustering = nx.average_clustering(und) if g.n else 0.0

    a = sp.csr_matrix(g.adjacency().astype(float))
    a.setdiag(0)
    a.eliminate_zeros()
    dist = csgraph.shortest_path(a, directed=True, unweighted=True)
    off = ~np.eye(g.n, dtype=bool)
    finite = np.isfinite(dist) & off
    aspl = float(dist[finite].mean()) if finite.any() else math.nan
    unreachable = int((off & ~np.isfinite(dist)).sum())

    dens = g.density_no_loops
    nd = g.n * dens
    er_aspl = math.log(g.n) / math.log(nd) if nd > 1 else math.nan
    return SmallWorldStats(float(clustering), aspl, dens, er_aspl, unreachable)


# --- edge-list CSV ------------------------------------------------------------


def edges_to_csv(g: DirectedGraph) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target"])
    w.writerows(g.edges)
    return buf.getvalue()


def write_edge_csv(g: DirectedGraph, path: str | Path) -> None:
    Path(path).write_text(edges_to_csv(g), encoding="utf-8", newline="")


def parse_edge_csv(text: str, n: int | None = None) -> DirectedGraph:
    """Parse edge-list CSV text; ``n`` defaults to one past the largest node id."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["source", "target"]:
        raise CsvFormatError("expected header 'source,target'", line=1)
    pairs = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise CsvFormatError(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            pairs.append((int(row[0]), int(row[1])))
        except ValueError:
            raise CsvFormatError(f"non-integer node id in {row!r}", line=lineno) from None
    if n is None:
        n = max((max(p) for p in pairs), default=-1) + 1
    return build_graph(n, pairs)


def read_edge_csv(path: str | Path, n: int | None = None) -> DirectedGraph:
    return parse_edge_csv(Path(path).read_text(encoding="utf-8"), n=n)

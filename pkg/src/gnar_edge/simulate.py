"""Random directed graph generators and GNAR-edge process simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._rng import make_rng
from .errors import GnarEdgeError, GraphError, SimulationOverflowError
from .gnar import CoefficientSet, GnarEdgeSpec
from .graph import DirectedGraph, build_graph
from .panel import EdgePanel

# magnitudes beyond this are treated as divergence
_OVERFLOW = 1e100


def _graph_from_mask(mask: np.ndarray, self_loops: bool) -> DirectedGraph:
    if not self_loops:
        np.fill_diagonal(mask, False)
    s, t = np.nonzero(mask)
    return build_graph(mask.shape[0], zip(s.tolist(), t.tolist()))


def gen_er(
    n: int,
    m_edges: int | None = None,
    p_edge: float | None = None,
    seed=None,
    self_loops: bool = False,
) -> DirectedGraph:
    """Erdos-Renyi digraph: G(n, m) when ``m_edges`` is given, else G(n, p)."""
    if (m_edges is None) == (p_edge is None):
        raise GraphError("give exactly one of m_edges or p_edge")
    rng = make_rng(seed)
    if m_edges is not None:
        slots = n * n if self_loops else n * (n - 1)
        if not 0 <= m_edges <= slots:
            raise GraphError(f"cannot place {m_edges} edges in {slots} slots")
        pick = np.sort(rng.choice(slots, size=m_edges, replace=False))
        if self_loops:
            s, t = np.divmod(pick, n)
        else:
            s, col = np.divmod(pick, n - 1)
            t = col + (col >= s)  # skip the diagonal
        return build_graph(n, zip(s.tolist(), t.tolist()))
    if not 0.0 <= p_edge <= 1.0:
        raise GraphError(f"edge probability must lie in [0, 1], got {p_edge}")
    return _graph_from_mask(rng.random((n, n)) < p_edge, self_loops)


def er_edges_for_density(n: int, density: float, self_loops: bool = False) -> int:
    slots = n * n if self_loops else n * (n - 1)
    return int(round(density * slots))


def gen_sbm(
    n: int,
    block_assignment: Sequence[int],
    P,
    seed=None,
    self_loops: bool = False,
) -> DirectedGraph:
    """Directed stochastic block model with edge probability ``P[b(i), b(j)]``."""
    b = np.asarray(block_assignment, dtype=int)
    P = np.asarray(P, dtype=float)
    if b.shape != (n,):
        raise GraphError(f"block assignment must have length {n}")
    if np.any((P < 0) | (P > 1)):
        raise GraphError("block probabilities must lie in [0, 1]")
    rng = make_rng(seed)
    return _graph_from_mask(rng.random((n, n)) < P[np.ix_(b, b)], self_loops)


def equal_blocks(n: int, n_blocks: int) -> list[int]:
    return [i * n_blocks // n for i in range(n)]


def rdp_positions(n: int, radius: float, seed=None) -> np.ndarray:
    """Latent 2-d positions on the non-negative quarter of a circle of ``radius``."""
    rng = make_rng(seed)
    theta = rng.uniform(0.0, math.pi / 2, size=n)
    return radius * np.column_stack([np.cos(theta), np.sin(theta)])


def gen_rdp(n: int, radius: float = 0.7, seed=None, self_loops: bool = False) -> DirectedGraph:
    """Random dot product digraph: edge (i, j) with probability <x_i, x_j>."""
    if not 0.0 < radius <= 1.0:
        raise GraphError(f"radius must lie in (0, 1], got {radius}")
    rng = make_rng(seed)
    x = rdp_positions(n, radius, rng)
    prob = np.clip(x @ x.T, 0.0, 1.0)
    return _graph_from_mask(rng.random((n, n)) < prob, self_loops)


# --- innovations ---------------------------------------------------------------

GAUSSIAN = "gaussian"
STUDENT_T = "student_t"
TIME_EQUICORRELATED = "time_equicorrelated"
EDGE_EQUICORRELATED = "edge_equicorrelated"
NONE = "none"


@dataclass(frozen=True)
class InnovationModel:
    """Noise added at every simulated step.

    ``time_equicorrelated`` gives every edge a Gaussian series whose values
    at any two times have correlation ``rho``; edges are independent.
    ``edge_equicorrelated`` instead correlates all edges at the same time.
    Student-t draws are used raw unless ``rescale`` asks for unit variance.
    """

    kind: str = GAUSSIAN
    sigma: float = 1.0
    df: float | None = None
    rho: float = 0.0
    rescale: bool = False

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, STUDENT_T, TIME_EQUICORRELATED, EDGE_EQUICORRELATED, NONE):
            raise GnarEdgeError(f"unknown innovation kind {self.kind!r}")
        if self.kind != NONE and not self.sigma > 0:
            raise GnarEdgeError("sigma must be positive")
        if self.kind == STUDENT_T and not (self.df is not None and self.df > 2):
            raise GnarEdgeError("student-t innovations need df > 2")
        if not 0.0 <= self.rho < 1.0:
            raise GnarEdgeError("rho must lie in [0, 1)")

    @classmethod
    def gaussian(cls, sigma: float = 1.0):
        return cls(GAUSSIAN, sigma=sigma)

    @classmethod
    def student_t(cls, df: float, rescale: bool = False):
        return cls(STUDENT_T, df=df, rescale=rescale)

    @classmethod
    def time_correlated(cls, rho: float):
        return cls(TIME_EQUICORRELATED, rho=rho)

    @classmethod
    def edge_correlated(cls, rho: float):
        return cls(EDGE_EQUICORRELATED, rho=rho)

    @classmethod
    def zero(cls):
        return cls(NONE)

    def draw(self, rng: np.random.Generator, K: int, T: int) -> np.ndarray:
        if self.kind == NONE:
            return np.zeros((K, T))
        if self.kind == GAUSSIAN:
            return self.sigma * rng.standard_normal((K, T))
        if self.kind == STUDENT_T:
            u = rng.standard_t(self.df, size=(K, T))
            if self.rescale:
                u = u / math.sqrt(self.df / (self.df - 2))
            return self.sigma * u
        eps = rng.standard_normal((K, T))
        if self.kind == TIME_EQUICORRELATED:
            common = rng.standard_normal((K, 1))
        else:
            common = rng.standard_normal((1, T))
        return self.sigma * (math.sqrt(self.rho) * common + math.sqrt(1 - self.rho) * eps)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "df": self.df, "rho": self.rho,
                "rescale": self.rescale}

    @classmethod
    def from_dict(cls, d: dict | None) -> "InnovationModel":
        return cls(**d) if d else cls()


def simulate_gnar_edge(
    g: DirectedGraph,
    spec: GnarEdgeSpec,
    coeffs: CoefficientSet,
    T: int,
    innovation: InnovationModel | None = None,
    seed=None,
    burn_in: int = 0,
    init: np.ndarray | None = None,
    noise: np.ndarray | None = None,
) -> EdgePanel:
    """Simulate T columns of a GNAR-edge process on ``g``.

    The first L columns are standard normal (or ``init``, K x L); later
    columns follow the model plus innovations.  ``burn_in`` leading columns
    are simulated and discarded.  ``noise`` (K x (T + burn_in)) replaces
    drawn innovations.
    """
    if coeffs.R != spec.R or coeffs.L != spec.L:
        raise GnarEdgeError(f"coefficients with stages {coeffs.R} do not match {spec}")
    innovation = innovation or InnovationModel()
    rng = make_rng(seed)
    K, L = g.K, spec.L
    total = T + burn_in
    if total < L:
        raise GnarEdgeError(f"T + burn_in must be at least {L}")
    X = np.empty((K, total))
    if init is not None:
        init = np.asarray(init, dtype=float)
        if init.shape != (K, L):
            raise GnarEdgeError(f"init must have shape {(K, L)}")
        X[:, :L] = init
    else:
        X[:, :L] = rng.standard_normal((K, L))
    if noise is not None:
        U = np.asarray(noise, dtype=float)
        if U.shape != (K, total):
            raise GnarEdgeError(f"noise must have shape {(K, total)}")
    else:
        U = innovation.draw(rng, K, total)
    alpha = coeffs.alpha_matrix(K)
    r_max = spec.max_stage
    ops = [g.stage_operator(r) for r in range(1, r_max + 1)]
    avg = np.zeros((r_max, K, total))
    for t in range(L):
        for r, op in enumerate(ops):
            avg[r, :, t] = op @ X[:, t]
    for t in range(L, total):
        x = U[:, t] + coeffs.intercept
        for l in range(1, L + 1):
            x = x + alpha[:, l - 1] * X[:, t - l]
            for r, b in enumerate(coeffs.beta[l - 1]):
                x = x + b * avg[r, :, t - l]
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > _OVERFLOW:
            raise SimulationOverflowError(
                f"simulation diverged at time index {t - burn_in} (non-stationary coefficients?)",
                t - burn_in,
            )
        X[:, t] = x
        for r, op in enumerate(ops):
            avg[r, :, t] = op @ x
    return EdgePanel(g, X[:, burn_in:])

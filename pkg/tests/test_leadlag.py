import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnar_edge.errors import PanelError
from gnar_edge.graph import build_graph, edges_to_csv
from gnar_edge.leadlag import (
    ConstantSeriesWarning,
    leadingness,
    leadingness_to_csv,
    leadlag_matrix,
    panel_leadingness,
    sparsify_top_k,
    top_k_labels,
)
from gnar_edge.panel import EdgePanel, panel_to_csv
from gnar_edge.simulate import gen_er

PAIR = build_graph(3, [(0, 1), (1, 2)])
CHAIN = build_graph(4, [(0, 1), (1, 2), (2, 3)])


def pearson_score(a, b):
    """S(a, b) straight from the definition."""
    return np.corrcoef(a[:-1], b[1:])[0, 1] - np.corrcoef(a[1:], b[:-1])[0, 1]


def test_constructed_lag_one_pairs():
    for s in range(20):
        rng = np.random.default_rng(s)
        a = rng.normal(size=500)
        b = np.r_[0.0, a[:-1]] + 0.05 * rng.normal(size=500)
        S = leadlag_matrix(EdgePanel(PAIR, np.vstack([a, b]))).scores
        assert abs(S[0, 1] - 1) < 0.1 and abs(S[1, 0] + 1) < 0.1


def test_independent_pairs_are_small():
    T = 200
    hits = 0
    for s in range(100):
        X = np.random.default_rng(s).normal(size=(2, T))
        hits += abs(leadlag_matrix(EdgePanel(PAIR, X)).scores[0, 1]) < 3 / np.sqrt(T)
    assert hits >= 95


def test_matches_pearson_definition(rng):
    X = rng.normal(size=(3, 30)).cumsum(axis=1)
    S = leadlag_matrix(EdgePanel(CHAIN, X)).scores
    for a in range(3):
        for b in range(3):
            expected = 0.0 if a == b else pearson_score(X[a], X[b])
            assert S[a, b] == pytest.approx(expected, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(4, 30), st.integers(0, 2**32 - 1))
def test_skew_symmetry_and_zero_sum(K, T, seed):
    g = build_graph(K + 1, [(0, j) for j in range(1, K + 1)])
    X = np.random.default_rng(seed).normal(size=(K, T))
    m = leadlag_matrix(EdgePanel(g, X))
    assert np.array_equal(m.scores, -m.scores.T)
    assert np.all(np.diag(m.scores) == 0)
    score = leadingness(m)
    assert abs(score.sum()) < 1e-10
    np.testing.assert_allclose(panel_leadingness(EdgePanel(g, X)), score, atol=1e-10)


def test_single_edge_score_zero(rng):
    g = build_graph(2, [(0, 1)])
    assert leadingness(leadlag_matrix(EdgePanel(g, rng.normal(size=(1, 10))))).tolist() == [0.0]


def test_chain_ordering():
    rng = np.random.default_rng(0)
    a = rng.normal(size=400)
    b = np.r_[0.0, a[:-1]] + 0.3 * rng.normal(size=400)
    c = np.r_[0.0, b[:-1]] + 0.3 * rng.normal(size=400)
    s = leadingness(leadlag_matrix(EdgePanel(CHAIN, np.vstack([a, b, c]))))
    assert s[0] > s[1] > s[2]


def test_constant_row_warns_and_scores_zero(rng):
    X = rng.normal(size=(3, 10))
    X[1] = 2.0
    with pytest.warns(ConstantSeriesWarning):
        S = leadlag_matrix(EdgePanel(CHAIN, X)).scores
    assert np.all(S[1] == 0) and np.all(S[:, 1] == 0)


def test_too_short(rng):
    with pytest.raises(PanelError):
        leadlag_matrix(EdgePanel(CHAIN, rng.normal(size=(3, 3))))


def test_affine_invariance(rng):
    g = gen_er(8, m_edges=25, seed=1)
    X = rng.normal(size=(g.K, 40))
    Y = rng.uniform(0.5, 3, size=(g.K, 1)) * X + rng.normal(size=(g.K, 1))
    a = leadlag_matrix(EdgePanel(g, X)).scores
    b = leadlag_matrix(EdgePanel(g, Y)).scores
    np.testing.assert_allclose(a, b, atol=1e-12)
    ga, _ = sparsify_top_k(g, EdgePanel(g, X), 10)
    gb, _ = sparsify_top_k(g, EdgePanel(g, Y), 10)
    assert ga == gb


def test_top_k_ties_and_sort_oracle(rng):
    scores = np.array([1.0, 3.0, 3.0, 0.5, 3.0])
    assert top_k_labels(scores, 2).tolist() == [1, 2]
    s = rng.normal(size=50)
    brute = sorted(range(50), key=lambda i: (-s[i], i))[:17]
    assert top_k_labels(s, 17).tolist() == sorted(brute)


def test_sparsify_identity_and_alignment(rng):
    g = gen_er(10, m_edges=40, seed=2)
    p = EdgePanel(g, rng.normal(size=(g.K, 20)))
    g2, p2 = sparsify_top_k(g, p, g.K)
    assert g2 == g and p2 == p
    assert edges_to_csv(g2) == edges_to_csv(g)
    g3, p3 = sparsify_top_k(g, p, 7)
    assert g3.K == 7 and g3.n == g.n
    for e, row in zip(g3.edges, p3.values):
        np.testing.assert_array_equal(row, p.values[g.label[e]])
    with pytest.raises(PanelError):
        sparsify_top_k(g, p, 0)
    with pytest.raises(PanelError):
        sparsify_top_k(g, p, g.K + 1)


def test_top_801_of_8100():
    g = gen_er(90, m_edges=8100, seed=0, self_loops=True)
    X = np.random.default_rng(0).normal(size=(g.K, 12))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sub, _ = sparsify_top_k(g, EdgePanel(g, X), 801)
    assert sub.K == 801 and sub.density == pytest.approx(801 / 8100)


def test_leadingness_csv(rng):
    p = EdgePanel(CHAIN, rng.normal(size=(3, 20)))
    s = panel_leadingness(p)
    lines = leadingness_to_csv(CHAIN, s).splitlines()
    assert lines[0] == "source,target,score,rank"
    ranks = sorted(int(line.split(",")[3]) for line in lines[1:])
    assert ranks == [1, 2, 3]
    assert panel_to_csv(p)  # sanity: same edge order in both formats

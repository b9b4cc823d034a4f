import numpy as np
import pytest

from gnar_edge.baselines import (
    ArPerEdgeModel,
    VarModel,
    fit_ar,
    fit_var,
    load_model,
    load_model_document,
    predict_baseline,
)
from gnar_edge.errors import (
    DegenerateEdgeError,
    GnarEdgeError,
    InsufficientHistoryError,
    UnderdeterminedError,
)
from gnar_edge.gnar import CoefficientSet, GnarEdgeSpec, save_model, to_var_matrices
from gnar_edge.graph import build_graph
from gnar_edge.panel import EdgePanel
from gnar_edge.simulate import gen_er, simulate_gnar_edge
from oracles import normal_equations

ONE = build_graph(2, [(0, 1)])
TWO = build_graph(3, [(0, 1), (1, 2)])


def ar1_series(phi, T, rng):
    x = np.zeros(T)
    e = rng.normal(size=T)
    for t in range(1, T):
        x[t] = phi * x[t - 1] + e[t]
    return x


def test_white_noise_ar_coefficients_small(rng):
    g = gen_er(6, m_edges=10, seed=0)
    T = 400
    m = fit_ar(EdgePanel(g, rng.normal(size=(g.K, T))), 2)
    assert m.coefs.shape == (g.K, 3)
    assert np.all(np.abs(m.coefs[:, 1:]) < 3 / np.sqrt(T))


def test_ar1_consistency():
    est = []
    for s in range(50):
        x = ar1_series(0.8, 500, np.random.default_rng(s))
        est.append(fit_ar(EdgePanel(ONE, x[None]), 1).coefs[0, 1])
    assert np.all((np.array(est) > 0.7) & (np.array(est) < 0.9))


def test_ar_matches_per_edge_oracle(rng):
    X = rng.normal(size=(2, 12))
    m = fit_ar(EdgePanel(TWO, X), 2)
    for e in range(2):
        Z = np.column_stack([np.ones(10), X[e, 1:11], X[e, 0:10]])
        b, _, s2 = normal_equations(Z, X[e, 2:])
        np.testing.assert_allclose(m.coefs[e], b, atol=1e-10)
        assert m.sigma2[e] == pytest.approx(s2)
    m0 = fit_ar(EdgePanel(TWO, X), 1, intercept=False)
    assert np.all(m0.coefs[:, 0] == 0)


def test_ar_errors(rng):
    X = rng.normal(size=(2, 12))
    X[1] = 4.0
    with pytest.raises(DegenerateEdgeError):
        fit_ar(EdgePanel(TWO, X), 1)
    with pytest.raises(InsufficientHistoryError):
        fit_ar(EdgePanel(TWO, rng.normal(size=(2, 4))), 2)


def test_var_k1_equals_ar(rng):
    x = ar1_series(0.5, 200, rng)
    p = EdgePanel(ONE, x[None])
    ar, var = fit_ar(p, 3), fit_var(p, 3)
    np.testing.assert_allclose(var.v, ar.coefs[:, 0], atol=1e-10)
    for l in range(3):
        np.testing.assert_allclose(var.A[l][0, 0], ar.coefs[0, l + 1], atol=1e-10)
    np.testing.assert_allclose(predict_baseline(var, p), predict_baseline(ar, p), atol=1e-10)


def test_var_toy_matches_oracle(rng):
    # K=2, T=6, L=1: 5 observations for 3 coefficients per equation
    X = rng.normal(size=(2, 6))
    m = fit_var(EdgePanel(TWO, X), 1)
    Z = np.column_stack([np.ones(5), X[:, :-1].T])
    for k in range(2):
        b, _, _ = normal_equations(Z, X[k, 1:])
        np.testing.assert_allclose([m.v[k], *m.A[0][k]], b, atol=1e-10)


def test_var_recovers_restricted_var():
    coefs = CoefficientSet([0.3], ((0.4,),))
    p = simulate_gnar_edge(TWO, GnarEdgeSpec(1, (1,)), coefs, 2000, seed=4)
    m = fit_var(p, 1)
    psi = to_var_matrices(coefs, TWO)[0].toarray()
    assert np.max(np.abs(m.A[0] - psi)) < 0.1


def test_var_underdetermined(rng):
    g = gen_er(8, m_edges=30, seed=0)
    with pytest.raises(UnderdeterminedError, match="GNAR-edge"):
        fit_var(EdgePanel(g, rng.normal(size=(g.K, 40))), 2)


def test_predict_examples(rng):
    X = rng.normal(size=(2, 5))
    p = EdgePanel(TWO, X)
    ar = ArPerEdgeModel(TWO, 2, np.array([[1.5, 0, 0], [-2.0, 0, 0]]), np.ones(2))
    np.testing.assert_array_equal(predict_baseline(ar, p), [1.5, -2.0])
    var = VarModel(TWO, 1, np.zeros(2), (np.eye(2),), np.eye(2))
    np.testing.assert_array_equal(predict_baseline(var, p), X[:, -1])
    # diagonal VAR with matching entries equals the AR forecast
    ar2 = ArPerEdgeModel(TWO, 2, np.array([[0.1, 0.5, -0.2], [0.3, 0.25, 0.4]]), np.ones(2))
    var2 = VarModel(TWO, 2, np.array([0.1, 0.3]), (np.diag([0.5, 0.25]), np.diag([-0.2, 0.4])),
                    np.eye(2))
    np.testing.assert_allclose(predict_baseline(ar2, p), predict_baseline(var2, p), atol=1e-15)
    with pytest.raises(InsufficientHistoryError):
        predict_baseline(ar2, EdgePanel(TWO, X[:, :1]))


def test_documents_round_trip(tmp_path, rng):
    p = EdgePanel(TWO, rng.normal(size=(2, 30)))
    for m in (fit_ar(p, 2), fit_var(p, 2)):
        path = tmp_path / f"{type(m).__name__}.json"
        save_model(m, path)
        back = load_model(path)
        assert type(back) is type(m) and back.graph == TWO
        np.testing.assert_array_equal(predict_baseline(back, p), predict_baseline(m, p))
    with pytest.raises(GnarEdgeError):
        load_model_document({"model_type": "nope"})

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gnar_edge.diagnostics import acf, ppoints, residual_report, shapiro_wilk
from gnar_edge.errors import GnarEdgeError, PanelError

# Men's weights from the original Shapiro-Wilk article; the AS R94 reference
# implementation reports W = 0.78881, p = 0.006704.
WEIGHTS = [148, 154, 158, 160, 161, 162, 166, 170, 182, 195, 236]


def test_reference_sample():
    r = shapiro_wilk(WEIGHTS)
    assert r.W == pytest.approx(0.78881, abs=1e-3)
    assert r.p == pytest.approx(0.006704, abs=1e-5)


def test_two_point_sample():
    r = shapiro_wilk([-1, 1] * 10)
    assert r.W < 0.7 and r.p < 0.01


def test_normal_quantile_grid():
    x = stats.norm.ppf((np.arange(1, 51) - 0.5) / 50)
    assert shapiro_wilk(x).W > 0.99


@pytest.mark.parametrize("n", [8, 9, 11, 12, 20, 83, 500, 5000])
def test_agrees_with_scipy(n):
    rng = np.random.default_rng(n)
    for x in (rng.normal(size=n), rng.exponential(size=n), rng.standard_t(3, size=n)):
        ours, ref = shapiro_wilk(x), stats.shapiro(x)
        assert ours.W == pytest.approx(ref.statistic, abs=1e-5)
        assert ours.p == pytest.approx(ref.pvalue, abs=1e-5)


def test_shapiro_errors():
    with pytest.raises(GnarEdgeError):
        shapiro_wilk(np.arange(7.0))
    with pytest.raises(GnarEdgeError):
        shapiro_wilk(np.arange(5001.0))
    with pytest.raises(GnarEdgeError):
        shapiro_wilk(np.ones(20))


def test_calibration_under_null():
    # 2000 draws keep the binomial band at +-3 sd around the nominal 5%
    n = 2000
    rejections = sum(
        shapiro_wilk(np.random.default_rng(s).normal(size=83)).p < 0.05 for s in range(n))
    assert 0.035 <= rejections / n <= 0.065


@settings(max_examples=40, deadline=None)
@given(st.integers(8, 60), st.integers(0, 2**32 - 1))
def test_w_in_unit_interval_and_p_monotone(n, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.exponential(size=n)
    ra, rb = shapiro_wilk(a), shapiro_wilk(b)
    for r in (ra, rb):
        assert 0 < r.W <= 1 and 0 <= r.p <= 1
    if ra.W < rb.W:
        assert ra.p <= rb.p
    elif rb.W < ra.W:
        assert rb.p <= ra.p


def test_acf_examples():
    x = np.random.default_rng(0).normal(size=50)
    assert acf(x, 5)[0] == 1.0
    assert acf(np.tile([1.0, -1.0], 50), 1)[1] == pytest.approx(-1, abs=0.02)
    with pytest.raises(GnarEdgeError):
        acf(np.ones(10), 2)
    with pytest.raises(GnarEdgeError):
        acf(x, 50)


def test_acf_matches_definition(rng):
    x = rng.normal(size=30)
    c = x - x.mean()
    expected = [np.sum(c[: 30 - k] * c[k:]) / np.sum(c * c) for k in range(6)]
    np.testing.assert_allclose(acf(x, 5), expected, atol=1e-14)


def test_acf_ar1():
    rng = np.random.default_rng(4)
    x = np.zeros(2000)
    for t in range(1, 2000):
        x[t] = 0.7 * x[t - 1] + rng.normal()
    np.testing.assert_allclose(acf(x, 5), 0.7 ** np.arange(6), atol=0.05)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_acf_bounded(seed):
    x = np.random.default_rng(seed).normal(size=40).cumsum()
    a = acf(x, 20)
    assert np.all(np.abs(a) <= 1 + 1e-12)


def test_ppoints():
    np.testing.assert_allclose(ppoints(5), (np.arange(1, 6) - 3 / 8) / (5 + 1 / 4))
    np.testing.assert_allclose(ppoints(20), (np.arange(1, 21) - 0.5) / 20)


def test_report_on_zero_residuals():
    r = residual_report(np.zeros((4, 12)), max_lag=3)
    assert np.all(r.mean_series == 0)
    assert r.acf is None and "acf" in r.errors and "normality" in r.errors
    assert all(s.minimum == s.maximum == 0 and s.n_outliers == 0 for s in r.summaries)


def test_report_contents(rng, tmp_path):
    res = rng.normal(size=(30, 40))
    res[3, 5] = 25.0
    r = residual_report(res, max_lag=10)
    assert r.summaries[5].n_outliers >= 1 and 3 in r.summaries[5].outlier_edges
    np.testing.assert_allclose(r.mean_series, res.mean(axis=0))
    assert r.acf[0] == 1 and len(r.acf) == 11
    assert np.all(np.diff(r.qq[:, 0]) > 0) and np.all(np.diff(r.qq[:, 1]) >= 0)
    assert r.normality.W == pytest.approx(shapiro_wilk(res.mean(axis=0)).W)
    paths = r.write(tmp_path)
    assert {p.name for p in paths} == {"summaries.csv", "mean_residuals.csv", "acf.csv",
                                       "qq.csv", "normality.csv", "plots.json"}
    doc = json.loads((tmp_path / "plots.json").read_text())
    assert sum(doc["histogram"]["counts"]) == 40


def test_report_row_permutation_invariance(rng):
    res = rng.normal(size=(10, 20))
    a = residual_report(res)
    b = residual_report(res[::-1])
    np.testing.assert_allclose(a.mean_series, b.mean_series, atol=1e-15)
    np.testing.assert_allclose(a.acf, b.acf, atol=1e-12)
    assert [s.n_outliers for s in a.summaries] == [s.n_outliers for s in b.summaries]


def test_report_needs_columns():
    with pytest.raises(PanelError):
        residual_report(np.zeros((3, 7)))

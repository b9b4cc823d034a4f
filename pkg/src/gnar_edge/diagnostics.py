"""Residual diagnostics: per-time summaries, mean-residual ACF and QQ data, Shapiro-Wilk."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import GnarEdgeError, PanelError

# Royston (1992/1995, algorithm AS R94) polynomial coefficients, lowest order first
_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _poly(c, x: float) -> float:
    return float(np.polynomial.polynomial.polyval(x, c))


@dataclass(frozen=True)
class NormalityTest:
    W: float
    p: float


def _sw_coefficients(n: int) -> np.ndarray:
    """Antisymmetric weights a_1..a_n for the sorted sample (a_n > 0)."""
    m = ndtri((np.arange(1, n + 1) - 0.375) / (n + 0.25))
    mm = float(m @ m)
    u = 1.0 / math.sqrt(n)
    a = m / math.sqrt(mm)
    an = a[-1] + _poly(_C1, u)
    if n > 5:
        an1 = a[-2] + _poly(_C2, u)
        eps = (mm - 2 * m[-1] ** 2 - 2 * m[-2] ** 2) / (1 - 2 * an**2 - 2 * an1**2)
        a = m / math.sqrt(eps)
        a[-1], a[-2], a[0], a[1] = an, an1, -an, -an1
    else:
        eps = (mm - 2 * m[-1] ** 2) / (1 - 2 * an**2)
        a = m / math.sqrt(eps)
        a[-1], a[0] = an, -an
    return a


def shapiro_wilk(x) -> NormalityTest:
    """Shapiro-Wilk W and its p-value via Royston's normalising transformation."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    n = x.size
    if not 8 <= n <= 5000:
        raise GnarEdgeError(f"Shapiro-Wilk needs 8 to 5000 observations, got {n}")
    if not np.all(np.isfinite(x)):
        raise GnarEdgeError("sample contains non-finite values")
    xc = x - x.mean()
    ss = float(xc @ xc)
    if ss <= (1e-13 * max(1.0, float(np.abs(x).max()))) ** 2 * n:
        raise GnarEdgeError("sample has zero variance")
    a = _sw_coefficients(n)
    W = min(1.0, float(a @ xc) ** 2 / ss)
    y = math.log1p(-W) if W < 1 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return NormalityTest(W, 1e-99)
        y = -math.log(gamma - y)
        mu, sigma = _poly(_C3, n), math.exp(_poly(_C4, n))
    else:
        ln = math.log(n)
        mu, sigma = _poly(_C5, ln), math.exp(_poly(_C6, ln))
    p = 1.0 if y == -math.inf else float(ndtr(-(y - mu) / sigma))
    return NormalityTest(W, p)


def acf(x, max_lag: int) -> np.ndarray:
    """Biased sample autocorrelation (denominator n, overall mean), lags 0..max_lag."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if not 0 <= max_lag < n:
        raise GnarEdgeError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    c = x - x.mean()
    c0 = float(c @ c)
    if c0 <= (1e-13 * max(1.0, float(np.abs(x).max()))) ** 2 * n:
        raise GnarEdgeError("autocorrelation is undefined for a constant series")
    out = np.array([float(c[: n - k] @ c[k:]) / c0 for k in range(max_lag + 1)])
    out[0] = 1.0
    return out


def ppoints(n: int) -> np.ndarray:
    a = 3 / 8 if n <= 10 else 0.5
    return (np.arange(1, n + 1) - a) / (n + 1 - 2 * a)


@dataclass(frozen=True)
class TimeSummary:
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float
    n_outliers: int
    outlier_edges: tuple[int, ...]


@dataclass
class ResidualReport:
    summaries: list[TimeSummary]
    mean_series: np.ndarray
    acf: np.ndarray | None
    qq: np.ndarray | None  # n x 2: theoretical, empirical
    normality: NormalityTest | None
    errors: dict[str, str] = field(default_factory=dict)
    times: list[str] | None = None

    def _labels(self) -> list[str]:
        return self.times or [str(i) for i in range(len(self.mean_series))]

    def csv_blocks(self) -> dict[str, str]:
        def table(header, rows):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            return buf.getvalue()

        f = lambda v: repr(float(v))  # noqa: E731
        out = {
            "summaries.csv": table(
                ["time", "min", "q1", "median", "q3", "max", "n_outliers"],
                [[t, f(s.minimum), f(s.q1), f(s.median), f(s.q3), f(s.maximum), s.n_outliers]
                 for t, s in zip(self._labels(), self.summaries)],
            ),
            "mean_residuals.csv": table(
                ["time", "mean_residual"],
                [[t, f(v)] for t, v in zip(self._labels(), self.mean_series)],
            ),
        }
        out["acf.csv"] = table(
            ["lag", "acf"], [] if self.acf is None else [[k, f(v)] for k, v in enumerate(self.acf)]
        )
        out["qq.csv"] = table(
            ["theoretical", "sample"], [] if self.qq is None else [[f(a), f(b)] for a, b in self.qq]
        )
        rows = [["shapiro_wilk_W", "" if self.normality is None else f(self.normality.W)],
                ["shapiro_wilk_p", "" if self.normality is None else f(self.normality.p)]]
        rows += [[f"error_{k}", v] for k, v in sorted(self.errors.items())]
        out["normality.csv"] = table(["quantity", "value"], rows)
        return out

    def plot_document(self) -> dict:
        counts, edges = np.histogram(self.mean_series, bins="sturges")
        return {
            "histogram": {"counts": counts.tolist(), "bin_edges": edges.tolist()},
            "mean_residuals": {"time": self._labels(), "value": self.mean_series.tolist()},
            "qq": None if self.qq is None else {"theoretical": self.qq[:, 0].tolist(),
                                                 "sample": self.qq[:, 1].tolist()},
            "acf": None if self.acf is None else {"lag": list(range(len(self.acf))),
                                                   "value": self.acf.tolist()},
            "boxplots": [
                {"time": t, "min": s.minimum, "q1": s.q1, "median": s.median, "q3": s.q3,
                 "max": s.maximum, "outlier_edges": list(s.outlier_edges)}
                for t, s in zip(self._labels(), self.summaries)
            ],
            "errors": dict(sorted(self.errors.items())),
        }

    def write(self, directory) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in self.csv_blocks().items():
            (d / name).write_text(text, encoding="utf-8", newline="")
            paths.append(d / name)
        plot = d / "plots.json"
        plot.write_text(json.dumps(self.plot_document(), indent=2, sort_keys=True) + "\n",
                        encoding="utf-8", newline="")
        paths.append(plot)
        return paths


def _summaries(res: np.ndarray) -> list[TimeSummary]:
    q = np.quantile(res, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
    out = []
    for j in range(res.shape[1]):
        lo, q1, med, q3, hi = q[:, j]
        iqr = q3 - q1
        col = res[:, j]
        flag = np.flatnonzero((col < q1 - 1.5 * iqr) | (col > q3 + 1.5 * iqr))
        out.append(TimeSummary(float(lo), float(q1), float(med), float(q3), float(hi),
                               int(flag.size), tuple(flag.tolist())))
    return out


def residual_report(residuals, max_lag: int = 20, times=None) -> ResidualReport:
    """Diagnostics of a K x n residual panel, centred on the mean-residual series."""
    res = np.asarray(residuals, dtype=float)
    if res.ndim == 1:
        res = res[None, :]
    if res.ndim != 2 or res.shape[1] < 8:
        raise PanelError(f"need at least 8 residual columns, got shape {res.shape}")
    if not np.all(np.isfinite(res)):
        raise PanelError("residuals contain non-finite values")
    n = res.shape[1]
    mean = res.mean(axis=0)
    errors = {}
    ac = qq = norm = None
    try:
        ac = acf(mean, min(max_lag, n - 1))
    except GnarEdgeError as exc:
        errors["acf"] = str(exc)
    sd = mean.std(ddof=1)
    if sd > 0 and "acf" not in errors:
        z = np.sort((mean - mean.mean()) / sd)
        qq = np.column_stack([ndtri(ppoints(n)), z])
    else:
        errors["qq"] = "mean-residual series is constant"
    try:
        norm = shapiro_wilk(mean)
    except GnarEdgeError as exc:
        errors["normality"] = str(exc)
    return ResidualReport(_summaries(res), mean, ac, qq, norm, errors,
                          None if times is None else [str(t) for t in times])

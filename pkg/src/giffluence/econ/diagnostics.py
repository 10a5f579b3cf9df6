"""Correlation tests, collinearity, winsorisation and influence filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import ConstantInput, RankDeficient, TooFewPoints
from .ols import RANK_TOL, complete_rows, design_rank, ols_fit, snap_residuals


def pearson_test(x, y) -> tuple[float, float]:
    """Sample correlation and its two-sided t-test p-value (n-2 df)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = complete_rows(x, y)
    x, y = x[ok], y[ok]
    n = len(x)
    if n < 3:
        raise TooFewPoints(f"{n} paired observations, need 3")
    if x.min() == x.max() or y.min() == y.max():
        raise ConstantInput("correlation of a constant series is undefined")
    dx, dy = x - x.mean(), y - y.mean()
    r = float(np.dot(dx, dy) / math.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))
    r = min(1.0, max(-1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, float(2.0 * stats.t.sf(abs(t), n - 2))


def vif(X) -> np.ndarray:
    """Variance inflation factor of each column of the regressor matrix ``X``.

    ``X`` holds regressors only; every auxiliary regression adds a constant.
    """
    X = np.asarray(X, dtype=float)
    X = X[complete_rows(X)]
    n, k = X.shape
    if k < 2:
        raise ValueError("VIF needs at least two regressors")
    full = np.column_stack([np.ones(n), X])
    if design_rank(full) < k + 1:
        raise RankDeficient("regressors are (nearly) collinear")
    out = np.empty(k)
    for j in range(k):
        f = ols_fit(X[:, j], np.delete(X, j, axis=1))
        unexplained = 1.0 - f.r2
        if not unexplained > RANK_TOL:
            raise RankDeficient(f"column {j} is explained by the others")
        out[j] = 1.0 / unexplained
    return out


def winsor_bounds(values, pct: float) -> tuple[float, float]:
    """Nearest-rank ``pct`` and ``100 - pct`` percentiles of the non-missing values.

    The bounds are observed values (the ``ceil(n * p / 100)``-th smallest),
    which makes winsorising idempotent.
    """
    if not 0 < pct < 50:
        raise ValueError("pct must lie in (0, 50)")
    v = np.sort(np.asarray(values, dtype=float))
    v = v[~np.isnan(v)]
    if len(v) == 0:
        return float("nan"), float("nan")
    n = len(v)

    def rank(p):
        return min(n, max(1, math.ceil(round(n * p / 100.0, 9))))

    return float(v[rank(pct) - 1]), float(v[rank(100.0 - pct) - 1])


def winsorize(series, pct: float):
    """Clamp values outside the pct / (100 - pct) percentile bounds; NaN stays NaN."""
    lo, hi = winsor_bounds(series, pct)
    a = np.asarray(series, dtype=float)
    out = np.clip(a, lo, hi)
    out[np.isnan(a)] = np.nan
    if hasattr(series, "index"):
        return type(series)(out, index=series.index, name=getattr(series, "name", None))
    return out


@dataclass(frozen=True, eq=False)
class DfbetaResult:
    dfbeta: np.ndarray
    threshold: float
    keep: np.ndarray  # boolean mask over input rows
    excluded: np.ndarray  # positions of excluded rows

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)


def dfbeta(y, X, focal: int) -> np.ndarray:
    """Scaled leave-one-out change in coefficient ``focal``: (b - b_(-i)) / SE(b).

    ``X`` is the full design; the SE is the full-sample classical one.  Rows
    with leverage 1 get an infinite value.
    """
    fit = ols_fit(y, X, intercept=False)
    Xr = np.asarray(X, dtype=float)[fit.rows]
    if Xr.ndim == 1:
        Xr = Xr[:, None]
    a = Xr @ fit.xtx_inv  # row i: x_i' (X'X)^-1
    h = np.einsum("ij,ij->i", a, Xr)
    with np.errstate(divide="ignore", invalid="ignore"):
        change = a[:, focal] * snap_residuals(np.asarray(y, dtype=float)[fit.rows], fit.resid) / (1.0 - h)
    change = np.where(1.0 - h > 1e-12, change, np.inf)
    se = fit.bse[focal]
    if se == 0:  # exact fit: nothing moves unless a row is pivotal
        return np.where(np.isinf(change), np.inf, 0.0)
    return change / se


def dfbeta_filter(y, X, focal: int, threshold: float | None = None) -> DfbetaResult:
    """Drop rows whose |DFBETA| for the focal coefficient exceeds 2/sqrt(n).

    Computed once against the full-sample fit; the reduced design must still
    be full rank.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    ok = complete_rows(y, X)
    rows = np.flatnonzero(ok)
    d = dfbeta(y[ok], X[ok], focal)
    thr = 2.0 / math.sqrt(len(rows)) if threshold is None else float(threshold)
    drop = np.abs(d) > thr
    keep = np.zeros(len(y), dtype=bool)
    keep[rows[~drop]] = True
    Xk = X[keep] if X.ndim > 1 else X[keep][:, None]
    if design_rank(Xk) < Xk.shape[1] or keep.sum() <= Xk.shape[1]:
        raise RankDeficient("design is rank deficient after DFBETA exclusion")
    full = np.full(len(y), np.nan)
    full[rows] = d
    return DfbetaResult(full, thr, keep, rows[drop])

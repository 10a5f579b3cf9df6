"""Least squares with classical inference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from ..errors import RankDeficient, TooFewRows

RANK_TOL = 1e-10


def design_rank(X: np.ndarray, tol: float = RANK_TOL) -> int:
    """Numerical rank after scaling every column to unit length.

    Scaling makes the test independent of the units a regressor is
    measured in; a relative singular value below ``tol`` counts as zero.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        return 0
    norms = np.linalg.norm(X, axis=0)
    if np.any(norms == 0):
        nz = norms > 0
        return design_rank(X[:, nz], tol) if nz.any() else 0
    s = np.linalg.svd(X / norms, compute_uv=False)
    return int(np.sum(s > tol * s[0]))


def complete_rows(*arrays) -> np.ndarray:
    """Mask of rows with no missing value in any of the arrays."""
    ok = None
    for a in arrays:
        a = np.asarray(a, dtype=float)
        m = ~np.isnan(a) if a.ndim == 1 else ~np.isnan(a).any(axis=1)
        ok = m if ok is None else ok & m
    return ok


def snap_residuals(y: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Zero the residual vector when the fit is exact up to rounding."""
    scale = max(float(np.max(np.abs(y))), 1.0) if len(y) else 1.0
    if np.max(np.abs(e)) <= 8 * len(y) * np.finfo(float).eps * scale:
        return np.zeros_like(e)
    return e


@dataclass(frozen=True, eq=False)
class OLSFit:
    params: np.ndarray
    bse: np.ndarray
    resid: np.ndarray
    fitted: np.ndarray
    r2: float
    adj_r2: float
    n: int
    k: int
    sigma2: float
    xtx_inv: np.ndarray
    names: tuple[str, ...]
    rows: np.ndarray  # positions of the rows used, in the input's numbering
    has_intercept: bool

    @property
    def df_resid(self) -> int:
        return self.n - self.k

    @property
    def tvalues(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.params / self.bse

    @property
    def pvalues(self) -> np.ndarray:
        t = self.tvalues
        p = 2.0 * stats.t.sf(np.abs(t), self.df_resid)
        return np.where(self.bse == 0, np.where(self.params == 0, np.nan, 0.0), p)

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])


def ols_fit(y, X, names=None, *, intercept: bool = True) -> OLSFit:
    """Fit ``y`` on ``X`` (plus a leading constant when ``intercept``).

    Rows with any missing value are dropped; ``rows`` records the survivors.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) != len(y):
        raise ValueError("y and X differ in length")
    if names is None:
        names = tuple(f"x{i}" for i in range(X.shape[1]))
    names = tuple(names)
    if intercept:
        X = np.column_stack([np.ones(len(y)), X])
        names = ("const",) + names
    ok = complete_rows(y, X)
    rows = np.flatnonzero(ok)
    y, X = y[ok], X[ok]
    n, k = X.shape
    if n <= k:
        raise TooFewRows(f"{n} complete rows for {k} coefficients")
    if design_rank(X) < k:
        raise RankDeficient("design matrix is rank deficient", names=names)
    Q, R = np.linalg.qr(X)
    beta = linalg.solve_triangular(R, Q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    rinv = linalg.solve_triangular(R, np.eye(k))
    xtx_inv = rinv @ rinv.T
    rss = float(resid @ resid)
    sigma2 = rss / (n - k)
    bse = np.sqrt(np.maximum(np.diag(xtx_inv) * sigma2, 0.0))
    if intercept:
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    if tss > 0:
        r2 = 1.0 - rss / tss
        adj = 1.0 - (1.0 - r2) * (n - 1 if intercept else n) / (n - k)
    else:
        r2 = adj = float("nan")
    return OLSFit(beta, bse, resid, fitted, r2, adj, n, k, sigma2, xtx_inv, names, rows, intercept)

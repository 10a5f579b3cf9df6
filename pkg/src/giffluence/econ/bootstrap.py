"""Moving block (pairs) bootstrap for regression coefficients.

Rows ``(y_i, x_i)`` are resampled in overlapping blocks of consecutive
observations, which keeps the serial dependence created by overlapping
multi-day return windows inside each block.

Randomness is derived per replicate from ``SeedSequence([seed, r])``, so a
replicate's draw does not depend on how replicates are split across chunks
or processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import Degenerate, TooShort
from .ols import OLSFit, ols_fit, snap_residuals

DEFAULT_REPS = 2000
CHUNK = 50
MAX_REDRAWS = 100
_COND_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    se: np.ndarray
    pvalues: np.ndarray
    draws: np.ndarray  # (reps, k) replicate coefficients
    block_len: int
    reps: int
    seed: int
    redraws: int

    def ci(self, params: np.ndarray, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        z = stats.norm.ppf(0.5 + level / 2.0)
        return params - z * self.se, params + z * self.se


def block_indices(rng: np.random.Generator, n: int, block_len: int) -> np.ndarray:
    """Row indices for one replicate: ceil(n/L) random overlapping blocks, cut to n."""
    nb = math.ceil(n / block_len)
    starts = rng.integers(0, n - block_len + 1, size=nb)
    return (starts[:, None] + np.arange(block_len)).ravel()[:n]


def _full_rank(xtx: np.ndarray) -> np.ndarray:
    """Per-replicate rank check on X*'X* via its correlation-scaled eigenvalues."""
    d = np.sqrt(np.einsum("rii->ri", xtx))
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = xtx / (d[:, :, None] * d[:, None, :])
    bad = ~np.all(d > 0, axis=1) | ~np.all(np.isfinite(scaled), axis=(1, 2))
    scaled[bad] = np.eye(xtx.shape[1])
    ev = np.linalg.eigvalsh(scaled)
    return ~bad & (ev[:, 0] > _COND_TOL * ev[:, -1])


def _replicate_chunk(args) -> tuple[np.ndarray, int]:
    X, e, block_len, seed, lo, hi = args
    n, k = X.shape
    R = hi - lo
    rngs = [np.random.default_rng(np.random.SeedSequence([seed, r])) for r in range(lo, hi)]
    idx = np.stack([block_indices(g, n, block_len) for g in rngs])
    redraws = 0
    while True:
        Xs = X[idx]
        xtx = np.einsum("rni,rnj->rij", Xs, Xs)
        ok = _full_rank(xtx)
        if ok.all():
            break
        for r in np.flatnonzero(~ok):
            redraws += 1
            idx[r] = block_indices(rngs[r], n, block_len)
        if redraws > MAX_REDRAWS * R:
            raise Degenerate(f"could not draw full-rank replicates after {redraws} redraws")
    xte = np.einsum("rni,rn->ri", Xs, e[idx])
    delta = np.linalg.solve(xtx, xte[:, :, None])[:, :, 0]
    return delta, redraws


def block_bootstrap_se(y, X, block_len: int, reps: int = DEFAULT_REPS, seed: int = 0, *,
                       fit: OLSFit | None = None, workers: int = 1) -> BootstrapResult:
    """Bootstrap standard errors and normal-approximation p-values.

    ``X`` is the full design including any constant column.  Each replicate
    coefficient is computed as ``b + (X*'X*)^-1 X*'e*``, algebraically the
    OLS fit on the resampled rows; an exact fit therefore gives SEs of
    exactly zero.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(y)
    if block_len < 1:
        raise ValueError("block_len must be >= 1")
    if reps < 100:
        raise ValueError("reps must be >= 100")
    if n < 2 * block_len:
        raise TooShort(f"{n} rows is fewer than twice the block length {block_len}")
    if fit is None:
        fit = ols_fit(y, X, intercept=False)
    if len(fit.rows) != n:
        raise ValueError("bootstrap input must be free of missing values")
    e = snap_residuals(y, fit.resid)
    bounds = list(range(0, reps, CHUNK)) + [reps]
    jobs = [(X, e, block_len, seed, lo, hi) for lo, hi in zip(bounds, bounds[1:])]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_replicate_chunk, jobs))
    else:
        parts = [_replicate_chunk(j) for j in jobs]
    delta = np.concatenate([p[0] for p in parts])
    redraws = sum(p[1] for p in parts)
    draws = fit.params + delta
    se = np.std(delta, axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = fit.params / se
    p = 2.0 * stats.norm.sf(np.abs(z))
    p = np.where(se == 0, np.where(fit.params == 0, np.nan, 0.0), p)
    return BootstrapResult(se, p, draws, block_len, reps, seed, redraws)

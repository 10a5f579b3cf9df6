"""Randomized small-sample p-values for a persistent predictor.

The focal regressor is modelled as an AR(1).  Under the null of no
predictability the outcome is its fitted mean from the remaining regressors
(held fixed) plus resampled residuals.  Residual pairs ``(e_t, u_{t+1})`` are
drawn jointly so the correlation between outcome shocks and predictor
innovations, the source of small-sample bias, survives in the null world.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from ..errors import TooFewPoints
from .ols import complete_rows, ols_fit

DEFAULT_REPS = 1999
MIN_OBS = 20


@dataclass(frozen=True, eq=False)
class RandomizedResult:
    pvalue: float
    observed: float
    null_draws: np.ndarray
    rho: float
    ar_fallback: bool  # True when |rho| >= 1 forced an iid permutation
    reps: int
    seed: int


def fit_ar1(x: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Intercept, slope and innovations of ``x_t = c + rho x_{t-1} + u_t``."""
    f = ols_fit(x[1:], x[:-1])
    return float(f.params[0]), float(f.params[1]), f.resid


def _partial_out(Q: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Residuals of the columns of ``M`` after projecting on span(Q)."""
    return M - Q @ (Q.T @ M)


def nelson_kim_pvalue(y, X, focal: int, reps: int = DEFAULT_REPS, seed: int = 0) -> RandomizedResult:
    """Two-sided randomized p-value for coefficient ``focal`` of the design ``X``.

    ``X`` includes the constant column.  The p-value is
    ``(1 + #{|b* - m| >= |b - m|}) / (reps + 1)`` where ``m`` is the median of
    the null draws ``b*``, so the test is centred on the null distribution
    rather than on zero.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    ok = complete_rows(y, X)
    y, X = y[ok], X[ok]
    n = len(y)
    if n < MIN_OBS:
        raise TooFewPoints(f"focal regressor has {n} observations, need {MIN_OBS}")
    fit = ols_fit(y, X, intercept=False)
    b_obs = float(fit.params[focal])
    x = X[:, focal]
    Z = np.delete(X, focal, axis=1)
    null = ols_fit(y, Z, intercept=False)
    mu0, e0 = null.fitted, null.resid
    Q = np.linalg.qr(Z)[0] if Z.shape[1] else np.zeros((n, 0))

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4E4B]))
    c, rho, u = fit_ar1(x)
    fallback = not abs(rho) < 1.0
    if fallback:
        xs = np.stack([rng.permutation(x) for _ in range(reps)], axis=1)
        es = e0[rng.integers(0, n, size=(n, reps))]
    else:
        # pair t couples e_t with u_{t+1}; the last outcome shock draws an e alone
        pick = rng.integers(0, n - 1, size=(n - 1, reps))
        last = rng.integers(0, n, size=reps)
        es = np.vstack([e0[:-1][pick], e0[last][None, :]])
        w = c + u[pick]
        xs = np.empty((n, reps))
        xs[0] = x[0]
        xs[1:] = lfilter([1.0], [1.0, -rho], w, axis=0, zi=np.full((1, reps), rho * x[0]))[0]
    xt = _partial_out(Q, xs)
    ys = mu0[:, None] + es
    yt = _partial_out(Q, ys)
    with np.errstate(divide="ignore", invalid="ignore"):
        draws = np.einsum("nr,nr->r", xt, yt) / np.einsum("nr,nr->r", xt, xt)
    draws = draws[np.isfinite(draws)]
    m = float(np.median(draws))
    extreme = int(np.sum(np.abs(draws - m) >= abs(b_obs - m)))
    p = (1 + extreme) / (len(draws) + 1)
    return RandomizedResult(p, b_obs, draws, rho, fallback, reps, seed)

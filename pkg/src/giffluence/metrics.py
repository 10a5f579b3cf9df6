"""Dependent variables and controls.

Window arithmetic is positional over trading days (or half-hour buckets):
offset ``k`` from day ``t`` means the ``k``-th trading day after ``t``.
Scalar functions raise :class:`~giffluence.errors.WindowOutOfRange` when a
window leaves the sample; the ``forward_*`` builders return NaN instead so
they can be used to assemble regression frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import TradingCalendar, _numeric_frame, _read_csv, trading_index
from .errors import (
    ConfigError,
    InsufficientHistory,
    RankDeficient,
    SchemaMismatch,
    TooFewFirms,
    TooFewPoints,
    WindowOutOfRange,
)

FIVE_FACTORS = ("mkt_rf", "smb", "hml", "rmw", "cma")
FOUR_FACTORS = ("mkt_rf", "smb", "hml", "umd")
FACTOR_SETS = {"ff5": FIVE_FACTORS, "ff3_umd": FOUR_FACTORS}
CHARACTERISTICS = ("size", "idio_vol", "total_vol")


def _position(index: pd.Index, t) -> int:
    if isinstance(t, (int, np.integer)):
        return int(t)
    try:
        pos = index.get_loc(pd.Timestamp(t) if isinstance(index, pd.DatetimeIndex) else t)
    except KeyError:
        raise WindowOutOfRange(f"{t} is not in the sample") from None
    if not isinstance(pos, (int, np.integer)):
        raise WindowOutOfRange(f"{t} is not unique in the sample")
    return int(pos)


def _window(series, t, lo: int, hi: int, what: str) -> np.ndarray:
    s = series if isinstance(series, pd.Series) else pd.Series(np.asarray(series, dtype=float))
    p = _position(s.index, t)
    a, b = p + lo, p + hi
    if lo > hi or a < 0 or b >= len(s):
        raise WindowOutOfRange(f"{what}: window [{lo}, {hi}] around position {p} leaves the sample of {len(s)}")
    w = s.to_numpy(float)[a:b + 1]
    if np.isnan(w).any():
        raise WindowOutOfRange(f"{what}: window [{lo}, {hi}] around position {p} has missing values")
    return w


# ---------------------------------------------------------------------------
# returns and volatility
# ---------------------------------------------------------------------------


def compound(returns_pct) -> float:
    """Compounded simple return in percent."""
    return (float(np.prod(1.0 + np.asarray(returns_pct, dtype=float) / 100.0)) - 1.0) * 100.0


def cum_return(returns, m: int, n: int, t) -> float:
    """Compounded % return over trading days ``t+m .. t+n`` inclusive."""
    return compound(_window(returns, t, m, n, "cum_return"))


def realized_vol(returns, t, n: int) -> float:
    """Sample sd of daily % returns over ``t .. t+n``."""
    if n < 1:
        raise WindowOutOfRange("realized_vol needs at least two days (n >= 1)")
    return float(np.std(_window(returns, t, 0, n, "realized_vol"), ddof=1))


def log_total_volume(volumes, t, m: int, n: int) -> float:
    """``ln(1 + total volume)`` over positions ``t+m .. t+n``."""
    return math.log1p(float(np.sum(_window(volumes, t, m, n, "log_total_volume"))))


def _forward(values: np.ndarray, m: int, n: int, reduce) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    T = len(x)
    L = n - m + 1
    out = np.full(T, np.nan)
    if L < 1 or T < L:
        return out
    win = reduce(sliding_window_view(x, L))  # win[i] covers x[i .. i+L-1]
    t = np.arange(T)
    start = t + m
    ok = (start >= 0) & (start + L - 1 < T)
    out[ok] = win[start[ok]]
    return out


def forward_cum_returns(returns_pct, m: int, n: int) -> np.ndarray:
    return _forward(returns_pct, m, n,
                    lambda w: (np.prod(1.0 + w / 100.0, axis=1) - 1.0) * 100.0)


def forward_realized_vol(returns_pct, n: int, m: int = 0) -> np.ndarray:
    if n - m < 1:
        raise WindowOutOfRange("realized volatility needs a window of at least two days")
    return _forward(returns_pct, m, n, lambda w: np.std(w, axis=1, ddof=1))


def forward_log_volume(volumes, m: int, n: int) -> np.ndarray:
    return _forward(volumes, m, n, lambda w: np.log1p(np.sum(w, axis=1)))


# ---------------------------------------------------------------------------
# message and announcement controls
# ---------------------------------------------------------------------------


def log_abn_messages(counts, t, window: int = 10) -> float | None:
    """``ln(1+c_t) - ln(1 + median of the prior window)``; None without enough history."""
    s = counts if isinstance(counts, pd.Series) else pd.Series(np.asarray(counts, dtype=float))
    p = _position(s.index, t)
    x = s.to_numpy(float)
    if p < window or p >= len(x):
        return None
    prior = x[p - window:p]
    if np.isnan(prior).any() or np.isnan(x[p]):
        return None
    return math.log1p(x[p]) - math.log1p(float(np.median(prior)))


def abn_messages_series(counts, window: int = 10) -> np.ndarray:
    x = np.asarray(counts, dtype=float)
    out = np.full(len(x), np.nan)
    if len(x) <= window:
        return out
    med = np.median(sliding_window_view(x[:-1], window), axis=1)  # med[i] covers x[i .. i+window-1]
    out[window:] = np.log1p(x[window:]) - np.log1p(med)
    return out


def log_ea(count) -> float:
    return math.log1p(float(count))


# ---------------------------------------------------------------------------
# deseasonalisation
# ---------------------------------------------------------------------------


def _dummies(labels: np.ndarray) -> np.ndarray:
    levels = np.unique(labels)
    return (labels[:, None] == levels[None, 1:]).astype(float)


def seasonal_design(dates: pd.DatetimeIndex) -> np.ndarray:
    """Intercept plus day-of-week and month-of-year indicators (first level dropped)."""
    dates = pd.DatetimeIndex(dates)
    return np.column_stack([
        np.ones(len(dates)),
        _dummies(dates.dayofweek.to_numpy()),
        _dummies(dates.month.to_numpy()),
    ])


def deseasonalize(series: pd.Series, scheme: str = "dow_month") -> pd.Series:
    """Remove calendar means from a date-indexed series.

    ``"dow_month"`` keeps the residuals of a least-squares projection on an
    intercept plus day-of-week and month dummies; ``"week"`` subtracts each
    calendar week's mean.  Missing points are skipped and stay missing.
    """
    s = series.astype(float)
    ok = s.notna().to_numpy()
    dates = pd.DatetimeIndex(s.index)[ok]
    y = s.to_numpy()[ok]
    out = pd.Series(np.nan, index=s.index, name=s.name)
    if scheme == "week":
        iso = dates.isocalendar()
        wk = (iso["year"].to_numpy() * 100 + iso["week"].to_numpy())
        means = pd.Series(y).groupby(wk).transform("mean").to_numpy()
        out[ok] = y - means
        return out
    if scheme != "dow_month":
        raise ConfigError(f"unknown deseasonalisation scheme {scheme!r}")
    for labels, what in ((dates.dayofweek, "weekday"), (dates.month, "month")):
        _, counts = np.unique(labels, return_counts=True)
        if len(counts) and counts.min() < 2:
            raise TooFewPoints(f"some {what} cells have fewer than 2 observations")
    X = seasonal_design(dates)
    if len(y) <= X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficient("seasonal design is rank deficient")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    out[ok] = y - X @ beta
    return out


# ---------------------------------------------------------------------------
# cross-section: idiosyncratic volatility and quintile sorts
# ---------------------------------------------------------------------------


def idio_vol(firm_returns, factor_returns, lookback: int = 36, min_obs: int = 24) -> float:
    """Sample sd of factor-model residuals over the last ``lookback`` periods.

    Rows with a missing value are skipped.  Factor columns that are
    identically zero in the window carry no information and are dropped.
    """
    y = np.asarray(firm_returns, dtype=float)[-lookback:]
    F = np.asarray(factor_returns, dtype=float)
    F = F.reshape(len(F), -1)[-lookback:]
    if len(F) != len(y):
        raise ValueError("firm and factor returns differ in length")
    ok = ~np.isnan(y) & ~np.isnan(F).any(axis=1)
    y, F = y[ok], F[ok]
    if len(y) < min_obs:
        raise InsufficientHistory(f"{len(y)} observations in lookback, need {min_obs}")
    F = F[:, np.any(F != 0, axis=0)]
    X = np.column_stack([np.ones(len(y)), F])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficient("factor design is rank deficient")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return float(np.std(y - X @ beta, ddof=1))


def value_weighted_return(returns, caps) -> float:
    r = np.asarray(returns, dtype=float)
    w = np.asarray(caps, dtype=float)
    return float(np.dot(w, r) / w.sum())


def quintile_breakpoints(values) -> np.ndarray:
    return np.percentile(np.asarray(values, dtype=float), [20, 40, 60, 80])


def assign_quintiles(values) -> np.ndarray:
    """1..5 labels: a value lands in the first quintile whose upper breakpoint it does not exceed."""
    v = np.asarray(values, dtype=float)
    return 1 + np.searchsorted(quintile_breakpoints(v), v, side="left")


def quintile_portfolios(panel: pd.DataFrame, characteristic: str, t) -> pd.Series:
    """Value-weighted return of each characteristic quintile on date ``t``.

    ``panel`` is long format with ``date, firm_id, ret_pct, mktcap`` and a
    column named after the characteristic, measured before ``t``.  Weights
    use the ``weight`` column when present (lagged cap), else ``mktcap``.
    """
    if characteristic not in panel.columns:
        raise SchemaMismatch(f"panel has no {characteristic!r} column")
    day = panel[panel["date"] == pd.Timestamp(t)]
    wcol = "weight" if "weight" in panel.columns else "mktcap"
    day = day.dropna(subset=[characteristic, "ret_pct", wcol]).sort_values(
        [characteristic, "firm_id"], kind="stable")
    if len(day) < 5:
        raise TooFewFirms(f"{len(day)} firms with {characteristic} on {t}, need 5")
    q = assign_quintiles(day[characteristic].to_numpy())
    r = day["ret_pct"].to_numpy(float)
    w = day[wcol].to_numpy(float)
    num = np.bincount(q, weights=w * r, minlength=6)[1:]
    den = np.bincount(q, weights=w, minlength=6)[1:]
    out = np.full(5, np.nan)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    return pd.Series(out, index=pd.Index(range(1, 6), name="quintile"), name="ret_pct")


def quintile_returns(panel: pd.DataFrame, characteristic: str) -> pd.DataFrame:
    """Daily quintile portfolio returns: wide frame indexed by date, columns 1..5.

    Dates with fewer than five ranked firms are left out.
    """
    rows = {}
    for d in np.sort(panel["date"].unique()):
        try:
            rows[pd.Timestamp(d)] = quintile_portfolios(panel, characteristic, d).to_numpy()
        except TooFewFirms:
            continue
    out = pd.DataFrame.from_dict(rows, orient="index", columns=range(1, 6))
    out.index.name = "date"
    return out


def quintile_long(wide: pd.DataFrame) -> pd.DataFrame:
    """``date,quintile,ret_pct`` rows from :func:`quintile_returns` output."""
    long = wide.stack(future_stack=True).rename("ret_pct").reset_index()
    long.columns = ["date", "quintile", "ret_pct"]
    return long


def monthly_compound(panel: pd.DataFrame, columns) -> pd.DataFrame:
    month = panel["date"].dt.to_period("M")
    g = (1.0 + panel[list(columns)] / 100.0).groupby([panel["firm_id"], month])
    return (g.prod() - 1.0) * 100.0


def firm_characteristics(panel: pd.DataFrame, factor_set: str = "ff5", lookback: int = 36,
                         min_obs: int = 24) -> pd.DataFrame:
    """Add ``size``, ``total_vol``, ``idio_vol`` and ``weight`` columns.

    ``size`` and ``weight`` are the firm's market cap on its previous trading
    day.  Both volatilities are computed from monthly compounded returns over
    the ``lookback`` months before the current month, so a month's sort uses
    only earlier data.
    """
    if factor_set not in FACTOR_SETS:
        raise ConfigError(f"factor_set must be one of {sorted(FACTOR_SETS)}, got {factor_set!r}")
    factors = list(FACTOR_SETS[factor_set])
    missing = [c for c in ["date", "firm_id", "ret_pct", "mktcap", *factors] if c not in panel.columns]
    if missing:
        raise SchemaMismatch(f"firm panel lacks columns {missing}")
    p = panel.sort_values(["firm_id", "date"], kind="stable").copy()
    p["size"] = p.groupby("firm_id")["mktcap"].shift(1)
    p["weight"] = p["size"]
    ex = p[["date", "firm_id", "ret_pct"]].copy()
    if "rf" in p.columns:
        ex["ret_pct"] = ex["ret_pct"] - p["rf"]
    firm_m = monthly_compound(ex.assign(**{f: p[f] for f in factors}), ["ret_pct", *factors])
    months = sorted(firm_m.index.get_level_values(1).unique())
    vols = {}
    for firm, part in firm_m.groupby(level=0, sort=True):
        part = part.droplevel(0).reindex(months)
        y = part["ret_pct"].to_numpy()
        F = part[factors].to_numpy()
        for i, mth in enumerate(months):
            lo = max(0, i - lookback)
            if i - lo < min_obs:
                continue
            yy, FF = y[lo:i], F[lo:i]
            tv = yy[~np.isnan(yy)]
            try:
                iv = idio_vol(yy, FF, lookback, min_obs)
            except (InsufficientHistory, RankDeficient):
                iv = np.nan
            vols[(firm, mth)] = (iv, float(np.std(tv, ddof=1)) if len(tv) >= min_obs else np.nan)
    key = list(zip(p["firm_id"], p["date"].dt.to_period("M")))
    got = [vols.get(k, (np.nan, np.nan)) for k in key]
    p["idio_vol"] = [g[0] for g in got]
    p["total_vol"] = [g[1] for g in got]
    return p.sort_values(["date", "firm_id"], kind="stable").reset_index(drop=True)


# ---------------------------------------------------------------------------
# market panel
# ---------------------------------------------------------------------------


@dataclass
class MarketPanel:
    """Aligned market inputs.

    daily
        Date-indexed frame; ``ret_pct`` is the index return, optional
        ``eff``/``bff`` fund flows and any control columns.
    bucket
        Frame keyed ``YYYY-MM-DDTslotNN`` with ``ret_pct`` and ``volume``.
    firms
        Long firm panel (``date, firm_id, ret_pct, mktcap, <factors>``).
    """

    daily: pd.DataFrame
    bucket: pd.DataFrame | None = None
    firms: pd.DataFrame | None = None
    notices: list[str] = field(default_factory=list)

    def __post_init__(self):
        if "ret_pct" not in self.daily.columns:
            raise SchemaMismatch("daily market data needs a ret_pct column")
        if not np.isfinite(self.daily["ret_pct"].dropna()).all():
            raise SchemaMismatch("index returns must be finite")
        if self.bucket is not None and "volume" in self.bucket.columns:
            if (self.bucket["volume"].dropna() < 0).any():
                raise SchemaMismatch("volumes must be >= 0")


def load_daily_market(path, cal: TradingCalendar) -> pd.DataFrame:
    """Daily CSV with a ``date`` column; reindexed to the calendar (gaps stay NaN)."""
    df = _read_csv(path)
    if df.columns[0] != "date":
        raise SchemaMismatch(f"{path}: first column must be 'date'")
    idx = pd.DatetimeIndex(pd.to_datetime(df["date"], format="%Y-%m-%d"), name="date")
    body = _numeric_frame(df.iloc[:, 1:], path, df.columns[1:])
    body.index = idx
    if idx.has_duplicates:
        raise SchemaMismatch(f"{path}: duplicate dates")
    return body.reindex(trading_index(cal))


def load_bucket_market(path) -> pd.DataFrame:
    df = _read_csv(path)
    if df.columns[0] != "key":
        raise SchemaMismatch(f"{path}: first column must be 'key'")
    body = _numeric_frame(df.iloc[:, 1:], path, df.columns[1:])
    body.index = pd.Index(df["key"].astype(str), name="key")
    return body.sort_index()


def load_firm_panel(path) -> pd.DataFrame:
    df = _read_csv(path)
    need = ["date", "firm_id", "ret_pct", "mktcap"]
    if list(df.columns[:4]) != need:
        raise SchemaMismatch(f"{path}: expected leading columns {need}")
    body = _numeric_frame(df.iloc[:, 2:], path, df.columns[2:])
    body.insert(0, "firm_id", df["firm_id"].astype(str))
    body.insert(0, "date", pd.to_datetime(df["date"], format="%Y-%m-%d"))
    return body

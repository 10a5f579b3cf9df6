"""Sentiment index construction.

Every GIF's valence is estimated from the self-declared bullish/bearish
posts it has appeared in so far, ``(bullish - bearish) / appearances``, using
only posts assigned to trading days up to the evaluation day.  Daily and
half-hourly aggregates weight the eligible GIFs that appeared in the window
by their appearance counts.

The module offers two routes that must agree:

* a streaming reference built from :class:`ValenceLedger` and the scalar
  per-day functions (:func:`aggregate_gif_sentiment`, :func:`selfdec`, ...),
  driven by :func:`build_index_reference`;
* :func:`build_index`, which computes the whole history at once from a
  :class:`~giffluence.corpus.PostBatch` with grouped cumulative sums.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .corpus import (
    N_SLOTS,
    PostBatch,
    PostRecord,
    TradingCalendar,
    assign_bucket,
    assign_trading_day,
    bucket_key,
)
from .errors import (
    ConfigError,
    EmptyLedger,
    OutOfOrder,
    TooFewPoints,
    UnknownGif,
    ZeroVariance,
)

MIN_DECLARATIONS = 5
FLAVORS = ("GIF", "POS", "NEG", "SELFDEC", "TEXT", "DISAGREEMENT")
BOUNDED_FLAVORS = ("GIF", "POS", "NEG", "SELFDEC")
APPEARANCE_PERCENTILES = (50, 75)


@dataclass(frozen=True)
class IndexOptions:
    """Construction switches.

    denominator
        ``"eligible"`` divides by the day's appearances of eligible GIFs, so
        weights are convex; ``"gif_posts"`` divides by the number of
        GIF-carrying posts, as the formula is literally written.
    window
        ``"through_t"`` values day ``t`` with counts through the end of
        ``t``; ``"through_t_minus_1"`` stops at the previous trading day.
        Half-hour series always use the previous day's ledger.
    """

    min_decl: int = MIN_DECLARATIONS
    denominator: str = "eligible"
    window: str = "through_t"
    appearance_pct: int | None = None
    require_cashtag: bool = True

    def __post_init__(self):
        if int(self.min_decl) < 1:
            raise ConfigError("min_decl must be >= 1")
        if self.denominator not in ("eligible", "gif_posts"):
            raise ConfigError(f"denominator must be 'eligible' or 'gif_posts', got {self.denominator!r}")
        if self.window not in ("through_t", "through_t_minus_1"):
            raise ConfigError(f"window must be 'through_t' or 'through_t_minus_1', got {self.window!r}")
        if self.appearance_pct is not None and self.appearance_pct not in APPEARANCE_PERCENTILES:
            raise ConfigError(f"appearance_pct must be one of {APPEARANCE_PERCENTILES}, got {self.appearance_pct!r}")


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SentimentSeries:
    """Keyed real series; NaN marks a missing point.

    Keys are ``YYYY-MM-DD`` for daily series and ``YYYY-MM-DDTslotNN`` for
    half-hour series, so lexical order is time order.
    """

    keys: tuple[str, ...]
    values: np.ndarray
    flavor: str
    frequency: str = "daily"
    standardized: bool = False
    mean: float | None = None
    sd: float | None = None

    def __post_init__(self):
        keys = tuple(self.keys)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        if self.frequency not in ("daily", "bucket"):
            raise ValueError(f"frequency must be 'daily' or 'bucket', got {self.frequency!r}")
        if len(keys) != len(values):
            raise ValueError("keys and values differ in length")
        if any(a >= b for a, b in zip(keys, keys[1:])):
            raise ValueError("series keys must be strictly increasing")
        if not self.standardized:
            v = values[~np.isnan(values)]
            if self.flavor in BOUNDED_FLAVORS and len(v) and (v.min() < -1 or v.max() > 1):
                raise ValueError(f"{self.flavor} values must lie in [-1, 1]")
            if self.flavor == "DISAGREEMENT" and len(v) and v.min() < 0:
                raise ValueError("disagreement values must be >= 0")
        values.setflags(write=False)

    def __len__(self) -> int:
        return len(self.keys)

    def to_series(self) -> pd.Series:
        return pd.Series(self.values, index=pd.Index(self.keys, name="key"), name=self.flavor)

    def destandardize(self) -> "SentimentSeries":
        if not self.standardized:
            return self
        values = self.values * self.sd + self.mean
        if self.flavor in BOUNDED_FLAVORS:
            values = np.clip(values, -1.0, 1.0)  # rounding can step just past +-1
        elif self.flavor == "DISAGREEMENT":
            values = np.maximum(values, 0.0)
        return replace(self, values=values, standardized=False, mean=None, sd=None)

    def to_csv(self, path, raw: "SentimentSeries | None" = None) -> None:
        """Write ``key,flavor,raw,standardized``.

        Called on a raw series the standardized column is computed when
        possible; called on a standardized one the raw column is recovered
        from the stored mean and sd.
        """
        if self.standardized:
            std, raw_s = self, self.destandardize()
        else:
            raw_s = self
            try:
                std = standardize(self)
            except (TooFewPoints, ZeroVariance):
                std = None
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("key,flavor,raw,standardized\n")
            for i, k in enumerate(self.keys):
                fh.write(f"{k},{self.flavor},{_fmt(raw_s.values[i])},"
                         f"{_fmt(std.values[i]) if std is not None else ''}\n")


def _fmt(x: float) -> str:
    return "" if x != x else repr(float(x))


def standardize(series: SentimentSeries) -> SentimentSeries:
    """Zero-mean, unit sample-variance rescaling; missing points stay missing."""
    v = series.values
    ok = ~np.isnan(v)
    x = v[ok]
    if len(x) < 2:
        raise TooFewPoints(f"{series.flavor}: need at least 2 non-missing points, got {len(x)}")
    if x.min() == x.max():
        raise ZeroVariance(f"{series.flavor}: series is constant")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    return replace(series, values=(v - mean) / sd, standardized=True, mean=mean, sd=sd)


def read_series_csv(path) -> dict[str, SentimentSeries]:
    """Read a ``key,flavor,raw,standardized`` file back into raw series by flavor."""
    df = pd.read_csv(path, dtype={"key": str, "flavor": str}, keep_default_na=False,
                     na_values=[""])
    out = {}
    for flavor, part in df.groupby("flavor", sort=False):
        freq = "bucket" if part["key"].str.contains("Tslot").any() else "daily"
        out[flavor] = SentimentSeries(tuple(part["key"]), part["raw"].to_numpy(float), flavor, freq)
    return out


# ---------------------------------------------------------------------------
# streaming reference: the ledger
# ---------------------------------------------------------------------------


@dataclass
class GifCounts:
    bullish: int = 0
    bearish: int = 0
    appearance: int = 0

    @property
    def declarations(self) -> int:
        return self.bullish + self.bearish


@dataclass
class ValenceLedger:
    """Cumulative per-GIF counters as of the end of trading day ``as_of``.

    ``log`` keeps one entry per advanced day with that day's increments
    (``{gif_id: (bullish, bearish, appearance)}``) for auditing.
    """

    calendar: TradingCalendar | None = None
    as_of: date | None = None
    counts: dict[str, GifCounts] = field(default_factory=dict)
    log: list[tuple[date, dict[str, tuple[int, int, int]]]] = field(default_factory=list)

    def copy(self) -> "ValenceLedger":
        return ValenceLedger(
            calendar=self.calendar,
            as_of=self.as_of,
            counts={g: GifCounts(c.bullish, c.bearish, c.appearance) for g, c in self.counts.items()},
            log=list(self.log),
        )

    def __contains__(self, gif_id: str) -> bool:
        return gif_id in self.counts

    def __len__(self) -> int:
        return len(self.counts)

    def get(self, gif_id: str) -> GifCounts:
        try:
            return self.counts[gif_id]
        except KeyError:
            raise UnknownGif(f"GIF {gif_id!r} has never appeared (ledger as of {self.as_of})") from None

    def snapshot_lines(self) -> list[str]:
        return [f"{g},{c.bullish},{c.bearish},{c.appearance}" for g, c in sorted(self.counts.items())]

    def write_snapshot(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.snapshot_lines():
                fh.write(line + "\n")


def advance_ledger(ledger: ValenceLedger, day_posts: Sequence[PostRecord],
                   day: date | None = None) -> ValenceLedger:
    """Return a new ledger that also counts one more trading day of posts.

    Each (post, GIF) pair adds one appearance; a declared post additionally
    adds one bullish or bearish count for each of its GIFs.  With a calendar
    attached, the posts must all fall on the trading day right after
    ``as_of``; without one, ``day`` is required and must be later than
    ``as_of``.
    """
    cal = ledger.calendar
    if cal is not None:
        days = {assign_trading_day(p.timestamp, cal) for p in day_posts}
        if day is not None:
            days.add(day)
        if len(days) > 1:
            raise OutOfOrder(f"posts span several trading days: {sorted(days)}")
        if not days:
            raise ValueError("day is required when there are no posts")
        day = days.pop()
        if ledger.as_of is not None:
            expected = cal.index_of(ledger.as_of) + 1
            if cal.index_of(day) != expected:
                want = cal.dates[expected] if expected < len(cal) else "end of calendar"
                raise OutOfOrder(f"posts for {day} fed to a ledger as of {ledger.as_of} (expected {want})")
    else:
        if day is None:
            raise ValueError("day is required for a ledger without a calendar")
        if ledger.as_of is not None and day <= ledger.as_of:
            raise OutOfOrder(f"posts for {day} fed to a ledger as of {ledger.as_of}")

    new = ledger.copy()
    delta: dict[str, list[int]] = {}
    for post in day_posts:
        s = post.declaration.sign
        for g in post.gif_ids:
            c = new.counts.get(g)
            if c is None:
                c = new.counts[g] = GifCounts()
            d = delta.setdefault(g, [0, 0, 0])
            c.appearance += 1
            d[2] += 1
            if s > 0:
                c.bullish += 1
                d[0] += 1
            elif s < 0:
                c.bearish += 1
                d[1] += 1
    new.as_of = day
    new.log.append((day, {g: tuple(v) for g, v in sorted(delta.items())}))
    return new


def gif_valence(ledger: ValenceLedger, gif_id: str, min_decl: int = MIN_DECLARATIONS) -> float | None:
    """Net-bullish share of a GIF, or None when it has too few declarations."""
    c = ledger.get(gif_id)
    if c.declarations < min_decl:
        return None
    return (c.bullish - c.bearish) / c.appearance


def appearance_percentile_filter(ledger: ValenceLedger, pct: int, day: date | None = None) -> set[str]:
    """GIFs whose cumulative appearances strictly exceed the ``pct`` percentile."""
    if pct not in APPEARANCE_PERCENTILES:
        raise ConfigError(f"pct must be one of {APPEARANCE_PERCENTILES}, got {pct!r}")
    if day is not None and ledger.as_of != day:
        raise ValueError(f"ledger is as of {ledger.as_of}, not {day}")
    if not ledger.counts:
        raise EmptyLedger("no GIFs in ledger")
    apps = np.array([c.appearance for c in ledger.counts.values()], dtype=float)
    cut = np.percentile(apps, pct)
    return {g for g, c in ledger.counts.items() if c.appearance > cut}


def _eligible_valences(ledger, gifs, min_decl, allowed=None):
    out = {}
    for g in gifs:
        if allowed is not None and g not in allowed:
            continue
        c = ledger.counts.get(g)
        if c is None or c.declarations < min_decl:
            continue
        out[g] = (c.bullish - c.bearish) / c.appearance
    return out


def _weighted(day_posts, ledger, min_decl, keep, denominator, allowed):
    counts: dict[str, int] = defaultdict(int)
    n_gif_posts = 0
    for p in day_posts:
        if p.gif_ids:
            n_gif_posts += 1
        for g in p.gif_ids:
            counts[g] += 1
    val = _eligible_valences(ledger, counts, min_decl, allowed)
    chosen = {g: v for g, v in val.items() if keep(v)}
    if not chosen:
        return None
    num = 0.0
    den = 0
    for g in sorted(chosen, key=list(counts).index):
        num += counts[g] * chosen[g]
        den += counts[g]
    if denominator == "gif_posts":
        den = n_gif_posts
    return num / den


def aggregate_gif_sentiment(ledger: ValenceLedger, day_posts: Sequence[PostRecord],
                            min_decl: int = MIN_DECLARATIONS, denominator: str = "eligible",
                            allowed: set[str] | None = None) -> float | None:
    """Appearance-weighted mean valence of the eligible GIFs seen in ``day_posts``."""
    return _weighted(day_posts, ledger, min_decl, lambda v: True, denominator, allowed)


def split_signed(ledger: ValenceLedger, day_posts: Sequence[PostRecord],
                 min_decl: int = MIN_DECLARATIONS, denominator: str = "eligible",
                 allowed: set[str] | None = None) -> tuple[float | None, float | None]:
    """The same aggregate over strictly positive and strictly negative GIFs."""
    pos = _weighted(day_posts, ledger, min_decl, lambda v: v > 0, denominator, allowed)
    neg = _weighted(day_posts, ledger, min_decl, lambda v: v < 0, denominator, allowed)
    return pos, neg


def selfdec(day_posts: Sequence[PostRecord]) -> float | None:
    """Net bullish share among posts without a GIF (undeclared ones count in the base)."""
    n = bull = bear = 0
    for p in day_posts:
        if p.gif_ids:
            continue
        n += 1
        s = p.declaration.sign
        bull += s > 0
        bear += s < 0
    if n == 0:
        return None
    return (bull - bear) / n


def text_daily_average(day_posts: Sequence[PostRecord]) -> float | None:
    scores = [p.text_score for p in day_posts if p.text_score is not None]
    if not scores:
        return None
    return math.fsum(scores) / len(scores)


def disagreement(bucket_posts: Sequence[PostRecord], ledger: ValenceLedger,
                 min_decl: int = MIN_DECLARATIONS, allowed: set[str] | None = None) -> float | None:
    """Sample sd across posts of each post's mean eligible-GIF valence.

    ``ledger`` should be the one closed at the previous trading day.
    """
    vals = []
    for p in bucket_posts:
        v = _eligible_valences(ledger, p.gif_ids, min_decl, allowed)
        if v:
            vals.append(sum(v[g] for g in p.gif_ids if g in v) / len(v))
    if len(vals) < 2:
        return None
    return float(np.std(vals, ddof=1))


# ---------------------------------------------------------------------------
# reference builder
# ---------------------------------------------------------------------------

DAILY_COLUMNS = ("GIF", "POS", "NEG", "SELFDEC", "TEXT", "n_posts", "n_gif_posts", "n_flagged")
BUCKET_COLUMNS = ("GIF", "SELFDEC", "TEXT", "DISAGREEMENT", "n_posts", "n_gif_posts")


def _nan(x):
    return np.nan if x is None else x


def build_index_reference(records: Iterable[PostRecord], cal: TradingCalendar,
                          options: IndexOptions = IndexOptions()) -> dict[str, pd.DataFrame]:
    """Day-by-day construction with :class:`ValenceLedger`; slow but transparent.

    Returns ``{"daily": frame, "bucket": frame}`` with the same layout as
    :attr:`SentimentIndex.daily` / :attr:`SentimentIndex.bucket`.
    """
    records = sorted(records, key=lambda r: (r.timestamp, r.post_id))
    by_day: dict[date, list[PostRecord]] = defaultdict(list)
    flagged: dict[date, int] = defaultdict(int)
    slots: dict[str, int] = {}
    for r in records:
        d = assign_trading_day(r.timestamp, cal)
        if options.require_cashtag and not r.market_relevant:
            flagged[d] += 1
            by_day.setdefault(d, [])
            continue
        by_day[d].append(r)
        slots[r.post_id + "|" + r.timestamp.isoformat()] = assign_bucket(r.timestamp, cal).slot
    if not by_day:
        return {"daily": pd.DataFrame(columns=DAILY_COLUMNS), "bucket": pd.DataFrame(columns=BUCKET_COLUMNS)}
    first = cal.index_of(min(by_day))
    last = cal.index_of(max(by_day))
    ledger = ValenceLedger(calendar=cal)
    md = options.min_decl
    daily_rows, bucket_rows = {}, {}
    for i in range(first, last + 1):
        day = cal.dates[i]
        posts = by_day.get(day, [])
        prev = ledger
        ledger = advance_ledger(ledger, posts, day=day)
        ref = ledger if options.window == "through_t" else prev
        allowed = allowed_prev = None
        if options.appearance_pct is not None:
            allowed = appearance_percentile_filter(ref, options.appearance_pct) if ref.counts else set()
            allowed_prev = appearance_percentile_filter(prev, options.appearance_pct) if prev.counts else set()
        g = aggregate_gif_sentiment(ref, posts, md, options.denominator, allowed)
        pos, neg = split_signed(ref, posts, md, options.denominator, allowed)
        daily_rows[day.isoformat()] = (
            _nan(g), _nan(pos), _nan(neg), _nan(selfdec(posts)), _nan(text_daily_average(posts)),
            len(posts), sum(1 for p in posts if p.gif_ids), flagged.get(day, 0),
        )
        per_slot: dict[int, list[PostRecord]] = defaultdict(list)
        for p in posts:
            per_slot[slots[p.post_id + "|" + p.timestamp.isoformat()]].append(p)
        for s in sorted(per_slot):
            bp = per_slot[s]
            bucket_rows[bucket_key(day, s)] = (
                _nan(aggregate_gif_sentiment(prev, bp, md, options.denominator, allowed_prev)),
                _nan(selfdec(bp)), _nan(text_daily_average(bp)),
                _nan(disagreement(bp, prev, md, allowed_prev)),
                len(bp), sum(1 for p in bp if p.gif_ids),
            )
    daily = pd.DataFrame.from_dict(daily_rows, orient="index", columns=DAILY_COLUMNS)
    bucket = pd.DataFrame.from_dict(bucket_rows, orient="index", columns=BUCKET_COLUMNS)
    daily.index.name = "key"
    bucket.index.name = "key"
    return {"daily": daily, "bucket": bucket, "ledger": ledger}


# ---------------------------------------------------------------------------
# vectorised builder
# ---------------------------------------------------------------------------


def _segment_cumsum(values: np.ndarray, first: np.ndarray) -> np.ndarray:
    """Cumulative sum restarting wherever ``first`` is True."""
    c = np.cumsum(values)
    seg = np.cumsum(first) - 1
    base = (c - values)[first]
    return c - base[seg]


def _safe_div(num, den):
    out = np.full(len(num), np.nan)
    ok = den != 0
    out[ok] = num[ok] / den[ok]
    return out


@dataclass
class SentimentIndex:
    """Output of :func:`build_index`.

    ``daily`` and ``bucket`` are frames keyed like :class:`SentimentSeries`;
    ``gif_days`` has one row per (GIF, trading day) with that day's counts and
    the cumulative counts through that day.
    """

    calendar: TradingCalendar
    options: IndexOptions
    dates: tuple[date, ...]
    daily: pd.DataFrame
    bucket: pd.DataFrame
    gif_days: pd.DataFrame

    def series(self, flavor: str, frequency: str = "daily") -> SentimentSeries:
        frame = self.daily if frequency == "daily" else self.bucket
        if flavor not in frame.columns:
            raise KeyError(f"no {frequency} {flavor} series")
        return SentimentSeries(tuple(frame.index), frame[flavor].to_numpy(float), flavor, frequency)

    def ledger_snapshot(self, day: date | None = None) -> list[str]:
        """``gif_id,cum_bullish,cum_bearish,cum_appearance`` lines as of ``day``."""
        gd = self.gif_days
        if day is None:
            day = self.dates[-1]
        part = gd[gd["date"] <= pd.Timestamp(day)]
        last = part.groupby("gif_id", sort=True).tail(1).sort_values("gif_id")
        return [f"{g},{b},{s},{a}" for g, b, s, a in zip(
            last["gif_id"], last["cum_bullish"], last["cum_bearish"], last["cum_appearance"])]

    def write_ledger_snapshot(self, path, day: date | None = None) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.ledger_snapshot(day):
                fh.write(line + "\n")

    def gif_day_summary(self) -> pd.DataFrame:
        """Distribution of daily bullish/bearish/appearance counts at GIF-day level."""
        rows = {}
        for col, name in (("bullish", "#Declared_Bullish"), ("bearish", "#Declared_Bearish"),
                          ("appearance", "#Appearance")):
            x = self.gif_days[col].to_numpy(float)
            rows[name] = _distribution(x)
        return pd.DataFrame.from_dict(rows, orient="index")


def _distribution(x: np.ndarray) -> dict:
    if len(x) == 0:
        return {"N": 0, "mean": np.nan, "sd": np.nan, **{f"p{q}": np.nan for q in (10, 25, 50, 75, 90)}}
    return {
        "N": len(x),
        "mean": float(np.mean(x)),
        "sd": float(np.std(x, ddof=1)) if len(x) > 1 else np.nan,
        **{f"p{q}": float(np.percentile(x, q)) for q in (10, 25, 50, 75, 90)},
    }


def _percentile_masks(g_code, g_day, A, n_days, pct):
    """Per-group flags: cumulative appearance above the cross-GIF percentile,
    evaluated on the ledger through day t (incl) and through t-1 (prev)."""
    n_codes = int(g_code.max()) + 1 if len(g_code) else 0
    cum = np.zeros(n_codes)
    seen = np.zeros(n_codes, dtype=bool)
    incl = np.zeros(len(g_code), dtype=bool)
    prev = np.zeros(len(g_code), dtype=bool)
    order = np.argsort(g_day, kind="stable")
    bounds = np.searchsorted(g_day[order], np.arange(n_days + 1))
    for t in range(n_days):
        rows = order[bounds[t]:bounds[t + 1]]
        if len(rows) == 0:
            continue
        codes = g_code[rows]
        if seen.any():
            cut = np.percentile(cum[seen], pct)
            prev[rows] = cum[codes] > cut
        cum[codes] += A[rows]
        seen[codes] = True
        cut = np.percentile(cum[seen], pct)
        incl[rows] = cum[codes] > cut
    return incl, prev


def build_index(batch: PostBatch, cal: TradingCalendar,
                options: IndexOptions = IndexOptions()) -> SentimentIndex:
    """Build every daily and half-hour sentiment series from a post batch."""
    if len(batch) and np.any(np.diff(batch.ts_us) < 0):
        batch = batch.sorted()
    day_idx, slot = cal.locate(batch.ts_us)
    n_gif = batch.n_gifs
    keep = batch.market_relevant if options.require_cashtag else np.ones(len(batch), dtype=bool)
    if not len(batch):
        empty = pd.DataFrame(columns=DAILY_COLUMNS)
        return SentimentIndex(cal, options, (), empty, pd.DataFrame(columns=BUCKET_COLUMNS),
                              pd.DataFrame(columns=["gif_id", "date"]))
    d0 = int(day_idx.min())
    d1 = int(day_idx.max())
    D = d1 - d0 + 1
    dates = cal.dates[d0:d1 + 1]
    dd = day_idx - d0

    flagged = np.bincount(dd[~keep], minlength=D)
    kd = dd[keep]
    kdecl = batch.decl[keep].astype(np.int64)
    kgif = n_gif[keep] > 0
    kscore = batch.text_score[keep]
    kslot = slot[keep].astype(np.int64)
    n_posts = np.bincount(kd, minlength=D)
    n_gif_posts = np.bincount(kd[kgif], minlength=D)

    # --- per (GIF, day) groups -------------------------------------------
    owner_all, gif_all = batch.gif_pairs()
    pair_keep = keep[owner_all]
    owner = owner_all[pair_keep]
    gifs = gif_all[pair_keep]
    codes, uniques = pd.factorize(gifs)  # codes in first-appearance (time) order
    codes = codes.astype(np.int64)
    p_day = dd[owner]
    p_decl = batch.decl[owner]
    key = codes * D + p_day
    ukey, inv = np.unique(key, return_inverse=True)
    inv = inv.ravel()
    G = len(ukey)
    A = np.bincount(inv, minlength=G).astype(np.int64)
    B = np.bincount(inv[p_decl > 0], minlength=G).astype(np.int64)
    b = np.bincount(inv[p_decl < 0], minlength=G).astype(np.int64)
    g_code = ukey // D
    g_day = ukey % D
    first = np.r_[True, g_code[1:] != g_code[:-1]] if G else np.zeros(0, dtype=bool)
    cA = _segment_cumsum(A, first)
    cB = _segment_cumsum(B, first)
    cb = _segment_cumsum(b, first)
    pA, pB, pb = cA - A, cB - B, cb - b
    md = options.min_decl
    elig_incl = (cB + cb) >= md
    elig_prev = ((pB + pb) >= md) & (pA > 0)
    v_incl = _safe_div((cB - cb).astype(float), cA.astype(float))
    v_prev = _safe_div((pB - pb).astype(float), pA.astype(float))
    if options.appearance_pct is not None:
        pct_incl, pct_prev = _percentile_masks(g_code, g_day, A, D, options.appearance_pct)
        elig_incl &= pct_incl
        elig_prev &= pct_prev
    if options.window == "through_t":
        e_day, v_day = elig_incl, v_incl
    else:
        e_day, v_day = elig_prev, v_prev

    # --- daily aggregates -------------------------------------------------
    Af = A.astype(float)

    def agg(mask):
        w = np.where(mask, Af, 0.0)
        num = np.bincount(g_day, weights=np.where(mask, Af * np.nan_to_num(v_day), 0.0), minlength=D)
        den = np.bincount(g_day, weights=w, minlength=D)
        present = den > 0
        if options.denominator == "gif_posts":
            den = n_gif_posts.astype(float)
        out = np.full(D, np.nan)
        out[present] = num[present] / den[present]
        return out

    gif_daily = agg(e_day)
    pos_daily = agg(e_day & (v_day > 0))
    neg_daily = agg(e_day & (v_day < 0))

    nongif = ~kgif
    ng_n = np.bincount(kd[nongif], minlength=D)
    ng_bull = np.bincount(kd[nongif & (kdecl > 0)], minlength=D)
    ng_bear = np.bincount(kd[nongif & (kdecl < 0)], minlength=D)
    selfdec_daily = _safe_div((ng_bull - ng_bear).astype(float), ng_n.astype(float))
    has_score = ~np.isnan(kscore)
    text_daily = _safe_div(np.bincount(kd[has_score], weights=kscore[has_score], minlength=D),
                           np.bincount(kd[has_score], minlength=D).astype(float))

    keys = [d.isoformat() for d in dates]
    daily = pd.DataFrame({
        "GIF": gif_daily, "POS": pos_daily, "NEG": neg_daily,
        "SELFDEC": selfdec_daily, "TEXT": text_daily,
        "n_posts": n_posts, "n_gif_posts": n_gif_posts, "n_flagged": flagged,
    }, index=pd.Index(keys, name="key"))

    # --- half-hour aggregates (previous-day ledger) -----------------------
    kbucket = kd * N_SLOTS + kslot
    ub, b_inv = np.unique(kbucket, return_inverse=True)
    b_inv = b_inv.ravel()
    NB = len(ub)
    post_pos = np.cumsum(keep) - 1  # batch index -> kept index
    pair_post = post_pos[owner]
    pair_bucket = b_inv[pair_post]
    pe = elig_prev[inv]
    pv = np.nan_to_num(v_prev[inv])
    b_num = np.bincount(pair_bucket, weights=np.where(pe, pv, 0.0), minlength=NB)
    b_den = np.bincount(pair_bucket, weights=pe.astype(float), minlength=NB)
    b_posts = np.bincount(b_inv, minlength=NB)
    b_gif_posts = np.bincount(b_inv[kgif], minlength=NB)
    b_present = b_den > 0
    if options.denominator == "gif_posts":
        b_den = b_gif_posts.astype(float)
    b_gif = np.full(NB, np.nan)
    b_gif[b_present] = b_num[b_present] / b_den[b_present]

    b_ng = np.bincount(b_inv[nongif], minlength=NB)
    b_bull = np.bincount(b_inv[nongif & (kdecl > 0)], minlength=NB)
    b_bear = np.bincount(b_inv[nongif & (kdecl < 0)], minlength=NB)
    b_selfdec = _safe_div((b_bull - b_bear).astype(float), b_ng.astype(float))
    b_text = _safe_div(np.bincount(b_inv[has_score], weights=kscore[has_score], minlength=NB),
                       np.bincount(b_inv[has_score], minlength=NB).astype(float))

    # disagreement: sd across posts of each post's mean eligible valence
    n_kept = int(keep.sum())
    post_sum = np.bincount(pair_post, weights=np.where(pe, pv, 0.0), minlength=n_kept)
    post_cnt = np.bincount(pair_post, weights=pe.astype(float), minlength=n_kept)
    contrib = post_cnt > 0
    post_val = np.zeros(n_kept)
    post_val[contrib] = post_sum[contrib] / post_cnt[contrib]
    cb_ = b_inv[contrib]
    c_n = np.bincount(cb_, minlength=NB)
    c_mean = _safe_div(np.bincount(cb_, weights=post_val[contrib], minlength=NB), c_n.astype(float))
    dev = post_val[contrib] - c_mean[cb_]
    c_ss = np.bincount(cb_, weights=dev * dev, minlength=NB)
    b_dis = np.full(NB, np.nan)
    two = c_n >= 2
    b_dis[two] = np.sqrt(c_ss[two] / (c_n[two] - 1))

    bkeys = [bucket_key(dates[int(u // N_SLOTS)], int(u % N_SLOTS)) for u in ub]
    bucket = pd.DataFrame({
        "GIF": b_gif, "SELFDEC": b_selfdec, "TEXT": b_text, "DISAGREEMENT": b_dis,
        "n_posts": b_posts, "n_gif_posts": b_gif_posts,
    }, index=pd.Index(bkeys, name="key"))

    date_ts = pd.to_datetime(keys)
    gif_days = pd.DataFrame({
        "gif_id": np.asarray(uniques, dtype=object)[g_code] if G else np.empty(0, dtype=object),
        "date": date_ts[g_day] if G else pd.DatetimeIndex([]),
        "bullish": B, "bearish": b, "appearance": A,
        "cum_bullish": cB, "cum_bearish": cb, "cum_appearance": cA,
        "valence": np.where(elig_incl, v_incl, np.nan),
    })
    return SentimentIndex(cal, options, tuple(dates), daily, bucket, gif_days)


# ---------------------------------------------------------------------------
# temporal stability of GIF valence
# ---------------------------------------------------------------------------


def lag1_autocorrelations(paths: Mapping[str, Sequence[float]], min_days: int = 3) -> pd.Series:
    """Pearson correlation of consecutive values for each path.

    Paths with fewer than ``min_days`` points or with a constant leading or
    trailing segment (undefined correlation) are left out.
    """
    out = {}
    for g, xs in paths.items():
        x = np.asarray(xs, dtype=float)
        if len(x) < min_days:
            continue
        a, b = x[:-1], x[1:]
        if a.min() == a.max() or b.min() == b.max():
            continue
        da, db = a - a.mean(), b - b.mean()
        out[g] = float(np.dot(da, db) / math.sqrt(np.dot(da, da) * np.dot(db, db)))
    return pd.Series(out, dtype=float, name="lag1_autocorrelation")


def gif_autocorrelation_report(gif_days: pd.DataFrame, min_appearance: int = 5,
                               min_days: int = 3) -> dict:
    """Summary of per-GIF lag-1 autocorrelation of *daily* (non-cumulative) valence.

    Only GIF-days with at least ``min_appearance`` appearances enter a GIF's
    path; GIFs need ``min_days`` such days.
    """
    if min_appearance not in (5, 10, 25):
        raise ConfigError("min_appearance must be 5, 10 or 25")
    gd = gif_days[gif_days["appearance"] >= min_appearance].sort_values(["gif_id", "date"], kind="stable")
    val = (gd["bullish"] - gd["bearish"]) / gd["appearance"]
    paths = {g: v.to_numpy() for g, v in val.groupby(gd["gif_id"], sort=True)}
    ac = lag1_autocorrelations(paths, min_days=min_days)
    return {"min_appearance": min_appearance, **_distribution(ac.to_numpy())}

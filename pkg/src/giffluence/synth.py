"""Seeded synthetic worlds with planted sentiment dynamics.

A latent sentiment ``S_t`` follows a stationary AR(1) scaled to unit
variance.  Posters pick GIFs whose fixed valence ``v_j`` agrees with the
current mood (choice probabilities tilted by ``exp(tilt * S_t * v_j)``),
and declared posts lean bullish with probability ``logistic(a (v_j + S_t))``.
The index return loads on ``S_t`` on the same day and reverses over the next
twenty days:

    r_t = beta0 * S_t - (beta_rev / 20) * sum_{k=1..20} S_{t-k} + noise

so the expected regression signs are known in advance.  Everything is driven
by ``numpy.random.SeedSequence`` children keyed by purpose, so the corpus and
the market data can be regenerated independently and bit-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pandas as pd

from .corpus import (
    N_SLOTS,
    SLOT_US,
    US_PER_DAY,
    US_PER_SECOND,
    PostBatch,
    TradingCalendar,
    _format_us,
    trading_index,
)
from .errors import ConfigError
from .metrics import MarketPanel

REVERSAL_DAYS = 20
MARKET_SLOTS = tuple(range(35, 48))  # 09:30-16:00 with a 16:00 cutoff
TICKERS = ("SPY", "AAPL", "TSLA", "AMZN", "MSFT", "NVDA", "AMD", "GME", "META", "NFLX")
WORDS = ("going up", "to the moon", "ouch", "holding", "buy the dip", "rip", "lol", "nice", "ugh", "we ride")


@dataclass(frozen=True)
class WorldConfig:
    """Parameters of a synthetic world.

    Planted effects are in % return per standard deviation of the latent
    sentiment.  ``confounded`` makes the EPU and ADS controls load on the
    latent sentiment, for stress-testing the regressions.
    """

    days: int = 1000
    posts_per_day: float = 2000.0
    gif_catalog_size: int = 400
    rho: float = 0.5
    innovation_sd: float | None = None  # None: unit stationary variance
    decl_slope: float = 2.0
    declare_prob: float = 0.4
    gif_share: float = 0.35
    second_gif_share: float = 0.1
    tilt: float = 1.5
    valence_sd: float = 0.6
    text_slope: float = 0.5
    text_noise: float = 0.5
    no_cashtag_share: float = 0.02
    weekend_share: float = 0.05
    intraday_sd: float = 0.5
    beta0: float = 0.3
    beta_rev: float = 1.2
    noise_sd: float = 1.0
    beta_intraday: float = 0.05
    intraday_noise_sd: float = 0.15
    flow_beta: float = 0.2
    n_firms: int = 40
    confounded: bool = False
    start: str = "2018-01-02"
    seed: int = 0

    def __post_init__(self):
        vals = [v for v in asdict(self).values() if isinstance(v, float)]
        if not all(math.isfinite(v) for v in vals):
            raise ConfigError("world parameters must be finite")
        if not 0 <= self.rho < 1:
            raise ConfigError("rho must lie in [0, 1)")
        if self.posts_per_day < 1:
            raise ConfigError("posts_per_day must be >= 1")
        if self.days < 2 or self.gif_catalog_size < 1:
            raise ConfigError("need at least 2 days and 1 GIF")
        if self.decl_slope <= 0:
            raise ConfigError("decl_slope must be > 0")
        for name in ("declare_prob", "gif_share", "second_gif_share", "no_cashtag_share", "weekend_share"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")

    def innovation(self) -> float:
        if self.innovation_sd is not None:
            return self.innovation_sd
        return math.sqrt(1.0 - self.rho ** 2)


def expected_signs(cfg: WorldConfig) -> tuple[int, int, int]:
    """Planted signs for the (day-0, week, month) return coefficients.

    Day 0 follows ``beta0``; the week and month horizons follow the
    reversal, ``-beta_rev``.
    """
    s0 = int(np.sign(cfg.beta0))
    srev = int(np.sign(-cfg.beta_rev))
    return s0, srev, srev


def latent_autocov(rho: float, lag: int) -> float:
    return rho ** abs(lag)


def population_coefficients(cfg: WorldConfig, windows=((0, 0), (1, 5), (1, 20))) -> tuple[float, ...]:
    """Slope of the compounded-return proxy (sum of daily returns) on S_t.

    Uses the stationary autocovariance of the latent AR(1); returns are
    linear in S so the summed-return slope is exact.
    """
    out = []
    for m, n in windows:
        total = 0.0
        for j in range(m, n + 1):
            total += cfg.beta0 * latent_autocov(cfg.rho, j)
            total -= cfg.beta_rev / REVERSAL_DAYS * sum(
                latent_autocov(cfg.rho, j - k) for k in range(1, REVERSAL_DAYS + 1))
        out.append(total)
    return tuple(out)


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-x))


def _rng(cfg: WorldConfig, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, purpose]))


@dataclass
class World:
    cfg: WorldConfig
    calendar: TradingCalendar
    posts: PostBatch
    market: MarketPanel
    controls: pd.DataFrame  # daily controls (monthly ones already broadcast)
    monthly: pd.DataFrame  # monthly controls as published (month, value)
    latent: pd.Series  # S_t
    gif_valence: pd.Series  # v_j by gif id
    truth: dict = field(default_factory=dict)


def calendar_for(cfg: WorldConfig) -> TradingCalendar:
    start = date.fromisoformat(cfg.start)
    dates = []
    d = start
    while len(dates) < cfg.days:
        if d.weekday() < 5:
            dates.append(d)
        d += timedelta(days=1)
    return TradingCalendar(tuple(dates))


def latent_path(cfg: WorldConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    eta = rng.standard_normal(n)
    sd0 = cfg.innovation() / math.sqrt(1.0 - cfg.rho ** 2)
    s = np.empty(n)
    s[0] = sd0 * eta[0]
    for t in range(1, n):
        s[t] = cfg.rho * s[t - 1] + cfg.innovation() * eta[t]
    return s


def _local_to_utc(cal: TradingCalendar, local_us: np.ndarray) -> np.ndarray:
    guess = local_us - cal.local_offsets_us(local_us - 5 * 3600 * US_PER_SECOND)
    return local_us - cal.local_offsets_us(guess)


def _post_times(cfg, cal, day, slot, rng) -> np.ndarray:
    epoch = date(1970, 1, 1)
    ords = np.array([(d - epoch).days for d in cal.dates], dtype=np.int64)
    prev = np.r_[ords[0] - 1, ords[:-1]]
    cut = cal.cutoff_seconds * US_PER_SECOND
    end = ords[day] * US_PER_DAY + cut
    local = end - (N_SLOTS - slot.astype(np.int64)) * SLOT_US + rng.integers(0, SLOT_US, len(day))
    # part of the traffic lands on preceding non-trading days and rolls forward
    gap_days = (ords - prev)[day] - 1
    wk = (gap_days > 0) & (rng.random(len(day)) < cfg.weekend_share)
    if wk.any():
        start = prev[day[wk]] * US_PER_DAY + cut
        span = gap_days[wk] * US_PER_DAY
        local[wk] = start + (rng.random(int(wk.sum())) * span).astype(np.int64)
    return _local_to_utc(cal, local)


def _build_posts(cfg, cal, S_bucket, rng) -> tuple[PostBatch, np.ndarray, np.ndarray]:
    T = len(cal)
    G = cfg.gif_catalog_size
    vrng = _rng(cfg, 11)
    valence = np.clip(vrng.normal(0.0, cfg.valence_sd, G), -1.5, 1.5)
    popularity = vrng.pareto(1.5, G) + 1.0
    gif_names = np.array([f"g{j:05d}x{cfg.seed % 997:03d}" for j in range(G)], dtype=object)

    counts = rng.poisson(cfg.posts_per_day, T)
    n = int(counts.sum())
    day = np.repeat(np.arange(T), counts)
    profile = np.ones(N_SLOTS)
    profile[list(MARKET_SLOTS)] = 3.0
    slot = rng.choice(N_SLOTS, size=n, p=profile / profile.sum())
    s_post = S_bucket[day, slot]

    has_gif = rng.random(n) < cfg.gif_share
    gif1 = np.full(n, -1)
    # tilted choice; mood is constant within a (day, slot) bucket, so draw by
    # inverse CDF per bucket: row r's CDF is shifted to [r, r+1) and flattened
    gidx = np.flatnonzero(has_gif)
    gb = day[gidx] * N_SLOTS + slot[gidx]
    u = rng.random(len(gidx))
    logw = np.log(popularity)[None, :]
    S_flat = S_bucket.ravel()
    step = 4000
    for lo in range(0, T * N_SLOTS, step):
        hi = min(lo + step, T * N_SLOTS)
        sel = (gb >= lo) & (gb < hi)
        if not sel.any():
            continue
        w = np.exp(logw + cfg.tilt * S_flat[lo:hi, None] * valence[None, :])
        cdf = np.cumsum(w, axis=1)
        cdf /= cdf[:, -1:]
        cdf[:, -1] = 1.0
        flat = (cdf + np.arange(hi - lo)[:, None]).ravel()
        r = gb[sel] - lo
        pos = np.searchsorted(flat, r + u[sel], side="right")
        gif1[gidx[sel]] = np.minimum(pos - r * G, G - 1)
    second = has_gif & (rng.random(n) < cfg.second_gif_share)
    gif2 = np.full(n, -1)
    gif2[second] = rng.choice(G, size=int(second.sum()), p=popularity / popularity.sum())
    gif2[gif2 == gif1] = -1

    declared = rng.random(n) < cfg.declare_prob
    lean = np.where(has_gif, valence[np.maximum(gif1, 0)] + s_post, s_post)
    bullish = rng.random(n) < _logistic(cfg.decl_slope * lean)
    decl = np.where(declared, np.where(bullish, 1, -1), 0).astype(np.int8)
    text = np.tanh(cfg.text_slope * s_post + cfg.text_noise * rng.standard_normal(n))

    ts = _post_times(cfg, cal, day, slot, rng)
    order = np.lexsort((np.arange(n), ts))
    ts, day, gif1, gif2, decl, text = ts[order], day[order], gif1[order], gif2[order], decl[order], text[order]

    no_tag = rng.random(n) < cfg.no_cashtag_share
    ticker = rng.integers(0, len(TICKERS), n)
    ngif = (gif1 >= 0).astype(np.int64) + (gif2 >= 0)
    gif_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(ngif, out=gif_ptr[1:])
    flat = np.column_stack([gif1, gif2]).ravel()
    gif_ids = gif_names[flat[flat >= 0]]
    cash_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(~no_tag, out=cash_ptr[1:])
    cashtags = np.asarray(TICKERS, dtype=object)[ticker[~no_tag]]
    post_id = np.array([f"p{cfg.seed}-{i:08d}" for i in range(n)], dtype=object)
    users = np.array([f"u{k}" for k in range(5000)], dtype=object)[rng.integers(0, 5000, n)]
    batch = PostBatch(post_id, ts.astype(np.int64), users, decl, text, cash_ptr, cashtags,
                      gif_ptr, gif_ids, None)
    return batch, pd.Series(valence, index=pd.Index(gif_names, name="gif_id"), name="valence"), day


def post_bodies(batch: PostBatch, seed: int = 0) -> np.ndarray:
    """Render post text (ticker, a phrase and GIF URLs) for writing JSONL."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 29]))
    words = np.asarray(WORDS, dtype=object)[rng.integers(0, len(WORDS), len(batch))]
    out = np.empty(len(batch), dtype=object)
    cp, gp = batch.cashtag_ptr, batch.gif_ptr
    for i in range(len(batch)):
        parts = ["$" + c for c in batch.cashtags[cp[i]:cp[i + 1]]]
        parts.append(words[i])
        parts += [f"https://media2.giphy.com/media/{g}/giphy.gif" for g in batch.gif_ids[gp[i]:gp[i + 1]]]
        out[i] = " ".join(parts)
    return out


def _market(cfg, cal, S, S_bucket, rng):
    T = len(cal)
    idx = trading_index(cal)
    noise = rng.normal(0.0, cfg.noise_sd, T)
    lagsum = np.zeros(T)
    c = np.r_[0.0, np.cumsum(S)]
    t = np.arange(T)
    lo = np.maximum(t - REVERSAL_DAYS, 0)
    lagsum = c[t] - c[lo]  # S_{t-20} .. S_{t-1}, truncated at the start
    ret = cfg.beta0 * S - cfg.beta_rev / REVERSAL_DAYS * lagsum + noise
    dow = idx.dayofweek.to_numpy()
    flow_season = np.array([0.05, 0.0, -0.02, 0.0, 0.03])[dow]
    eff = cfg.flow_beta * S + flow_season + rng.normal(0, 0.5, T)
    bff = -0.5 * cfg.flow_beta * S - flow_season + rng.normal(0, 0.5, T)
    daily = pd.DataFrame({"ret_pct": ret, "eff": eff, "bff": bff}, index=idx)

    rows, keys = [], []
    for ti, d in enumerate(cal.dates):
        for s in MARKET_SLOTS:
            keys.append(f"{d.isoformat()}Tslot{s:02d}")
    zb = S_bucket[:, list(MARKET_SLOTS)].ravel()
    bret = cfg.beta_intraday * zb + rng.normal(0, cfg.intraday_noise_sd, len(zb))
    vol = np.round(np.exp(14.0 + 0.3 * np.abs(zb) + 0.2 * rng.standard_normal(len(zb))))
    bucket = pd.DataFrame({"ret_pct": bret, "volume": vol}, index=pd.Index(keys, name="key"))
    return daily, bucket


def _controls(cfg, cal, S, n_posts_day, rng):
    T = len(cal)
    idx = trading_index(cal)
    conf = 0.5 if cfg.confounded else 0.0
    ctrl = pd.DataFrame({
        "epu": 100 + 20 * rng.standard_normal(T) - 10 * conf * S,
        "ads": 0.3 * rng.standard_normal(T) + conf * 0.3 * S,
        "media_sentiment": 0.1 * rng.standard_normal(T),
        "ea_count": rng.poisson(5, T).astype(float),
        "message_count": n_posts_day.astype(float),
        "cloud_cover": np.clip(50 + 25 * rng.standard_normal(T), 0, 100),
        "covid_index": np.cumsum(rng.normal(0, 0.5, T)),
    }, index=idx)
    months = pd.period_range(idx[0].to_period("M") - 1, idx[-1].to_period("M"), freq="M")
    monthly = pd.DataFrame({
        "bw": np.cumsum(rng.normal(0, 0.1, len(months))),
        "ics": 90 + np.cumsum(rng.normal(0, 1.0, len(months))),
    }, index=pd.Index(months, name="month"))
    bc = monthly.copy()
    bc.index = bc.index + 1
    daily_m = bc.reindex(idx.to_period("M"))
    daily_m.index = idx
    return pd.concat([ctrl, daily_m], axis=1), monthly


def _firms(cfg, cal, S, mkt_ret, rng):
    T = len(cal)
    idx = trading_index(cal)
    F = cfg.n_firms
    factors = {
        "mkt_rf": mkt_ret,
        "smb": rng.normal(0.0, 0.5, T),
        "hml": rng.normal(0.0, 0.5, T),
        "rmw": rng.normal(0.0, 0.3, T),
        "cma": rng.normal(0.0, 0.3, T),
        "umd": rng.normal(0.0, 0.6, T),
    }
    fac = np.column_stack(list(factors.values()))
    loads = np.column_stack([rng.normal(1.0, 0.3, F), rng.normal(0, 0.5, (F, 5))])
    cap0 = np.exp(rng.normal(8.0, 1.5, F))
    size_rank = np.argsort(np.argsort(cap0)) / max(F - 1, 1)
    sent_load = 0.3 * (1.0 - size_rank)  # small firms load more on sentiment
    idio_sd = np.exp(rng.normal(0.3, 0.4, F))
    ret = fac @ loads.T + np.outer(S, sent_load) + rng.standard_normal((T, F)) * idio_sd
    caps = cap0 * np.cumprod(1.0 + ret / 100.0, axis=0)
    panel = pd.DataFrame({
        "date": np.repeat(idx.to_numpy(), F),
        "firm_id": np.tile(np.array([f"F{i:03d}" for i in range(F)], dtype=object), T),
        "ret_pct": ret.ravel(),
        "mktcap": caps.ravel(),
    })
    for j, name in enumerate(factors):
        panel[name] = np.repeat(fac[:, j], F)
    return panel


def generate_world(cfg: WorldConfig) -> World:
    cal = calendar_for(cfg)
    T = len(cal)
    S = latent_path(cfg, T, _rng(cfg, 1))
    brng = _rng(cfg, 2)
    S_bucket = S[:, None] + cfg.intraday_sd * brng.standard_normal((T, N_SLOTS))
    posts, valence, post_day = _build_posts(cfg, cal, S_bucket, _rng(cfg, 3))
    daily, bucket = _market(cfg, cal, S, S_bucket, _rng(cfg, 4))
    n_posts_day = np.bincount(cal.locate(posts.ts_us)[0], minlength=T)
    controls, monthly = _controls(cfg, cal, S, n_posts_day, _rng(cfg, 5))
    firms = _firms(cfg, cal, S, daily["ret_pct"].to_numpy(), _rng(cfg, 6))
    market = MarketPanel(daily=daily, bucket=bucket, firms=firms)
    latent = pd.Series(S, index=trading_index(cal), name="S")
    truth = {
        "config": asdict(cfg),
        "expected_signs": dict(zip(("day0", "week", "month"), expected_signs(cfg))),
        "population_coefficients": dict(zip(("day0", "week", "month"), population_coefficients(cfg))),
        "n_posts": len(posts),
        "latent": {d.isoformat(): float(s) for d, s in zip(cal.dates, S)},
    }
    return World(cfg, cal, posts, market, controls, monthly, latent, valence, truth)


def _write_frame(df: pd.DataFrame, path: Path, index_label: str) -> None:
    out = df.copy()
    if isinstance(out.index, pd.DatetimeIndex):
        out.index = out.index.strftime("%Y-%m-%d")
    elif isinstance(out.index, pd.PeriodIndex):
        out.index = out.index.strftime("%Y-%m")
    out.to_csv(path, index_label=index_label, lineterminator="\n", float_format="%.10g")


def write_posts_jsonl(batch: PostBatch, path, seed: int = 0) -> None:
    bodies = batch.body if batch.body is not None else post_bodies(batch, seed)
    decl_txt = {1: '"Bullish"', -1: '"Bearish"', 0: "null"}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(batch)):
            score = batch.text_score[i]
            fh.write(
                '{"id": ' + json.dumps(batch.post_id[i])
                + ', "created_at": "' + _format_us(int(batch.ts_us[i]))
                + '", "user_id": ' + json.dumps(batch.user_id[i])
                + ', "body": ' + json.dumps(bodies[i])
                + ', "declaration": ' + decl_txt[int(batch.decl[i])]
                + ', "text_score": ' + ("null" if score != score else repr(float(score)))
                + "}\n")


def write_world(world: World, out_dir) -> dict[str, str]:
    """Write the corpus and market files plus ``truth.json``; returns the paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "posts": out / "posts.jsonl",
        "calendar": out / "calendar.csv",
        "market": out / "market_daily.csv",
        "intraday": out / "market_intraday.csv",
        "flows": out / "fund_flows.csv",
        "controls": out / "controls_daily.csv",
        "monthly": out / "controls_monthly.csv",
        "firms": out / "firms.csv",
        "truth": out / "truth.json",
    }
    write_posts_jsonl(world.posts, paths["posts"], world.cfg.seed)
    world.calendar.to_file(paths["calendar"])
    daily = world.market.daily
    _write_frame(daily[["ret_pct"]], paths["market"], "date")
    _write_frame(daily[["eff", "bff"]], paths["flows"], "date")
    world.market.bucket.to_csv(paths["intraday"], index_label="key", lineterminator="\n", float_format="%.10g")
    cols = [c for c in world.controls.columns if c not in world.monthly.columns]
    _write_frame(world.controls[cols], paths["controls"], "date")
    _write_frame(world.monthly, paths["monthly"], "month")
    firms = world.market.firms.copy()
    firms["date"] = pd.DatetimeIndex(firms["date"]).strftime("%Y-%m-%d")
    firms.to_csv(paths["firms"], index=False, lineterminator="\n", float_format="%.10g")
    paths["truth"].write_text(json.dumps(world.truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {k: str(v) for k, v in paths.items()}

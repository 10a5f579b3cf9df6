"""End-to-end orchestration: inputs -> index -> metrics -> tables -> bundle.

:func:`run_pipeline` reads everything named in a :class:`PipelineConfig`,
builds the sentiment index, assembles a daily (and, when intraday market
data is present, a half-hour) series store, estimates every requested table
and writes a deterministic bundle.  Tables whose inputs are missing are
skipped with a notice instead of failing the run.
"""

from __future__ import annotations

import configparser
import contextlib
import hashlib
import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .corpus import DEFAULT_SCHEMA, PostBatch, PostSchema, TradingCalendar, load_exogenous, read_posts
from .econ import Inference, RegressionSpec, Table, pearson_test, run_table
from .errors import ConfigError, ConstantInput, GiffluenceError, TooFewPoints, ZeroVariance
from .index import IndexOptions, SentimentIndex, build_index, gif_autocorrelation_report, standardize
from .metrics import (
    CHARACTERISTICS,
    abn_messages_series,
    deseasonalize,
    firm_characteristics,
    forward_cum_returns,
    forward_log_volume,
    forward_realized_vol,
    load_bucket_market,
    load_daily_market,
    load_firm_panel,
    quintile_long,
    quintile_returns,
)
from .plot import PlotStyle, emit_plot

ALL_TABLES = ("table1", "table2", "table3", "table4", "table5", "table6", "table7", "table8",
              "table9", "table10", "tableA4", "tableA5", "tableA6", "tableA7")
DAILY_FLAVORS = ("GIF", "POS", "NEG", "SELFDEC", "TEXT")
BUCKET_FLAVORS = ("GIF", "SELFDEC", "TEXT", "DISAGREEMENT")


@dataclass(frozen=True)
class PipelineConfig:
    posts: tuple[str, ...] = ()
    calendar: str | None = None
    schema: str | None = None
    market: str | None = None
    intraday: str | None = None
    controls: tuple[str, ...] = ()
    flows: str | None = None
    firms: str | None = None
    out: str = "giffluence_out"
    min_decl: int = 5
    denominator: str = "eligible"
    window: str = "through_t"
    appearance_pct: int | None = None
    require_cashtag: bool = True
    tables: tuple[str, ...] = ALL_TABLES
    reps: int = 2000
    nk_reps: int = 1999
    seed: int = 0
    block_day: int = 1
    block_week: int = 5
    block_month: int = 20
    factor_set: str = "ff5"
    workers: int = 1
    plots: bool = True

    def __post_init__(self):
        bad = [t for t in self.tables if t not in ALL_TABLES]
        if bad:
            raise ConfigError(f"unknown table(s) {bad}; choose from {', '.join(ALL_TABLES)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.reps < 100 or (self.nk_reps and self.nk_reps < 100):
            raise ConfigError("reps and nk_reps must be >= 100 (nk_reps 0 disables randomized p-values)")
        IndexOptions(self.min_decl, self.denominator, self.window, self.appearance_pct, self.require_cashtag)

    @property
    def index_options(self) -> IndexOptions:
        return IndexOptions(self.min_decl, self.denominator, self.window, self.appearance_pct,
                            self.require_cashtag)

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        """Build from string values (config file or CLI), coercing by field type."""
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            kw[name] = _coerce(name, str(known[name].type), raw)
        return cls(**kw)

    def validate_paths(self) -> None:
        single = {"calendar": self.calendar, "schema": self.schema, "market": self.market,
                  "intraday": self.intraday, "flows": self.flows, "firms": self.firms}
        for k, v in single.items():
            if v is not None and not os.path.exists(v):
                raise ConfigError(f"{k} path does not exist: {v}")
        if not self.posts:
            raise ConfigError("no post files configured")
        if self.calendar is None:
            raise ConfigError("a trading calendar is required")


def _coerce(name: str, typ: str, raw):
    if not isinstance(raw, str):
        return raw
    s = raw.strip()
    try:
        if "tuple" in typ:
            return tuple(p.strip() for p in s.split(",") if p.strip())
        if typ.startswith("bool"):
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if "None" in typ and s.lower() in ("", "none", "null"):
            return None
        if typ.startswith("int"):
            return int(s)
        return s
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}") from None


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments and blank lines ignored."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_string("[pipeline]\n" + fh.read())
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return dict(parser["pipeline"])


@contextlib.contextmanager
def stage(name: str):
    """Prefix module errors with the pipeline stage they came from."""
    try:
        yield
    except GiffluenceError as exc:
        if "stage" not in exc.context:
            exc.context["stage"] = name
            exc.args = (f"[{name}] {exc.args[0] if exc.args else exc.code}",) + exc.args[1:]
        raise


# ---------------------------------------------------------------------------
# inputs
# ---------------------------------------------------------------------------


@dataclass
class Inputs:
    calendar: TradingCalendar
    posts: PostBatch
    market: pd.DataFrame | None = None  # daily, ret_pct
    intraday: pd.DataFrame | None = None  # bucket keyed, ret_pct / volume
    controls: pd.DataFrame | None = None
    flows: pd.DataFrame | None = None  # eff / bff
    firms: pd.DataFrame | None = None


def load_inputs(cfg: PipelineConfig) -> Inputs:
    cfg.validate_paths()
    with stage("calendar"):
        cal = TradingCalendar.from_file(cfg.calendar)
    with stage("ingest"):
        schema = PostSchema.from_file(cfg.schema) if cfg.schema else DEFAULT_SCHEMA
        posts = read_posts(list(cfg.posts), schema, workers=cfg.workers, keep_body=False)
    inp = Inputs(cal, posts)
    with stage("market"):
        if cfg.market:
            inp.market = load_daily_market(cfg.market, cal)
        if cfg.intraday:
            inp.intraday = load_bucket_market(cfg.intraday)
        if cfg.firms:
            inp.firms = load_firm_panel(cfg.firms)
    with stage("controls"):
        if cfg.controls:
            inp.controls = load_exogenous(list(cfg.controls), cal)
        if cfg.flows:
            inp.flows = load_exogenous([cfg.flows], cal)
    return inp


def inputs_from_world(world) -> Inputs:
    """In-memory inputs from a :class:`giffluence.synth.World`."""
    daily = world.market.daily
    return Inputs(
        calendar=world.calendar,
        posts=world.posts,
        market=daily[["ret_pct"]],
        intraday=world.market.bucket,
        controls=world.controls,
        flows=daily[["eff", "bff"]],
        firms=world.market.firms,
    )


# ---------------------------------------------------------------------------
# stores
# ---------------------------------------------------------------------------


def _std_or_raw(s, notices: list[str], label: str) -> np.ndarray:
    try:
        return standardize(s).values
    except (TooFewPoints, ZeroVariance) as exc:
        notices.append(f"{label}: not standardized ({exc.code})")
        return s.values.copy()


HORIZONS = (("Ret(t)", 0, 0, "day"), ("Ret[t+1,t+5]", 1, 5, "week"), ("Ret[t+1,t+20]", 1, 20, "month"))


def daily_store(idx: SentimentIndex, inp: Inputs, notices: list[str]) -> pd.DataFrame:
    dates = pd.DatetimeIndex(pd.to_datetime(list(idx.daily.index)), name="date")
    store = pd.DataFrame(index=dates)
    for f in DAILY_FLAVORS:
        s = idx.series(f)
        store[f + "_raw"] = s.values
        store[f] = _std_or_raw(s, notices, f) if np.isfinite(s.values).sum() else np.nan
    store["abs_GIF"] = store["GIF"].abs()
    store["n_gif_posts"] = idx.daily["n_gif_posts"].to_numpy(float)
    n_msgs = (idx.daily["n_posts"] + idx.daily["n_flagged"]).to_numpy(float)
    if inp.market is not None:
        r = inp.market["ret_pct"].reindex(dates).to_numpy(float)
        store["ret"] = r
        for _, m, n, _kind in HORIZONS:
            store[f"ret_{m}_{n}"] = forward_cum_returns(r, m, n)
        store["ret_lag1"] = forward_cum_returns(r, -1, -1)
        store["ret_lag5"] = forward_cum_returns(r, -5, -1)
        store["ret_lag20"] = forward_cum_returns(r, -20, -1)
        store["vol_0_4"] = forward_realized_vol(r, 4)
        store["vol_0_19"] = forward_realized_vol(r, 19)
        store["vol_lag20"] = forward_realized_vol(r, -1, m=-20)
    ctrl = inp.controls.reindex(dates) if inp.controls is not None else pd.DataFrame(index=dates)
    for c in ctrl.columns:
        store["ctl_" + c] = ctrl[c].to_numpy(float)
    if "ea_count" in ctrl.columns:
        store["log_ea"] = np.log1p(ctrl["ea_count"].to_numpy(float))
    msgs = ctrl["message_count"].to_numpy(float) if "message_count" in ctrl.columns else n_msgs
    store["log_abn_messages"] = abn_messages_series(msgs)
    if "cloud_cover" in ctrl.columns:
        try:
            store["cloud_cover_ds"] = deseasonalize(ctrl["cloud_cover"], "week").to_numpy()
        except TooFewPoints as exc:
            notices.append(f"cloud_cover not deseasonalized: {exc}")
    if "covid_index" in ctrl.columns:
        store["d_covid_index"] = ctrl["covid_index"].diff().to_numpy()
    if inp.flows is not None:
        fl = inp.flows.reindex(dates)
        for c in ("eff", "bff"):
            if c in fl.columns and fl[c].notna().sum() > 30:
                try:
                    ds = deseasonalize(fl[c], "dow_month").to_numpy()
                except TooFewPoints as exc:
                    notices.append(f"{c} flows not deseasonalized: {exc}")
                    continue
                store[c + "_ds"] = ds
                store[c + "_ds_lead1"] = np.r_[ds[1:], np.nan]
    return store


def bucket_store(idx: SentimentIndex, inp: Inputs, notices: list[str]) -> pd.DataFrame | None:
    if inp.intraday is None:
        return None
    mk = inp.intraday
    keys = [k for k in mk.index if idx.dates and idx.dates[0].isoformat() <= k[:10] <= idx.dates[-1].isoformat()]
    store = pd.DataFrame(index=pd.Index(keys, name="key"))
    b = idx.bucket.reindex(keys)
    for f in BUCKET_FLAVORS:
        s = idx.series(f, "bucket")
        std = pd.Series(_std_or_raw(s, notices, "bucket " + f), index=list(s.keys))
        store[f] = std.reindex(keys).to_numpy(float)
    store["abs_GIF"] = store["GIF"].abs()
    store["n_posts"] = b["n_posts"].fillna(0).to_numpy(float)
    if "ret_pct" in mk.columns:
        r = mk["ret_pct"].reindex(keys).to_numpy(float)
        store["ret_b_0_0"] = r
        store["ret_b_1_1"] = forward_cum_returns(r, 1, 1)
        store["ret_b_1_2"] = forward_cum_returns(r, 1, 2)
        store["ret_b_lag1"] = forward_cum_returns(r, -1, -1)
    if "volume" in mk.columns:
        v = mk["volume"].reindex(keys).to_numpy(float)
        store["logvol_b_0_0"] = forward_log_volume(v, 0, 0)
        store["logvol_b_1_1"] = forward_log_volume(v, 1, 1)
        store["logvol_b_lag1"] = forward_log_volume(v, -1, -1)
    return store


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------


def _present(store, cols):
    return tuple(c for c in cols if c in store.columns and store[c].notna().any())


RETURN_LAG = {"day": "ret_lag1", "week": "ret_lag5", "month": "ret_lag20"}


def _horizon_specs(store, cfg, regressor, *, label_prefix="", nk_reps=None, **filters):
    """One spec per return horizon, block length matched to the window."""
    blocks = {"day": cfg.block_day, "week": cfg.block_week, "month": cfg.block_month}
    specs = []
    for label, m, n, kind in HORIZONS:
        ctl = _present(store, ("ctl_epu", "ctl_ads", "log_ea", "log_abn_messages", RETURN_LAG[kind]))
        specs.append(RegressionSpec(
            dependent=f"ret_{m}_{n}", regressors=(regressor,), controls=ctl, label=label_prefix + label,
            inference=Inference("block_bootstrap", block_len=blocks[kind], reps=cfg.reps, seed=cfg.seed),
            nk_reps=cfg.nk_reps if nk_reps is None else nk_reps, **filters,
        ))
    return specs


def _table(title, specs, store, cfg, notes=()):
    t = run_table(specs, store, title, workers=cfg.workers)
    t.notes.extend(notes)
    return t


@dataclass
class FrameTable:
    """Descriptive table (no regressions) with the same writer interface as :class:`Table`."""

    title: str
    frame: pd.DataFrame
    meta: dict = field(default_factory=dict)

    def to_markdown(self) -> str:
        df = self.frame
        head = [df.index.name or "", *map(str, df.columns)]
        body = [[str(i), *[_cell(v) for v in row]] for i, row in zip(df.index, df.to_numpy(dtype=object))]
        widths = [max(len(r[j]) for r in [head, *body]) for j in range(len(head))]
        fmt = lambda r: "| " + " | ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                          for j, (c, w) in enumerate(zip(r, widths))) + " |"
        lines = [f"### {self.title}", "", fmt(head),
                 "|" + "|".join(("-" * (w + 1) + ":") if j else ("-" * (w + 2)) for j, w in enumerate(widths)) + "|"]
        lines += [fmt(r) for r in body]
        return "\n".join(lines) + "\n"

    def write(self, directory, stem: str) -> None:
        d = Path(directory)
        self.frame.to_csv(d / f"{stem}.csv", lineterminator="\n", float_format="%.6g")
        (d / f"{stem}.md").write_text(self.to_markdown(), encoding="utf-8")
        (d / f"{stem}.meta.json").write_text(json.dumps({"title": self.title, **self.meta}, indent=2,
                                                        sort_keys=True) + "\n", encoding="utf-8")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if v != v else f"{v:.4g}"
    return str(v)


def _summary_frame(store: pd.DataFrame, cols) -> pd.DataFrame:
    rows = {}
    for c in cols:
        x = store[c].dropna().to_numpy(float)
        if len(x) < 2:
            continue
        rows[c] = {"N": len(x), "mean": x.mean(), "sd": x.std(ddof=1),
                   **{f"p{q}": np.percentile(x, q) for q in (10, 25, 50, 75, 90)}}
    df = pd.DataFrame.from_dict(rows, orient="index")
    df.index.name = "variable"
    return df


def correlation_frame(store: pd.DataFrame, base: str, others) -> pd.DataFrame:
    rows = {}
    for c in others:
        if c not in store.columns:
            continue
        try:
            r, p = pearson_test(store[base], store[c])
        except (ConstantInput, TooFewPoints):
            continue
        n = int((store[base].notna() & store[c].notna()).sum())
        rows[c] = {"r": r, "p": p, "N": n}
    df = pd.DataFrame.from_dict(rows, orient="index", columns=["r", "p", "N"])
    df.index.name = "measure"
    return df


@dataclass
class Bundle:
    cfg: PipelineConfig
    index: SentimentIndex
    daily: pd.DataFrame
    bucket: pd.DataFrame | None
    tables: dict = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)
    extra_files: dict = field(default_factory=dict)  # name -> text


def analyze(inp: Inputs, cfg: PipelineConfig) -> Bundle:
    notices: list[str] = []
    with stage("index"):
        idx = build_index(inp.posts, inp.calendar, cfg.index_options)
    with stage("metrics"):
        daily = daily_store(idx, inp, notices)
        bucket = bucket_store(idx, inp, notices)
    bundle = Bundle(cfg, idx, daily, bucket, notices=notices)
    want = set(cfg.tables)
    T = bundle.tables
    has_ret = "ret" in daily.columns

    def skip(name, why):
        if name in want:
            notices.append(f"{name} skipped: {why}")

    with stage("tables"):
        if "table1" in want:
            panel_a = idx.gif_day_summary()
            panel_a.index.name = "count"
            T["table1_panelA"] = FrameTable("GIF-day counts", panel_a, {"level": "GIF-day"})
            rep = [gif_autocorrelation_report(idx.gif_days, k) for k in (5, 10, 25)]
            pb = pd.DataFrame(rep).set_index("min_appearance")
            T["table1_panelB"] = FrameTable("Lag-1 autocorrelation of daily GIF valence", pb,
                                            {"statistic": "lag-1 Pearson, daily counts"})
        if "table2" in want:
            cols = [c for c in ("GIF_raw", "POS_raw", "NEG_raw", "SELFDEC_raw", "TEXT_raw", "ret", "ret_1_5",
                                "ret_1_20", "vol_0_4", "vol_0_19", "n_gif_posts", "log_abn_messages", "log_ea",
                                "eff_ds", "bff_ds") if c in daily.columns]
            T["table2"] = FrameTable("Summary statistics", _summary_frame(daily, cols), {"sd": "sample (n-1)"})
        if "table3" in want:
            others = [c for c in ("SELFDEC", "TEXT", "ctl_bw", "ctl_ics", "ctl_media_sentiment", "ctl_epu",
                                  "cloud_cover_ds", "d_covid_index", "ctl_meets_or_beats") if c in daily.columns]
            T["table3"] = FrameTable("Correlation of GIF sentiment with other measures",
                                     correlation_frame(daily, "GIF", others),
                                     {"test": "Pearson, t with n-2 df, two-sided"})
        if has_ret:
            if "table4" in want:
                for flavor in ("GIF", "SELFDEC", "TEXT"):
                    T[f"table4_{flavor}"] = _table(f"Daily returns on {flavor} sentiment",
                                                   _horizon_specs(daily, cfg, flavor), daily, cfg)
            if "table5" in want:
                for flavor in ("POS", "NEG"):
                    T[f"table5_{flavor}"] = _table(f"Daily returns on {flavor} GIF sentiment",
                                                   _horizon_specs(daily, cfg, flavor), daily, cfg)
            if "table8" in want:
                specs = []
                for reg in ("GIF", "abs_GIF"):
                    for dep, L, lab in (("vol_0_4", cfg.block_week, "Vol[t,t+4]"),
                                        ("vol_0_19", cfg.block_month, "Vol[t,t+19]")):
                        specs.append(RegressionSpec(dep, (reg,), _present(daily, ("vol_lag20", "ctl_epu", "ctl_ads")),
                                                    label=f"{lab} {reg}",
                                                    inference=Inference("block_bootstrap", L, cfg.reps, cfg.seed)))
                T["table8"] = _table("Realized volatility on GIF sentiment", specs, daily, cfg)
            if "tableA4" in want:
                specs = []
                for pct in (1, 5, 10):
                    specs += _horizon_specs(daily, cfg, "GIF", label_prefix=f"w{pct}% ", winsorize_pct=pct, nk_reps=0)
                T["tableA4"] = _table("Winsorized returns", specs, daily, cfg)
            if "tableA5" in want:
                specs, store5 = [], daily.copy()
                for pct in (50, 75):
                    alt = build_index(inp.posts, inp.calendar, replace(cfg.index_options, appearance_pct=pct))
                    s = alt.series("GIF")
                    col = f"GIF_app{pct}"
                    store5[col] = pd.Series(_std_or_raw(s, notices, col), index=daily.index).to_numpy()
                    specs += _horizon_specs(store5, cfg, col, label_prefix=f">p{pct} ", nk_reps=0)
                T["tableA5"] = _table("GIFs above an appearance percentile", specs, store5, cfg)
            if "tableA6" in want:
                T["tableA6"] = _table("DFBETA-filtered sample",
                                      _horizon_specs(daily, cfg, "GIF", dfbeta=True, nk_reps=0), daily, cfg)
            if "tableA7" in want:
                n = len(daily)
                cut1 = daily.index[n // 5].strftime("%Y-%m-%d")
                mid = daily.index[n // 2].strftime("%Y-%m-%d")
                specs = (_horizon_specs(daily, cfg, "GIF", label_prefix="drop first 20% ", start=cut1, nk_reps=0)
                         + _horizon_specs(daily, cfg, "GIF", label_prefix="second half ", start=mid, nk_reps=0))
                T["tableA7"] = _table("Trimmed samples", specs, daily, cfg)
        else:
            for name in ("table4", "table5", "table8", "tableA4", "tableA5", "tableA6", "tableA7"):
                skip(name, "no daily market returns")
        if "table6" in want or "table9" in want:
            if bucket is None:
                skip("table6", "no intraday market data")
                skip("table9", "no intraday market data")
            else:
                inf = Inference("block_bootstrap", 1, cfg.reps, cfg.seed)
                if "table6" in want and "ret_b_0_0" in bucket.columns:
                    specs = []
                    for flavor in ("GIF", "SELFDEC", "TEXT"):
                        for dep, L, lab in (("ret_b_0_0", 1, "Ret(b)"), ("ret_b_1_1", 1, "Ret(b+1)"),
                                            ("ret_b_1_2", 2, "Ret[b+1,b+2]")):
                            specs.append(RegressionSpec(dep, (flavor,), _present(bucket, ("ret_b_lag1",)),
                                                        label=f"{lab} {flavor}",
                                                        inference=replace(inf, block_len=L)))
                    T["table6"] = _table("Half-hour returns on half-hour sentiment", specs, bucket, cfg)
                if "table9" in want and "logvol_b_0_0" in bucket.columns:
                    specs = []
                    for reg in ("DISAGREEMENT", "abs_GIF"):
                        for dep, lab in (("logvol_b_0_0", "LogVol(b)"), ("logvol_b_1_1", "LogVol(b+1)")):
                            specs.append(RegressionSpec(dep, (reg,), _present(bucket, ("logvol_b_lag1",)),
                                                        label=f"{lab} {reg}", inference=inf))
                    T["table9"] = _table("Half-hour volume on GIF disagreement", specs, bucket, cfg)
        if "table7" in want:
            if inp.firms is None:
                skip("table7", "no firm panel")
            else:
                chars = firm_characteristics(inp.firms, cfg.factor_set)
                for ch in CHARACTERISTICS:
                    wide = quintile_returns(chars, ch)
                    if wide.empty:
                        notices.append(f"table7 {ch}: no dates with five ranked firms")
                        continue
                    bundle.extra_files[f"quintiles_{ch}.csv"] = quintile_long(wide).assign(
                        date=lambda d: d["date"].dt.strftime("%Y-%m-%d")).to_csv(
                        index=False, lineterminator="\n", float_format="%.10g")
                    store7 = daily.copy()
                    specs = []
                    for q in range(1, 6):
                        store7[f"q{q}"] = wide[q].reindex(daily.index).to_numpy() if q in wide.columns else np.nan
                        specs.append(RegressionSpec(
                            f"q{q}", ("GIF",), _present(daily, ("ctl_epu", "ctl_ads", "ret_lag1")),
                            label=f"Q{q}", inference=Inference("block_bootstrap", cfg.block_day, cfg.reps, cfg.seed)))
                    T[f"table7_{ch}"] = _table(f"Value-weighted {ch} quintile returns on GIF sentiment",
                                               specs, store7, cfg, notes=[f"factor set: {cfg.factor_set}"])
        if "table10" in want:
            if "eff_ds" not in daily.columns and "bff_ds" not in daily.columns:
                skip("table10", "no fund-flow input")
            else:
                specs = []
                for c in ("eff_ds", "bff_ds"):
                    if c not in daily.columns:
                        continue
                    for dep, lab in ((c, f"{c[:3].upper()}(t)"), (c + "_lead1", f"{c[:3].upper()}(t+1)")):
                        specs.append(RegressionSpec(dep, ("GIF",), _present(daily, ("ctl_epu", "ctl_ads", "ret_lag1")),
                                                    label=lab,
                                                    inference=Inference("block_bootstrap", 1, cfg.reps, cfg.seed)))
                T["table10"] = _table("Deseasonalized fund flows on GIF sentiment", specs, daily, cfg,
                                      notes=["flows deseasonalized with day-of-week and month indicators"])
    return bundle


# ---------------------------------------------------------------------------
# writing
# ---------------------------------------------------------------------------


def _series_csv(idx: SentimentIndex, frequency: str, flavors) -> str:
    lines = ["key,flavor,raw,standardized"]
    for f in flavors:
        s = idx.series(f, frequency)
        if not len(s):
            continue
        try:
            std = standardize(s).values
        except (TooFewPoints, ZeroVariance):
            std = np.full(len(s), np.nan)
        for k, v, z in zip(s.keys, s.values, std):
            lines.append(f"{k},{f},{'' if v != v else repr(float(v))},{'' if z != z else repr(float(z))}")
    return "\n".join(lines) + "\n"


def write_bundle(bundle: Bundle, out) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    idx = bundle.index
    (out / "series_daily.csv").write_text(_series_csv(idx, "daily", DAILY_FLAVORS), encoding="utf-8")
    (out / "series_bucket.csv").write_text(_series_csv(idx, "bucket", BUCKET_FLAVORS), encoding="utf-8")
    idx.write_ledger_snapshot(out / "ledger_snapshot.csv")
    for name, text in sorted(bundle.extra_files.items()):
        (out / name).write_text(text, encoding="utf-8")
    for name, table in bundle.tables.items():
        table.write(out, name)
    if bundle.cfg.plots and len(idx.daily):
        counts = pd.Series(idx.daily["n_gif_posts"].to_numpy(float), index=idx.daily.index, name="GIF posts")
        emit_plot([counts], out / "figure_gif_posts.svg",
                  PlotStyle(title="Daily number of GIF posts", ylabel="posts"))
        lines = [idx.series(f).to_series().rename(f) for f in ("GIF", "SELFDEC")]
        if any(s.notna().any() for s in lines):
            emit_plot(lines, out / "figure_gif_sentiment.svg",
                      PlotStyle(title="Daily sentiment (raw)", ylabel="sentiment"))
    report = [f"# giffluence report", "", f"version {__version__}, seed {bundle.cfg.seed}", ""]
    if bundle.notices:
        report += ["## Notices", ""] + [f"- {n}" for n in bundle.notices] + [""]
    for name, table in bundle.tables.items():
        report.append(table.to_markdown())
    (out / "report.md").write_text("\n".join(report), encoding="utf-8")
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "version": __version__,
        "seed": bundle.cfg.seed,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in _portable_cfg(bundle.cfg).items()},
        "notices": bundle.notices,
        "files": {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def _portable_cfg(cfg: PipelineConfig) -> dict:
    """Config with input paths reduced to file names and run-only knobs removed."""
    d = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for k in ("posts", "controls"):
        d[k] = tuple(os.path.basename(p) for p in d[k])
    for k in ("calendar", "schema", "market", "intraday", "flows", "firms"):
        d[k] = os.path.basename(d[k]) if d[k] else None
    d.pop("out")
    d.pop("workers")  # results do not depend on it
    return d


def run_pipeline(cfg: PipelineConfig) -> dict:
    bundle = analyze(load_inputs(cfg), cfg)
    return write_bundle(bundle, cfg.out)

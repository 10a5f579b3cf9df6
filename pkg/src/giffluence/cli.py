"""Command line entry point: ``giffluence <subcommand> [options]``.

Settings come from three layers, highest first: command-line flags, the
flat ``key = value`` file named by ``--config``, and built-in defaults.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .corpus import DEFAULT_SCHEMA, PostSchema, TradingCalendar, read_posts
from .errors import ConfigError, GiffluenceError
from .pipeline import (
    ALL_TABLES,
    BUCKET_FLAVORS,
    DAILY_FLAVORS,
    PipelineConfig,
    _series_csv,
    analyze,
    load_inputs,
    read_config_file,
    stage,
    write_bundle,
)

REGRESSION_TABLES = tuple(t for t in ALL_TABLES if t not in ("table1", "table2", "table3"))
DESCRIPTIVE_TABLES = ("table1", "table2", "table3")

# flag dest -> PipelineConfig field
_CONFIG_FLAGS = {
    "posts": "posts", "calendar": "calendar", "schema": "schema", "market": "market",
    "intraday": "intraday", "controls": "controls", "flows": "flows", "firms": "firms",
    "out": "out", "seed": "seed", "workers": "workers", "min_decl": "min_decl",
    "denominator": "denominator", "window": "window", "appearance_pct": "appearance_pct",
    "require_cashtag": "require_cashtag", "tables": "tables", "reps": "reps", "nk_reps": "nk_reps",
    "block_day": "block_day", "block_week": "block_week", "block_month": "block_month",
    "factor_set": "factor_set", "plots": "plots",
}

# relative paths in a config file are taken relative to the file itself
_PATH_KEYS = ("posts", "calendar", "schema", "market", "intraday", "controls", "flows", "firms")


def _global_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--config", help="flat key = value configuration file")
    g.add_argument("--seed", type=int, help="master random seed (default 0)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")


def _input_flags(p: argparse.ArgumentParser, market: bool = True) -> None:
    p.add_argument("--posts", nargs="+", help="post JSONL files or glob patterns")
    p.add_argument("--calendar", help="trading calendar file (one ISO date per line)")
    p.add_argument("--schema", help="JSON field-name mapping for the post files")
    if market:
        p.add_argument("--market", help="daily market CSV (date,ret_pct)")
        p.add_argument("--intraday", help="half-hour market CSV (key,ret_pct,volume)")
        p.add_argument("--controls", nargs="+", help="daily/monthly control CSVs")
        p.add_argument("--flows", help="daily fund-flow CSV (date,eff,bff)")
        p.add_argument("--firms", help="firm panel CSV (date,firm_id,ret_pct,mktcap,<factors>)")


def _index_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-decl", dest="min_decl", type=int, help="declarations needed for eligibility (5)")
    p.add_argument("--denominator", choices=("eligible", "gif_posts"))
    p.add_argument("--window", choices=("through_t", "through_t_minus_1"))
    p.add_argument("--appearance-pct", dest="appearance_pct", type=int, choices=(50, 75))
    p.add_argument("--include-no-cashtag", dest="require_cashtag", action="store_false", default=None,
                   help="keep posts without cashtags in the index")


def _inference_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--reps", type=int, help="bootstrap replicates (2000)")
    p.add_argument("--nk-reps", dest="nk_reps", type=int, help="randomized p-value replicates (1999, 0 = off)")
    p.add_argument("--block-day", dest="block_day", type=int)
    p.add_argument("--block-week", dest="block_week", type=int)
    p.add_argument("--block-month", dest="block_month", type=int)
    p.add_argument("--factor-set", dest="factor_set", choices=("ff5", "ff3_umd"))
    p.add_argument("--tables", help="comma-separated subset of " + ",".join(ALL_TABLES))
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="giffluence", description="GIF-based investor sentiment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse post files and summarise them")
    _input_flags(p, market=False)
    _global_flags(p)

    p = sub.add_parser("index", help="build sentiment series and the GIF ledger")
    _input_flags(p, market=False)
    _index_flags(p)
    _global_flags(p)

    p = sub.add_parser("regress", help="estimate the regression tables")
    _input_flags(p)
    _index_flags(p)
    _inference_flags(p)
    _global_flags(p)

    p = sub.add_parser("corr", help="descriptive and correlation tables")
    _input_flags(p)
    _index_flags(p)
    _global_flags(p)

    p = sub.add_parser("report", help="run the whole pipeline")
    _input_flags(p)
    _index_flags(p)
    _inference_flags(p)
    _global_flags(p)

    p = sub.add_parser("synth", help="write a synthetic world")
    p.add_argument("--days", type=int, default=1000)
    p.add_argument("--posts-per-day", dest="posts_per_day", type=float, default=2000.0)
    p.add_argument("--gifs", dest="gif_catalog_size", type=int, default=400)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--beta0", type=float, default=0.3)
    p.add_argument("--beta-rev", dest="beta_rev", type=float, default=1.2)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=1.0)
    p.add_argument("--firms", dest="n_firms", type=int, default=40)
    p.add_argument("--confounded", action="store_true")
    _global_flags(p)
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults < config file < explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
        base = Path(args.config).resolve().parent
        for key in _PATH_KEYS:
            if values.get(key):
                parts = [p.strip() for p in values[key].split(",") if p.strip()]
                values[key] = ",".join(str(base / p) for p in parts)
    cfg = PipelineConfig.from_mapping(values)
    flags = {}
    for dest, name in _CONFIG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is None:
            continue
        if name in ("posts", "controls"):
            v = tuple(v)
        elif name == "tables":
            v = tuple(t.strip() for t in v.split(",") if t.strip())
        flags[name] = v
    return replace(cfg, **flags)


def _cmd_ingest(cfg: PipelineConfig) -> dict:
    if not cfg.posts:
        raise ConfigError("--posts is required")
    schema = PostSchema.from_file(cfg.schema) if cfg.schema else DEFAULT_SCHEMA
    with stage("ingest"):
        batch = read_posts(list(cfg.posts), schema, workers=cfg.workers, keep_body=True)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    batch.write_jsonl(out / "posts_clean.jsonl")
    summary = {
        "posts": len(batch),
        "flagged_no_cashtag": int((~batch.market_relevant).sum()),
        "gif_posts": int((batch.n_gifs > 0).sum()),
        "declared_bullish": int((batch.decl > 0).sum()),
        "declared_bearish": int((batch.decl < 0).sum()),
        "distinct_gifs": int(len(np.unique(batch.gif_ids))) if len(batch.gif_ids) else 0,
    }
    if cfg.calendar:
        cal = TradingCalendar.from_file(cfg.calendar)
        with stage("calendar"):
            day, _ = cal.locate(batch.ts_us)
        counts = np.bincount(day, minlength=len(cal))
        summary["posts_per_day"] = {cal.dates[i].isoformat(): int(c) for i, c in enumerate(counts) if c}
    (out / "ingest_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _cmd_index(cfg: PipelineConfig) -> dict:
    if not cfg.posts or not cfg.calendar:
        raise ConfigError("--posts and --calendar are required")
    inp = load_inputs(replace(cfg, market=None, intraday=None, controls=(), flows=None, firms=None))
    bundle = analyze(inp, replace(cfg, tables=("table1",)))
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "series_daily.csv").write_text(_series_csv(bundle.index, "daily", DAILY_FLAVORS), encoding="utf-8")
    (out / "series_bucket.csv").write_text(_series_csv(bundle.index, "bucket", BUCKET_FLAVORS), encoding="utf-8")
    bundle.index.write_ledger_snapshot(out / "ledger_snapshot.csv")
    for name, t in bundle.tables.items():
        t.write(out, name)
    return {"days": len(bundle.index.dates), "gifs": int(bundle.index.gif_days["gif_id"].nunique())}


def _cmd_tables(cfg: PipelineConfig, default_tables) -> dict:
    tables = tuple(t for t in cfg.tables if t in default_tables) or default_tables
    cfg = replace(cfg, tables=tables)
    bundle = analyze(load_inputs(cfg), cfg)
    manifest = write_bundle(bundle, cfg.out)
    for n in bundle.notices:
        print(f"notice: {n}", file=sys.stderr)
    return {"tables": sorted(bundle.tables), "files": len(manifest["files"])}


def _cmd_synth(args, cfg: PipelineConfig) -> dict:
    from .synth import WorldConfig, generate_world, write_world

    wc = WorldConfig(days=args.days, posts_per_day=args.posts_per_day, gif_catalog_size=args.gif_catalog_size,
                     rho=args.rho, beta0=args.beta0, beta_rev=args.beta_rev, noise_sd=args.noise_sd,
                     n_firms=args.n_firms, confounded=args.confounded, seed=cfg.seed)
    world = generate_world(wc)
    paths = write_world(world, cfg.out)
    out = Path(cfg.out)
    lines = [
        f"posts = {Path(paths['posts']).name}",
        f"calendar = {Path(paths['calendar']).name}",
        f"market = {Path(paths['market']).name}",
        f"intraday = {Path(paths['intraday']).name}",
        f"controls = {Path(paths['controls']).name}, {Path(paths['monthly']).name}",
        f"flows = {Path(paths['flows']).name}",
        f"firms = {Path(paths['firms']).name}",
        f"seed = {cfg.seed}",
    ]
    (out / "pipeline.cfg").write_text("# paths are relative to this directory\n" + "\n".join(lines) + "\n",
                                      encoding="utf-8")
    return {"posts": len(world.posts), "days": wc.days, "dir": str(out)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "ingest":
            info = _cmd_ingest(cfg)
        elif args.command == "index":
            info = _cmd_index(cfg)
        elif args.command == "regress":
            info = _cmd_tables(cfg, REGRESSION_TABLES)
        elif args.command == "corr":
            info = _cmd_tables(cfg, DESCRIPTIVE_TABLES)
        elif args.command == "report":
            info = _cmd_tables(cfg, ALL_TABLES)
        else:
            info = _cmd_synth(args, cfg)
    except GiffluenceError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error [IO]: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(info, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Minimal deterministic SVG line charts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from html import escape
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import EmptySeries

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class PlotStyle:
    width: int = 900
    height: int = 420
    margin_left: int = 70
    margin_right: int = 20
    margin_top: int = 40
    margin_bottom: int = 60
    x_ticks: int = 6
    y_ticks: int = 5
    stroke_width: float = 1.2
    title: str = ""
    ylabel: str = ""


def _nice_ticks(lo: float, hi: float, n: int) -> list[float]:
    span = hi - lo
    raw = span / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _as_series(s) -> pd.Series:
    if isinstance(s, pd.Series):
        return s
    return s.to_series()


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_svg(series: Sequence, style: PlotStyle = PlotStyle()) -> str:
    """SVG text for one or more keyed series sharing an x axis.

    Keys are sorted lexically (ISO dates sort chronologically); missing
    values break the line.
    """
    items = [_as_series(s) for s in series]
    if not items or all(len(s.dropna()) == 0 for s in items):
        raise EmptySeries("nothing to plot")
    keys = sorted(set().union(*[map(str, s.index) for s in items]))
    pos = {k: i for i, k in enumerate(keys)}
    vals = np.concatenate([s.to_numpy(float) for s in items])
    vals = vals[~np.isnan(vals)]
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        pad = abs(lo) * 0.5 or 1.0
        lo, hi = lo - pad, hi + pad
    else:
        pad = (hi - lo) * 0.05
        lo, hi = lo - pad, hi + pad

    W, H = style.width, style.height
    x0, x1 = style.margin_left, W - style.margin_right
    y0, y1 = H - style.margin_bottom, style.margin_top
    nx = max(len(keys) - 1, 1)

    def px(i):
        return x0 + (x1 - x0) * i / nx

    def py(v):
        return y0 - (y0 - y1) * (v - lo) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
    ]
    if style.title:
        out.append(f'<text x="{W / 2:.1f}" y="{style.margin_top / 2 + 5:.1f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="15">{escape(style.title)}</text>')
    # axes
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for v in _nice_ticks(lo, hi, style.y_ticks):
        y = py(v)
        out.append(f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" stroke="#dddddd"/>')
        out.append(f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{v:g}</text>')
    nt = min(style.x_ticks, len(keys))
    tick_idx = sorted({round(i * (len(keys) - 1) / max(nt - 1, 1)) for i in range(nt)})
    for i in tick_idx:
        x = px(i)
        out.append(f'<line x1="{_fmt(x)}" y1="{y0}" x2="{_fmt(x)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(x)}" y="{y0 + 20}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{escape(keys[i][:10])}</text>')
    if style.ylabel:
        out.append(f'<text x="15" y="{(y0 + y1) / 2:.1f}" transform="rotate(-90 15 {(y0 + y1) / 2:.1f})" '
                   f'text-anchor="middle" font-family="sans-serif" font-size="12">{escape(style.ylabel)}</text>')
    # lines
    for j, s in enumerate(items):
        color = PALETTE[j % len(PALETTE)]
        segs, cur = [], []
        for k, v in zip(map(str, s.index), s.to_numpy(float)):
            if v != v:
                if cur:
                    segs.append(cur)
                cur = []
                continue
            cur.append((px(pos[k]), py(v)))
        if cur:
            segs.append(cur)
        for seg in segs:
            if len(seg) == 1:
                (x, y), = seg
                out.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="1.5" fill="{color}"/>')
                continue
            d = "M" + " L".join(f"{_fmt(x)} {_fmt(y)}" for x, y in seg)
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{style.stroke_width}"/>')
    # legend, in input order
    for j, s in enumerate(items):
        color = PALETTE[j % len(PALETTE)]
        ly = y1 + 14 * j + 6
        lx = x1 - 150
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}" font-family="sans-serif" font-size="11" '
                   f'class="legend">{escape(str(s.name) if s.name is not None else f"series {j + 1}")}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series: Sequence, path, style: PlotStyle = PlotStyle()) -> str:
    svg = render_svg(series, style)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    return svg

"""Regression specifications, estimation and table rendering.

A *store* is a DataFrame whose columns are series ids, all aligned on one
index (trading dates or bucket keys).  A :class:`RegressionSpec` names the
dependent column, the regressors and controls, sample filters and the
inference method; :func:`estimate` turns it into a :class:`RegressionResult`
and :func:`run_table` lays several results side by side.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import UnknownSeries
from .bootstrap import DEFAULT_REPS as BOOT_REPS
from .bootstrap import block_bootstrap_se
from .diagnostics import dfbeta_filter, winsorize
from .ols import complete_rows, ols_fit
from .randomized import nelson_kim_pvalue

STAR_LEVELS = (0.01, 0.05, 0.1)
METHODS = ("classical", "block_bootstrap", "nelson_kim")


@dataclass(frozen=True)
class Inference:
    method: str = "classical"
    block_len: int = 1
    reps: int = BOOT_REPS
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"inference method must be one of {METHODS}")
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")
        if self.method != "classical" and self.reps < 100:
            raise ValueError("reps must be >= 100")


@dataclass(frozen=True)
class RegressionSpec:
    """One column of a results table.

    ``regressors[0]`` is the focal regressor used by DFBETA filtering and
    randomized p-values.  ``winsorize_pct`` clamps the dependent variable;
    ``dfbeta`` enables influence filtering (``True`` for 2/sqrt(n) or a
    number for a custom threshold); ``start``/``end`` bound the index.
    """

    dependent: str
    regressors: tuple[str, ...]
    controls: tuple[str, ...] = ()
    label: str = ""
    inference: Inference = Inference()
    nk_reps: int = 0  # > 0 adds a randomized p-value for the focal regressor
    winsorize_pct: float | None = None
    dfbeta: bool | float = False
    start: str | None = None
    end: str | None = None

    def __post_init__(self):
        if not self.regressors:
            raise ValueError("a spec needs at least one regressor")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.dependent, *self.regressors, *self.controls)


@dataclass(frozen=True, eq=False)
class RegressionResult:
    label: str
    dependent: str
    names: tuple[str, ...]  # includes "const" first
    coef: np.ndarray
    se: np.ndarray
    p: np.ndarray
    n: int
    r2: float
    adj_r2: float
    method: str
    block_len: int | None
    reps: int | None
    seed: int | None
    dropped_missing: int
    excluded: tuple[tuple[str, str], ...]  # (row key, reason)
    nk_p: float | None = None
    nk_fallback: bool = False
    nk_reps: int | None = None
    redraws: int = 0

    def term(self, name: str) -> tuple[float, float, float]:
        i = self.names.index(name)
        return float(self.coef[i]), float(self.se[i]), float(self.p[i])

    def metadata(self) -> dict:
        return {
            "label": self.label,
            "dependent": self.dependent,
            "method": self.method,
            "block_len": self.block_len,
            "reps": self.reps,
            "seed": self.seed,
            "n": self.n,
            "dropped_missing": self.dropped_missing,
            "excluded": [list(e) for e in self.excluded],
            "nelson_kim_p": self.nk_p,
            "nelson_kim_reps": self.nk_reps,
            "nelson_kim_ar_fallback": self.nk_fallback,
            "bootstrap_redraws": self.redraws,
            "resampling": "pairs, overlapping blocks" if self.method == "block_bootstrap" else None,
            "pvalue": "normal approximation, two-sided" if self.method == "block_bootstrap"
            else "t distribution, two-sided",
        }


def _resolve(store: pd.DataFrame, ids) -> None:
    for c in ids:
        if c not in store.columns:
            raise UnknownSeries(f"unknown series id {c!r}", id=c)


def estimate(spec: RegressionSpec, store: pd.DataFrame) -> RegressionResult:
    _resolve(store, spec.columns)
    frame = store.loc[spec.start:spec.end, list(dict.fromkeys(spec.columns))]
    keys = np.asarray([str(k.date()) if isinstance(k, pd.Timestamp) else str(k) for k in frame.index])
    y = frame[spec.dependent].to_numpy(float)
    xnames = (*spec.regressors, *spec.controls)
    X = np.column_stack([np.ones(len(frame))] + [frame[c].to_numpy(float) for c in xnames])
    ok = complete_rows(y, X)
    dropped = int((~ok).sum())
    y, X, keys = y[ok], X[ok], keys[ok]
    if spec.winsorize_pct:
        y = winsorize(y, spec.winsorize_pct)
    excluded: list[tuple[str, str]] = []
    if spec.dfbeta is not False:
        thr = None if spec.dfbeta is True else float(spec.dfbeta)
        flt = dfbeta_filter(y, X, 1, thr)
        excluded = [(keys[i], f"|DFBETA| > {flt.threshold:.6g}") for i in flt.excluded]
        y, X, keys = y[flt.keep], X[flt.keep], keys[flt.keep]
    fit = ols_fit(y, X, ("const", *xnames), intercept=False)
    inf = spec.inference
    se, p = fit.bse, fit.pvalues
    block_len = reps = seed = None
    redraws = 0
    if inf.method == "block_bootstrap":
        bs = block_bootstrap_se(y, X, inf.block_len, inf.reps, inf.seed, fit=fit)
        se, p = bs.se, bs.pvalues
        block_len, reps, seed, redraws = inf.block_len, inf.reps, inf.seed, bs.redraws
    nk_p, nk_fb, nreps = None, False, None
    if inf.method == "nelson_kim" or spec.nk_reps:
        nreps = spec.nk_reps or inf.reps
        nk = nelson_kim_pvalue(y, X, 1, nreps, inf.seed)
        nk_p, nk_fb = nk.pvalue, nk.ar_fallback
        seed = inf.seed
        if inf.method == "nelson_kim":
            p = p.copy()
            p[1] = nk.pvalue
            reps = nreps
    return RegressionResult(
        label=spec.label or spec.dependent, dependent=spec.dependent, names=fit.names,
        coef=fit.params, se=se, p=p, n=fit.n, r2=fit.r2, adj_r2=fit.adj_r2, method=inf.method,
        block_len=block_len, reps=reps, seed=seed, dropped_missing=dropped,
        excluded=tuple(excluded), nk_p=nk_p, nk_fallback=nk_fb, nk_reps=nreps, redraws=redraws,
    )


def stars(p: float) -> str:
    if p != p:
        return ""
    return "*" * sum(p < lvl for lvl in STAR_LEVELS)


def _num(x: float, digits: int) -> str:
    return "" if x != x else f"{x:.{digits}f}"


@dataclass
class Table:
    """Rendered results: coefficient (with stars) over (SE), then N and adjusted R^2."""

    title: str
    results: list[RegressionResult] = field(default_factory=list)
    digits: int = 3
    notes: list[str] = field(default_factory=list)

    def cells(self) -> pd.DataFrame:
        if not self.results:
            return pd.DataFrame()
        terms: list[str] = []
        for r in self.results:
            for nm in r.names[1:]:
                if nm not in terms:
                    terms.append(nm)
        terms.append("const")
        labels = [r.label for r in self.results]
        if len(set(labels)) < len(labels):
            labels = [f"({i + 1}) {lb}" for i, lb in enumerate(labels)]
        rows, index = [], []
        for t in terms:
            top, bottom = [], []
            for r in self.results:
                if t in r.names:
                    c, s, p = r.term(t)
                    top.append(_num(c, self.digits) + stars(p))
                    bottom.append(f"({_num(s, self.digits)})")
                else:
                    top.append("")
                    bottom.append("")
            rows += [top, bottom]
            index += [t, ""]
        if any(r.nk_p is not None for r in self.results):
            rows.append(["" if r.nk_p is None else f"[{r.nk_p:.3f}]" for r in self.results])
            index.append("randomized p")
        rows.append([str(r.n) for r in self.results])
        index.append("N")
        rows.append([_num(r.adj_r2, self.digits) for r in self.results])
        index.append("Adj. R2")
        return pd.DataFrame(rows, index=pd.Index(index, name="term"), columns=labels)

    def to_csv(self, path) -> None:
        self.cells().to_csv(path, lineterminator="\n")

    def to_markdown(self) -> str:
        df = self.cells()
        lines = [f"### {self.title}", ""]
        if df.empty:
            lines.append("(no specifications)")
        else:
            head = ["term", *df.columns]
            body = [[str(i), *map(str, row)] for i, row in zip(df.index, df.to_numpy())]
            widths = [max(len(r[j]) for r in [head, *body]) for j in range(len(head))]
            fmt = lambda r: "| " + " | ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                              for j, (c, w) in enumerate(zip(r, widths))) + " |"
            lines.append(fmt(head))
            lines.append("|" + "|".join(("-" * (w + 1) + ":") if j else ("-" * (w + 2))
                                        for j, w in enumerate(widths)) + "|")
            lines += [fmt(r) for r in body]
        lines.append("")
        lines.append("Stars: * p<0.10, ** p<0.05, *** p<0.01. Standard errors in parentheses.")
        lines += self.notes
        return "\n".join(lines) + "\n"

    def metadata(self) -> dict:
        return {"title": self.title, "notes": list(self.notes),
                "columns": [r.metadata() for r in self.results]}

    def write(self, directory, stem: str) -> None:
        from pathlib import Path
        d = Path(directory)
        self.to_csv(d / f"{stem}.csv")
        (d / f"{stem}.md").write_text(self.to_markdown(), encoding="utf-8")
        (d / f"{stem}.meta.json").write_text(
            json.dumps(self.metadata(), indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def _estimate_job(args):
    spec, store = args
    return estimate(spec, store)


def run_table(specs, store: pd.DataFrame, title: str = "", *, workers: int = 1) -> Table:
    """Estimate every spec and collect them as one table (empty list gives an empty table)."""
    specs = list(specs)
    for s in specs:
        _resolve(store, s.columns)
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_estimate_job, [(s, store) for s in specs]))
    else:
        results = [estimate(s, store) for s in specs]
    return Table(title, results)

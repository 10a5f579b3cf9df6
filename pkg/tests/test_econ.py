from __future__ import annotations

import json
import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from giffluence.econ import (
    Inference,
    RegressionSpec,
    Table,
    block_bootstrap_se,
    dfbeta,
    dfbeta_filter,
    estimate,
    nelson_kim_pvalue,
    ols_fit,
    pearson_test,
    run_table,
    stars,
    vif,
    winsor_bounds,
    winsorize,
)
from giffluence.econ.bootstrap import block_indices
from giffluence.econ.randomized import fit_ar1
from giffluence.errors import ConstantInput, RankDeficient, TooFewPoints, TooFewRows, TooShort, UnknownSeries


def normal_equations(y, X):
    """Textbook oracle: beta = (X'X)^-1 X'y, se from s^2 (X'X)^-1."""
    xtx = X.T @ X
    beta = np.linalg.solve(xtx, X.T @ y)
    e = y - X @ beta
    s2 = e @ e / (len(y) - X.shape[1])
    return beta, np.sqrt(np.diag(s2 * np.linalg.inv(xtx)))


def leave_one_out(y, X, focal):
    """Brute-force (b - b_(-i)) / SE(b) with n refits."""
    beta, se = normal_equations(y, X)
    out = np.empty(len(y))
    for i in range(len(y)):
        m = np.arange(len(y)) != i
        b_i = np.linalg.lstsq(X[m], y[m], rcond=None)[0]
        out[i] = (beta[focal] - b_i[focal]) / se[focal]
    return out


class TestOLS:
    def test_exact_line(self):
        x = np.arange(10.0)
        f = ols_fit(2 * x + 1, x)
        np.testing.assert_allclose(f.params, [1.0, 2.0], atol=1e-12)
        np.testing.assert_allclose(f.resid, 0.0, atol=1e-12)
        assert f.r2 == pytest.approx(1.0)

    def test_constant_y(self, rng):
        f = ols_fit(np.full(20, 3.5), rng.normal(size=20))
        assert f.params[1] == pytest.approx(0.0, abs=1e-12)
        assert f.params[0] == pytest.approx(3.5, abs=1e-12)

    def test_duplicate_column(self, rng):
        x = rng.normal(size=30)
        with pytest.raises(RankDeficient):
            ols_fit(rng.normal(size=30), np.column_stack([x, x]))

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            ols_fit([1.0, 2.0], [0.0, 1.0])

    def test_listwise_deletion(self, rng):
        x = rng.normal(size=40)
        y = x + rng.normal(size=40)
        y[3] = np.nan
        x[7] = np.nan
        f = ols_fit(y, x)
        assert f.n == 38 and 3 not in f.rows and 7 not in f.rows

    @given(seed=st.integers(0, 10**6), n=st.integers(8, 80), k=st.integers(1, 5))
    @settings(max_examples=60, deadline=None)
    def test_matches_oracle(self, seed, n, k):
        r = np.random.default_rng(seed)
        X = r.normal(size=(n, k)) * r.uniform(0.1, 100, size=k)
        y = X @ r.normal(size=k) + r.normal(size=n)
        if n <= k + 1:
            return
        f = ols_fit(y, X)
        b, se = normal_equations(y, np.column_stack([np.ones(n), X]))
        np.testing.assert_allclose(f.params, b, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(f.bse, se, rtol=1e-8)
        assert f.adj_r2 <= f.r2 + 1e-15


class TestBootstrap:
    def test_block_indices_shape(self, rng):
        idx = block_indices(rng, 23, 5)
        assert len(idx) == 23
        starts = idx[::5]
        for s, blk in zip(starts, np.split(idx, range(5, 23, 5))):
            np.testing.assert_array_equal(blk, s + np.arange(len(blk)))
        assert idx.max() < 23

    def test_exact_fit_zero_se(self, rng):
        x = rng.normal(size=60)
        X = np.column_stack([np.ones(60), x])
        y = 0.5 + 3 * x
        res = block_bootstrap_se(y, X, 5, 200, seed=1)
        assert np.all(res.se == 0.0)
        b = ols_fit(y, X, intercept=False).params
        np.testing.assert_allclose(res.draws, np.broadcast_to(b, res.draws.shape), atol=1e-12)

    def test_too_short(self, rng):
        with pytest.raises(TooShort):
            block_bootstrap_se(rng.normal(size=9), np.ones((9, 1)), 5, 100)

    def test_bad_arguments(self, rng):
        with pytest.raises(ValueError):
            block_bootstrap_se(rng.normal(size=50), np.ones((50, 1)), 1, 50)
        with pytest.raises(ValueError):
            Inference("block_bootstrap", block_len=0)

    def test_close_to_classical(self, rng):
        n = 500
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = X @ [0.2, 0.5] + rng.normal(size=n)
        res = block_bootstrap_se(y, X, 1, 2000, seed=3)
        classical = ols_fit(y, X, intercept=False).bse
        assert np.all(np.abs(res.se / classical - 1) < 0.15)

    def test_seed_determinism_and_chunking(self, rng):
        n = 120
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n)
        a = block_bootstrap_se(y, X, 5, 230, seed=9)
        b = block_bootstrap_se(y, X, 5, 230, seed=9, workers=2)
        c = block_bootstrap_se(y, X, 5, 230, seed=10)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert not np.array_equal(a.draws, c.draws)
        # replicate r is the same whatever the total count
        d = block_bootstrap_se(y, X, 5, 120, seed=9)
        np.testing.assert_array_equal(a.draws[:120], d.draws)

    def test_replicate_equals_refit(self, rng):
        n = 40
        X = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = X @ [1.0, -0.5] + rng.normal(size=n)
        res = block_bootstrap_se(y, X, 4, 100, seed=2)
        g = np.random.default_rng(np.random.SeedSequence([2, 0]))
        idx = block_indices(g, n, 4)
        refit = np.linalg.lstsq(X[idx], y[idx], rcond=None)[0]
        np.testing.assert_allclose(res.draws[0], refit, atol=1e-10)

    def test_degenerate_replicates_redrawn(self):
        # a dummy that is 1 on a single row makes many replicates singular
        n = 40
        X = np.column_stack([np.ones(n), np.arange(n) / n, (np.arange(n) == 5).astype(float)])
        y = np.sin(np.arange(n))
        res = block_bootstrap_se(y, X, 1, 100, seed=0)
        assert res.redraws > 0
        assert np.all(np.isfinite(res.se))


class TestNelsonKim:
    def ar1(self, rng, n, rho, burn=100):
        x = np.zeros(n + burn)
        u = rng.normal(size=n + burn)
        for t in range(1, n + burn):
            x[t] = rho * x[t - 1] + u[t]
        return x[burn:]

    def test_extreme_rank_bound(self, rng):
        n = 200
        x = self.ar1(rng, n, 0.5)
        y = np.r_[0.0, 5 * x[:-1]] + 0.1 * rng.normal(size=n)  # x_t strongly predicts y
        X = np.column_stack([np.ones(n), x])
        y_next = np.r_[y[1:], np.nan]
        res = nelson_kim_pvalue(y_next, X, 1, reps=199, seed=1)
        assert res.pvalue == pytest.approx(1 / 200)

    def test_median_gives_p_near_one(self, rng):
        n = 150
        x = self.ar1(rng, n, 0.3)
        X = np.column_stack([np.ones(n), x])
        y = rng.normal(size=n)
        base = nelson_kim_pvalue(y, X, 1, reps=499, seed=4)
        # shift y along x so the observed slope lands on the null median
        y2 = y + (float(np.median(base.null_draws)) - base.observed) * x
        res = nelson_kim_pvalue(y2, X, 1, reps=499, seed=4)
        assert res.pvalue > 0.95

    def test_too_few(self, rng):
        with pytest.raises(TooFewPoints):
            nelson_kim_pvalue(rng.normal(size=15), np.column_stack([np.ones(15), rng.normal(size=15)]), 1, 100)

    def test_unit_root_falls_back(self, rng):
        n = 60
        x = np.cumsum(np.abs(rng.normal(size=n)) + 1)  # trending, fitted slope above one
        X = np.column_stack([np.ones(n), x])
        res = nelson_kim_pvalue(rng.normal(size=n), X, 1, reps=199, seed=0)
        assert res.ar_fallback and 0 < res.pvalue <= 1

    def test_deterministic(self, rng):
        n = 80
        X = np.column_stack([np.ones(n), self.ar1(rng, n, 0.8), rng.normal(size=n)])
        y = rng.normal(size=n)
        a = nelson_kim_pvalue(y, X, 1, reps=199, seed=7)
        b = nelson_kim_pvalue(y, X, 1, reps=199, seed=7)
        np.testing.assert_array_equal(a.null_draws, b.null_draws)

    def test_fit_ar1(self, rng):
        x = self.ar1(rng, 5000, 0.9)
        c, rho, u = fit_ar1(x)
        assert rho == pytest.approx(0.9, abs=0.02)
        assert len(u) == 4999


class TestPearson:
    def test_identity(self, rng):
        x = rng.normal(size=20)
        assert pearson_test(x, x) == (1.0, 0.0)
        assert pearson_test(x, -x)[0] == -1.0

    def test_matches_scipy(self, rng):
        x, y = rng.normal(size=50), rng.normal(size=50)
        r, p = pearson_test(x, y)
        ref = stats.pearsonr(x, y)
        assert r == pytest.approx(ref[0], abs=1e-12) and p == pytest.approx(ref[1], abs=1e-10)

    def test_constant(self, rng):
        with pytest.raises(ConstantInput):
            pearson_test(np.ones(10), rng.normal(size=10))

    def test_too_few(self):
        with pytest.raises(TooFewPoints):
            pearson_test([1.0, 2.0, np.nan], [1.0, 3.0, 2.0])

    def test_independent_small(self):
        small = 0
        for s in range(200):
            r = np.random.default_rng(s)
            small += abs(pearson_test(r.normal(size=1000), r.normal(size=1000))[0]) < 0.1
        assert small / 200 >= 0.99


class TestVif:
    def test_orthogonal(self):
        a = np.array([1.0, -1, 1, -1, 1, -1, 1, -1])
        b = np.array([1.0, 1, -1, -1, 1, 1, -1, -1])
        np.testing.assert_allclose(vif(np.column_stack([a, b])), [1.0, 1.0], atol=1e-12)

    def test_rho_point_six(self):
        a = np.array([1.0, -1, 1, -1, 1, -1, 1, -1])
        b = np.array([1.0, 1, -1, -1, 1, 1, -1, -1])
        c = 0.6 * a + 0.8 * b  # unit-variance mix with corr(a, c) = 0.6
        np.testing.assert_allclose(vif(np.column_stack([a, c])), 1.5625, atol=1e-9)

    def test_near_duplicate(self, rng):
        x = rng.normal(size=100)
        with pytest.raises(RankDeficient):
            vif(np.column_stack([x, x + 1e-13 * rng.normal(size=100)]))


class TestWinsorize:
    def test_hundred_at_five(self):
        s = np.arange(1.0, 101.0)
        srt = sorted(s)
        lo = srt[math.ceil(0.05 * 100) - 1]
        hi = srt[math.ceil(0.95 * 100) - 1]
        assert (lo, hi) == (5.0, 95.0)
        np.testing.assert_array_equal(winsorize(s, 5), np.clip(s, lo, hi))

    def test_inside_band_unchanged(self):
        s = np.r_[np.zeros(10), np.ones(80), np.zeros(10)]
        np.testing.assert_array_equal(winsorize(s, 5), s)

    @given(xs=st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=200),
           pct=st.sampled_from([1, 5, 10, 2.5, 25]))
    @settings(max_examples=200, deadline=None)
    def test_idempotent_oracle_order(self, xs, pct):
        a = np.array(xs)
        w = winsorize(a, pct)
        np.testing.assert_array_equal(winsorize(w, pct), w)
        srt = sorted(xs)
        n = len(srt)
        lo = srt[max(1, math.ceil(n * pct / 100 - 1e-9)) - 1]
        hi = srt[max(1, math.ceil(n * (100 - pct) / 100 - 1e-9)) - 1]
        np.testing.assert_array_equal(w, [min(max(x, lo), hi) for x in xs])
        order = np.argsort(a, kind="stable")
        assert np.all(np.diff(w[order]) >= 0)

    def test_nan_and_series(self):
        s = pd.Series([1.0, np.nan, 3.0, 100.0], index=list("abcd"), name="r")
        w = winsorize(s, 25)
        assert isinstance(w, pd.Series) and w.name == "r" and np.isnan(w["b"])
        assert winsor_bounds(s, 25) == (1.0, 100.0)

    def test_pct_range(self):
        with pytest.raises(ValueError):
            winsorize(np.arange(5.0), 50)


class TestDfbeta:
    @given(seed=st.integers(0, 10**6), n=st.integers(10, 200))
    @settings(max_examples=30, deadline=None)
    def test_matches_leave_one_out(self, seed, n):
        r = np.random.default_rng(seed)
        X = np.column_stack([np.ones(n), r.normal(size=n), r.normal(size=n)])
        y = X @ [0.3, 1.0, -0.5] + r.standard_t(3, size=n)
        np.testing.assert_allclose(dfbeta(y, X, 1), leave_one_out(y, X, 1), rtol=1e-8, atol=1e-8)

    def test_outlier_excluded(self):
        n = 40
        x = np.tile([-1.0, 1.0], n // 2)
        X = np.column_stack([np.ones(n), x])
        y = 0.5 * x + 0.01 * np.sin(np.arange(n))
        y[10] += 25.0
        res = dfbeta_filter(y, X, 1)
        assert 10 in res.excluded
        oracle = np.abs(leave_one_out(y, X, 1)) > 2 / math.sqrt(n)
        np.testing.assert_array_equal(np.flatnonzero(oracle), res.excluded)

    def test_exact_line_no_exclusions(self):
        x = np.arange(20.0)
        res = dfbeta_filter(1 + 2 * x, np.column_stack([np.ones(20), x]), 1)
        assert res.n_excluded == 0
        np.testing.assert_array_equal(res.dfbeta, 0.0)

    def test_infinite_threshold(self, rng):
        X = np.column_stack([np.ones(30), rng.normal(size=30)])
        assert dfbeta_filter(rng.normal(size=30), X, 1, threshold=np.inf).n_excluded == 0

    def test_rank_deficient_after(self):
        # the only row where the dummy is on is pivotal, so dropping it kills the column
        n = 30
        d = np.zeros(n)
        d[0] = 1.0
        X = np.column_stack([np.ones(n), d])
        y = np.arange(n, dtype=float)
        with pytest.raises(RankDeficient):
            dfbeta_filter(y, X, 1)


class TestScaleInvariance:
    @given(seed=st.integers(0, 10**6), c=st.floats(1e-3, 1e3))
    @settings(max_examples=40, deadline=None)
    def test_rescaled_regressor(self, seed, c):
        r = np.random.default_rng(seed)
        n = 80
        x, z = r.normal(size=n), r.normal(size=n)
        y = 0.4 * x + 0.2 * z + r.normal(size=n)
        a = ols_fit(y, np.column_stack([x, z]))
        b = ols_fit(y, np.column_stack([c * x, z]))
        assert b.params[1] == pytest.approx(a.params[1] / c, rel=1e-9)
        assert b.tvalues[1] == pytest.approx(a.tvalues[1], rel=1e-10, abs=1e-10)
        assert b.pvalues[1] == pytest.approx(a.pvalues[1], rel=1e-10, abs=1e-10)
        assert b.r2 == pytest.approx(a.r2, abs=1e-10)
        Xa = np.column_stack([np.ones(n), x, z])
        Xb = np.column_stack([np.ones(n), c * x, z])
        np.testing.assert_array_equal(dfbeta_filter(y, Xa, 1).excluded, dfbeta_filter(y, Xb, 1).excluded)
        ba = block_bootstrap_se(y, Xa, 5, 100, seed=seed)
        bb = block_bootstrap_se(y, Xb, 5, 100, seed=seed)
        assert bb.pvalues[1] == pytest.approx(ba.pvalues[1], rel=1e-8, abs=1e-10)


@pytest.fixture
def store(rng) -> pd.DataFrame:
    n = 300
    idx = pd.bdate_range("2020-01-01", periods=n)
    s = rng.normal(size=n)
    ctl = rng.normal(size=n)
    ret = 0.5 * s + 0.1 * ctl + rng.normal(size=n)
    df = pd.DataFrame({"ret": ret, "S": s, "ctl": ctl, "noise": rng.normal(size=n)}, index=idx)
    df.iloc[5, 0] = np.nan
    return df


class TestTables:
    def test_estimate_classical(self, store):
        res = estimate(RegressionSpec("ret", ("S",), ("ctl",)), store)
        f = ols_fit(store["ret"], store[["S", "ctl"]])
        np.testing.assert_allclose(res.coef, f.params, atol=1e-12)
        assert res.n == 299 and res.dropped_missing == 1
        assert res.names == ("const", "S", "ctl")

    def test_estimate_bootstrap_metadata(self, store):
        spec = RegressionSpec("ret", ("S",), inference=Inference("block_bootstrap", 5, 200, 11), nk_reps=199)
        res = estimate(spec, store)
        meta = res.metadata()
        assert meta["method"] == "block_bootstrap" and meta["block_len"] == 5 and meta["seed"] == 11
        assert meta["reps"] == 200 and meta["nelson_kim_reps"] == 199 and 0 < res.nk_p <= 1
        again = estimate(spec, store)
        np.testing.assert_array_equal(res.se, again.se)

    def test_filters(self, store):
        spec = RegressionSpec("ret", ("S",), winsorize_pct=5, dfbeta=True, start="2020-03-01")
        res = estimate(spec, store)
        assert all(reason.startswith("|DFBETA|") for _, reason in res.excluded)
        assert res.n + len(res.excluded) == store.loc["2020-03-01":, "ret"].notna().sum()

    def test_unknown_series(self, store):
        with pytest.raises(UnknownSeries, match="missing_col"):
            run_table([RegressionSpec("ret", ("missing_col",))], store)

    def test_empty_table(self, store, tmp_path):
        t = run_table([], store, "nothing")
        assert t.cells().empty
        t.write(tmp_path, "t")
        assert "(no specifications)" in (tmp_path / "t.md").read_text()

    @pytest.mark.parametrize("p,s", [(0.2, ""), (0.1, ""), (0.099, "*"), (0.04, "**"), (0.001, "***"),
                                     (float("nan"), "")])
    def test_stars(self, p, s):
        assert stars(p) == s

    def test_layout_and_files(self, store, tmp_path):
        specs = [RegressionSpec("ret", ("S",), ("ctl",), label="day"),
                 RegressionSpec("ret", ("noise",), label="placebo")]
        t = run_table(specs, store, "Demo")
        cells = t.cells()
        assert list(cells.columns) == ["day", "placebo"]
        assert list(cells.index) == ["S", "", "ctl", "", "noise", "", "const", "", "N", "Adj. R2"]
        assert cells.loc["N", "day"] == "299"
        assert cells.iloc[0, 0].endswith("***")
        t.write(tmp_path, "demo")
        meta = json.loads((tmp_path / "demo.meta.json").read_text())
        assert [c["label"] for c in meta["columns"]] == ["day", "placebo"]
        assert (tmp_path / "demo.csv").read_text().startswith("term,day,placebo")
        assert isinstance(t, Table)

    def test_workers_identical(self, store):
        specs = [RegressionSpec("ret", ("S",), inference=Inference("block_bootstrap", 5, 100, 0)),
                 RegressionSpec("ret", ("noise",), inference=Inference("block_bootstrap", 5, 100, 0))]
        a = run_table(specs, store, workers=1)
        b = run_table(specs, store, workers=2)
        assert a.to_markdown() == b.to_markdown()

from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from giffluence.corpus import PostBatch, read_posts
from giffluence.errors import ConfigError
from giffluence.index import build_index
from giffluence.synth import (
    REVERSAL_DAYS,
    WorldConfig,
    expected_signs,
    generate_world,
    population_coefficients,
    write_world,
)

SMALL = dict(days=120, posts_per_day=80, gif_catalog_size=40, n_firms=6)


def batch_arrays(b: PostBatch):
    return (b.post_id, b.ts_us, b.user_id, b.decl, b.text_score, b.cashtag_ptr, b.cashtags, b.gif_ptr, b.gif_ids)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(rho=1.0), dict(rho=-0.1), dict(posts_per_day=0.5),
                                    dict(beta0=float("nan")), dict(decl_slope=0.0), dict(gif_share=1.5)])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            WorldConfig(**kw)

    def test_unit_stationary_variance(self):
        cfg = WorldConfig(rho=0.8)
        assert cfg.innovation() ** 2 / (1 - cfg.rho ** 2) == pytest.approx(1.0)


class TestExpectedSigns:
    @pytest.mark.parametrize("b0,brev,expect", [(0.3, 1.2, (1, -1, -1)), (0.0, 0.0, (0, 0, 0)),
                                                (0.3, 0.0, (1, 0, 0)), (-0.2, -1.0, (-1, 1, 1))])
    def test_examples(self, b0, brev, expect):
        assert expected_signs(WorldConfig(beta0=b0, beta_rev=brev)) == expect

    def test_population_matches_simulation(self):
        # long simulated path: slope of summed forward returns on S_t
        cfg = WorldConfig(days=60000, posts_per_day=1, gif_catalog_size=1, n_firms=5, noise_sd=0.0, seed=3)
        w = generate_world(cfg)
        S = w.latent.to_numpy()
        r = w.market.daily["ret_pct"].to_numpy()
        got = []
        for m, n in ((0, 0), (1, 5), (1, 20)):
            fwd = np.array([r[t + m:t + n + 1].sum() for t in range(REVERSAL_DAYS, len(r) - n)])
            x = S[REVERSAL_DAYS:len(r) - n]
            got.append(np.polyfit(x, fwd, 1)[0])
        np.testing.assert_allclose(got, population_coefficients(cfg), atol=0.03)


class TestGenerateWorld:
    def test_deterministic(self):
        a = generate_world(WorldConfig(**SMALL, seed=11))
        b = generate_world(WorldConfig(**SMALL, seed=11))
        for x, y in zip(batch_arrays(a.posts), batch_arrays(b.posts)):
            np.testing.assert_array_equal(x, y)
        assert a.market.daily.equals(b.market.daily)
        assert a.market.firms.equals(b.market.firms)
        assert a.controls.equals(b.controls)

    def test_seed_changes_world(self):
        a = generate_world(WorldConfig(**SMALL, seed=1))
        b = generate_world(WorldConfig(**SMALL, seed=2))
        assert not np.array_equal(a.latent.to_numpy(), b.latent.to_numpy())

    def test_no_planted_effect(self):
        # with both effects off, returns are pure noise drawn independently of S
        w = generate_world(WorldConfig(**{**SMALL, "days": 3000}, beta0=0.0, beta_rev=0.0, seed=4))
        base = generate_world(WorldConfig(**{**SMALL, "days": 3000}, beta0=0.3, beta_rev=1.2, seed=4))
        r0, r1 = w.market.daily["ret_pct"].to_numpy(), base.market.daily["ret_pct"].to_numpy()
        S = w.latent.to_numpy()
        lag = np.r_[0.0, np.cumsum(S)]
        t = np.arange(len(S))
        planted = 0.3 * S - 1.2 / REVERSAL_DAYS * (lag[t] - lag[np.maximum(t - REVERSAL_DAYS, 0)])
        np.testing.assert_allclose(r1 - r0, planted, atol=1e-12)
        assert abs(np.corrcoef(S, r0)[0, 1]) < 0.06

    def test_declaration_saturates(self):
        w = generate_world(WorldConfig(**SMALL, decl_slope=200.0, gif_share=0.0, intraday_sd=0.0, seed=6))
        day = w.calendar.locate(w.posts.ts_us)[0]
        S = w.latent.to_numpy()[day]
        d = w.posts.decl
        m = (d != 0) & (np.abs(S) > 0.05)
        assert np.mean((d[m] > 0) == (S[m] > 0)) > 0.99

    def test_corpus_shape(self):
        cfg = WorldConfig(**SMALL, seed=8)
        w = generate_world(cfg)
        n_days = len(w.calendar)
        assert n_days == cfg.days
        assert abs(len(w.posts) / n_days - cfg.posts_per_day) < 5
        assert set(w.posts.gif_ids) <= set(w.gif_valence.index)
        assert list(w.truth["expected_signs"].values()) == list(expected_signs(cfg))
        assert len(w.truth["latent"]) == n_days

    def test_index_tracks_latent(self):
        w = generate_world(WorldConfig(seed=2))
        g = build_index(w.posts, w.calendar).daily["GIF"]
        s = w.latent.copy()
        s.index = s.index.strftime("%Y-%m-%d")
        joined = np.column_stack([g.reindex(s.index).to_numpy(float), s.to_numpy()])
        joined = joined[~np.isnan(joined).any(axis=1)]
        assert np.corrcoef(joined.T)[0, 1] > 0.5

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=5, deadline=None)
    def test_controls_independent_unless_confounded(self, seed):
        kw = {**SMALL, "days": 2000, "posts_per_day": 5}
        plain = generate_world(WorldConfig(**kw, seed=seed))
        conf = generate_world(WorldConfig(**kw, seed=seed, confounded=True))
        S = plain.latent.to_numpy()
        assert abs(np.corrcoef(S, plain.controls["ads"])[0, 1]) < 0.1
        assert np.corrcoef(S, conf.controls["ads"])[0, 1] > 0.3


class TestWriteWorld:
    def test_files_round_trip(self, tmp_path):
        w = generate_world(WorldConfig(**SMALL, seed=9))
        paths = write_world(w, tmp_path)
        assert set(paths) == {"posts", "calendar", "market", "intraday", "flows", "controls", "monthly",
                              "firms", "truth"}
        back = read_posts(paths["posts"])
        np.testing.assert_array_equal(back.post_id, w.posts.post_id)
        np.testing.assert_array_equal(back.ts_us, w.posts.ts_us)
        np.testing.assert_array_equal(back.gif_ids, w.posts.gif_ids)
        np.testing.assert_array_equal(back.decl, w.posts.decl)
        truth = json.loads((tmp_path / "truth.json").read_text())
        assert truth["config"]["seed"] == 9
        # writing twice gives the same bytes
        again = write_world(w, tmp_path / "again")
        for k in paths:
            assert open(paths[k], "rb").read() == open(again[k], "rb").read(), k

"""Plant a sentiment effect, then recover it.

Run: python3 demos/02_synthetic_world.py [seed]

A synthetic world has a latent mood that moves GIF choice and declared
posts.  Returns load on the mood today and give it back over the next
month.  The pipeline sees only posts and returns.
"""

from __future__ import annotations

import sys

import numpy as np

from giffluence.pipeline import PipelineConfig, analyze, inputs_from_world
from giffluence.synth import WorldConfig, generate_world

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = WorldConfig(days=1000, posts_per_day=2000, beta0=0.3, beta_rev=1.2, seed=seed)
world = generate_world(cfg)
print(f"{len(world.posts):,} posts over {cfg.days} trading days, {cfg.gif_catalog_size} GIFs")

run = PipelineConfig(tables=("table4",), reps=2000, nk_reps=499, seed=seed, plots=False)
bundle = analyze(inputs_from_world(world), run)

gif = bundle.daily["GIF_raw"].to_numpy()
latent = world.latent.to_numpy()
ok = ~np.isnan(gif)
print(f"corr(GIF index, latent mood) = {np.corrcoef(gif[ok], latent[ok])[0, 1]:.3f}")
print("planted signs (day, week, month):", world.truth["expected_signs"])
print("population slopes:", {k: round(v, 3) for k, v in world.truth["population_coefficients"].items()})
print()
print(bundle.tables["table4_GIF"].to_markdown())

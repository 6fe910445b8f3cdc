"""
Weather data from tiles to model-ready sequences
================================================

Generates a small synthetic corpus, aggregates it to weekly and monthly
resolution, standardizes with training-tile statistics and cuts the
fixed-length windows used for pretraining. Writes two charts to ./demo_out.
"""
from pathlib import Path

import numpy as np

from weatherformer.svg import write_chart
from weatherformer.weather import (
    INDEX,
    SyntheticSpec,
    aggregate_tile,
    compute_stats,
    generate_synthetic,
    read_store,
    sequences_from_tiles,
    split_dataset,
    write_store,
)

out = Path("demo_out")
out.mkdir(exist_ok=True)

# four tiles of eight coordinates, two years of daily data
tiles = generate_synthetic(SyntheticSpec(n_tiles=4, coords_per_tile=8, start_year=2000, end_year=2001), seed=0)
print("daily tile:", tiles[0].values.shape)

# the binary store round-trips exactly
write_store(tiles, out / "tiles.wfds")
back = read_store(out / "tiles.wfds")
print("store round trip exact:", all(np.array_equal(a.values, b.values) for a, b in zip(tiles, back)))

# weekly and monthly aggregation
weekly = [aggregate_tile(t, 7) for t in tiles]
monthly = [aggregate_tile(t, 30) for t in tiles]
print("weekly:", weekly[0].values.shape, "monthly:", monthly[0].values.shape)

t2m = INDEX["T2M"]
day = np.arange(tiles[0].values.shape[1])
write_chart(out / "t2m.svg", {
    "daily": (day, tiles[0].values[0, :, t2m]),
    "weekly": (day[::7][:weekly[0].values.shape[1]] + 3, weekly[0].values[0, :, t2m]),
}, title="T2M at one coordinate", x_label="day", y_label="degC")

# tile-level split, then statistics from training tiles only
train, val = split_dataset(tiles, 0.25, seed=0)
stats = compute_stats(train)
print("train/val tiles:", len(train), len(val))
print("T2M mean/std:", round(float(stats.mean[t2m]), 2), round(float(stats.std[t2m]), 2))

# 56-day daily windows and 52-week weekly windows
daily_seqs = sequences_from_tiles(train, 1, 56, stats)
weekly_seqs = sequences_from_tiles(train, 7, 52, stats, stride=26)
print("daily windows:", daily_seqs.x.shape, "weekly windows:", weekly_seqs.x.shape)
print("standardized T2M mean (daily windows):", round(float(daily_seqs.x[..., t2m].mean()), 3))

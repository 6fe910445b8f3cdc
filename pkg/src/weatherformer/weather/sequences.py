"""Model-ready batches of weather sequences."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .catalog import N_MEASUREMENTS
from .series import (
    GridTile,
    StandardizationStats,
    aggregate_tile,
    days_since_epoch,
    normalize_longitude,
    standardize_array,
)


@dataclass
class SequenceSet:
    """``S`` padded sequences with per-sequence context.

    x: (S, N, 31) float32, zero beyond ``valid_len``.
    """

    x: np.ndarray
    valid_len: np.ndarray
    granularity: np.ndarray
    latitude: np.ndarray
    longitude: np.ndarray
    start_day: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        s = len(self.x)
        self.valid_len = np.asarray(self.valid_len, dtype=np.int64).reshape(s)
        self.granularity = np.asarray(self.granularity, dtype=np.int64).reshape(s)
        self.latitude = np.asarray(self.latitude, dtype=np.float64).reshape(s)
        self.longitude = normalize_longitude(np.asarray(self.longitude, dtype=np.float64).reshape(s))
        self.start_day = np.asarray(self.start_day, dtype=np.int64).reshape(s)
        if self.x.ndim != 3 or self.x.shape[2] != N_MEASUREMENTS:
            raise ValueError(f"x must be (S, N, {N_MEASUREMENTS})")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def seq_len(self) -> int:
        return self.x.shape[1]

    def padding_mask(self) -> np.ndarray:
        return np.arange(self.seq_len)[None, :] < self.valid_len[:, None]

    def subset(self, idx) -> "SequenceSet":
        return SequenceSet(self.x[idx], self.valid_len[idx], self.granularity[idx], self.latitude[idx],
                           self.longitude[idx], self.start_day[idx])

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterable["SequenceSet"]:
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for lo in range(0, len(self), batch_size):
            yield self.subset(order[lo:lo + batch_size])

    @classmethod
    def concat(cls, sets: Sequence["SequenceSet"]) -> "SequenceSet":
        n = max(s.seq_len for s in sets)
        xs = []
        for s in sets:
            pad = np.zeros((len(s), n, N_MEASUREMENTS), dtype=np.float32)
            pad[:, : s.seq_len] = s.x
            xs.append(pad)
        return cls(np.concatenate(xs), *(np.concatenate([getattr(s, f) for s in sets])
                                         for f in ("valid_len", "granularity", "latitude", "longitude", "start_day")))


def _row_start_days(tile: GridTile) -> np.ndarray:
    """Absolute day index of the first day covered by each row of a tile."""
    start = tile.start_date
    rows = tile.values.shape[1]
    if tile.granularity_days in (1, 7):
        return days_since_epoch(start) + tile.granularity_days * np.arange(rows)
    days = []
    y, m = start.year, start.month
    for _ in range(rows):
        days.append(days_since_epoch(dt.date(y, m, 1)))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return np.array(days)


def sequences_from_tiles(tiles: Sequence[GridTile], granularity_days: int, length: int,
                         stats: Optional[StandardizationStats] = None, stride: Optional[int] = None) -> SequenceSet:
    """Cut every coordinate's series into windows of ``length`` rows.

    Daily tiles are aggregated first when ``granularity_days`` is 7 or 30.
    """
    stride = stride or length
    xs, lats, lngs, starts = [], [], [], []
    for tile in tiles:
        if tile.has_missing():
            raise ValueError("tile has missing values; impute before building sequences")
        t = tile if tile.granularity_days == granularity_days else aggregate_tile(tile, granularity_days)
        days = _row_start_days(t)
        rows = t.values.shape[1]
        for lo in range(0, rows - length + 1, stride):
            for k, (lat, lng) in enumerate(t.coords):
                block = t.values[k, lo:lo + length]
                if stats is not None:
                    block = standardize_array(block, stats)
                xs.append(block)
                lats.append(lat)
                lngs.append(lng)
                starts.append(days[lo])
    if not xs:
        raise ValueError("tiles too short for the requested window length")
    s = len(xs)
    return SequenceSet(np.stack(xs), np.full(s, length), np.full(s, granularity_days), lats, lngs, starts)

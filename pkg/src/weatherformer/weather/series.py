"""Weather series and grid tiles, plus imputation, aggregation,
standardization and tile-level splitting."""
from __future__ import annotations

import dataclasses
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .catalog import N_MEASUREMENTS

EPOCH = dt.date(1984, 1, 1)
GRANULARITIES = (1, 7, 30)
TILE_LAT_SPAN = 5.0
TILE_LNG_SPAN = 8.0
GRID_STEP = 0.5
FULL_TILE_COORDS = 160


def normalize_longitude(lng):
    """Wrap longitude(s) into [-180, 180)."""
    return (np.asarray(lng, dtype=np.float64) + 180.0) % 360.0 - 180.0


def days_since_epoch(day: dt.date) -> int:
    return (day - EPOCH).days


@dataclass
class WeatherSeries:
    """An ``N x 31`` block of measurements for one location.

    Rows at index >= ``valid_len`` are padding and must be zero.
    """

    values: np.ndarray
    granularity_days: int
    latitude: float
    longitude: float
    start_date: dt.date
    valid_len: Optional[int] = None
    standardized: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.shape[1] != N_MEASUREMENTS:
            raise ValueError(f"series values must be N x {N_MEASUREMENTS}, got {self.values.shape}")
        if self.granularity_days not in GRANULARITIES:
            raise ValueError(f"granularity_days must be one of {GRANULARITIES}")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError("latitude outside [-90, 90]")
        self.longitude = float(normalize_longitude(self.longitude))
        if self.valid_len is None:
            self.valid_len = len(self.values)
        if not 0 <= self.valid_len <= len(self.values):
            raise ValueError("valid_len exceeds series length")
        if np.any(self.values[self.valid_len:] != 0):
            raise ValueError("padding rows must be all zero")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def start_day_index(self) -> int:
        return days_since_epoch(self.start_date)

    def padded(self, length: int) -> "WeatherSeries":
        """Truncate or zero-pad to ``length`` rows."""
        n = min(self.valid_len, length)
        vals = np.zeros((length, N_MEASUREMENTS), dtype=np.float32)
        vals[:n] = self.values[:n]
        return dataclasses.replace(self, values=vals, valid_len=n)


@dataclass
class GridTile:
    """A rectangle of coordinates sharing one time axis.

    ``values`` has shape ``(coords, T, 31)``; NaN marks a missing cell. The time
    axis starts on 1 January of ``start_year``; for daily tiles it covers every
    calendar day through 31 December of ``end_year``.
    """

    bounds: tuple
    coords: np.ndarray
    start_year: int
    end_year: int
    granularity_days: int
    values: np.ndarray
    split: str = "train"
    tile_id: int = 0

    def __post_init__(self):
        self.bounds = tuple(float(b) for b in self.bounds)
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3 or self.values.shape[0] != len(self.coords) or self.values.shape[2] != N_MEASUREMENTS:
            raise ValueError(f"tile values must be (coords, T, {N_MEASUREMENTS}), got {self.values.shape}")
        if self.end_year < self.start_year:
            raise ValueError("end_year before start_year")
        if self.granularity_days not in GRANULARITIES:
            raise ValueError(f"granularity_days must be one of {GRANULARITIES}")
        if self.split not in ("train", "val"):
            raise ValueError("split must be 'train' or 'val'")

    @property
    def n_coords(self) -> int:
        return len(self.coords)

    @property
    def is_full(self) -> bool:
        return self.n_coords == FULL_TILE_COORDS

    @property
    def start_date(self) -> dt.date:
        return dt.date(self.start_year, 1, 1)

    def dates(self) -> list:
        if self.granularity_days != 1:
            raise ValueError("per-row dates only exist for daily tiles")
        return [self.start_date + dt.timedelta(days=i) for i in range(self.values.shape[1])]

    def has_missing(self) -> bool:
        return bool(np.isnan(self.values).any())

    def series(self, coord: int, year: Optional[int] = None, max_len: int = 365) -> WeatherSeries:
        """One coordinate's series; for daily tiles optionally a single year."""
        lat, lng = self.coords[coord]
        vals = self.values[coord]
        start = self.start_date
        if year is not None:
            if self.granularity_days != 1:
                raise ValueError("year slicing needs a daily tile")
            lo = (dt.date(year, 1, 1) - start).days
            hi = (dt.date(year + 1, 1, 1) - start).days
            vals = vals[lo:hi]
            start = dt.date(year, 1, 1)
        vals = vals[:max_len]
        if np.isnan(vals).any():
            raise ValueError("series contains missing values; impute first")
        return WeatherSeries(vals, self.granularity_days, float(lat), float(lng), start)


def tile_coordinates(lat_min: float, lng_min: float) -> np.ndarray:
    """The 10 x 16 grid (0.5 deg spacing) covering a 5 x 8 deg rectangle."""
    lats = lat_min + GRID_STEP * np.arange(int(TILE_LAT_SPAN / GRID_STEP))
    lngs = lng_min + GRID_STEP * np.arange(int(TILE_LNG_SPAN / GRID_STEP))
    grid = np.stack(np.meshgrid(lats, lngs, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid


def daily_length(start_year: int, end_year: int) -> int:
    return (dt.date(end_year + 1, 1, 1) - dt.date(start_year, 1, 1)).days


def impute_missing(tile: GridTile) -> GridTile:
    """Fill NaN cells of a daily tile.

    Each missing cell takes the value at the same coordinate and day of year
    from the most recent earlier year that has a valid value. Cells with no
    such year fall back to the mean over all valid years for that day of year
    (and, failing that, the coordinate's overall mean for the measurement).
    """
    if tile.granularity_days != 1:
        raise ValueError("imputation operates on daily tiles")
    if not tile.has_missing():
        return tile
    values = tile.values.astype(np.float64)
    k, t, f = values.shape
    if np.isnan(values).all(axis=1).any():
        ci, fi = np.argwhere(np.isnan(values).all(axis=1))[0]
        raise ValueError(f"measurement {fi} missing for all years at coordinate {ci}")

    dates = tile.dates()
    year_idx = np.array([d.year - tile.start_year for d in dates])
    doy = np.array([d.timetuple().tm_yday - 1 for d in dates])
    n_years = tile.end_year - tile.start_year + 1
    cube = np.full((k, n_years, 366, f), np.nan)
    cube[:, year_idx, doy, :] = values

    filled = cube.copy()
    last_valid = np.full((k, 366, f), np.nan)
    for y in range(n_years):
        gap = np.isnan(filled[:, y])
        filled[:, y][gap] = last_valid[gap]
        seen = ~np.isnan(cube[:, y])
        last_valid[seen] = cube[:, y][seen]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN day-of-year slots
        clim = np.nanmean(cube, axis=1) if n_years > 1 else cube[:, 0].copy()
    overall = np.nanmean(values, axis=1)  # k, f
    clim = np.where(np.isnan(clim), overall[:, None, :], clim)
    for y in range(n_years):
        gap = np.isnan(filled[:, y])
        filled[:, y][gap] = clim[gap]

    out = filled[:, year_idx, doy, :]
    return dataclasses.replace(tile, values=out.astype(np.float32))


def _calendar_months(start: dt.date, n: int) -> list:
    """(first_index, length) for every complete calendar month in n days from start."""
    spans = []
    i = 0
    day = start
    if day.day != 1:
        nxt = dt.date(day.year + (day.month == 12), day.month % 12 + 1, 1)
        i = (nxt - start).days
        day = nxt
    while True:
        nxt = dt.date(day.year + (day.month == 12), day.month % 12 + 1, 1)
        length = (nxt - day).days
        if i + length > n:
            break
        spans.append((i, length))
        i += length
        day = nxt
    return spans


def aggregate_values(values: np.ndarray, start: dt.date, granularity_days: int):
    """Window means over axis -2. Returns ``(aggregated, new_start_date)``."""
    n = values.shape[-2]
    if granularity_days == 7:
        w = n // 7
        trimmed = values[..., : w * 7, :]
        shaped = trimmed.reshape(trimmed.shape[:-2] + (w, 7, trimmed.shape[-1]))
        return shaped.mean(axis=-2), start
    if granularity_days == 30:
        spans = _calendar_months(start, n)
        out = np.stack([values[..., i:i + m, :].mean(axis=-2) for i, m in spans], axis=-2) if spans \
            else np.zeros(values.shape[:-2] + (0, values.shape[-1]))
        new_start = start + dt.timedelta(days=spans[0][0]) if spans else start
        return out, new_start
    raise ValueError("target granularity must be 7 or 30")


def aggregate(series: WeatherSeries, granularity_days: int) -> WeatherSeries:
    """Weekly (7-day windows anchored at the start) or calendar-monthly means.

    Trailing partial windows are dropped; for monthly output a leading partial
    month is dropped too so every row is a whole calendar month.
    """
    if series.granularity_days != 1:
        raise ValueError("aggregate expects a daily series")
    vals = series.values[: series.valid_len].astype(np.float64)
    out, start = aggregate_values(vals, series.start_date, granularity_days)
    if len(out) == 0:
        raise ValueError("series too short for one aggregation window")
    return dataclasses.replace(series, values=out.astype(np.float32), granularity_days=granularity_days,
                               start_date=start, valid_len=len(out))


def aggregate_tile(tile: GridTile, granularity_days: int) -> GridTile:
    if tile.granularity_days != 1:
        raise ValueError("aggregate_tile expects a daily tile")
    out, _ = aggregate_values(tile.values.astype(np.float64), tile.start_date, granularity_days)
    return dataclasses.replace(tile, values=out.astype(np.float32), granularity_days=granularity_days)


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(N_MEASUREMENTS)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(N_MEASUREMENTS)
        if not (self.std > 0).all():
            bad = np.flatnonzero(~(self.std > 0)).tolist()
            raise ValueError(f"standard deviation must be positive (measurements {bad})")

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "split": self.split}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(np.array(d["mean"]), np.array(d["std"]), d.get("split", "train"))


def compute_stats(tiles: Sequence[GridTile]) -> StandardizationStats:
    """Per-measurement mean/std over the training tiles only."""
    train = [t for t in tiles if t.split == "train"]
    if not train:
        raise ValueError("no training tiles to compute statistics from")
    flat = np.concatenate([t.values.reshape(-1, N_MEASUREMENTS).astype(np.float64) for t in train])
    return StandardizationStats(np.nanmean(flat, axis=0), np.nanstd(flat, axis=0), "train")


def standardize_array(values: np.ndarray, stats: StandardizationStats, valid_len: Optional[int] = None) -> np.ndarray:
    out = (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std
    if valid_len is not None:
        out[valid_len:] = 0.0
    return out


def destandardize_array(values: np.ndarray, stats: StandardizationStats, valid_len: Optional[int] = None) -> np.ndarray:
    out = np.asarray(values, dtype=np.float64) * stats.std + stats.mean
    if valid_len is not None:
        out[valid_len:] = 0.0
    return out


def standardize(series: WeatherSeries, stats: StandardizationStats) -> WeatherSeries:
    if series.standardized:
        raise ValueError("series is already standardized")
    vals = standardize_array(series.values, stats, series.valid_len)
    return dataclasses.replace(series, values=vals.astype(np.float32), standardized=True)


def destandardize(series: WeatherSeries, stats: StandardizationStats) -> WeatherSeries:
    if not series.standardized:
        raise ValueError("series is not standardized")
    vals = destandardize_array(series.values, stats, series.valid_len)
    return dataclasses.replace(series, values=vals.astype(np.float32), standardized=False)


def split_dataset(tiles: Sequence[GridTile], val_fraction: float, seed: int):
    """Tile-level random split. Returns ``(train_tiles, val_tiles)``."""
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    if len(tiles) < 2:
        raise ValueError("need at least two tiles to split")
    n_val = max(1, int(math.floor(val_fraction * len(tiles) + 0.5)))
    order = np.random.default_rng(seed).permutation(len(tiles))
    val_ids = set(order[:n_val].tolist())
    train = [dataclasses.replace(t, split="train") for i, t in enumerate(tiles) if i not in val_ids]
    val = [dataclasses.replace(t, split="val") for i, t in enumerate(tiles) if i in val_ids]
    return train, val

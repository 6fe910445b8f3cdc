"""Synthetic weather for desk-scale runs.

Every primary measurement is a 365-day sinusoid whose phase and amplitude
depend on latitude, plus Gaussian noise. Several primaries are built from
others (dew point from temperature, snow from cold, ...) and ET0/VAP/VAD are
computed from the primaries, so the cross-variable physics holds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import INDEX, N_MEASUREMENTS
from .meteo import derive_columns
from .series import GRID_STEP, GridTile, daily_length, tile_coordinates

YEAR_DAYS = 365.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_tiles: int = 4
    start_year: int = 2000
    end_year: int = 2001
    noise: float = 0.1
    coords_per_tile: int = 160
    lat_range: tuple = (-45.0, 40.0)
    lng_range: tuple = (-125.0, -45.0)


def _primaries(day: np.ndarray, lat: float, offset: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    """(T, 31) with the 28 primary columns filled for one coordinate."""
    north = lat >= 0
    peak = 200.0 if north else 17.0
    s = 2 * np.pi * (day - peak) / YEAR_DAYS
    amp = abs(lat) / 90.0
    n = len(day)

    def eps(scale):
        return noise * scale * rng.standard_normal(n) if noise > 0 else 0.0

    v = np.zeros((n, N_MEASUREMENTS))
    t2m = 27.0 - 0.35 * abs(lat) + offset[0] + 18.0 * amp * np.cos(s) + eps(2.0)
    t2m = np.clip(t2m, -60.0, 50.0)
    v[:, INDEX["T2M"]] = t2m
    v[:, INDEX["T2M_MAX"]] = t2m + 5.0 + 1.5 * np.cos(s + 0.3) + eps(1.0)
    v[:, INDEX["T2M_MIN"]] = t2m - 5.0 - 1.0 * np.sin(s) + eps(1.0)
    v[:, INDEX["WD2M"]] = np.mod(200.0 + 50.0 * np.sin(s + offset[1]) + eps(30.0), 360.0)
    v[:, INDEX["WS2M"]] = np.maximum(3.0 + offset[2] + 1.0 * np.cos(s + 1.0) + eps(0.8), 0.1)
    v[:, INDEX["PS"]] = 100.5 - 0.02 * abs(lat) + 0.4 * np.cos(s + 2.0) + eps(0.3)
    rh = np.clip(0.65 + 0.1 * offset[3] - 0.12 * np.cos(s) + eps(0.08), 0.05, 1.0)
    v[:, INDEX["RH2M"]] = rh
    dew = t2m - (1.0 - rh) * 20.0
    v[:, INDEX["T2MDEW"]] = dew
    v[:, INDEX["T2MWET"]] = 0.5 * (t2m + dew) + eps(0.5)
    v[:, INDEX["QV2M"]] = np.maximum(3.8 * np.exp(0.06 * dew), 0.05)
    v[:, INDEX["PRECTOTCORR"]] = np.maximum(2.8 + 2.0 * np.sin(s + offset[4]) + eps(2.0), 0.0)
    sw = np.maximum(17.0 + 9.0 * amp * np.cos(s) - 2.0 * offset[3] + eps(2.5), 0.5)
    v[:, INDEX["ALLSKY_SFC_SW_DWN"]] = sw
    v[:, INDEX["ALLSKY_SFC_PAR_TOT"]] = 0.45 * sw + eps(0.3)
    v[:, INDEX["EVPTRNS"]] = np.maximum(4.0 + 3.0 * amp * np.cos(s) + eps(0.7), 0.0)
    v[:, INDEX["GWETPROF"]] = np.clip(0.55 + 0.15 * np.sin(s + offset[4]) + eps(0.05), 0.0, 1.0)
    snow = 3.0 * np.logaddexp(0.0, -(t2m - 1.0) / 2.0)
    v[:, INDEX["SNODP"]] = snow
    v[:, INDEX["FRSNO"]] = np.clip(snow / 15.0, 0.0, 1.0)
    v[:, INDEX["CLOUD_AMT"]] = np.clip(0.5 + 0.15 * np.sin(s + 0.7) + eps(0.1), 0.0, 1.0)
    v[:, INDEX["EVLAND"]] = np.maximum(25.0 + 15.0 * amp * np.cos(s) + eps(4.0), 0.0)
    v[:, INDEX["ALLSKY_SFC_LW_DWN"]] = 27.0 + 0.35 * t2m + eps(1.0)
    v[:, INDEX["ALLSKY_SRF_ALB"]] = np.clip(0.15 + 0.4 * v[:, INDEX["FRSNO"]] + eps(0.02), 0.0, 1.0)
    v[:, INDEX["PW"]] = np.maximum(1.0 + 0.12 * np.maximum(dew + 10.0, 0.0) + eps(0.3), 0.0)
    v[:, INDEX["Z0M"]] = 0.05 + 0.02 * abs(offset[1]) + 0.01 * np.sin(s) + eps(0.002)
    v[:, INDEX["RHOA"]] = 1.29 - 0.0045 * t2m + eps(0.01)
    v[:, INDEX["CDD18_3"]] = np.logaddexp(0.0, t2m - 18.3)
    v[:, INDEX["HDD18_3"]] = np.logaddexp(0.0, 18.3 - t2m)
    v[:, INDEX["TO3"]] = 285.0 + 20.0 * np.sin(s - 0.5) + eps(8.0)
    v[:, INDEX["AOD_55"]] = np.clip(0.15 + 0.06 * np.cos(s + 0.4) + eps(0.03), 0.0, 1.0)
    return v


def generate_synthetic(spec: SyntheticSpec, seed: int) -> list:
    """Daily tiles of synthetic weather, deterministic under ``seed``."""
    rng = np.random.default_rng(seed)
    n_days = daily_length(spec.start_year, spec.end_year)
    day = np.arange(n_days, dtype=np.float64)
    tiles = []
    for tid in range(spec.n_tiles):
        lat0 = float(np.round(rng.uniform(*spec.lat_range) / GRID_STEP) * GRID_STEP)
        lng0 = float(np.round(rng.uniform(*spec.lng_range) / GRID_STEP) * GRID_STEP)
        grid = tile_coordinates(lat0, lng0)
        if spec.coords_per_tile < len(grid):
            pick = np.linspace(0, len(grid) - 1, spec.coords_per_tile).round().astype(int)
            grid = grid[pick]
        values = np.empty((len(grid), n_days, N_MEASUREMENTS))
        for k, (lat, _lng) in enumerate(grid):
            offset = rng.normal(size=5)
            values[k] = derive_columns(_primaries(day, lat, offset, spec.noise, rng))
        tiles.append(GridTile((lat0, lat0 + 5.0, lng0, lng0 + 8.0), grid, spec.start_year, spec.end_year, 1,
                              values.astype(np.float32), tile_id=tid))
    return tiles

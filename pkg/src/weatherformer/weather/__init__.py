"""Weather data: catalog, derived variables, series handling, storage, fetching."""
from .catalog import CATALOG, DERIVED, DOWNLOADED, INDEX, N_MEASUREMENTS, SYMBOLS, Measurement, index_of
from .meteo import (
    actual_vapor_pressure_and_deficit,
    derive_columns,
    reference_et0,
    saturation_vapor_pressure,
)
from .power import fetch_tile, fixture_tile
from .sequences import SequenceSet, sequences_from_tiles
from .series import (
    EPOCH,
    GridTile,
    StandardizationStats,
    WeatherSeries,
    aggregate,
    aggregate_tile,
    compute_stats,
    destandardize,
    impute_missing,
    normalize_longitude,
    split_dataset,
    standardize,
    tile_coordinates,
)
from .store import ChecksumError, StoreError, read_store, write_store
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "CATALOG", "DERIVED", "DOWNLOADED", "EPOCH", "INDEX", "N_MEASUREMENTS", "SYMBOLS", "ChecksumError",
    "GridTile", "Measurement", "SequenceSet", "StandardizationStats", "StoreError", "SyntheticSpec",
    "WeatherSeries", "actual_vapor_pressure_and_deficit", "aggregate", "aggregate_tile", "compute_stats",
    "derive_columns", "destandardize", "fetch_tile", "fixture_tile", "generate_synthetic",
    "impute_missing", "index_of", "normalize_longitude", "read_store", "reference_et0",
    "saturation_vapor_pressure", "sequences_from_tiles", "split_dataset", "standardize",
    "tile_coordinates", "write_store",
]

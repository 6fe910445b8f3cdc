"""The 31 weather measurements in canonical index order."""
from __future__ import annotations

from typing import NamedTuple


class Measurement(NamedTuple):
    index: int
    symbol: str
    name: str
    unit: str
    derived: bool


_ROWS = [
    ("T2M", "Temperature at 2 Meters", "degC"),
    ("T2M_MAX", "Temperature at 2 Meters Maximum", "degC"),
    ("T2M_MIN", "Temperature at 2 Meters Minimum", "degC"),
    ("WD2M", "Wind Direction at 2 Meters", "degrees"),
    ("WS2M", "Wind Speed at 2 Meters", "m/s"),
    ("PS", "Surface Pressure", "kPa"),
    ("QV2M", "Specific Humidity at 2 Meters", "g/kg"),
    ("PRECTOTCORR", "Precipitation Corrected", "mm/day"),
    ("ALLSKY_SFC_SW_DWN", "All Sky Surface Shortwave Downward Irradiance", "MJ/m^2/day"),
    ("EVPTRNS", "Evapotranspiration Energy Flux", "MJ/m^2/day"),
    ("GWETPROF", "Profile Soil Moisture (0 to 1)", "0 to 1"),
    ("SNODP", "Snow Depth", "cm"),
    ("T2MDEW", "Dew/Frost Point at 2 Meters", "degC"),
    ("CLOUD_AMT", "Cloud Amount", "0 to 1"),
    ("EVLAND", "Evaporation Land", "kg/m^2/s x 1e6"),
    ("T2MWET", "Wet Bulb Temperature at 2 Meters", "degC"),
    ("FRSNO", "Land Snowcover Fraction", "0 to 1"),
    ("ALLSKY_SFC_LW_DWN", "All Sky Surface Longwave Downward Irradiance", "MJ/m^2/day"),
    ("ALLSKY_SFC_PAR_TOT", "All Sky Surface PAR Total", "MJ/m^2/day"),
    ("ALLSKY_SRF_ALB", "All Sky Surface Albedo", "0 to 1"),
    ("PW", "Precipitable Water", "cm"),
    ("Z0M", "Surface Roughness", "m"),
    ("RHOA", "Surface Air Density", "kg/m^3"),
    ("RH2M", "Relative Humidity at 2 Meters", "0 to 1"),
    ("CDD18_3", "Cooling Degree Days Above 18.3 C", "days"),
    ("HDD18_3", "Heating Degree Days Below 18.3 C", "days"),
    ("TO3", "Total Column Ozone", "Dobson units"),
    ("AOD_55", "Aerosol Optical Depth 55", "0 to 1"),
    ("ET0", "Reference Evapotranspiration", "mm/day"),
    ("VAP", "Vapor Pressure", "kPa"),
    ("VAD", "Vapor Pressure Deficit", "kPa"),
]

N_MEASUREMENTS = 31
N_DOWNLOADED = 28

CATALOG: tuple[Measurement, ...] = tuple(
    Measurement(i, sym, name, unit, i >= N_DOWNLOADED) for i, (sym, name, unit) in enumerate(_ROWS)
)
SYMBOLS: tuple[str, ...] = tuple(m.symbol for m in CATALOG)
DOWNLOADED: tuple[str, ...] = SYMBOLS[:N_DOWNLOADED]
DERIVED: tuple[str, ...] = SYMBOLS[N_DOWNLOADED:]
INDEX: dict[str, int] = {s: i for i, s in enumerate(SYMBOLS)}

assert len(CATALOG) == N_MEASUREMENTS


def index_of(symbol: str) -> int:
    try:
        return INDEX[symbol]
    except KeyError:
        raise KeyError(f"unknown measurement {symbol!r}") from None

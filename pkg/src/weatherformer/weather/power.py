"""Client for a NASA-POWER-style daily point endpoint.

Requests are plain GETs (``parameters``, ``community``, ``latitude``,
``longitude``, ``start``, ``end``, ``format=JSON``). The transport is
injectable so tests can replay recorded responses; offline mode never touches
the network and returns the bundled fixture tile.
"""
from __future__ import annotations

import datetime as dt
import gzip
import json
import os
from importlib import resources
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .catalog import DOWNLOADED, N_MEASUREMENTS
from .meteo import derive_columns
from .series import GridTile, daily_length, tile_coordinates

DEFAULT_ENDPOINT = "https://power.larc.nasa.gov/api/temporal/daily/point"
ENDPOINT_ENV = "WEATHERFORMER_POWER_URL"
MAX_PARAMS_PER_REQUEST = 20
PERCENT_FIELDS = ("RH2M", "CLOUD_AMT")

Transport = Callable[[str, Mapping[str, str]], bytes]


class FetchError(RuntimeError):
    pass


class EndpointError(FetchError):
    """The endpoint could not be reached or returned an HTTP error."""


class SchemaError(FetchError):
    """The response body does not have the expected structure."""


class PartialYearError(FetchError):
    """A parameter is missing dates inside the requested range."""


class OfflineError(FetchError):
    pass


def resolve_endpoint(config: Optional[Mapping] = None) -> str:
    """Environment variable beats config file beats the built-in default."""
    env = os.environ.get(ENDPOINT_ENV)
    if env:
        return env
    if config and config.get("power_url"):
        return str(config["power_url"])
    return DEFAULT_ENDPOINT


def http_transport(timeout: float = 60.0) -> Transport:
    import requests

    def get(url: str, params: Mapping[str, str]) -> bytes:
        try:
            resp = requests.get(url, params=dict(params), timeout=timeout)
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise EndpointError(f"request to {url} failed: {exc}") from exc
        return resp.content

    return get


def _refuse_network(url, params):
    raise OfflineError("network access attempted in offline mode")


def request_params(lat: float, lng: float, start: dt.date, end: dt.date, parameters: Sequence[str],
                   community: str = "AG") -> dict:
    return {
        "parameters": ",".join(parameters),
        "community": community,
        "latitude": f"{lat:.4f}",
        "longitude": f"{lng:.4f}",
        "start": start.strftime("%Y%m%d"),
        "end": end.strftime("%Y%m%d"),
        "format": "JSON",
    }


def parse_point_response(body: bytes, parameters: Sequence[str], start: dt.date, end: dt.date) -> np.ndarray:
    """Decode one response into a ``(days, len(parameters))`` float64 array.

    Fill values become NaN. Unknown fields, missing parameters and missing
    dates are errors; nothing is silently dropped.
    """
    try:
        payload = json.loads(body)
        block = payload["properties"]["parameter"]
    except (ValueError, KeyError, TypeError) as exc:
        raise SchemaError(f"malformed response body: {exc}") from exc
    if not isinstance(block, dict):
        raise SchemaError("'properties.parameter' is not an object")
    fill = payload.get("header", {}).get("fill_value", -999.0)
    unknown = sorted(set(block) - set(parameters))
    if unknown:
        raise SchemaError(f"response carries unexpected fields {unknown}")
    missing = [p for p in parameters if p not in block]
    if missing:
        raise SchemaError(f"response lacks requested fields {missing}")

    n_days = (end - start).days + 1
    keys = [(start + dt.timedelta(days=i)).strftime("%Y%m%d") for i in range(n_days)]
    out = np.empty((n_days, len(parameters)))
    for j, p in enumerate(parameters):
        series = block[p]
        if not isinstance(series, dict):
            raise SchemaError(f"field {p} is not a date->value object")
        absent = [k for k in keys if k not in series]
        if absent:
            raise PartialYearError(f"{p}: {len(absent)} missing dates, first {absent[0]}")
        extra = set(series) - set(keys)
        if extra:
            raise SchemaError(f"{p}: dates outside the requested range, e.g. {sorted(extra)[0]}")
        try:
            col = np.array([float(series[k]) for k in keys])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{p}: non-numeric value") from exc
        col[np.isclose(col, fill)] = np.nan
        if p in PERCENT_FIELDS:
            col = col / 100.0
        out[:, j] = col
    return out


def fetch_point(lat: float, lng: float, start_year: int, end_year: int, transport: Transport,
                endpoint: str = DEFAULT_ENDPOINT, parameters: Sequence[str] = DOWNLOADED) -> np.ndarray:
    """Daily ``(days, 28)`` raw measurements for one coordinate."""
    start, end = dt.date(start_year, 1, 1), dt.date(end_year, 12, 31)
    cols = []
    for i in range(0, len(parameters), MAX_PARAMS_PER_REQUEST):
        chunk = list(parameters[i:i + MAX_PARAMS_PER_REQUEST])
        body = transport(endpoint, request_params(lat, lng, start, end, chunk))
        cols.append(parse_point_response(body, chunk, start, end))
    return np.concatenate(cols, axis=1)


def with_derived(raw: np.ndarray) -> np.ndarray:
    """Append ET0/VAP/VAD to ``(..., 28)`` raw rows; NaN where inputs are missing."""
    out = np.full(raw.shape[:-1] + (N_MEASUREMENTS,), np.nan)
    out[..., :raw.shape[-1]] = raw
    ok = np.isfinite(raw).all(axis=-1)
    if ok.any():
        out[ok] = derive_columns(raw[ok])
    return out


def fetch_tile(bounds: Sequence[float], year_range: tuple, endpoint: Optional[str] = None,
               transport: Optional[Transport] = None, offline: bool = False,
               coords: Optional[np.ndarray] = None, tile_id: int = 0) -> GridTile:
    """Download every coordinate of a tile and compute the derived columns.

    ``bounds`` is ``(lat_min, lat_max, lng_min, lng_max)``; ``coords``
    overrides the default 160-point grid. In offline mode the bundled fixture
    tile is returned and no request is made.
    """
    if offline:
        return fixture_tile()
    endpoint = endpoint or resolve_endpoint()
    transport = transport or http_transport()
    y0, y1 = year_range
    if coords is None:
        coords = tile_coordinates(bounds[0], bounds[2])
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    n_days = daily_length(y0, y1)
    values = np.empty((len(coords), n_days, N_MEASUREMENTS))
    for k, (lat, lng) in enumerate(coords):
        raw = fetch_point(lat, lng, y0, y1, transport, endpoint)
        values[k] = with_derived(raw)
    return GridTile(tuple(bounds), coords, y0, y1, 1, values.astype(np.float32), tile_id=tile_id)


FIXTURE_RESOURCE = "power_fixture.json.gz"
FIXTURE_POINT = (42.0, -93.5)
FIXTURE_YEAR = 2019


def fixture_body() -> bytes:
    ref = resources.files("weatherformer.data").joinpath(FIXTURE_RESOURCE)
    return gzip.decompress(ref.read_bytes())


def fixture_transport() -> Transport:
    """Replays the bundled response, answering any parameter subset of it."""
    payload = json.loads(fixture_body())

    def get(url, params):
        wanted = params["parameters"].split(",")
        sub = dict(payload)
        sub["properties"] = {"parameter": {p: payload["properties"]["parameter"][p] for p in wanted
                                           if p in payload["properties"]["parameter"]}}
        return json.dumps(sub).encode()

    return get


def fixture_tile() -> GridTile:
    lat, lng = FIXTURE_POINT
    return fetch_tile((lat, lat + 0.5, lng, lng + 0.5), (FIXTURE_YEAR, FIXTURE_YEAR), endpoint="fixture://",
                      transport=fixture_transport(), coords=np.array([[lat, lng]]))


__all__ = [
    "DEFAULT_ENDPOINT", "ENDPOINT_ENV", "EndpointError", "FetchError", "OfflineError", "PartialYearError",
    "SchemaError", "fetch_point", "fetch_tile", "fixture_tile", "fixture_transport", "http_transport",
    "parse_point_response", "request_params", "resolve_endpoint", "with_derived",
]

"""Regenerate src/weatherformer/data/power_fixture.json.gz.

The fixture mimics a daily point response (1 coordinate, 2019, 28 fields):
values come from the synthetic generator, rounded to 2 decimals, humidity and
cloud amount in percent, and two cells replaced by the fill value.
"""
import datetime as dt
import gzip
import json
from pathlib import Path

import numpy as np

from weatherformer.weather.catalog import DOWNLOADED, INDEX
from weatherformer.weather.synthetic import _primaries

LAT, LNG, YEAR = 42.0, -93.5, 2019
FILL = -999.0


def main():
    rng = np.random.default_rng(2019)
    day = np.arange(365, dtype=np.float64)
    v = _primaries(day, LAT, rng.normal(size=5), 0.3, rng)
    v[:, INDEX["RH2M"]] *= 100.0
    v[:, INDEX["CLOUD_AMT"]] *= 100.0
    v[40, INDEX["WS2M"]] = FILL
    v[200, INDEX["PS"]] = FILL
    dates = [(dt.date(YEAR, 1, 1) + dt.timedelta(days=i)).strftime("%Y%m%d") for i in range(365)]
    block = {p: {d: round(float(v[i, INDEX[p]]), 2) for i, d in enumerate(dates)} for p in DOWNLOADED}
    payload = {
        "type": "Feature",
        "geometry": {"type": "Point", "coordinates": [LNG, LAT, 300.0]},
        "properties": {"parameter": block},
        "header": {"title": "NASA/POWER style daily point fixture", "fill_value": FILL,
                   "start": dates[0], "end": dates[-1]},
    }
    out = Path(__file__).resolve().parents[1] / "src/weatherformer/data/power_fixture.json.gz"
    out.write_bytes(gzip.compress(json.dumps(payload).encode(), mtime=0))
    print(out, out.stat().st_size)


if __name__ == "__main__":
    main()

import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import et0 as et0_oracle
from oracles import rel, tetens
from weatherformer.weather import (
    INDEX,
    N_MEASUREMENTS,
    ChecksumError,
    GridTile,
    StandardizationStats,
    StoreError,
    SyntheticSpec,
    WeatherSeries,
    actual_vapor_pressure_and_deficit,
    aggregate,
    compute_stats,
    derive_columns,
    destandardize,
    generate_synthetic,
    impute_missing,
    normalize_longitude,
    read_store,
    reference_et0,
    saturation_vapor_pressure,
    sequences_from_tiles,
    split_dataset,
    standardize,
    tile_coordinates,
    write_store,
)
from weatherformer.weather import power
from weatherformer.weather.catalog import CATALOG, DERIVED, index_of
from weatherformer.weather.store import decode_tiles, encode_tiles


def _tile(rng, coords=3, years=(2001, 2001), split="train", tid=0):
    n = (dt.date(years[1] + 1, 1, 1) - dt.date(years[0], 1, 1)).days
    grid = tile_coordinates(40.0, -100.0)[:coords]
    return GridTile((40.0, 45.0, -100.0, -92.0), grid, years[0], years[1], 1,
                    rng.normal(size=(coords, n, N_MEASUREMENTS)), split, tid)


class TestCatalog:
    def test_order_and_derived(self):
        assert len(CATALOG) == 31
        assert DERIVED == ("ET0", "VAP", "VAD")
        assert index_of("T2M") == 0 and index_of("VAD") == 30
        assert [m.index for m in CATALOG] == list(range(31))

    def test_unknown(self):
        with pytest.raises(KeyError):
            index_of("T3M")


class TestMeteorology:
    def test_tetens_branches_meet_at_zero(self):
        assert saturation_vapor_pressure(0.0) == 0.6108
        assert saturation_vapor_pressure(1e-12) == pytest.approx(0.6108, abs=1e-12)

    @pytest.mark.parametrize("t,expected", [(20.0, 2.338), (30.0, 4.243), (10.0, 1.228)])
    def test_tetens_table_values(self, t, expected):
        assert saturation_vapor_pressure(t) == pytest.approx(expected, abs=5e-4)

    def test_ice_branch_below_liquid(self):
        # over ice the saturation pressure is lower than over supercooled water
        liquid = 0.6108 * np.exp(17.27 * -10 / (-10 + 237.3))
        assert saturation_vapor_pressure(-10.0) < liquid

    @pytest.mark.parametrize("t", [-90.5, 60.1, np.nan, np.inf])
    def test_tetens_domain(self, t):
        with pytest.raises(ValueError):
            saturation_vapor_pressure(t)

    def test_vapor_pressure_partition(self):
        vap, vad = actual_vapor_pressure_and_deficit(25.0, 0.4)
        assert vap + vad == pytest.approx(saturation_vapor_pressure(25.0), abs=1e-15)
        assert vap == pytest.approx(0.4 * saturation_vapor_pressure(25.0))

    @pytest.mark.parametrize("rh", [-0.1, 1.2])
    def test_humidity_domain(self, rh):
        with pytest.raises(ValueError):
            actual_vapor_pressure_and_deficit(10.0, rh)

    def test_tetens_vs_oracle(self):
        rng = np.random.default_rng(3)
        ts = rng.uniform(-90, 60, 300)
        got = saturation_vapor_pressure(ts)
        assert max(rel(g, tetens(t)) for g, t in zip(got, ts)) < 1e-12

    def test_et0_hand_value(self):
        # Delta=0.122, Rn=13.28, G=0.14, T=16.9, u2=2.078, es=1.997, ea=1.409, gamma=0.0666
        got = reference_et0(0.122, 13.28, 0.14, 16.9, 2.078, 1.997, 1.409, 0.0666)
        expected = (0.408 * 0.122 * 13.14 + 0.0666 * (900 / 289.9) * 2.078 * 0.588) / (0.122 + 0.0666 * 1.70652)
        assert got == pytest.approx(expected, rel=1e-14)
        assert got == pytest.approx(et0_oracle(0.122, 13.28, 0.14, 16.9, 2.078, 1.997, 1.409, 0.0666), rel=1e-12)

    def test_et0_rejects_bad_temperature(self):
        with pytest.raises(ValueError):
            reference_et0(0.1, 10, 0, -273.0, 2, 1, 0.5, 0.066)

    def test_derive_columns_fills_derived(self):
        v = np.zeros((2, 28))
        v[:, INDEX["T2M"]] = [20.0, -5.0]
        v[:, INDEX["RH2M"]] = [0.5, 0.8]
        v[:, INDEX["PS"]] = 100.0
        out = derive_columns(v)
        assert out.shape == (2, 31)
        np.testing.assert_allclose(out[:, INDEX["VAP"]] + out[:, INDEX["VAD"]],
                                   saturation_vapor_pressure(np.array([20.0, -5.0])))

    @settings(max_examples=50, deadline=None)
    @given(t=st.floats(-90, 60), rh=st.floats(0, 1))
    def test_deficit_nonnegative(self, t, rh):
        vap, vad = actual_vapor_pressure_and_deficit(t, rh)
        assert vap >= 0 and vad >= 0


class TestSeries:
    def test_longitude_wraps(self):
        np.testing.assert_allclose(normalize_longitude([180.0, -181.0, 540.0]), [-180.0, 179.0, -180.0])

    def test_series_validation(self):
        with pytest.raises(ValueError):
            WeatherSeries(np.zeros((5, 30)), 1, 0.0, 0.0, dt.date(2000, 1, 1))
        with pytest.raises(ValueError):
            WeatherSeries(np.zeros((5, 31)), 3, 0.0, 0.0, dt.date(2000, 1, 1))
        with pytest.raises(ValueError):
            WeatherSeries(np.ones((5, 31)), 1, 0.0, 0.0, dt.date(2000, 1, 1), valid_len=3)

    def test_padded(self):
        s = WeatherSeries(np.ones((5, 31)), 1, 10.0, 370.0, dt.date(2000, 1, 1))
        assert s.longitude == 10.0
        p = s.padded(8)
        assert p.valid_len == 5 and np.all(p.values[5:] == 0)

    def test_weekly_and_monthly(self):
        vals = np.arange(62, dtype=np.float64)[:, None] * np.ones((1, 31))
        s = WeatherSeries(vals, 1, 40.0, -90.0, dt.date(2001, 1, 1))
        w = aggregate(s, 7)
        assert len(w) == 8 and w.values[0, 0] == 3.0 and w.values[1, 0] == 10.0
        m = aggregate(s, 30)
        np.testing.assert_allclose(m.values[:, 0], [15.0, (31 + 58) / 2])

    def test_monthly_drops_leading_partial(self):
        s = WeatherSeries(np.ones((60, 31)), 1, 0.0, 0.0, dt.date(2001, 1, 15))
        m = aggregate(s, 30)
        assert m.start_date == dt.date(2001, 2, 1) and len(m) == 1

    def test_standardize_round_trip(self, rng):
        stats = StandardizationStats(rng.normal(size=31), rng.uniform(0.5, 2, 31))
        s = WeatherSeries(rng.normal(size=(10, 31)), 1, 0.0, 0.0, dt.date(2000, 1, 1))
        back = destandardize(standardize(s, stats), stats)
        np.testing.assert_allclose(back.values, s.values, atol=1e-5)
        with pytest.raises(ValueError):
            standardize(standardize(s, stats), stats)

    def test_stats_reject_zero_std(self):
        with pytest.raises(ValueError, match="positive"):
            StandardizationStats(np.zeros(31), np.zeros(31))

    def test_stats_use_train_tiles_only(self, rng):
        a, b = _tile(rng), _tile(rng, split="val")
        b.values[:] = 1000.0
        stats = compute_stats([a, b])
        assert np.all(np.abs(stats.mean) < 1)

    def test_split(self, rng):
        tiles = [_tile(rng, coords=1, tid=i) for i in range(10)]
        train, val = split_dataset(tiles, 0.2, 0)
        assert len(train) == 8 and len(val) == 2
        assert {t.tile_id for t in train} | {t.tile_id for t in val} == set(range(10))
        assert split_dataset(tiles, 0.2, 0)[1][0].tile_id == val[0].tile_id

    def test_impute_from_previous_year(self, rng):
        tile = _tile(rng, coords=1, years=(2001, 2002))
        tile.values[0, 365 + 10, 4] = np.nan
        out = impute_missing(tile)
        assert out.values[0, 365 + 10, 4] == tile.values[0, 10, 4]
        assert not out.has_missing()

    def test_impute_first_year_uses_climatology(self, rng):
        tile = _tile(rng, coords=1, years=(2001, 2002))
        tile.values[0, 10, 4] = np.nan
        out = impute_missing(tile)
        assert out.values[0, 10, 4] == pytest.approx(tile.values[0, 365 + 10, 4])

    def test_impute_all_missing(self, rng):
        tile = _tile(rng, coords=1)
        tile.values[0, :, 2] = np.nan
        with pytest.raises(ValueError):
            impute_missing(tile)


class TestStore:
    def test_round_trip(self, tmp_path, rng):
        tiles = [_tile(rng, tid=3), _tile(rng, split="val", tid=4)]
        back = read_store(write_store(tiles, tmp_path / "d.wfds"))
        for a, b in zip(tiles, back):
            assert a.bounds == b.bounds and a.split == b.split and a.tile_id == b.tile_id
            np.testing.assert_array_equal(a.values, b.values)
            np.testing.assert_array_equal(a.coords, b.coords)

    def test_corruption_detected(self, rng):
        blob = bytearray(encode_tiles([_tile(rng)]))
        blob[200] ^= 0xFF
        with pytest.raises(ChecksumError):
            decode_tiles(bytes(blob))

    @pytest.mark.parametrize("mangle", [lambda b: b[:-3], lambda b: b"XXXX" + b[4:], lambda b: b + b"\0"])
    def test_malformed(self, rng, mangle):
        with pytest.raises(StoreError):
            decode_tiles(mangle(encode_tiles([_tile(rng)])))


class TestPower:
    def test_fixture_tile(self):
        tile = power.fixture_tile()
        assert tile.values.shape == (1, 365, 31)
        t = tile.values[0, :, INDEX["T2M"]]
        assert -40 < np.nanmin(t) < np.nanmax(t) < 45

    def test_parse_fill_and_percent(self):
        body = json.dumps({"header": {"fill_value": -999.0}, "properties": {"parameter": {
            "RH2M": {"20010101": 55.0, "20010102": -999.0}}}}).encode()
        out = power.parse_point_response(body, ["RH2M"], dt.date(2001, 1, 1), dt.date(2001, 1, 2))
        assert out[0, 0] == pytest.approx(0.55) and np.isnan(out[1, 0])

    @pytest.mark.parametrize("payload,err", [
        ({"properties": {"parameter": {"X": {}}}}, power.SchemaError),
        ({"properties": {}}, power.SchemaError),
        ({"properties": {"parameter": {"T2M": {"20010101": 1.0}}}}, power.PartialYearError),
    ])
    def test_schema_errors(self, payload, err):
        with pytest.raises(err):
            power.parse_point_response(json.dumps(payload).encode(), ["T2M"], dt.date(2001, 1, 1),
                                       dt.date(2001, 1, 2))

    def test_offline_refuses_network(self):
        with pytest.raises(power.OfflineError):
            power._refuse_network("http://x", {})

    def test_endpoint_resolution(self, monkeypatch):
        monkeypatch.delenv(power.ENDPOINT_ENV, raising=False)
        assert power.resolve_endpoint() == power.DEFAULT_ENDPOINT
        assert power.resolve_endpoint({"power_url": "http://cfg"}) == "http://cfg"
        monkeypatch.setenv(power.ENDPOINT_ENV, "http://env")
        assert power.resolve_endpoint({"power_url": "http://cfg"}) == "http://env"

    def test_requests_are_chunked(self):
        calls = []
        replay = power.fixture_transport()

        def spy(url, params):
            calls.append(params["parameters"].count(",") + 1)
            return replay(url, params)

        power.fetch_point(42.0, -93.5, 2019, 2019, spy)
        assert calls == [20, 8]


class TestSynthetic:
    def test_deterministic_and_physical(self):
        spec = SyntheticSpec(n_tiles=2, coords_per_tile=4, start_year=2000, end_year=2000)
        a, b = generate_synthetic(spec, 5), generate_synthetic(spec, 5)
        np.testing.assert_array_equal(a[0].values, b[0].values)
        v = a[0].values.astype(np.float64)
        es = saturation_vapor_pressure(np.clip(v[..., INDEX["T2M"]], -90, 60))
        np.testing.assert_allclose(v[..., INDEX["VAP"]] + v[..., INDEX["VAD"]], es, rtol=1e-5)
        assert np.all(v[..., INDEX["T2M_MAX"]] > v[..., INDEX["T2M_MIN"]] - 5)

    def test_sequences(self):
        tiles = generate_synthetic(SyntheticSpec(n_tiles=1, coords_per_tile=2, start_year=2000, end_year=2001), 0)
        stats = compute_stats(tiles)
        weekly = sequences_from_tiles(tiles, 7, 52, stats, stride=26)
        assert weekly.x.shape[1:] == (52, 31) and set(weekly.granularity) == {7}
        daily = sequences_from_tiles(tiles, 1, 100)
        assert len(daily) == 2 * (731 // 100)
        assert np.all(np.diff(daily.start_day[::2]) == 100)

import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weatherformer import WeatherFormer, preset
from weatherformer.downstream import arima, epiweek, flu
from weatherformer.downstream.training import FLU_TRAINING, TrainConfig


@pytest.fixture(scope="module")
def series():
    return flu.synthetic_ili(seed=0)


class TestEpiweek:
    @pytest.mark.parametrize("year,start", [(2014, dt.date(2013, 12, 29)), (2015, dt.date(2015, 1, 4)),
                                            (2019, dt.date(2018, 12, 30)), (2021, dt.date(2021, 1, 3))])
    def test_year_start(self, year, start):
        assert epiweek.year_start(year) == start and start.weekday() == 6

    @pytest.mark.parametrize("year,n", [(2014, 53), (2015, 52), (2019, 52), (2020, 53)])
    def test_weeks_in_year(self, year, n):
        assert epiweek.weeks_in_year(year) == n

    def test_parse_and_shift(self):
        with pytest.raises(ValueError):
            epiweek.parse_epiweek(201953)
        assert epiweek.parse_epiweek(202053) == (2020, 53)
        assert epiweek.shift(2019, 52, 1) == (2020, 1)
        assert epiweek.shift(2020, 1, -1) == (2019, 52)

    @settings(max_examples=100, deadline=None)
    @given(day=st.dates(dt.date(1990, 1, 1), dt.date(2030, 12, 31)))
    def test_epiweek_contains_day(self, day):
        y, w = epiweek.epiweek_of(day)
        start = epiweek.week_start(y, w)
        assert start <= day < start + dt.timedelta(days=7)


class TestSeries:
    def test_validation(self):
        with pytest.raises(ValueError, match="consecutive"):
            flu.IliSeries([201901, 201903], [1.0, 1.0], [10.0, 10.0])
        with pytest.raises(ValueError, match="ILI"):
            flu.IliSeries([201901], [101.0], [10.0])

    def test_csv_round_trip(self, series, tmp_path):
        flu.write_ili_csv(tmp_path / "ili.csv", series)
        back = flu.read_ili_csv(tmp_path / "ili.csv", series.latitude, series.longitude)
        np.testing.assert_array_equal(back.weeks, series.weeks)
        np.testing.assert_array_equal(back.ili, series.ili)
        np.testing.assert_array_equal(back.temperature, series.temperature)

    def test_csv_missing_column(self, tmp_path):
        (tmp_path / "x.csv").write_text("epiweek,ili_percent\n201901,1.0\n")
        with pytest.raises(ValueError, match="num_patients"):
            flu.read_ili_csv(tmp_path / "x.csv")

    def test_synthetic_is_seasonal(self, series):
        weeks = series.weeks % 100
        winter = series.ili[(weeks >= 3) & (weeks <= 8)].mean()
        summer = series.ili[(weeks >= 27) & (weeks <= 32)].mean()
        assert winter > summer + 2.0


class TestTasks:
    @pytest.mark.parametrize("year", flu.VALIDATION_YEARS)
    def test_52_tasks_per_validation_year(self, series, year):
        split = [s for s in flu.sequential_splits(series) if s.validation_year == year][0]
        _, val = flu.split_tasks(series, split, 105)
        assert len(val) == 52
        assert all(t.horizon == 10 and len(t.target_rows) == 10 for t in val)

    def test_no_leak_everywhere(self, series):
        for split in flu.sequential_splits(series):
            train, val = flu.split_tasks(series, split, 110)
            for t in train + val:
                flu.assert_no_leak(t, t.input_rows)
                assert t.input_rows.stop - 1 == t.origin < t.target_rows.start
            assert max(t.target_rows.stop - 1 for t in train) <= split.train_end
            years = series.years()
            assert min(years[t.input_rows.start] for t in train) >= flu.FIRST_TRAIN_YEAR

    def test_leak_detected(self):
        task = flu.ForecastTask(origin=20, window=5)
        with pytest.raises(AssertionError):
            flu.assert_no_leak(task, range(16, 22))

    def test_splits(self, series):
        splits = flu.sequential_splits(series)
        assert [s.validation_year for s in splits] == [2016, 2017, 2018, 2019]
        assert splits[0].train_years == tuple(range(2010, 2016))

    def test_splits_need_six_seasons(self, series):
        with pytest.raises(ValueError):
            flu.sequential_splits(series, validation_years=(2015,))

    def test_rolling_too_short(self, series):
        with pytest.raises(ValueError):
            flu.rolling_tasks(series.slice(0, 50), 45, 10)


class TestMetrics:
    def test_mae_hand_fixture(self):
        f = np.array([[1.0, 2.0, 3.0], [2.0, 2.0, 2.0]])
        t = np.array([[1.5, 2.0, 0.0], [1.0, 4.0, 2.5]])
        assert flu.mae_at_horizons(f, t, offsets=(1, 2, 3)) == pytest.approx({1: 0.75, 2: 1.0, 3: 1.75}, abs=1e-12)
        grouped = flu.mae_at_horizons(np.vstack([f, f[:1]]), np.vstack([t, t[:1] + 1.0]), offsets=(1,),
                                      groups=[0, 0, 1])
        # group 0: 0.75; group 1: |1 - 2.5| = 1.5
        assert grouped[1] == pytest.approx(1.125, abs=1e-12)

    def test_mae_bad_offset(self):
        with pytest.raises(ValueError):
            flu.mae_at_horizons(np.zeros((2, 3)), np.zeros((2, 3)), offsets=(4,))


class TestBaselines:
    def test_lagged_linear_recovers_ar(self):
        rng = np.random.default_rng(0)
        y = np.zeros(400)
        for t in range(1, 400):
            y[t] = 0.5 + 0.6 * y[t - 1] + 0.01 * rng.standard_normal()
        model = flu.LaggedLinearForecaster(lags=1, horizon=2).fit(y)
        np.testing.assert_allclose(model.forecast([1.0]), [1.1, 0.5 + 0.6 * 1.1], atol=0.02)

    def test_arima_task_forecasts_use_history_only(self, series):
        tasks = flu.rolling_tasks(series, 105, target_year=2016)[:2]
        out = flu.arima_forecasts(series, tasks, arima.ArimaConfig(p=2, d=1, q=1))
        assert out.shape == (2, 10) and np.isfinite(out).all()

    def test_baseline_split(self, series):
        split = flu.sequential_splits(series)[0]
        res = flu.run_baseline_split(series, split, "linreg", 105)
        assert res.forecasts.shape == (52, 10)
        with pytest.raises(ValueError):
            flu.run_baseline_split(series, split, "prophet", 105)


class TestArima:
    def test_random_walk_is_last_value(self):
        y, _ = arima.simulate_arima(200, d=1, seed=1)
        fc = arima.arima_fit_forecast(y, arima.ArimaConfig(0, 1, 0), 5)
        np.testing.assert_allclose(fc, y[-1], atol=1e-12)

    def test_ar1_recovery(self):
        y, _ = arima.simulate_arima(2000, phi=[0.5], d=0, seed=3)
        fit = arima.arima_fit(y, arima.ArimaConfig(1, 0, 0))
        assert fit.phi[0] == pytest.approx(0.5, abs=0.05)

    def test_ar1_forecast_decays_to_mean(self):
        y = np.array([0.0, 1.0, 0.0, 1.0] * 30)
        fit = arima.arima_fit(y, arima.ArimaConfig(1, 0, 0))
        assert fit.phi[0] == pytest.approx(-1.0, abs=0.05)

    def test_forecast_recursion(self):
        fit = arima.ArimaFit(arima.ArimaConfig(1, 1, 1), np.array([0.5]), np.array([0.3]), 0.0, 1.0,
                             np.array([0.0, 1.0, 3.0]), np.array([0.4, 0.2]))
        # w = [1, 2]; w3 = 0.5*2 + 0.3*0.2 = 1.06; w4 = 0.53; levels 4.06, 4.59
        np.testing.assert_allclose(fit.forecast(2), [4.06, 4.59], atol=1e-12)

    def test_too_short(self):
        with pytest.raises(arima.ArimaError):
            arima.arima_fit(np.arange(50.0), arima.ArimaConfig(54, 1, 1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            arima.ArimaConfig(d=3)

    def test_one_step_errors_match_innovations(self):
        y, eps = arima.simulate_arima(300, phi=[0.6], theta=[0.2], d=1, seed=5)
        fit = arima.ArimaFit(arima.ArimaConfig(1, 1, 1), np.array([0.6]), np.array([0.2]), 0.0, 1.0, y, np.zeros(1))
        err = fit.one_step_errors(y)
        # with the true coefficients the errors converge to the innovations
        np.testing.assert_allclose(err[100:], eps[102:], atol=1e-6)


class TestTransformer:
    def test_protocol_constants(self):
        cfg = FLU_TRAINING
        assert (cfg.epochs, cfg.base_lr, cfg.warmup, cfg.decay) == (30, 9e-4, 5, 0.95)
        assert flu.WINDOWS == (105, 110, 115, 120, 125, 130, 135)
        assert arima.ArimaConfig() == arima.ArimaConfig(p=54, d=1, q=1)

    def test_zero_output_is_persistence(self, series):
        split = flu.sequential_splits(series)[0]
        _, val = flu.split_tasks(series, split, 105)
        norm = flu.FluNormalizer.fit(series, split.train_end)
        batch = flu.build_flu_batch(series, val, norm)
        model = flu.FluTransformer("no-weather", np.random.default_rng(0), norm, d_model=16, n_layers=1)
        pred = model.predict(batch)
        np.testing.assert_allclose(pred[:, 0], [series.ili[t.origin] for t in val], atol=1e-5)

    @pytest.mark.parametrize("cumulative", [True, False])
    def test_first_step_anchored_on_last_value(self, series, cumulative):
        split = flu.sequential_splits(series)[0]
        _, val = flu.split_tasks(series, split, 105)
        norm = flu.FluNormalizer.fit(series, split.train_end)
        batch = flu.build_flu_batch(series, val[:4], norm)
        model = flu.FluTransformer("weather", np.random.default_rng(0), norm, d_model=16, n_layers=1,
                                   cumulative=cumulative)
        model.out.bias.data[:] = 0.0
        np.testing.assert_allclose(model.predict(batch)[:, 0], batch.last_ili, atol=1e-5)

    def test_variant_checks(self, series):
        norm = flu.FluNormalizer.fit(series, 300)
        with pytest.raises(ValueError):
            flu.FluTransformer("wf", np.random.default_rng(0), norm)
        with pytest.raises(ValueError):
            flu.FluTransformer("lstm", np.random.default_rng(0), norm)

    def test_window_mismatch(self, series):
        norm = flu.FluNormalizer.fit(series, 300)
        model = flu.FluTransformer("no-weather", np.random.default_rng(0), norm, d_model=16, n_layers=1, window=110)
        batch = flu.build_flu_batch(series, flu.rolling_tasks(series, 105)[:2], norm)
        with pytest.raises(ValueError, match="window"):
            model.predict(batch)

    def test_wf_variant_trains(self, series):
        split = flu.sequential_splits(series)[0]
        res = flu.run_transformer_split(series, split, "wf", 105, 0,
                                        TrainConfig(epochs=1, batch_size=64, base_lr=1e-3, warmup=0, decay=0.95),
                                        wf=WeatherFormer(preset("tiny"), seed=0), d_model=16, n_layers=1)
        assert set(res.mae) == {1, 5, 10} and res.forecasts.shape == (52, 10)
        assert res.fit.best_metric == pytest.approx(np.mean(np.abs(res.forecasts - res.truth)), rel=1e-9)

    @pytest.mark.slow
    def test_weather_helps_at_ten_weeks(self, series):
        split = flu.sequential_splits(series)[0]
        mae = {"no-weather": [], "weather": []}
        for seed in range(3):
            for variant in mae:
                res = flu.run_transformer_split(series, split, variant, 105, seed, FLU_TRAINING, d_model=32,
                                                n_layers=2)
                mae[variant].append(res.mae[10])
        assert np.mean(mae["weather"]) <= np.mean(mae["no-weather"])

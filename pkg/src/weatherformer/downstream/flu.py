"""Rolling-origin influenza-like-illness (ILI) forecasting for one city.

Every task observes a window of ``W`` weeks ending at the origin and
forecasts the next 10 weeks. Models never see data after the origin.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..autodiff import as_tensor, no_grad, ops
from ..model import WeatherFormer, encoding_batch
from ..nn import Linear, Module, TransformerEncoder
from ..weather.catalog import INDEX, N_MEASUREMENTS
from ..weather.meteo import derive_columns
from ..weather.series import EPOCH, StandardizationStats, days_since_epoch
from ..weather.synthetic import _primaries
from . import epiweek
from .arima import ArimaConfig, arima_fit_forecast
from .training import FLU_TRAINING, FitResult, TrainConfig, fit, lstsq_fit, lstsq_predict

HORIZON = 10
WINDOWS = tuple(range(105, 136, 5))
VALIDATION_YEARS = (2016, 2017, 2018, 2019)
FIRST_TRAIN_YEAR = 2010
LAST_YEAR = 2020
REPORT_OFFSETS = (1, 5, 10)
VARIANTS = ("no-weather", "weather", "wf")
T2M = INDEX["T2M"]


# --------------------------------------------------------------------------
# data

@dataclass
class IliSeries:
    """Consecutive epiweeks with ILI percent, patient counts and weekly
    mean temperature (deg C). ``weather`` optionally holds more weekly
    channels as (n, k)."""

    weeks: np.ndarray  # YYYYWW codes
    ili: np.ndarray
    patients: np.ndarray
    temperature: Optional[np.ndarray] = None
    weather: Optional[np.ndarray] = None
    latitude: float = 40.7
    longitude: float = -74.0
    _starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weeks = np.asarray(self.weeks, dtype=np.int64)
        self.ili = np.asarray(self.ili, dtype=np.float64)
        self.patients = np.asarray(self.patients, dtype=np.float64)
        n = len(self.weeks)
        if self.ili.shape != (n,) or self.patients.shape != (n,):
            raise ValueError("ili and patients must align with weeks")
        if n == 0:
            raise ValueError("empty series")
        if not ((self.ili >= 0) & (self.ili <= 100)).all():
            raise ValueError("ILI percent must lie in [0, 100]")
        if self.temperature is not None:
            self.temperature = np.asarray(self.temperature, dtype=np.float64).reshape(n)
        if self.weather is not None:
            self.weather = np.asarray(self.weather, dtype=np.float64).reshape(n, -1)
        starts = np.array([days_since_epoch(epiweek.week_start(*epiweek.parse_epiweek(w))) for w in self.weeks])
        if n > 1 and not (np.diff(starts) == 7).all():
            raise ValueError("weeks must be strictly consecutive")
        self._starts = starts

    def __len__(self) -> int:
        return len(self.weeks)

    @property
    def start_days(self) -> np.ndarray:
        """Absolute day index (days since 1984-01-01) of each week's Sunday."""
        return self._starts

    def years(self) -> np.ndarray:
        return self.weeks // 100

    def slice(self, lo: int, hi: int) -> "IliSeries":
        pick = lambda a: None if a is None else a[lo:hi]  # noqa: E731
        return IliSeries(self.weeks[lo:hi], self.ili[lo:hi], self.patients[lo:hi], pick(self.temperature),
                         pick(self.weather), self.latitude, self.longitude)

    def until_year(self, last_year: int) -> "IliSeries":
        return self.slice(0, int(np.searchsorted(self.years(), last_year, side="right")))


def read_ili_csv(path, latitude: float = 40.7, longitude: float = -74.0) -> IliSeries:
    """Columns ``epiweek`` (YYYYWW), ``ili_percent``, ``num_patients`` and an
    optional ``temperature``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("ILI CSV has no rows")
    for col in ("epiweek", "ili_percent", "num_patients"):
        if col not in rows[0]:
            raise ValueError(f"ILI CSV is missing column {col!r}")
    rows.sort(key=lambda r: int(r["epiweek"]))
    temp = [float(r["temperature"]) for r in rows] if "temperature" in rows[0] else None
    return IliSeries([int(r["epiweek"]) for r in rows], [float(r["ili_percent"]) for r in rows],
                     [float(r["num_patients"]) for r in rows], temp, None, latitude, longitude)


def write_ili_csv(path, series: IliSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["epiweek", "ili_percent", "num_patients"]
        if series.temperature is not None:
            header.append("temperature")
        w.writerow(header)
        for i in range(len(series)):
            row = [int(series.weeks[i]), repr(float(series.ili[i])), repr(float(series.patients[i]))]
            if series.temperature is not None:
                row.append(repr(float(series.temperature[i])))
            w.writerow(row)


# --------------------------------------------------------------------------
# tasks and splits

@dataclass(frozen=True)
class ForecastTask:
    """Inputs are rows ``origin - window + 1 .. origin``; targets are rows
    ``origin + 1 .. origin + horizon``."""

    origin: int
    window: int
    horizon: int = HORIZON

    @property
    def input_rows(self) -> range:
        return range(self.origin - self.window + 1, self.origin + 1)

    @property
    def target_rows(self) -> range:
        return range(self.origin + 1, self.origin + 1 + self.horizon)


def rolling_tasks(series: IliSeries, window: int, horizon: int = HORIZON, target_year: Optional[int] = None,
                  last_target_row: Optional[int] = None) -> list:
    """One task per origin, advancing one week at a time.

    ``target_year`` keeps tasks whose first target week lies in that year;
    ``last_target_row`` drops tasks whose horizon reaches past that row.
    """
    n = len(series)
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be positive")
    if n < window + horizon:
        raise ValueError(f"series of {n} weeks is shorter than window + horizon = {window + horizon}")
    end = n - 1 if last_target_row is None else min(last_target_row, n - 1)
    years = series.years()
    tasks = []
    for origin in range(window - 1, end - horizon + 1):
        if target_year is not None and years[origin + 1] != target_year:
            continue
        tasks.append(ForecastTask(origin, window, horizon))
    return tasks


def assert_no_leak(task: ForecastTask, input_rows: Sequence[int]) -> None:
    """Every row a model reads must lie at or before the origin."""
    rows = np.asarray(list(input_rows))
    if rows.size and rows.max() > task.origin:
        raise AssertionError(f"task at origin {task.origin} reads row {rows.max()}")


@dataclass(frozen=True)
class FluSplit:
    validation_year: int
    train_years: tuple
    train_end: int  # last row index of the training period
    val_rows: tuple  # (first, last) row index of the validation year


def sequential_splits(series: IliSeries, validation_years=VALIDATION_YEARS,
                      first_year: int = FIRST_TRAIN_YEAR) -> list:
    """Train on ``first_year .. Y-1`` and validate on ``Y`` for each Y."""
    years = series.years()
    needed = set(range(first_year, max(validation_years) + 1))
    if not needed <= set(years.tolist()):
        raise ValueError(f"series must cover {first_year}..{max(validation_years)} "
                         f"(at least six seasons before the first validation year)")
    if min(validation_years) - first_year < 6:
        raise ValueError("need at least six training seasons")
    splits = []
    for y in validation_years:
        rows = np.flatnonzero(years == y)
        train_end = int(np.flatnonzero(years == y - 1)[-1])
        splits.append(FluSplit(y, tuple(range(first_year, y)), train_end, (int(rows[0]), int(rows[-1]))))
    return splits


def split_tasks(series: IliSeries, split: FluSplit, window: int, horizon: int = HORIZON) -> tuple:
    """(training tasks, validation tasks) for one split.

    Training tasks start no earlier than the first training year and end
    before the validation year; validation tasks have their first target
    week in the validation year.
    """
    first = int(np.flatnonzero(series.years() >= split.train_years[0])[0])
    train = [t for t in rolling_tasks(series, window, horizon, last_target_row=split.train_end)
             if t.input_rows.start >= first]
    val = rolling_tasks(series, window, horizon, target_year=split.validation_year)
    return train, val


# --------------------------------------------------------------------------
# evaluation

def mae_at_horizons(forecasts, truth, offsets=REPORT_OFFSETS, groups=None) -> dict:
    """MAE at each horizon offset (1-based).

    With ``groups`` (e.g. the validation year of each task) the MAE is taken
    per group and then averaged over groups.
    """
    f = np.asarray(forecasts, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if f.shape != t.shape or f.ndim != 2:
        raise ValueError("forecasts and truth must be matching (tasks, horizon) arrays")
    for k in offsets:
        if not 1 <= k <= f.shape[1]:
            raise ValueError(f"horizon offset {k} outside 1..{f.shape[1]}")
    err = np.abs(f - t)
    if groups is None:
        return {k: float(err[:, k - 1].mean()) for k in offsets}
    groups = np.asarray(groups)
    labels = np.unique(groups)
    return {k: float(np.mean([err[groups == g, k - 1].mean() for g in labels])) for k in offsets}


# --------------------------------------------------------------------------
# baselines

class LaggedLinearForecaster:
    """One least-squares regressor per horizon step on the last ``lags``
    ILI values (plus an intercept)."""

    def __init__(self, lags: int = 8, horizon: int = HORIZON):
        if lags < 1:
            raise ValueError("lags must be >= 1")
        self.lags = lags
        self.horizon = horizon
        self.coef: list = []

    def design(self, ili: np.ndarray) -> tuple:
        ili = np.asarray(ili, dtype=np.float64)
        origins = np.arange(self.lags - 1, len(ili) - self.horizon)
        if not len(origins):
            raise ValueError("training series too short for the lag and horizon")
        x = np.stack([ili[o - self.lags + 1:o + 1] for o in origins])
        y = np.stack([ili[o + 1:o + 1 + self.horizon] for o in origins])
        return x, y

    def fit(self, ili) -> "LaggedLinearForecaster":
        x, y = self.design(ili)
        self.coef = [lstsq_fit(x, y[:, h]) for h in range(self.horizon)]
        return self

    def forecast(self, history) -> np.ndarray:
        if not self.coef:
            raise RuntimeError("model is not fitted")
        h = np.asarray(history, dtype=np.float64)
        if len(h) < self.lags:
            raise ValueError(f"need at least {self.lags} weeks of history")
        x = h[-self.lags:].reshape(1, -1)
        return np.array([float(lstsq_predict(c, x)[0]) for c in self.coef])


def arima_forecasts(series: IliSeries, tasks: Sequence[ForecastTask], config: ArimaConfig = ArimaConfig()) -> np.ndarray:
    """Refit per task on every week up to the origin (an expanding window;
    54 lags cannot be estimated from a 105-week window alone)."""
    out = []
    for task in tasks:
        rows = range(0, task.origin + 1)
        assert_no_leak(task, rows)
        out.append(arima_fit_forecast(series.ili[rows.start:rows.stop], config, task.horizon))
    return np.array(out)


# --------------------------------------------------------------------------
# transformer forecasters

@dataclass
class FluNormalizer:
    ili_mean: float
    ili_std: float
    patients_mean: float
    patients_std: float
    temp_mean: float
    temp_std: float

    @classmethod
    def fit(cls, series: IliSeries, last_row: int) -> "FluNormalizer":
        sl = slice(0, last_row + 1)
        temp = series.temperature[sl] if series.temperature is not None else np.zeros(1)
        std = lambda a: float(a.std()) or 1.0  # noqa: E731
        return cls(float(series.ili[sl].mean()), std(series.ili[sl]), float(series.patients[sl].mean()),
                   std(series.patients[sl]), float(temp.mean()), std(temp))


@dataclass
class FluBatch:
    ili: np.ndarray  # B, W standardized
    patients: np.ndarray  # B, W standardized
    temperature: Optional[np.ndarray]  # B, W standardized (model input scale)
    start_day: np.ndarray  # B
    last_ili: np.ndarray  # B raw
    target: Optional[np.ndarray]  # B, H raw
    latitude: float = 40.7
    longitude: float = -74.0

    def __len__(self) -> int:
        return len(self.ili)

    def subset(self, idx) -> "FluBatch":
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return FluBatch(self.ili[idx], self.patients[idx], pick(self.temperature), self.start_day[idx],
                        self.last_ili[idx], pick(self.target), self.latitude, self.longitude)


def build_flu_batch(series: IliSeries, tasks: Sequence[ForecastTask], norm: FluNormalizer,
                    temp_scale: Optional[tuple] = None, with_target: bool = True) -> FluBatch:
    """Assemble model inputs; only rows in each task's input window are read.

    ``temp_scale`` = (mean, std) overrides the temperature standardization,
    e.g. to match the statistics a pretrained encoder was trained with.
    """
    if not tasks:
        raise ValueError("no tasks")
    idx = []
    for t in tasks:
        assert_no_leak(t, t.input_rows)
        idx.append(np.arange(t.input_rows.start, t.input_rows.stop))
    idx = np.stack(idx)
    temp = None
    if series.temperature is not None:
        tm, ts = temp_scale or (norm.temp_mean, norm.temp_std)
        temp = (series.temperature[idx] - tm) / ts
    target = np.stack([series.ili[t.target_rows.start:t.target_rows.stop] for t in tasks]) if with_target else None
    return FluBatch((series.ili[idx] - norm.ili_mean) / norm.ili_std,
                    (series.patients[idx] - norm.patients_mean) / norm.patients_std, temp,
                    series.start_days[idx[:, 0]], series.ili[idx[:, -1]], target, series.latitude, series.longitude)


class FluTransformer(Module):
    """Transformer over the input window; the last position emits 10 values.

    Forecast composition (``cumulative=True``): step k = last ILI +
    ili_std * sum of the first k outputs. With ``cumulative=False`` only the
    first step is anchored on the last ILI and later steps are read as
    standardized levels.

    Variants: ``no-weather`` (ILI, patients), ``weather`` (+ raw standardized
    temperature) and ``wf`` (+ WeatherFormer outputs for a 31-wide input
    with only the T2M slot unmasked).
    """

    def __init__(self, variant: str, rng: np.random.Generator, norm: FluNormalizer, wf: Optional[WeatherFormer] = None,
                 d_model: int = 64, n_heads: int = 4, n_layers: int = 3, horizon: int = HORIZON,
                 cumulative: bool = True, window: int = WINDOWS[0], dropout: float = 0.0):
        if variant not in VARIANTS:
            raise ValueError(f"unknown flu variant {variant!r}; choose from {VARIANTS}")
        if variant == "wf" and wf is None:
            raise ValueError("the wf variant needs a WeatherFormer encoder")
        self.variant = variant
        self.norm = norm
        self.window = window
        self.cumulative = cumulative
        self.d_model = d_model
        self.wf = wf if variant == "wf" else None
        in_dim = 2 + {"no-weather": 0, "weather": 1, "wf": wf.config.out_dim if wf else 0}[variant]
        self.inp = Linear(in_dim, d_model, rng)
        self.encoder = TransformerEncoder(d_model, n_heads, n_layers, 2 * d_model, rng, dropout)
        self.out = Linear(d_model, horizon, rng)
        self.out.weight.data[:] = 0  # start from the persistence forecast

    def weather_mask(self) -> np.ndarray:
        m = np.zeros(N_MEASUREMENTS, dtype=bool)
        m[T2M] = True
        return m

    def head(self, batch: FluBatch):
        b, w = batch.ili.shape
        if w != self.window:
            raise ValueError(f"model expects a {self.window}-week window, got {w}")
        parts = [as_tensor(batch.ili[..., None]), as_tensor(batch.patients[..., None])]
        if self.variant != "no-weather":
            if batch.temperature is None:
                raise ValueError(f"variant {self.variant!r} needs temperature")
        if self.variant == "weather":
            parts.append(as_tensor(batch.temperature[..., None]))
        elif self.variant == "wf":
            x = np.zeros((b, w, N_MEASUREMENTS))
            x[..., T2M] = batch.temperature
            parts.append(self.wf.forward(x, batch.start_day, 7, np.full(b, batch.latitude),
                                         np.full(b, batch.longitude), self.weather_mask()))
        h = self.inp(ops.concat(parts, axis=2))
        pe = encoding_batch(batch.start_day, np.full(b, 7), np.full(b, batch.latitude), np.full(b, batch.longitude),
                            w, self.d_model)
        h = self.encoder(h + pe.astype(h.dtype))
        return self.out(h[:, w - 1, :])

    def forward(self, batch: FluBatch):
        """Forecasts in ILI percent, shape (B, horizon)."""
        out = self.head(batch)
        b, hz = out.shape
        last = batch.last_ili.reshape(b, 1)
        if self.cumulative:
            steps = np.tril(np.ones((hz, hz))).T  # cumulative sum as a matmul
            return ops.matmul(out, steps) * self.norm.ili_std + last
        anchor = np.zeros((b, hz))
        anchor[:, 0] = batch.last_ili
        level = np.full((1, hz), self.norm.ili_mean)
        level[0, 0] = 0.0
        scale = np.full((1, hz), self.norm.ili_std)
        return out * scale + anchor + level

    def loss(self, batch: FluBatch):
        return ops.mse(self.forward(batch) * (1.0 / self.norm.ili_std), batch.target / self.norm.ili_std)

    def predict(self, batch: FluBatch, chunk: int = 128) -> np.ndarray:
        with no_grad():
            return np.concatenate([self.forward(batch.subset(slice(lo, lo + chunk))).data
                                   for lo in range(0, len(batch), chunk)]).astype(np.float64)


@dataclass
class SplitResult:
    validation_year: int
    mae: dict
    forecasts: np.ndarray
    truth: np.ndarray
    fit: Optional[FitResult] = None


def run_transformer_split(series: IliSeries, split: FluSplit, variant: str, window: int, seed: int,
                          config: TrainConfig = FLU_TRAINING, wf: Optional[WeatherFormer] = None,
                          temp_scale: Optional[tuple] = None, cumulative: bool = True, log=None,
                          **model_kwargs) -> SplitResult:
    """Train on the split's training tasks; select the epoch by validation
    +10-week MAE; report MAE at +1/+5/+10."""
    train_tasks, val_tasks = split_tasks(series, split, window)
    norm = FluNormalizer.fit(series, split.train_end)
    train = build_flu_batch(series, train_tasks, norm, temp_scale)
    val = build_flu_batch(series, val_tasks, norm, temp_scale)
    model = FluTransformer(variant, np.random.default_rng([seed, 31]), norm, wf, cumulative=cumulative,
                           window=window, **model_kwargs)

    def metric():
        return float(np.mean(np.abs(model.predict(val) - val.target)))

    fr = fit(model, lambda idx: model.loss(train.subset(idx)), len(train), metric,
             dataclasses.replace(config, seed=seed), log)
    pred = model.predict(val)
    return SplitResult(split.validation_year, mae_at_horizons(pred, val.target), pred, val.target, fr)


def run_baseline_split(series: IliSeries, split: FluSplit, method: str, window: int,
                       arima: ArimaConfig = ArimaConfig(), lags: int = 8) -> SplitResult:
    _, val_tasks = split_tasks(series, split, window)
    truth = np.stack([series.ili[t.target_rows.start:t.target_rows.stop] for t in val_tasks])
    if method == "arima":
        pred = arima_forecasts(series, val_tasks, arima)
    elif method == "linreg":
        model = LaggedLinearForecaster(lags).fit(series.ili[:split.train_end + 1])
        pred = []
        for t in val_tasks:
            assert_no_leak(t, t.input_rows)
            pred.append(model.forecast(series.ili[t.input_rows.start:t.input_rows.stop]))
        pred = np.array(pred)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    return SplitResult(split.validation_year, mae_at_horizons(pred, truth), pred, truth)


def average_splits(results: Sequence[SplitResult]) -> dict:
    """MAE at each offset averaged over validation years."""
    return {k: float(np.mean([r.mae[k] for r in results])) for k in results[0].mae}


# --------------------------------------------------------------------------
# synthetic city

def synthetic_ili(seed: int = 0, first_year: int = 2008, last_year: int = LAST_YEAR, latitude: float = 40.5,
                  longitude: float = -74.0, weather_effect: float = 1.0, noise: float = 0.1) -> IliSeries:
    """Weekly ILI with a winter epidemic modulated by temperature anomalies.

    Temperature comes from the synthetic weather generator plus a slow
    anomaly (about two months of memory). ILI follows a fixed seasonal bump
    peaking in early February whose height grows when the trailing
    four-week temperature anomaly is cold, so recent weather carries
    information the ILI history alone does not.
    """
    rng = np.random.default_rng(seed)
    start = epiweek.year_start(first_year)
    end = epiweek.year_start(last_year + 1)
    n = (end - start).days // 7
    day = np.arange(n * 7, dtype=np.float64) + (start - EPOCH).days
    offset = rng.normal(size=5) * 0.5
    slow = np.convolve(rng.normal(size=n + 16), np.ones(8) / np.sqrt(8), "valid")[:n]
    daily = _primaries(day, latitude, offset, 0.3, rng)
    daily[:, INDEX["T2M"]] += np.repeat(2.5 * slow, 7)
    weekly = derive_columns(daily).reshape(n, 7, N_MEASUREMENTS).mean(axis=1)
    temp = weekly[:, T2M]
    doy = (np.arange(n) * 7.0 + (start - dt.date(start.year, 1, 1)).days) % 365.25
    lag = np.minimum(np.abs(doy - 38.0), 365.25 - np.abs(doy - 38.0))
    bump = np.exp(-0.5 * (lag / 35.0) ** 2)
    anomaly = np.convolve(slow, np.ones(4) / 4, "full")[:n]
    height = 4.0 * np.exp(-0.35 * weather_effect * anomaly)
    wiggle = np.zeros(n)
    for t in range(1, n):
        wiggle[t] = 0.8 * wiggle[t - 1] + noise * rng.standard_normal()
    ili = np.clip(1.0 + height * bump + wiggle + 0.3 * wiggle * bump, 0.1, 30.0)
    patients = np.round(20000 + 3000 * np.sin(2 * np.pi * doy / 365.25) + 500 * rng.standard_normal(n))
    weeks = [epiweek.format_epiweek(*epiweek.epiweek_of(start + dt.timedelta(weeks=k))) for k in range(n)]
    return IliSeries(weeks, ili, patients, temp, weekly, latitude, longitude)


def temperature_scale(stats: StandardizationStats) -> tuple:
    return float(stats.mean[T2M]), float(stats.std[T2M])

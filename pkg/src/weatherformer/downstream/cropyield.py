"""County-level crop-yield prediction.

Five model variants share one input pipeline:

* ``linear``: least squares on flattened features.
* ``cnn-rnn``: soil CNN + temporal weather CNN per year, LSTM over years.
* ``cnn-transformer``: as above with a transformer encoder over years.
* ``wf-linear``: WeatherFormer per year, pooled to 120 dims, one linear head.
* ``wf-transformer``: the WF-Linear blocks fed to a transformer over years.

Yields are in Bu/Acre. Weather is weekly (52 weeks x 6 variables) and is
placed into the matching slots of the 31-measurement WeatherFormer input.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..autodiff import Tensor, as_tensor, no_grad, ops
from ..model import WeatherFormer, encoding_batch
from ..nn import LSTM, Conv1d, Linear, Module, TransformerEncoder
from ..weather.catalog import INDEX, N_MEASUREMENTS
from ..weather.meteo import derive_columns
from ..weather.series import EPOCH, StandardizationStats, aggregate_values, days_since_epoch
from ..weather.synthetic import _primaries
from .training import YIELD_TRAINING, FitResult, TrainConfig, fit, lstsq_fit, lstsq_predict, rmse

WEATHER_VARS = ("precip", "solar", "snow", "tmax", "tmin", "vp")
WEATHER_SLOTS = {
    "precip": "PRECTOTCORR",
    "solar": "ALLSKY_SFC_SW_DWN",
    "snow": "SNODP",
    "tmax": "T2M_MAX",
    "tmin": "T2M_MIN",
    "vp": "VAP",
}
SLOT_INDEX = np.array([INDEX[WEATHER_SLOTS[v]] for v in WEATHER_VARS])
N_WEEKS = 52
N_SOIL_PROPS = 10
N_SOIL_DEPTHS = 6
SOIL_FEATURES = 40
YEAR_FEATURES = 120
VARIANTS = ("linear", "cnn-rnn", "cnn-transformer", "wf-linear", "wf-transformer")
DEFAULT_HISTORY = {"linear": 1, "cnn-rnn": 7, "cnn-transformer": 7, "wf-linear": 3, "wf-transformer": 7}
N_STATES = 9


def feature_mask() -> np.ndarray:
    m = np.zeros(N_MEASUREMENTS, dtype=bool)
    m[SLOT_INDEX] = True
    return m


# --------------------------------------------------------------------------
# data

@dataclass
class YieldData:
    """One row per county-year.

    weather: (S, 52, 6) raw units; soil: (S, 10, 6); practices: (S, P).
    """

    county: np.ndarray
    state: np.ndarray
    year: np.ndarray
    latitude: np.ndarray
    longitude: np.ndarray
    weather: np.ndarray
    soil: np.ndarray
    practices: np.ndarray
    yield_: np.ndarray

    def __post_init__(self):
        s = len(self.county)
        self.county = np.asarray(self.county, dtype=np.int64)
        self.state = np.asarray(self.state, dtype=np.int64)
        self.year = np.asarray(self.year, dtype=np.int64)
        self.latitude = np.asarray(self.latitude, dtype=np.float64)
        self.longitude = np.asarray(self.longitude, dtype=np.float64)
        self.weather = np.asarray(self.weather, dtype=np.float64)
        self.soil = np.asarray(self.soil, dtype=np.float64)
        self.practices = np.asarray(self.practices, dtype=np.float64).reshape(s, -1)
        self.yield_ = np.asarray(self.yield_, dtype=np.float64)
        if self.weather.shape != (s, N_WEEKS, len(WEATHER_VARS)):
            raise ValueError(f"weather must be (S, {N_WEEKS}, {len(WEATHER_VARS)})")
        if self.soil.shape != (s, N_SOIL_PROPS, N_SOIL_DEPTHS):
            raise ValueError(f"soil must be (S, {N_SOIL_PROPS}, {N_SOIL_DEPTHS})")
        for name in ("state", "year", "latitude", "longitude", "yield_"):
            if getattr(self, name).shape != (s,):
                raise ValueError(f"{name} must have one entry per row")
        keys = list(zip(self.county.tolist(), self.year.tolist()))
        if len(set(keys)) != s:
            raise ValueError("duplicate county-year rows")
        self._rows = {k: i for i, k in enumerate(keys)}

    def __len__(self) -> int:
        return len(self.county)

    @property
    def n_practices(self) -> int:
        return self.practices.shape[1]

    def row(self, county: int, year: int) -> Optional[int]:
        return self._rows.get((int(county), int(year)))

    def states(self) -> np.ndarray:
        return np.unique(self.state)

    def anchors(self, history: int, states: Optional[Sequence[int]] = None) -> np.ndarray:
        """Rows whose ``history`` years and the previous year's yield exist."""
        if history < 1:
            raise ValueError("history must be >= 1")
        keep = []
        for i in range(len(self)):
            if states is not None and self.state[i] not in states:
                continue
            c, y = self.county[i], self.year[i]
            years = range(y - history + 1, y + 1)
            if all(self.row(c, k) is not None for k in years) and self.row(c, y - 1) is not None:
                keep.append(i)
        return np.array(keep, dtype=np.int64)


WEATHER_COLUMNS = [f"{v}_w{w + 1}" for v in WEATHER_VARS for w in range(N_WEEKS)]
SOIL_COLUMNS = [f"soil_p{p + 1}_d{d + 1}" for p in range(N_SOIL_PROPS) for d in range(N_SOIL_DEPTHS)]


def write_yield_csv(path, data: YieldData) -> None:
    """Columns: county, state, year, lat, lng, 312 weather (variable-major),
    60 soil (property-major), practice_1..P, yield."""
    practice_cols = [f"practice_{k + 1}" for k in range(data.n_practices)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["county", "state", "year", "lat", "lng", *WEATHER_COLUMNS, *SOIL_COLUMNS, *practice_cols, "yield"])
        for i in range(len(data)):
            w.writerow([int(data.county[i]), int(data.state[i]), int(data.year[i]), repr(float(data.latitude[i])), repr(float(data.longitude[i])),
                        *map(repr, data.weather[i].T.reshape(-1).tolist()),
                        *map(repr, data.soil[i].reshape(-1).tolist()),
                        *map(repr, data.practices[i].tolist()), repr(float(data.yield_[i]))])


def read_yield_csv(path) -> YieldData:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    col = {name: k for k, name in enumerate(header)}
    required = ["county", "state", "year", "lat", "lng", *WEATHER_COLUMNS, *SOIL_COLUMNS, "yield"]
    missing = [c for c in required if c not in col]
    if missing:
        raise ValueError(f"yield CSV is missing columns: {missing[:5]}")
    practice_cols = sorted((c for c in header if c.startswith("practice_")), key=lambda c: int(c.split("_")[1]))
    if not rows:
        raise ValueError("yield CSV has no rows")
    arr = np.array(rows, dtype=object)

    def num(names, dtype=np.float64):
        return arr[:, [col[c] for c in names]].astype(dtype)

    s = len(rows)
    weather = num(WEATHER_COLUMNS).reshape(s, len(WEATHER_VARS), N_WEEKS).transpose(0, 2, 1)
    practices = num(practice_cols) if practice_cols else np.zeros((s, 0))
    return YieldData(num(["county"], np.int64)[:, 0], num(["state"], np.int64)[:, 0], num(["year"], np.int64)[:, 0],
                     num(["lat"])[:, 0], num(["lng"])[:, 0], weather,
                     num(SOIL_COLUMNS).reshape(s, N_SOIL_PROPS, N_SOIL_DEPTHS), practices, num(["yield"])[:, 0])


# --------------------------------------------------------------------------
# normalization and batch assembly

@dataclass
class YieldNormalizer:
    weather_mean: np.ndarray
    weather_std: np.ndarray
    soil_mean: np.ndarray
    soil_std: np.ndarray
    practice_mean: np.ndarray
    practice_std: np.ndarray
    yield_mean: float
    yield_std: float

    @classmethod
    def fit(cls, data: YieldData, rows: np.ndarray,
            weather_stats: Optional[StandardizationStats] = None) -> "YieldNormalizer":
        """Statistics from ``rows`` (training states only). Weather uses the
        pretraining statistics of the matching slots when given, so a
        pretrained encoder sees inputs on the scale it was trained on."""
        rows = np.asarray(rows)
        if weather_stats is not None:
            wm, ws = weather_stats.mean[SLOT_INDEX], weather_stats.std[SLOT_INDEX]
        else:
            w = data.weather[rows].reshape(-1, len(WEATHER_VARS))
            wm, ws = w.mean(axis=0), w.std(axis=0)
        safe = lambda s: np.where(s > 0, s, 1.0)  # noqa: E731
        return cls(wm, safe(ws), data.soil[rows].mean(axis=0), safe(data.soil[rows].std(axis=0)),
                   data.practices[rows].mean(axis=0), safe(data.practices[rows].std(axis=0)),
                   float(data.yield_[rows].mean()), float(data.yield_[rows].std()) or 1.0)


@dataclass
class YieldBatch:
    """Model inputs for B anchors with H years of history (oldest first).

    past_yield[:, k] is the yield of year k for k < H-1 and, for the current
    year (k = H-1), last year's yield. The current-year yield appears only
    in ``target``.
    """

    weather: np.ndarray  # B, H, 52, 6 standardized
    soil: np.ndarray  # B, 10, 6 standardized
    practices: np.ndarray  # B, H, P standardized
    past_yield: np.ndarray  # B, H normalized
    years: np.ndarray  # B, H
    latitude: np.ndarray
    longitude: np.ndarray
    target: np.ndarray  # B normalized

    @property
    def history(self) -> int:
        return self.years.shape[1]

    def __len__(self) -> int:
        return len(self.target)


def build_batch(data: YieldData, anchors: np.ndarray, history: int, norm: YieldNormalizer) -> YieldBatch:
    anchors = np.asarray(anchors, dtype=np.int64)
    b = len(anchors)
    rows = np.empty((b, history), dtype=np.int64)
    prev = np.empty(b, dtype=np.int64)
    for j, a in enumerate(anchors):
        c, y = data.county[a], data.year[a]
        for k in range(history):
            r = data.row(c, y - history + 1 + k)
            if r is None:
                raise ValueError(f"county {c} lacks year {y - history + 1 + k} for a {history}-year history")
            rows[j, k] = r
        p = data.row(c, y - 1)
        if p is None:
            raise ValueError(f"county {c} lacks year {y - 1} yield to substitute for {y}")
        prev[j] = p
    yields = data.yield_[rows].copy()
    yields[:, -1] = data.yield_[prev]
    return YieldBatch(
        weather=(data.weather[rows] - norm.weather_mean) / norm.weather_std,
        soil=(data.soil[anchors] - norm.soil_mean) / norm.soil_std,
        practices=(data.practices[rows] - norm.practice_mean) / norm.practice_std,
        past_yield=(yields - norm.yield_mean) / norm.yield_std,
        years=data.year[rows],
        latitude=data.latitude[anchors],
        longitude=data.longitude[anchors],
        target=(data.yield_[anchors] - norm.yield_mean) / norm.yield_std,
    )


def subset_batch(batch: YieldBatch, idx) -> YieldBatch:
    return YieldBatch(*(getattr(batch, f)[idx] for f in YieldBatch.__dataclass_fields__))


def expand_weather(weather: np.ndarray) -> np.ndarray:
    """(..., 6) standardized weather -> (..., 31) with zeros in unused slots."""
    out = np.zeros(weather.shape[:-1] + (N_MEASUREMENTS,), dtype=weather.dtype)
    out[..., SLOT_INDEX] = weather
    return out


def _year_start_days(years: np.ndarray) -> np.ndarray:
    return np.array([days_since_epoch(dt.date(int(y), 1, 1)) for y in np.asarray(years).reshape(-1)])


# --------------------------------------------------------------------------
# model components

class SoilCNN(Module):
    """Two 1-D convolutions over the depth axis (properties as channels),
    flatten, linear to ``out_dim``."""

    def __init__(self, rng: np.random.Generator, out_dim: int = SOIL_FEATURES, channels: int = 16):
        self.conv1 = Conv1d(N_SOIL_PROPS, channels, 3, rng, padding=1)
        self.conv2 = Conv1d(channels, channels, 3, rng, padding=1)
        self.proj = Linear(channels * N_SOIL_DEPTHS, out_dim, rng)

    def forward(self, soil):
        soil = as_tensor(soil)
        if soil.ndim != 3 or soil.shape[1:] != (N_SOIL_PROPS, N_SOIL_DEPTHS):
            raise ValueError(f"soil must be (B, {N_SOIL_PROPS}, {N_SOIL_DEPTHS}), got {soil.shape}")
        h = ops.relu(self.conv2(ops.relu(self.conv1(soil))))
        return self.proj(h.reshape(soil.shape[0], -1))


class WeatherYearEncoder(Module):
    """WeatherFormer over each year's weekly weather, mean-pooled over weeks
    and projected to 120 dims. Returns (B, H, 120)."""

    def __init__(self, wf: WeatherFormer, rng: np.random.Generator, out_dim: int = YEAR_FEATURES):
        self.wf = wf
        self.proj = Linear(wf.config.out_dim, out_dim, rng)

    def forward(self, batch: YieldBatch):
        b, h = batch.years.shape
        x = expand_weather(batch.weather.reshape(b * h, N_WEEKS, -1))
        out = self.wf.forward(x, _year_start_days(batch.years), 7, np.repeat(batch.latitude, h),
                              np.repeat(batch.longitude, h), feature_mask())
        pooled = ops.mean(out, axis=1)
        return self.proj(pooled).reshape(b, h, -1)


class TemporalCNN(Module):
    """Weather CNN for the baselines: two convolutions over weeks, mean over
    time, linear to ``out_dim``. Returns (B, H, out_dim)."""

    def __init__(self, rng: np.random.Generator, out_dim: int = SOIL_FEATURES, channels: int = 16):
        self.conv1 = Conv1d(len(WEATHER_VARS), channels, 3, rng, padding=1)
        self.conv2 = Conv1d(channels, channels, 3, rng, padding=1)
        self.proj = Linear(channels, out_dim, rng)

    def forward(self, batch: YieldBatch):
        b, h = batch.years.shape
        x = batch.weather.reshape(b * h, N_WEEKS, -1).transpose(0, 2, 1)
        z = ops.relu(self.conv2(ops.relu(self.conv1(x))))
        return self.proj(ops.mean(z, axis=2)).reshape(b, h, -1)


def _year_blocks(year_feats, soil_feats, batch: YieldBatch):
    """Concatenate per-year features with soil, practices and past yield."""
    b, h = batch.years.shape
    soil = ops.concat([soil_feats.reshape(b, 1, -1)] * h, axis=1)
    parts = [year_feats, soil, as_tensor(batch.past_yield.reshape(b, h, 1))]
    if batch.practices.shape[2]:
        parts.append(as_tensor(batch.practices))
    return ops.concat(parts, axis=2)


class YearSequenceHead(Module):
    """Transformer over per-year blocks with the spatiotemporal encoding of
    the county; the last (current) year is projected to the prediction."""

    def __init__(self, in_dim: int, rng: np.random.Generator, d_model: int = 32, n_heads: int = 4,
                 n_layers: int = 2, ff_dim: int = 64):
        self.d_model = d_model
        self.inp = Linear(in_dim, d_model, rng)
        self.encoder = TransformerEncoder(d_model, n_heads, n_layers, ff_dim, rng)
        self.out = Linear(d_model, 1, rng)

    def forward(self, blocks, batch: YieldBatch):
        b, h = batch.years.shape
        z = self.inp(blocks)
        pe = encoding_batch(_year_start_days(batch.years[:, 0]), np.full(b, 365), batch.latitude,
                            batch.longitude, h, self.d_model)
        z = self.encoder(z + pe.astype(z.dtype))
        return self.out(z[:, h - 1, :]).reshape(b)


class YieldModel(Module):
    history: int

    def predict(self, batch: YieldBatch) -> Tensor:
        raise NotImplementedError

    def forward(self, batch: YieldBatch) -> Tensor:
        if batch.history != self.history:
            raise ValueError(f"model expects {self.history} years of history, got {batch.history}")
        return self.predict(batch)


class WFLinear(YieldModel):
    def __init__(self, wf: WeatherFormer, n_practices: int, rng: np.random.Generator, history: int = 3):
        self.history = history
        self.years = WeatherYearEncoder(wf, rng)
        self.soil = SoilCNN(rng)
        self.head = Linear(history * (YEAR_FEATURES + n_practices + 1) + SOIL_FEATURES, 1, rng)

    def predict(self, batch):
        b, h = batch.years.shape
        per_year = [self.years(batch)]
        if batch.practices.shape[2]:
            per_year.append(as_tensor(batch.practices))
        per_year.append(as_tensor(batch.past_yield.reshape(b, h, 1)))
        flat = ops.concat(per_year, axis=2).reshape(b, -1)
        return self.head(ops.concat([flat, self.soil(batch.soil)], axis=1)).reshape(b)


class WFTransformer(YieldModel):
    def __init__(self, wf: WeatherFormer, n_practices: int, rng: np.random.Generator, history: int = 7,
                 d_model: int = 32, n_heads: int = 4, n_layers: int = 2):
        self.history = history
        self.years = WeatherYearEncoder(wf, rng)
        self.soil = SoilCNN(rng)
        self.head = YearSequenceHead(YEAR_FEATURES + SOIL_FEATURES + 1 + n_practices, rng, d_model, n_heads,
                                     n_layers, 2 * d_model)

    def predict(self, batch):
        return self.head(_year_blocks(self.years(batch), self.soil(batch.soil), batch), batch)


class CnnRnn(YieldModel):
    def __init__(self, n_practices: int, rng: np.random.Generator, history: int = 7, hidden: int = 32):
        self.history = history
        self.weather = TemporalCNN(rng)
        self.soil = SoilCNN(rng)
        self.lstm = LSTM(2 * SOIL_FEATURES + 1 + n_practices, hidden, rng)
        self.out = Linear(hidden, 1, rng)

    def predict(self, batch):
        blocks = _year_blocks(self.weather(batch), self.soil(batch.soil), batch)
        return self.out(self.lstm(blocks)).reshape(len(batch))


class CnnTransformer(YieldModel):
    def __init__(self, n_practices: int, rng: np.random.Generator, history: int = 7, d_model: int = 32,
                 n_heads: int = 4, n_layers: int = 2):
        self.history = history
        self.weather = TemporalCNN(rng)
        self.soil = SoilCNN(rng)
        self.head = YearSequenceHead(2 * SOIL_FEATURES + 1 + n_practices, rng, d_model, n_heads, n_layers,
                                     2 * d_model)

    def predict(self, batch):
        return self.head(_year_blocks(self.weather(batch), self.soil(batch.soil), batch), batch)


class LinearRegression:
    """Least squares on flattened (weather, soil, practices, past yield)."""

    def __init__(self, history: int = 1):
        self.history = history
        self.coef: Optional[np.ndarray] = None

    @staticmethod
    def features(batch: YieldBatch) -> np.ndarray:
        b = len(batch)
        return np.hstack([batch.weather.reshape(b, -1), batch.soil.reshape(b, -1),
                          batch.practices.reshape(b, -1), batch.past_yield.reshape(b, -1)])

    def fit(self, batch: YieldBatch) -> "LinearRegression":
        self.coef = lstsq_fit(self.features(batch), batch.target)
        return self

    def predict(self, batch: YieldBatch) -> np.ndarray:
        if self.coef is None:
            raise RuntimeError("model is not fitted")
        return lstsq_predict(self.coef, self.features(batch))


def build_model(variant: str, n_practices: int, seed: int, history: Optional[int] = None,
                wf: Optional[WeatherFormer] = None, **kwargs):
    """Construct a variant; WF variants need a (possibly pretrained) encoder."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown yield variant {variant!r}; choose from {VARIANTS}")
    history = history or DEFAULT_HISTORY[variant]
    if not 1 <= history <= 7:
        raise ValueError("history must lie in 1..7 years")
    rng = np.random.default_rng([seed, 21])
    if variant == "linear":
        return LinearRegression(history)
    if variant == "cnn-rnn":
        return CnnRnn(n_practices, rng, history, **kwargs)
    if variant == "cnn-transformer":
        return CnnTransformer(n_practices, rng, history, **kwargs)
    if wf is None:
        raise ValueError(f"{variant} requires a WeatherFormer encoder")
    if variant == "wf-linear":
        return WFLinear(wf, n_practices, rng, history)
    return WFTransformer(wf, n_practices, rng, history, **kwargs)


# --------------------------------------------------------------------------
# protocol

@dataclass(frozen=True)
class SplitPlan:
    """Five independent random 7/2 partitions of the nine states."""

    seed: int
    folds: tuple

    @classmethod
    def make(cls, states: Sequence[int], seed: int, n_folds: int = 5, n_val: int = 2) -> "SplitPlan":
        states = sorted(int(s) for s in states)
        if len(states) != N_STATES:
            raise ValueError(f"expected {N_STATES} states, got {len(states)}")
        rng = np.random.default_rng(seed)
        folds = []
        for _ in range(n_folds):
            perm = rng.permutation(states)
            folds.append((tuple(sorted(perm[n_val:].tolist())), tuple(sorted(perm[:n_val].tolist()))))
        return cls(seed, tuple(folds))

    def __post_init__(self):
        for train, val in self.folds:
            if set(train) & set(val) or len(train) + len(val) != N_STATES:
                raise ValueError("each fold must partition the nine states")


@dataclass
class FoldResult:
    fold: int
    rmse: float
    best_epoch: int
    history: list


def evaluate_predictions(model, batch: YieldBatch, norm: YieldNormalizer) -> float:
    """Validation RMSE in Bu/Acre."""
    if len(batch) == 0:
        raise ValueError("empty validation fold")
    if isinstance(model, LinearRegression):
        pred = model.predict(batch)
    else:
        with no_grad():
            pred = np.concatenate([model(subset_batch(batch, slice(lo, lo + 256))).data
                                   for lo in range(0, len(batch), 256)])
    return rmse(pred * norm.yield_std + norm.yield_mean, batch.target * norm.yield_std + norm.yield_mean)


def train_fold(model, data: YieldData, train_states, val_states, config: TrainConfig = YIELD_TRAINING,
               weather_stats: Optional[StandardizationStats] = None, log=None) -> tuple:
    """Fine-tune ``model`` on ``train_states``; returns (best RMSE, FitResult or None)."""
    history = model.history
    tr_rows = data.anchors(history, train_states)
    va_rows = data.anchors(history, val_states)
    if len(va_rows) == 0:
        raise ValueError("empty validation fold")
    if len(tr_rows) == 0:
        raise ValueError("empty training fold")
    norm = YieldNormalizer.fit(data, tr_rows, weather_stats)
    train = build_batch(data, tr_rows, history, norm)
    val = build_batch(data, va_rows, history, norm)
    if isinstance(model, LinearRegression):
        model.fit(train)
        return evaluate_predictions(model, val, norm), None

    def loss_fn(idx):
        sub = subset_batch(train, idx)
        return ops.mse(model(sub), sub.target)

    result = fit(model, loss_fn, len(train), lambda: evaluate_predictions(model, val, norm), config, log)
    return result.best_metric, result


def evaluate_folds(make_model, data: YieldData, plan: SplitPlan, config: TrainConfig = YIELD_TRAINING,
                   weather_stats: Optional[StandardizationStats] = None, log=None) -> tuple:
    """Train a fresh model per fold; returns (list of FoldResult, mean RMSE)."""
    results = []
    for k, (train_states, val_states) in enumerate(plan.folds):
        model = make_model(k)
        score, fr = train_fold(model, data, train_states, val_states, config, weather_stats, log)
        results.append(FoldResult(k, score, -1 if fr is None else fr.best_epoch, [] if fr is None else fr.history))
    return results, float(np.mean([r.rmse for r in results]))


# --------------------------------------------------------------------------
# synthetic benchmark

@dataclass(frozen=True)
class SyntheticYieldSpec:
    n_states: int = N_STATES
    counties_per_state: int = 8
    start_year: int = 2000
    end_year: int = 2009
    n_practices: int = 3
    noise: float = 2.0
    ar: float = 0.0
    weather_noise: float = 0.1
    vp_weight: float = 6.0
    precip_weight: float = 0.0


def _county_year_weather(lat: float, offset: np.ndarray, year: int, noise: float,
                         rng: np.random.Generator) -> np.ndarray:
    """(365, 31) daily weather for one county-year with derived columns."""
    start = dt.date(year, 1, 1)
    day = np.arange(365, dtype=np.float64) + (start - EPOCH).days
    return derive_columns(_primaries(day, lat, offset, noise, rng))


def synthetic_yield_data(spec: SyntheticYieldSpec = SyntheticYieldSpec(), seed: int = 0) -> YieldData:
    """County-year samples whose yield depends on weather the model only sees
    indirectly.

    Yield (Bu/Acre) = 45 + soil term + practice term
    - ``vp_weight`` * standardized growing-season vapor-pressure deficit
    + ``precip_weight`` * standardized growing-season precipitation
    + ``ar`` * (last year's yield - 45) + ``noise`` * N(0, 1).

    The deficit is not among the six observed variables; it is a nonlinear
    function of temperature and vapor pressure. Weather comes from the same
    generator as the synthetic pretraining corpus.
    """
    rng = np.random.default_rng(seed)
    weights_soil = rng.normal(size=(N_SOIL_PROPS, N_SOIL_DEPTHS)) / math.sqrt(N_SOIL_PROPS * N_SOIL_DEPTHS)
    weights_prac = rng.normal(size=spec.n_practices)
    years = np.arange(spec.start_year, spec.end_year + 1)
    vad_i, pr_i = INDEX["VAD"], INDEX["PRECTOTCORR"]
    season = slice(17, 35)  # weeks 18..35
    recs = []
    county = 0
    for state in range(spec.n_states):
        lat0 = rng.uniform(30.0, 46.0)
        lng0 = rng.uniform(-104.0, -82.0)
        state_anom = rng.normal(size=(len(years), 5))
        for _ in range(spec.counties_per_state):
            lat = float(np.round((lat0 + rng.uniform(0, 5)) * 2) / 2)
            lng = float(np.round((lng0 + rng.uniform(0, 8)) * 2) / 2)
            offset = rng.normal(size=5)
            soil = rng.normal(size=(N_SOIL_PROPS, N_SOIL_DEPTHS))
            soil_term = 3.0 * float((weights_soil * soil).sum())
            for k, year in enumerate(years):
                anom = 0.6 * state_anom[k] + 0.4 * rng.normal(size=5)
                daily = _county_year_weather(lat, offset + anom, int(year), spec.weather_noise, rng)
                weekly, _ = aggregate_values(daily, dt.date(int(year), 1, 1), 7)
                weekly = weekly[:N_WEEKS]
                practices = rng.normal(size=spec.n_practices)
                recs.append(dict(county=county, state=state, year=int(year), lat=lat, lng=lng,
                                 weather=weekly[:, SLOT_INDEX], soil=soil, practices=practices,
                                 vad=weekly[season, vad_i].mean(), precip=weekly[season, pr_i].mean(),
                                 base=45.0 + soil_term + 1.5 * float(weights_prac @ practices)))
            county += 1
    vad = np.array([r["vad"] for r in recs])
    precip = np.array([r["precip"] for r in recs])
    vad_z = (vad - vad.mean()) / vad.std()
    precip_z = (precip - precip.mean()) / precip.std()
    y = np.empty(len(recs))
    prev = {}
    for i, r in enumerate(recs):
        last = prev.get(r["county"])
        carry = spec.ar * (last - 45.0) if last is not None else 0.0
        y[i] = (r["base"] - spec.vp_weight * vad_z[i] + spec.precip_weight * precip_z[i] + carry
                + spec.noise * rng.standard_normal())
        prev[r["county"]] = y[i]
    return YieldData(
        county=[r["county"] for r in recs], state=[r["state"] for r in recs], year=[r["year"] for r in recs],
        latitude=[r["lat"] for r in recs], longitude=[r["lng"] for r in recs],
        weather=np.stack([r["weather"] for r in recs]), soil=np.stack([r["soil"] for r in recs]),
        practices=np.stack([r["practices"] for r in recs]), yield_=y)

"""The WeatherFormer encoder.

Forward pass: granularity scalers and feature mask -> linear projection to
``d_model`` -> add spatiotemporal encoding -> masked transformer encoder ->
linear projection to ``out_dim``.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, as_tensor, load_checkpoint, ops, parameter, save_checkpoint
from .nn import Linear, Module, TransformerEncoder
from .weather.catalog import N_MEASUREMENTS
from .weather.series import EPOCH, normalize_longitude

MAX_LEN = 365
N_GRANULARITIES = 30


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 32
    n_heads: int = 4
    n_layers: int = 2
    ff_dim: int = 64
    in_dim: int = N_MEASUREMENTS
    out_dim: int = N_MEASUREMENTS
    max_len: int = MAX_LEN
    dropout: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        if self.d_model % 4:
            raise ValueError("d_model must be divisible by 4")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.in_dim != N_MEASUREMENTS:
            raise ValueError(f"in_dim must be {N_MEASUREMENTS}")
        if not 1 <= self.max_len <= MAX_LEN:
            raise ValueError(f"max_len must lie in 1..{MAX_LEN}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in fields})


PRESETS = {
    "tiny": ModelConfig(d_model=16, n_heads=2, n_layers=2, ff_dim=32),
    "desk": ModelConfig(d_model=32, n_heads=4, n_layers=2, ff_dim=64),
    "2m": ModelConfig(d_model=128, n_heads=4, n_layers=6, ff_dim=512),
    "8m": ModelConfig(d_model=256, n_heads=8, n_layers=8, ff_dim=1024),
}


def preset(name: str, **overrides) -> ModelConfig:
    try:
        cfg = PRESETS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}") from None
    return dataclasses.replace(cfg, **overrides)


@dataclass(frozen=True)
class SpatioTemporalContext:
    latitude: float
    longitude: float
    start_day_index: int
    granularity_days: int = 1

    @classmethod
    def from_date(cls, latitude: float, longitude: float, start: dt.date, granularity_days: int = 1):
        return cls(latitude, longitude, (start - EPOCH).days, granularity_days)

    @property
    def year(self) -> int:
        return (EPOCH + dt.timedelta(days=int(self.start_day_index))).year


def _wrap_angles(lat, lng):
    lat = normalize_longitude(lat)
    lng = normalize_longitude(lng)
    if (np.abs(lat) > 90).any():
        raise ValueError("latitude outside [-90, 90] after wrapping")
    return lat, lng


def encoding_batch(start_day, granularity, latitude, longitude, n: int, d_model: int) -> np.ndarray:
    """(B, n, d_model) float64 encodings for a batch of contexts.

    For i < d_model/4, with w_i = 10000^(-4i/d_model) and pos_t the absolute
    day index of row t: channels 4i, 4i+1 are sin/cos(pos_t * w_i), 4i+2 is
    sin(lat_rad * w_i) and 4i+3 is cos(lng_rad * w_i).
    """
    if d_model % 4:
        raise ValueError("d_model must be divisible by 4")
    start_day = np.asarray(start_day, dtype=np.float64).reshape(-1)
    granularity = np.asarray(granularity, dtype=np.float64).reshape(-1)
    lat, lng = _wrap_angles(np.asarray(latitude, dtype=np.float64).reshape(-1),
                            np.asarray(longitude, dtype=np.float64).reshape(-1))
    omega = 10000.0 ** (-4.0 * np.arange(d_model // 4) / d_model)
    pos = start_day[:, None] + granularity[:, None] * np.arange(n)[None, :]  # B, n
    phase = pos[:, :, None] * omega  # B, n, d/4
    b = len(start_day)
    pe = np.empty((b, n, d_model // 4, 4))
    pe[..., 0] = np.sin(phase)
    pe[..., 1] = np.cos(phase)
    pe[..., 2] = np.sin(np.deg2rad(lat)[:, None, None] * omega)
    pe[..., 3] = np.cos(np.deg2rad(lng)[:, None, None] * omega)
    return pe.reshape(b, n, d_model)


def spatiotemporal_encoding(ctx: SpatioTemporalContext, n: int, d_model: int) -> np.ndarray:
    """(n, d_model) encoding for a single series."""
    return encoding_batch([ctx.start_day_index], [ctx.granularity_days], [ctx.latitude], [ctx.longitude],
                          n, d_model)[0]


def _check_granularity(granularity) -> np.ndarray:
    g = np.asarray(granularity)
    if not np.issubdtype(g.dtype, np.integer) or (g < 1).any() or (g > N_GRANULARITIES).any():
        raise ValueError(f"granularity must be an integer in 1..{N_GRANULARITIES}")
    return g


def apply_scalers(x, granularity, scalers, feature_mask=None):
    """x * scalers[granularity] * feature_mask, row-broadcast.

    ``x`` is (N, 31) with a scalar granularity, or (B, N, 31) with one
    granularity per sequence. Works on arrays and on tensors (differentiably).
    Masked-out features become exact zeros.
    """
    g = _check_granularity(granularity)
    if isinstance(x, Tensor) or isinstance(scalers, Tensor):
        rows = ops.embedding(as_tensor(scalers), g.reshape(-1) - 1)  # B, 31
        if as_tensor(x).ndim == 3:
            rows = rows.reshape(len(g.reshape(-1)), 1, N_MEASUREMENTS)
        else:
            rows = rows.reshape(N_MEASUREMENTS)
        out = ops.mul(x, rows)
        return out if feature_mask is None else ops.masked_fill(out, _mask_for(feature_mask, out.ndim))
    x = np.asarray(x)
    table = np.asarray(scalers)
    rows = table[g.reshape(-1) - 1]
    rows = rows[:, None, :] if x.ndim == 3 else rows.reshape(N_MEASUREMENTS)
    out = x * rows
    if feature_mask is not None:
        out = np.where(_mask_for(feature_mask, out.ndim), out, 0).astype(out.dtype)
    return out


def _mask_for(feature_mask, ndim: int) -> np.ndarray:
    m = np.asarray(feature_mask, dtype=bool)
    if m.shape[-1] != N_MEASUREMENTS:
        raise ValueError(f"feature mask must have {N_MEASUREMENTS} entries per row")
    if ndim == 3 and m.ndim == 2:
        m = m[:, None, :]
    return m


class WeatherFormer(Module):
    def __init__(self, config: ModelConfig, rng: Optional[np.random.Generator] = None, seed: int = 0):
        rng = rng if rng is not None else np.random.default_rng(seed)
        self.config = config
        self.scalers = parameter(np.ones((N_GRANULARITIES, N_MEASUREMENTS)))
        self.input_proj = Linear(N_MEASUREMENTS, config.d_model, rng)
        self.encoder = TransformerEncoder(config.d_model, config.n_heads, config.n_layers, config.ff_dim, rng,
                                          config.dropout, config.activation)
        self.output_proj = Linear(config.d_model, config.out_dim, rng)

    def forward(self, x, start_day, granularity, latitude, longitude, feature_mask=None, padding_mask=None):
        """Run the encoder on ``x`` of shape (B, N, 31); returns (B, N, out_dim).

        Context arguments are per-sequence arrays of length B. ``feature_mask``
        is (31,) or (B, 31); ``padding_mask`` is (B, N) with True on real rows.
        """
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[2] != N_MEASUREMENTS:
            raise ValueError(f"expected input of shape (B, N, {N_MEASUREMENTS}), got {x.shape}")
        b, n, _ = x.shape
        if n > self.config.max_len:
            raise ValueError(f"sequence length {n} exceeds max_len {self.config.max_len}")
        g = _check_granularity(np.broadcast_to(np.asarray(granularity), (b,)))
        h = apply_scalers(x, g, self.scalers, feature_mask)
        h = self.input_proj(h)
        pe = encoding_batch(np.broadcast_to(start_day, (b,)), g, np.broadcast_to(latitude, (b,)),
                            np.broadcast_to(longitude, (b,)), n, self.config.d_model)
        h = h + pe.astype(h.dtype)
        key_mask = None if padding_mask is None else np.asarray(padding_mask, dtype=bool).reshape(b, n)
        h = self.encoder(h, key_mask)
        return self.output_proj(h)

    def forward_set(self, seqs, feature_mask=None, x=None):
        """Convenience wrapper taking a :class:`SequenceSet` (optionally with
        replacement inputs ``x``)."""
        return self.forward(seqs.x if x is None else x, seqs.start_day, seqs.granularity, seqs.latitude,
                            seqs.longitude, feature_mask, seqs.padding_mask())

    def forward_series(self, x, ctx: SpatioTemporalContext, feature_mask=None, padding_mask=None):
        """Single (N, 31) series -> (N, out_dim) array or tensor."""
        x = as_tensor(x)
        out = self.forward(x.reshape(1, *x.shape), [ctx.start_day_index], [ctx.granularity_days],
                           [ctx.latitude], [ctx.longitude],
                           None if feature_mask is None else np.asarray(feature_mask).reshape(1, -1),
                           None if padding_mask is None else np.asarray(padding_mask).reshape(1, -1))
        return out.reshape(out.shape[1:])


def save_model(path, model: WeatherFormer, extra: Optional[dict] = None) -> None:
    save_checkpoint(path, model.state_dict(), model.config.to_dict(), extra)


def load_model(path) -> tuple:
    """Rebuild a :class:`WeatherFormer` from a checkpoint; returns (model, extra)."""
    params, config, extra = load_checkpoint(path)
    model = WeatherFormer(ModelConfig.from_dict(config))
    model.load_state_dict(params)
    return model, extra

"""Desk-scale synthetic benchmark: does pretraining help the downstream tasks?

One synthetic weather corpus (daily and weekly sequences over the region
used by the downstream generators) pretrains a small WeatherFormer. Each
downstream task is then fine-tuned twice from the same seed, once starting
from the pretrained weights and once from a fresh initialization, and the
best validation losses are compared.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .downstream import cropyield, flu
from .downstream.training import FLU_TRAINING, YIELD_TRAINING, TrainConfig
from .model import WeatherFormer, preset
from .pretrain import PretrainConfig, PretrainResult, pretrain
from .weather.sequences import SequenceSet, sequences_from_tiles
from .weather.series import StandardizationStats, compute_stats, split_dataset
from .weather.synthetic import SyntheticSpec, generate_synthetic


@dataclass(frozen=True)
class BenchmarkSpec:
    model: str = "tiny"
    corpus_tiles: int = 6
    corpus_coords: int = 16
    corpus_years: tuple = (2000, 2003)
    pretrain_epochs: int = 40
    yield_history: int = 3
    yield_counties: int = 3
    yield_years: tuple = (2000, 2007)
    yield_training: TrainConfig = YIELD_TRAINING
    flu_window: int = 105
    flu_training: TrainConfig = FLU_TRAINING
    flu_d_model: int = 32
    flu_layers: int = 2


def weather_corpus(spec: BenchmarkSpec, seed: int) -> tuple:
    """(train, val, stats): daily windows of 56 days and weekly windows of 52
    weeks, standardized with training-tile statistics."""
    tiles = generate_synthetic(SyntheticSpec(n_tiles=spec.corpus_tiles, start_year=spec.corpus_years[0],
                                             end_year=spec.corpus_years[1], coords_per_tile=spec.corpus_coords,
                                             lat_range=(28.0, 46.0), lng_range=(-106.0, -76.0)), seed)
    train_tiles, val_tiles = split_dataset(tiles, 0.2, seed)
    stats = compute_stats(train_tiles)

    def build(ts):
        daily = sequences_from_tiles(ts, 1, 56, stats)
        weekly = sequences_from_tiles(ts, 7, 52, stats, stride=26)
        return SequenceSet.concat([daily, weekly])

    return build(train_tiles), build(val_tiles), stats


def pretrained_encoder(spec: BenchmarkSpec, seed: int = 0, log=None) -> tuple:
    """(state_dict, stats, PretrainResult) for the benchmark encoder."""
    train, val, stats = weather_corpus(spec, seed)
    model = WeatherFormer(preset(spec.model), seed=seed)
    result = pretrain(model, train, val, PretrainConfig(epochs=spec.pretrain_epochs, seed=seed), eval_train=False,
                      log=log)
    return result.best_state, stats, result


def _encoder(spec: BenchmarkSpec, seed: int, state: Optional[dict]) -> WeatherFormer:
    wf = WeatherFormer(preset(spec.model), seed=seed)
    if state is not None:
        wf.load_state_dict(state)
    return wf


def yield_ablation(spec: BenchmarkSpec, state: dict, stats: StandardizationStats, seed: int) -> dict:
    """Best validation RMSE of WF+Transformer on one fold, pretrained vs scratch."""
    data = cropyield.synthetic_yield_data(
        cropyield.SyntheticYieldSpec(counties_per_state=spec.yield_counties, start_year=spec.yield_years[0],
                                     end_year=spec.yield_years[1]), seed=seed)
    train_states, val_states = cropyield.SplitPlan.make(data.states(), seed).folds[0]
    cfg = dataclasses.replace(spec.yield_training, seed=seed)
    out = {}
    for name, init in (("pretrained", state), ("scratch", None)):
        model = cropyield.build_model("wf-transformer", data.n_practices, seed, spec.yield_history,
                                      _encoder(spec, seed, init))
        out[name], _ = cropyield.train_fold(model, data, train_states, val_states, cfg, stats)
    return out


def flu_ablation(spec: BenchmarkSpec, state: dict, stats: StandardizationStats, seed: int) -> dict:
    """Best validation MAE (mean over the 10 horizons) of the WF flu
    forecaster on the first sequential split, pretrained vs scratch."""
    series = flu.synthetic_ili(seed)
    split = flu.sequential_splits(series)[0]
    out = {}
    for name, init in (("pretrained", state), ("scratch", None)):
        res = flu.run_transformer_split(series, split, "wf", spec.flu_window, seed, spec.flu_training,
                                        wf=_encoder(spec, seed, init), temp_scale=flu.temperature_scale(stats),
                                        d_model=spec.flu_d_model, n_layers=spec.flu_layers)
        out[name] = res.fit.best_metric
    return out


def run_ablation(spec: BenchmarkSpec = BenchmarkSpec(), seeds=(0, 1, 2), pretrain_seed: int = 0,
                 encoder: Optional[tuple] = None) -> dict:
    """Mean best validation loss per task and initialization over ``seeds``."""
    state, stats = encoder if encoder is not None else pretrained_encoder(spec, pretrain_seed)[:2]
    rows = {"yield": [], "flu": []}
    for seed in seeds:
        rows["yield"].append(yield_ablation(spec, state, stats, seed))
        rows["flu"].append(flu_ablation(spec, state, stats, seed))
    return {task: {k: float(np.mean([r[k] for r in rs])) for k in ("pretrained", "scratch")}
            for task, rs in rows.items()} | {"per_seed": rows}

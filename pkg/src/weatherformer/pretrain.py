"""Self-supervised pretraining.

Two tasks share one training loop:

* ``masked-feature``: 10 of the 31 measurements are zeroed through the
  feature mask and predicted from the other 21. After every batch one target
  and one input measurement trade places, so the partition rotates.
* ``mlm``: whole timesteps are zeroed at rate 0.15 and reconstructed.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import Adam, LrSchedule, NonFiniteError, Tape, as_tensor, backward, no_grad, ops, save_checkpoint
from .model import WeatherFormer
from .weather.catalog import N_MEASUREMENTS
from .weather.sequences import SequenceSet

N_TARGETS = 10
TASKS = ("masked-feature", "mlm")


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 75
    batch_size: int = 64
    base_lr: float = 5e-4
    warmup: int = 10
    decay: float = 0.99
    seed: int = 0
    task: str = "masked-feature"
    mlm_rate: float = 0.15

    def __post_init__(self):
        for name in ("epochs", "batch_size", "base_lr", "decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if not 0 < self.mlm_rate < 1:
            raise ValueError("mlm_rate must lie in (0, 1)")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_lr, self.warmup, self.decay)


# --------------------------------------------------------------------------
# masked-feature task state

@dataclass
class PretrainTaskState:
    target: tuple
    inputs: tuple
    rng: np.random.Generator = field(repr=False)
    swaps: int = 0

    def __post_init__(self):
        t, i = set(self.target), set(self.inputs)
        if len(t) != N_TARGETS or t & i or t | i != set(range(N_MEASUREMENTS)):
            raise ValueError("target/input sets must partition the 31 measurements 10/21")

    def target_mask(self) -> np.ndarray:
        m = np.zeros(N_MEASUREMENTS, dtype=bool)
        m[list(self.target)] = True
        return m

    def feature_mask(self) -> np.ndarray:
        return ~self.target_mask()


def init_task(seed) -> PretrainTaskState:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(N_MEASUREMENTS)
    return PretrainTaskState(tuple(sorted(perm[:N_TARGETS].tolist())), tuple(sorted(perm[N_TARGETS:].tolist())), rng)


def swap_step(state: PretrainTaskState) -> PretrainTaskState:
    """Exchange one uniformly chosen target with one uniformly chosen input."""
    t = list(state.target)
    i = list(state.inputs)
    a = int(state.rng.integers(len(t)))
    b = int(state.rng.integers(len(i)))
    t[a], i[b] = i[b], t[a]
    return PretrainTaskState(tuple(sorted(t)), tuple(sorted(i)), state.rng, state.swaps + 1)


def masked_feature_loss(output, truth, target_set, padding_mask=None):
    """MSE over real timesteps x target measurements.

    ``output``/``truth`` are (N, 31) or (B, N, 31); ``padding_mask`` is (N,)
    or (B, N) with True on real rows.
    """
    target_set = list(target_set)
    if not target_set:
        raise ValueError("target set is empty")
    shape = as_tensor(output).shape
    cols = np.zeros(N_MEASUREMENTS, dtype=bool)
    cols[target_set] = True
    rows = np.ones(shape[:-1], dtype=bool) if padding_mask is None else np.asarray(padding_mask, dtype=bool)
    weight = rows[..., None] & cols
    return ops.mse(output, truth, weight)


# --------------------------------------------------------------------------
# MLM task

def mlm_mask(x: np.ndarray, rate: float, seed=None, padding_mask: Optional[np.ndarray] = None,
             rng: Optional[np.random.Generator] = None):
    """Zero whole real timesteps independently with probability ``rate``.

    Returns ``(masked_x, selected)`` where ``selected`` is a boolean array
    over the leading (batch, time) axes.
    """
    if not 0 < rate < 1:
        raise ValueError("rate must lie in (0, 1)")
    x = np.asarray(x)
    rng = rng if rng is not None else np.random.default_rng(seed)
    selected = rng.random(x.shape[:-1]) < rate
    if padding_mask is not None:
        selected &= np.asarray(padding_mask, dtype=bool)
    masked = np.where(selected[..., None], 0, x).astype(x.dtype)
    return masked, selected


def mlm_loss(output, truth, selected):
    """MSE over selected rows, all features; ``None`` if nothing was selected."""
    selected = np.asarray(selected, dtype=bool)
    if not selected.any():
        return None
    return ops.mse(output, truth, np.broadcast_to(selected[..., None], output.shape))


# --------------------------------------------------------------------------
# synthetic data with exact linear structure

def _latent(n_days: int, rng: np.random.Generator, rho: float = 0.8) -> np.ndarray:
    """Seasonal sinusoid plus AR(1); variance about 1 at daily resolution."""
    day = np.arange(n_days)
    seasonal = math.sqrt(2) * 0.7 * np.sin(2 * np.pi * day / 365.0 + rng.uniform(0, 2 * np.pi))
    e = rng.standard_normal(n_days) * math.sqrt(0.5 * (1 - rho ** 2))
    ar = np.empty(n_days)
    ar[0] = rng.standard_normal() * math.sqrt(0.5)
    for t in range(1, n_days):
        ar[t] = rho * ar[t - 1] + e[t]
    return seasonal + ar


def linear_relation_dataset(n_sequences: int, seq_len: int, sigma: float, seed: int,
                            granularities=(1, 7), signs: Optional[np.ndarray] = None):
    """Sequences where every measurement is ``s_j * z(t) + sigma * noise``.

    ``z`` is one latent series per sequence and ``s_j`` is a fixed sign per
    measurement. For any 10/21 partition the targets are an exact linear
    function of the inputs up to noise: ``z = mean_i(s_i * x_i)``. With
    ``sigma > 0`` the best achievable target MSE is about
    ``sigma**2 * (1 + 1/21)``.

    Weekly sequences average the daily latent over each week before noise is
    added. Returns ``(SequenceSet, signs)``.
    """
    rng = np.random.default_rng(seed)
    if signs is None:
        signs = np.where(rng.random(N_MEASUREMENTS) < 0.5, -1.0, 1.0)
    gran = np.asarray(granularities)[np.arange(n_sequences) % len(granularities)]
    x = np.empty((n_sequences, seq_len, N_MEASUREMENTS))
    for s, g in enumerate(gran):
        z = _latent(seq_len * int(g), rng).reshape(seq_len, int(g)).mean(axis=1)
        x[s] = z[:, None] * signs + sigma * rng.standard_normal((seq_len, N_MEASUREMENTS))
    lat = rng.uniform(-60, 60, n_sequences)
    lng = rng.uniform(-180, 180, n_sequences)
    start = rng.integers(0, 14000, n_sequences)
    seqs = SequenceSet(x.astype(np.float32), np.full(n_sequences, seq_len), gran, lat, lng, start)
    return seqs, signs


# --------------------------------------------------------------------------
# training loop

@dataclass
class PretrainResult:
    history: list
    best_epoch: int
    best_val: float
    best_state: dict
    task_state: Optional[PretrainTaskState]

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.history])


def _batch_loss(model: WeatherFormer, batch: SequenceSet, config: PretrainConfig,
                task: Optional[PretrainTaskState], rng: Optional[np.random.Generator]):
    pad = batch.padding_mask()
    if config.task == "masked-feature":
        out = model.forward_set(batch, feature_mask=task.feature_mask())
        return masked_feature_loss(out, batch.x, task.target, pad)
    masked, selected = mlm_mask(batch.x, config.mlm_rate, padding_mask=pad, rng=rng)
    if not selected.any():
        return None
    out = model.forward_set(batch, x=masked)
    return mlm_loss(out, batch.x, selected)


def evaluate(model: WeatherFormer, data: SequenceSet, config: PretrainConfig,
             task: Optional[PretrainTaskState], seed: int, batch_size: int = 256) -> float:
    """Weighted mean loss over ``data`` with a fixed partition / fixed MLM masks."""
    rng = np.random.default_rng(seed)
    model.eval()
    total = weight = 0.0
    with no_grad():
        for batch in data.batches(batch_size):
            loss = _batch_loss(model, batch, config, task, rng)
            if loss is None:
                continue
            n = len(batch)
            total += float(loss.data) * n
            weight += n
    return total / weight if weight else float("nan")


def pretrain(model: WeatherFormer, train: SequenceSet, val: SequenceSet, config: PretrainConfig,
             run_dir=None, frozen: bool = False, eval_train: bool = True, log=None) -> PretrainResult:
    """Train ``model`` in place and keep the best-validation parameters.

    Each epoch records ``lr``, ``batch_loss`` (mean training-batch loss under
    the rotating partition), ``train_loss`` (a no-grad pass over the training
    set under the fixed validation partition) and ``val_loss``; the
    masked-feature task adds ``targets_seen``, the number of measurements that
    were prediction targets for at least one batch of the epoch. With
    ``frozen=True`` no update is applied.
    """
    shuffle_rng = np.random.default_rng([config.seed, 0])
    task = init_task([config.seed, 1]) if config.task == "masked-feature" else None
    val_task = init_task([config.seed, 2]) if config.task == "masked-feature" else None
    mlm_rng = np.random.default_rng([config.seed, 3])
    opt = Adam(model.parameters())
    schedule = config.schedule
    history = []
    best = (math.inf, -1, model.state_dict())

    for epoch in range(config.epochs):
        lr = schedule.lr_at(epoch)
        model.train()
        losses = []
        seen = np.zeros(N_MEASUREMENTS, dtype=bool)
        for b, batch in enumerate(train.batches(config.batch_size, shuffle_rng)):
            try:
                with Tape() as tape:
                    loss = _batch_loss(model, batch, config, task, mlm_rng)
                if loss is not None:
                    grads = backward(tape, loss)
                    if not frozen:
                        opt.step(grads, lr)
                    losses.append(float(loss.data))
            except NonFiniteError as exc:
                raise DivergenceError(f"non-finite values at epoch {epoch}, batch {b}: {exc}") from exc
            if task is not None:
                seen |= task.target_mask()
                task = swap_step(task)
        batch_loss = float(np.mean(losses)) if losses else float("nan")
        val_loss = evaluate(model, val, config, val_task, seed=config.seed + 7)
        train_loss = evaluate(model, train, config, val_task, seed=config.seed + 8) if eval_train else float("nan")
        if not math.isfinite(val_loss):
            raise DivergenceError(f"validation loss is not finite at epoch {epoch}")
        row = {"epoch": epoch, "lr": lr, "batch_loss": batch_loss, "train_loss": train_loss, "val_loss": val_loss}
        if task is not None:
            row["targets_seen"] = int(seen.sum())
        history.append(row)
        if log is not None:
            log(row)
        if val_loss < best[0]:
            best = (val_loss, epoch, model.state_dict())

    result = PretrainResult(history, best[1], best[0], best[2], task)
    if run_dir is not None:
        write_run(run_dir, model, config, result)
    return result


def write_run(run_dir, model: WeatherFormer, config: PretrainConfig, result: PretrainResult) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {"pretrain": dataclasses.asdict(config), "model": model.config.to_dict()}
    (run_dir / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True))
    write_history(run_dir / "losses.csv", result.history)
    save_checkpoint(run_dir / "checkpoint.wfck", result.best_state, model.config.to_dict(),
                    {"best_epoch": result.best_epoch, "best_val": result.best_val, "task": config.task})
    return run_dir


def write_history(path, history: list) -> None:
    if not history:
        raise ValueError("empty history")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(history[0]))
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})

"""Supervised fine-tuning loop shared by the downstream tasks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..autodiff import Adam, LrSchedule, NonFiniteError, Tape, Tensor, backward, no_grad
from ..nn import Module


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    base_lr: float
    warmup: int
    decay: float
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "base_lr", "decay"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.base_lr, self.warmup, self.decay)


YIELD_TRAINING = TrainConfig(epochs=40, batch_size=64, base_lr=5e-4, warmup=10, decay=0.95)
FLU_TRAINING = TrainConfig(epochs=30, batch_size=64, base_lr=9e-4, warmup=5, decay=0.95)


@dataclass
class FitResult:
    history: list
    best_epoch: int
    best_metric: float
    best_state: dict


def fit(model: Module, loss_fn: Callable[[np.ndarray], Tensor], n_train: int,
        metric_fn: Callable[[], float], config: TrainConfig, log=None) -> FitResult:
    """Minimize ``loss_fn(batch_indices)`` with Adam; select the epoch with
    the lowest ``metric_fn()`` (evaluated without gradients after each epoch).

    The model is left holding the best-epoch parameters.
    """
    if n_train < 1:
        raise TrainingError("no training samples")
    rng = np.random.default_rng([config.seed, 11])
    opt = Adam(model.parameters())
    history = []
    best = (math.inf, -1, model.state_dict())
    for epoch in range(config.epochs):
        lr = config.schedule.lr_at(epoch)
        model.train()
        order = rng.permutation(n_train)
        losses = []
        for lo in range(0, n_train, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            try:
                with Tape() as tape:
                    loss = loss_fn(idx)
                grads = backward(tape, loss)
                opt.step(grads, lr)
            except NonFiniteError as exc:
                raise TrainingError(f"non-finite values at epoch {epoch}: {exc}") from exc
            losses.append(float(loss.data))
        model.eval()
        with no_grad():
            metric = float(metric_fn())
        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)), "val_metric": metric}
        history.append(row)
        if log is not None:
            log(row)
        if metric < best[0]:
            best = (metric, epoch, model.state_dict())
    model.load_state_dict(best[2])
    return FitResult(history, best[1], best[0], best[2])


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def lstsq_fit(x: np.ndarray, y: np.ndarray, ridge: float = 1e-6) -> np.ndarray:
    """Least squares with an intercept column appended last.

    Falls back to ridge-regularized normal equations when the design matrix
    is rank deficient.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    a = np.hstack([x, np.ones((len(x), 1))])
    if np.linalg.matrix_rank(a) == a.shape[1]:
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        return coef
    return np.linalg.solve(a.T @ a + ridge * np.eye(a.shape[1]), a.T @ y)


def lstsq_predict(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x @ coef[:-1] + coef[-1]

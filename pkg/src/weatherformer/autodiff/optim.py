"""Adam and the warm-up / exponential-decay learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], **kwargs)


def adam_step(state: AdamState, params: Sequence[Tensor], grads: Sequence[np.ndarray], lr: float) -> AdamState:
    """Apply one bias-corrected Adam update in place and return the state."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and Adam accumulators differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch in adam_step: {p.shape}, {g.shape}, {m.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for {p.name or 'parameter'}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        step = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= step.astype(p.dtype, copy=False)
    return state


class Adam:
    """Stateful wrapper over :func:`adam_step` for a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState.zeros_like(self.params, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Mapping[Tensor, np.ndarray], lr: float) -> None:
        g = [grads.get(p, None) for p in self.params]
        g = [np.zeros_like(p.data) if gi is None else gi for p, gi in zip(self.params, g)]
        adam_step(self.state, self.params, g, lr)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    warmup_epochs: int = 0
    decay_factor: float = 1.0

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must lie in (0, 1]")

    def lr_at(self, epoch: int) -> float:
        return lr_at(self, epoch)


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """Linear warm-up to ``base_lr`` then geometric decay per epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < schedule.warmup_epochs:
        return schedule.base_lr * (epoch + 1) / schedule.warmup_epochs
    return schedule.base_lr * schedule.decay_factor ** (epoch - schedule.warmup_epochs)

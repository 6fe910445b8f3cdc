"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad


class NonDeterministicError(RuntimeError):
    """Two forward evaluations at the same point disagreed."""


def numerical_grad(f: Callable[[], Tensor], param: Tensor, index: tuple, eps: float) -> float:
    flat = param.data.reshape(-1)
    pos = np.ravel_multi_index(index, param.shape)
    orig = flat[pos]
    with no_grad():
        flat[pos] = orig + eps
        up = float(f().data)
        flat[pos] = orig - eps
        down = float(f().data)
    flat[pos] = orig
    return (up - down) / (2 * eps)


def grad_check(f: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5,
               n_samples: Optional[int] = 20, rng: Optional[np.random.Generator] = None) -> float:
    """Largest relative error between backprop and central differences.

    ``f`` rebuilds the scalar loss from ``params`` on every call. Coordinates
    are drawn uniformly over all parameter entries; ``n_samples=None`` checks
    every entry. Relative error is |a - n| / max(|a|, |n|, 1e-8).
    """
    for p in params:
        if p.dtype != np.float64:
            raise TypeError("grad_check requires 64-bit parameters")
    with no_grad():
        first = f().data.copy()
        second = f().data.copy()
    if not np.array_equal(first, second):
        raise NonDeterministicError("f returned different values for identical parameters")

    with Tape() as tape:
        loss = f()
    grads = backward(tape, loss)

    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = rng or np.random.default_rng(0)
    if n_samples is None or n_samples >= total:
        flat_ids = np.arange(total)
    else:
        flat_ids = rng.choice(total, size=n_samples, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst = 0.0
    for fid in flat_ids:
        k = int(np.searchsorted(offsets, fid, side="right") - 1)
        p = params[k]
        index = np.unravel_index(int(fid - offsets[k]), p.shape)
        analytic = float(grads.get(p, np.zeros_like(p.data))[index])
        numeric = numerical_grad(f, p, index, eps)
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst

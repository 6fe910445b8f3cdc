"""Differentiable operations.

Each op computes its forward value with numpy, checks it is finite, and (when
recording) registers a closure that maps the output gradient to one gradient
per input. Non-tensor arguments are treated as constants.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import erf

from .tensor import Tensor, as_tensor, make_result

SUPPORTED = (
    "add", "sub", "mul", "matmul", "sum", "mean", "reshape", "transpose",
    "getitem", "concat", "relu", "gelu", "sigmoid", "tanh", "softmax",
    "layer_norm", "embedding", "conv1d", "lstm_cell", "mse", "masked_fill",
    "dropout",
)


def _pair(a, b):
    """Promote a mixed pair so constants adopt the tensor's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data + b.data

    def back(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result("add", out, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data - b.data

    def back(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_result("sub", out, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    out = a.data * b.data

    def back(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result("mul", out, (a, b), back)


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def back(g):
        ga = unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return make_result("matmul", out, (a, b), back)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result("sum", np.asarray(out), (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([x.shape[i] for i in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def back(g):
        return (g.reshape(x.shape),)

    return make_result("reshape", out, (x,), back)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    out = np.transpose(x.data, axes)
    inverse = np.argsort(axes)

    def back(g):
        return (np.transpose(g, inverse),)

    return make_result("transpose", out, (x,), back)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def getitem(x: Tensor, index) -> Tensor:
    x = as_tensor(x)
    out = np.array(x.data[index])

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return make_result("getitem", out, (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    dtype = np.result_type(*[t.dtype for t in tensors])
    out = np.concatenate([t.data.astype(dtype, copy=False) for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_result("concat", out, tensors, back)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    keep = x.data > 0
    out = np.where(keep, x.data, 0).astype(x.dtype)

    def back(g):
        return (np.where(keep, g, 0).astype(g.dtype),)

    return make_result("relu", out, (x,), back)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    out = (x.data * cdf).astype(x.dtype)

    def back(g):
        pdf = np.exp(-0.5 * x.data ** 2) / math.sqrt(2.0 * math.pi)
        return ((g * (cdf + x.data * pdf)).astype(g.dtype),)

    return make_result("gelu", out, (x,), back)


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)

    def back(g):
        return (g * out * (1 - out),)

    return make_result("sigmoid", out, (x,), back)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e)).astype(z.dtype)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def back(g):
        return (g * (1 - out * out),)

    return make_result("tanh", out, (x,), back)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get exactly zero
    weight and do not influence the others (not even through the max shift)."""
    x = as_tensor(x)
    if mask is None:
        shifted = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not mask.any(axis=axis).all():
            raise ValueError("softmax mask leaves an empty row")
        lo = np.where(mask, x.data, -np.inf).max(axis=axis, keepdims=True)
        e = np.where(mask, np.exp(np.where(mask, x.data - lo, 0)), 0).astype(x.dtype)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return make_result("softmax", out, (x,), back)


def layer_norm(x: Tensor, gamma: Optional[Tensor] = None, beta: Optional[Tensor] = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the optional affine pair."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    inputs = [x]
    out = xhat
    if gamma is not None:
        out = out * gamma.data
        inputs.append(gamma)
    if beta is not None:
        out = out + beta.data
        inputs.append(beta)

    def back(g):
        gx_hat = g * gamma.data if gamma is not None else g
        d = x.shape[-1]
        gx = inv / d * (d * gx_hat - gx_hat.sum(axis=-1, keepdims=True)
                        - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True))
        grads = [gx.astype(x.dtype)]
        if gamma is not None:
            grads.append(unbroadcast(g * xhat, gamma.shape))
        if beta is not None:
            grads.append(unbroadcast(g, beta.shape))
        return tuple(grads)

    return make_result("layer_norm", out.astype(x.dtype), inputs, back)


def embedding(table: Tensor, indices) -> Tensor:
    """Gather rows of ``table``; gradient scatters back into the same rows."""
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise TypeError("embedding indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for table of {table.shape[0]} rows")
    out = table.data[idx]

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return make_result("embedding", out, (table,), back)


def masked_fill(x: Tensor, keep) -> Tensor:
    """Zero every entry where ``keep`` is False (exact zeros, not products)."""
    x = as_tensor(x)
    keep = np.broadcast_to(np.asarray(keep, dtype=bool), x.shape)
    out = np.where(keep, x.data, 0).astype(x.dtype)

    def back(g):
        return (np.where(keep, g, 0).astype(g.dtype),)

    return make_result("masked_fill", out, (x,), back)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool = True) -> Tensor:
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout needs an rng when active")
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = np.where(keep, x.data * scale, 0).astype(x.dtype)

    def back(g):
        return (np.where(keep, g * scale, 0).astype(g.dtype),)

    return make_result("dropout", out, (x,), back)


def _im2col(x: np.ndarray, k: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)  # B, C, L_out, K
    return windows.transpose(0, 2, 1, 3).reshape(x.shape[0], windows.shape[2], -1)


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: int = 0) -> Tensor:
    """1-D cross-correlation. x: (B, C_in, L), weight: (C_out, C_in, K)."""
    x = as_tensor(x)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv1d shape mismatch: x {x.shape}, weight {weight.shape}")
    b_, c_in, length = x.shape
    c_out, _, k = weight.shape
    l_out = length + 2 * padding - k + 1
    if l_out < 1:
        raise ValueError("conv1d kernel longer than padded input")
    cols = _im2col(x.data, k, padding)  # B, L_out, C_in*K
    w2 = weight.data.reshape(c_out, -1)
    out = cols @ w2.T
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 2, 1)
    inputs = [x, weight] + ([bias] if bias is not None else [])

    def back(g):
        gt = g.transpose(0, 2, 1)  # B, L_out, C_out
        gw = np.einsum("blo,blc->oc", gt, cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gt @ w2).reshape(b_, l_out, c_in, k)
            padded = np.zeros((b_, c_in, length + 2 * padding), dtype=g.dtype)
            for j in range(k):
                padded[:, :, j:j + l_out] += gcols[:, :, :, j].transpose(0, 2, 1)
            gx = padded[:, :, padding:padding + length]
        grads = [gx, gw]
        if bias is not None:
            grads.append(gt.sum(axis=(0, 1)))
        return tuple(grads)

    return make_result("conv1d", np.ascontiguousarray(out), inputs, back)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor) -> Tensor:
    """One LSTM step with gate order (input, forget, cell, output).

    Returns ``concat([h_next, c_next], axis=-1)`` so the step is a single op.
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    hidden = h.shape[-1]
    if w_ih.shape != (x.shape[-1], 4 * hidden) or w_hh.shape != (hidden, 4 * hidden):
        raise ValueError("lstm_cell weight shapes do not match input/hidden sizes")
    z = x.data @ w_ih.data + h.data @ w_hh.data + b.data
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden:2 * hidden])
    gg = np.tanh(z[..., 2 * hidden:3 * hidden])
    o = _sigmoid(z[..., 3 * hidden:])
    c_next = f * c.data + i * gg
    tc = np.tanh(c_next)
    h_next = o * tc
    out = np.concatenate([h_next, c_next], axis=-1)

    def back(g):
        gh, gc = g[..., :hidden], g[..., hidden:]
        gc = gc + gh * o * (1 - tc * tc)
        dz = np.concatenate([
            gc * gg * i * (1 - i),
            gc * c.data * f * (1 - f),
            gc * i * (1 - gg * gg),
            gh * tc * o * (1 - o),
        ], axis=-1)
        return (
            dz @ w_ih.data.T,
            dz @ w_hh.data.T,
            gc * f,
            x.data.T @ dz if x.ndim == 2 else np.einsum("...i,...j->ij", x.data, dz),
            h.data.T @ dz if h.ndim == 2 else np.einsum("...i,...j->ij", h.data, dz),
            unbroadcast(dz, b.shape),
        )

    return make_result("lstm_cell", out, (x, h, c, w_ih, w_hh, b), back)


def mse(pred: Tensor, target, weight=None) -> Tensor:
    """Mean squared error; with ``weight`` it is sum(w*d^2)/sum(w)."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    if weight is None:
        w = None
        denom = diff.size
        out = (diff * diff).sum() / denom
    else:
        w = np.broadcast_to(np.asarray(weight, dtype=pred.dtype), pred.shape)
        denom = w.sum()
        if denom <= 0:
            raise ValueError("mse weight selects no elements")
        out = (w * diff * diff).sum() / denom

    def back(g):
        scale = 2.0 * g / denom
        return ((scale * diff if w is None else scale * w * diff).astype(pred.dtype),)

    return make_result("mse", np.asarray(out, dtype=pred.dtype), (pred,), back)


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    """Dispatch by name; the entry point used by generic tooling and tests."""
    if kind not in SUPPORTED:
        raise ValueError(f"unsupported op kind {kind!r}")
    return globals()[kind](*inputs, **kwargs)

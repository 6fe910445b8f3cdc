"""Layers built on the autodiff core.

Weights follow ``x @ W`` (shape ``(in, out)``). Linear and convolution
weights are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at 0.
"""
from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .autodiff import Tensor, ops, parameter


class Module:
    training = False

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = "") -> dict:
        out = {}
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self) -> list:
        return list(self.named_parameters().values())

    def modules(self):
        yield self
        for value in vars(self).values():
            items = value if isinstance(value, (list, tuple)) else [value]
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> dict:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict, strict: bool = True) -> None:
        own = self.named_parameters()
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            if name not in state:
                continue
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data = arr.astype(p.dtype).copy()

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(uniform_init(rng, (in_dim, out_dim), in_dim))
        self.bias = parameter(np.zeros(out_dim)) if bias else None

    def forward(self, x):
        y = ops.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Dropout(Module):
    def __init__(self, rate: float = 0.0, rng: Optional[np.random.Generator] = None):
        self.rate = rate
        self.rng = rng

    def forward(self, x):
        return ops.dropout(x, self.rate, self.rng, training=self.training)


ACTIVATIONS = {"relu": ops.relu, "gelu": ops.gelu, "tanh": ops.tanh}


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention. ``key_mask`` (B, N) marks keys that
    may be attended to; masked keys receive exactly zero weight."""

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q = Linear(d_model, d_model, rng)
        self.k = Linear(d_model, d_model, rng)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)

    def _split(self, t, b, n):
        return ops.transpose(t.reshape(b, n, self.n_heads, self.head_dim), (0, 2, 1, 3))

    def forward(self, x, key_mask=None):
        b, n, d = x.shape
        q = self._split(self.q(x), b, n)
        k = self._split(self.k(x), b, n)
        v = self._split(self.v(x), b, n)
        scores = ops.matmul(q, ops.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(self.head_dim))
        mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, None, :]
        weights = ops.softmax(scores, axis=-1, mask=mask)
        ctx = ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3)).reshape(b, n, d)
        return self.o(ctx)


class EncoderLayer(Module):
    """Pre-norm transformer block: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, d_model: int, n_heads: int, ff_dim: int, rng: np.random.Generator,
                 dropout: float = 0.0, activation: str = "relu"):
        self.norm1 = LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, ff_dim, rng)
        self.ff2 = Linear(ff_dim, d_model, rng)
        self.drop = Dropout(dropout, rng)
        self.activation = activation

    def forward(self, x, key_mask=None):
        x = x + self.drop(self.attn(self.norm1(x), key_mask))
        h = ACTIVATIONS[self.activation](self.ff1(self.norm2(x)))
        return x + self.drop(self.ff2(h))


class TransformerEncoder(Module):
    def __init__(self, d_model: int, n_heads: int, n_layers: int, ff_dim: int, rng: np.random.Generator,
                 dropout: float = 0.0, activation: str = "relu"):
        self.layers = [EncoderLayer(d_model, n_heads, ff_dim, rng, dropout, activation) for _ in range(n_layers)]

    def forward(self, x, key_mask=None):
        for layer in self.layers:
            x = layer(x, key_mask)
        return x


class Conv1d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 padding: int = 0):
        fan_in = in_channels * kernel_size
        self.weight = parameter(uniform_init(rng, (out_channels, in_channels, kernel_size), fan_in))
        self.bias = parameter(np.zeros(out_channels))
        self.padding = padding

    def forward(self, x):
        return ops.conv1d(x, self.weight, self.bias, padding=self.padding)


class LSTM(Module):
    """Single-layer LSTM over (B, T, I) returning the last hidden state."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.hidden_dim = hidden_dim
        self.w_ih = parameter(uniform_init(rng, (input_dim, 4 * hidden_dim), hidden_dim))
        self.w_hh = parameter(uniform_init(rng, (hidden_dim, 4 * hidden_dim), hidden_dim))
        bias = np.zeros(4 * hidden_dim)
        bias[hidden_dim:2 * hidden_dim] = 1.0  # forget gate
        self.bias = parameter(bias)

    def forward(self, x):
        b, t, _ = x.shape
        h = Tensor(np.zeros((b, self.hidden_dim), dtype=x.dtype))
        c = Tensor(np.zeros((b, self.hidden_dim), dtype=x.dtype))
        for step in range(t):
            hc = ops.lstm_cell(x[:, step, :], h, c, self.w_ih, self.w_hh, self.bias)
            h = hc[:, :self.hidden_dim]
            c = hc[:, self.hidden_dim:]
        return h

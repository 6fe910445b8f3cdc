"""Tensor container, recording tape and the reverse-mode sweep.

Operations only record themselves while a :class:`Tape` is active (used as a
context manager) and at least one input requires a gradient. Outside a tape
everything runs as plain numpy, which is what inference and finite-difference
evaluation use.
"""
from __future__ import annotations

import contextlib
import itertools
import threading
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_local = threading.local()
_ids = itertools.count()
_default_dtype = np.float32


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class TapeError(RuntimeError):
    """Raised on misuse of a tape (consumed twice, loss not on tape, ...)."""


def get_default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    global _default_dtype
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}")
    _default_dtype = dtype


@contextlib.contextmanager
def default_dtype(dtype) -> Iterator[None]:
    """Temporarily switch the dtype used for new parameters and constants."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    """A dense array with an optional gradient slot.

    Parameters are leaf tensors created with ``requires_grad=True``; every
    tensor produced by an op is a non-leaf.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "id", "is_leaf")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(_default_dtype)
        if arr.ndim and 0 in arr.shape:
            raise ValueError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self.id = next(_ids)
        self.is_leaf = True

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in ops.py.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return ops.mul(self, 1.0 / other)

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        return ops.transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def parameter(data, name: Optional[str] = None, dtype=None) -> Tensor:
    dtype = dtype or _default_dtype
    return Tensor(np.array(data, dtype=dtype), requires_grad=True, name=name)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is None and not np.issubdtype(arr.dtype, np.floating):
        dtype = _default_dtype
    return Tensor(arr, dtype=dtype)


class Op:
    """One recorded operation: inputs, output and the rule mapping the output
    gradient to input gradients."""

    __slots__ = ("kind", "inputs", "output", "backward")

    def __init__(self, kind: str, inputs: Sequence[Tensor], output: Tensor,
                 backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.kind = kind
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward

    @property
    def input_ids(self) -> tuple:
        return tuple(t.id for t in self.inputs)

    @property
    def output_id(self) -> int:
        return self.output.id


class Tape:
    """Ordered record of differentiable operations.

    >>> with Tape() as tape:
    ...     loss = f(params)
    >>> grads = backward(tape, loss)
    """

    def __init__(self):
        self.ops: list[Op] = []
        self.consumed = False
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.ops)

    def record(self, op: Op) -> None:
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        for t in op.inputs:
            if t.requires_grad and not t.is_leaf and t.id not in self._produced:
                raise TapeError(f"input of {op.kind!r} was produced outside this tape")
        self.ops.append(op)
        self._produced.add(op.output.id)


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional[Tape]:
    stack = _stack()
    return stack[-1] if stack else None


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording, e.g. for validation passes inside a training tape."""
    stack = _stack()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {what}")


def make_result(kind: str, data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    """Wrap an op's output and record it on the active tape if needed."""
    check_finite(data, kind)
    out = Tensor(data)
    out.is_leaf = False
    needs = any(t.requires_grad for t in inputs)
    tape = active_tape()
    if needs and tape is not None:
        out.requires_grad = True
        tape.record(Op(kind, inputs, out, backward))
    return out


def backward(tape: Tape, loss: Tensor) -> dict:
    """Reverse sweep over ``tape`` seeded at the scalar ``loss``.

    Populates ``.grad`` on every leaf that requires a gradient and appears on
    the tape (zeros if no gradient reached it) and returns ``{leaf: grad}``.
    The tape is consumed: intermediates are released.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    if tape.consumed:
        raise TapeError("tape already consumed")
    if loss.id not in tape._produced:
        raise TapeError("loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for op in reversed(tape.ops):
        g = grads.pop(op.output.id, None)
        in_grads = op.backward(g) if g is not None else (None,) * len(op.inputs)
        for t, gi in zip(op.inputs, in_grads):
            if not t.requires_grad:
                continue
            if t.is_leaf:
                leaves.setdefault(t.id, t)
            if gi is None:
                continue
            check_finite(gi, f"backward of {op.kind}")
            if gi.shape != t.shape:
                raise ValueError(f"gradient shape {gi.shape} != {t.shape} in {op.kind}")
            prev = grads.get(t.id)
            grads[t.id] = gi if prev is None else prev + gi

    result = {}
    for tid, leaf in leaves.items():
        g = grads.get(tid)
        leaf.grad = np.zeros_like(leaf.data) if g is None else g.astype(leaf.dtype, copy=False)
        result[leaf] = leaf.grad
    tape.consumed = True
    tape.ops.clear()
    tape._produced.clear()
    return result

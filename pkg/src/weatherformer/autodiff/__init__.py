"""Minimal dense-tensor core with reverse-mode gradients and Adam."""
from . import ops
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import NonDeterministicError, grad_check, numerical_grad
from .ops import forward_op
from .optim import Adam, AdamState, LrSchedule, adam_step, lr_at
from .tensor import (
    NonFiniteError,
    Op,
    Tape,
    TapeError,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    default_dtype,
    get_default_dtype,
    no_grad,
    parameter,
    set_default_dtype,
)

__all__ = [
    "Adam", "AdamState", "CheckpointError", "LrSchedule", "NonDeterministicError",
    "NonFiniteError", "Op", "Tape", "TapeError", "Tensor", "active_tape", "adam_step",
    "as_tensor", "backward", "default_dtype", "forward_op", "get_default_dtype", "grad_check",
    "load_checkpoint", "lr_at", "no_grad", "numerical_grad", "ops", "parameter",
    "save_checkpoint", "set_default_dtype",
]

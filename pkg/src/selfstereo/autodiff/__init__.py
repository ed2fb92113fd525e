"""Reverse-mode automatic differentiation over NumPy arrays."""
from selfstereo.autodiff.tensor import (
    Tape,
    Tensor,
    backward,
    default_dtype,
    get_tape,
    grad_enabled,
    no_grad,
    precision,
    precision_bits,
    reset_tape,
    set_default_precision,
    using_tape,
)
from selfstereo.autodiff import ops, nn
from selfstereo.autodiff.gradcheck import GradCheckReport, grad_check

__all__ = [
    "GradCheckReport",
    "Tape",
    "Tensor",
    "backward",
    "default_dtype",
    "get_tape",
    "grad_check",
    "grad_enabled",
    "nn",
    "no_grad",
    "ops",
    "precision",
    "precision_bits",
    "reset_tape",
    "set_default_precision",
    "using_tape",
]

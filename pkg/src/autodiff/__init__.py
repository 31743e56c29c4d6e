# src/autodiff/__init__.py
"""
Minimal dense-tensor engine with reverse-mode automatic differentiation.
"""
from .tensor import (
    ComputationTape,
    GraphError,
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    current_tape,
    get_dtype,
    get_precision,
    is_recording,
    no_grad,
    precision,
    set_precision,
)
from .gradcheck import NonDeterministicError, grad_check
from . import ops

__all__ = [
    "ComputationTape",
    "GraphError",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "as_tensor",
    "current_tape",
    "get_dtype",
    "get_precision",
    "is_recording",
    "no_grad",
    "precision",
    "set_precision",
    "NonDeterministicError",
    "grad_check",
    "ops",
]

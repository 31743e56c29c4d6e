# src/autodiff/gradcheck.py
import logging
from typing import Callable, Sequence

import numpy as np

from .tensor import GraphError, Tensor, current_tape, no_grad

logger = logging.getLogger(__name__)


class NonDeterministicError(RuntimeError):
    """Raised when two forward passes over identical inputs disagree."""


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-6) -> float:
    """
    Compares reverse-mode gradients with central differences.

    Args:
        fn: Deterministic function of `inputs` returning a scalar tensor. Any
            noise it uses must be fixed (injected) beforehand.
        inputs: Double-precision tensors to differentiate against. Their data
            is perturbed in place and restored.
        eps: Central-difference step.

    Returns:
        max over all elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    for tensor in inputs:
        if tensor.data.dtype != np.float64:
            raise ValueError(f"grad_check needs float64 inputs, got {tensor.data.dtype} for {tensor!r}.")

    with no_grad():
        first = np.array(fn(*inputs).data, copy=True)
        second = np.array(fn(*inputs).data, copy=True)
    if first.shape != second.shape or not np.array_equal(first, second):
        raise NonDeterministicError("grad_check: two forward passes with identical inputs disagree.")
    if first.size != 1:
        raise GraphError(f"grad_check: fn must return a scalar, got shape {first.shape}.")

    for tensor in inputs:
        tensor.requires_grad = True
        tensor.zero_grad()
    current_tape().clear()
    fn(*inputs).backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    max_error = 0.0
    with no_grad():
        for tensor, grad in zip(inputs, analytic):
            flat = tensor.data.reshape(-1)
            flat_grad = grad.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                f_plus = float(fn(*inputs).data)
                flat[i] = original - eps
                f_minus = float(fn(*inputs).data)
                flat[i] = original
                numeric = (f_plus - f_minus) / (2.0 * eps)
                exact = float(flat_grad[i])
                error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
                max_error = max(max_error, error)

    logger.debug(f"grad_check over {sum(t.size for t in inputs)} elements: max relative error {max_error:.3e}")
    return max_error

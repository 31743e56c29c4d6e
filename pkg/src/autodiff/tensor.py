# src/autodiff/tensor.py
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
DEFAULT_PRECISION = "float64"
# tape, grad mode and precision are per thread
_local = threading.local()

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class NonFiniteError(FloatingPointError):
    """Raised when a forward pass produces NaN or Inf elements."""


class GraphError(RuntimeError):
    """Raised for misuse of the computation tape (non-scalar loss, detached graph)."""


def set_precision(name: str) -> None:
    """
    Sets the element precision of tensors created by the calling thread.
    Other threads keep their own setting (float64 until they set one).

    Args:
        name: "float64" for gradient checks and oracles, "float32" for training.
    """
    if name not in _PRECISIONS:
        raise ValueError(f"Unknown precision '{name}'. Expected one of {sorted(_PRECISIONS)}.")
    if get_precision() != name:
        logger.info(f"Tensor precision set to {name}")
    _local.precision = name


def get_precision() -> str:
    return getattr(_local, "precision", DEFAULT_PRECISION)


def get_dtype() -> type:
    return _PRECISIONS[get_precision()]


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switches the calling thread's precision."""
    previous = get_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


@dataclass
class TapeEntry:
    """One recorded operation: its inputs, its output, and the rule mapping d(out) to d(inputs)."""
    index: int
    name: str
    inputs: Tuple["Tensor", ...]
    output: "Tensor"
    backward: BackwardFn


class ComputationTape:
    """
    Ordered record of differentiable operations for one execution context.

    Entries are appended as operations execute, so the list is always a valid
    topological order. A backward traversal walks it in reverse and visits each
    entry at most once.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._next_index = 0

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, name: str, inputs: Tuple["Tensor", ...], output: "Tensor", backward: BackwardFn) -> TapeEntry:
        index = self._next_index
        for tensor in inputs:
            producer = tensor._entry
            if producer is not None and producer.index >= index:
                raise GraphError(f"Operation '{name}' consumes a tensor recorded after it.")
        entry = TapeEntry(index=index, name=name, inputs=inputs, output=output, backward=backward)
        self.entries.append(entry)
        self._next_index += 1
        output._entry = entry
        return entry

    def clear(self) -> None:
        for entry in self.entries:
            entry.output._entry = None
        self.entries = []

    def backward(self, loss: "Tensor", retain_graph: bool = False) -> None:
        """
        Populates `.grad` on every requires_grad leaf that the loss depends on.

        Args:
            loss: A scalar tensor produced by recorded operations.
            retain_graph: Keep the tape for another traversal. By default the
                tape is cleared afterwards.
        """
        if loss.data.size != 1:
            raise GraphError(f"backward() requires a scalar loss, got shape {loss.shape}.")
        if loss._entry is None or loss._entry.index >= self._next_index or not self.entries:
            raise GraphError("Loss is not on the computation tape (detached graph or already released).")

        stop = self._position_of(loss._entry)
        pending = {id(loss): np.ones_like(loss.data)}

        for entry in reversed(self.entries[: stop + 1]):
            grad_out = pending.pop(id(entry.output), None)
            if grad_out is None:
                continue
            input_grads = entry.backward(grad_out)
            for tensor, grad in zip(entry.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if grad.shape != tensor.data.shape:
                    raise GraphError(
                        f"Backward rule of '{entry.name}' produced gradient of shape {grad.shape} "
                        f"for an input of shape {tensor.data.shape}."
                    )
                if tensor._entry is None:
                    tensor._accumulate(grad)
                elif id(tensor) in pending:
                    pending[id(tensor)] = pending[id(tensor)] + grad
                else:
                    pending[id(tensor)] = grad

        if not retain_graph:
            self.clear()

    def _position_of(self, entry: TapeEntry) -> int:
        # Entries are stored in index order; after a clear the list restarts but indices keep growing.
        offset = self.entries[0].index
        position = entry.index - offset
        if position < 0 or position >= len(self.entries) or self.entries[position] is not entry:
            raise GraphError("Loss entry does not belong to the current tape.")
        return position


def current_tape() -> ComputationTape:
    """Returns the tape owned by the calling thread."""
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = ComputationTape()
        _local.tape = tape
    return tape


def is_recording() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disables recording on the calling thread's tape (inference, numeric differentiation)."""
    previous = is_recording()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def check_finite(data: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(data)):
        bad = int(np.size(data) - np.count_nonzero(np.isfinite(data)))
        raise NonFiniteError(f"{where}: {bad} non-finite element(s) produced.")


class Tensor:
    """
    Dense n-dimensional array taking part in reverse-mode differentiation.

    Attributes:
        data: The elements as a numpy array (row-major).
        requires_grad: Whether gradients flow to (or through) this tensor.
        grad: Gradient accumulator with the same shape as data, or None.
        name: Optional label, used for parameters and error messages.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None,
                 dtype: Optional[type] = None):
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=dtype or get_dtype())
        if any(extent <= 0 for extent in array.shape):
            raise ShapeError(f"Tensor extents must be positive, got {array.shape}.")
        check_finite(array, f"Tensor({name or 'unnamed'})")
        self.data: np.ndarray = array
        self.requires_grad: bool = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._entry: Optional[TapeEntry] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool, name: Optional[str] = None) -> "Tensor":
        # Internal constructor for op outputs: no copy, finiteness checked by the caller.
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = requires_grad
        out.grad = None
        out.name = name
        out._entry = None
        return out

    # --- convenience ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}.")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy(), requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + grad

    def backward(self, retain_graph: bool = False) -> None:
        current_tape().backward(self, retain_graph=retain_graph)

    def __repr__(self) -> str:
        req = ", requires_grad=True" if self.requires_grad else ""
        nm = f", name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{req}{nm})"

    # --- operators (implemented in ops) ---
    def __add__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        from . import ops
        return ops.mul(other, self)

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.neg(self)


def as_tensor(value: ArrayLike) -> Tensor:
    """Returns `value` unchanged if it is a Tensor, else a constant tensor in the current precision."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)

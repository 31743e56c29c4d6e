# src/nn_blocks/params.py
import logging
from typing import Dict, Iterator, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor, get_dtype
from ..utils.helpers import derive_seed

logger = logging.getLogger(__name__)


class ParameterStore:
    """
    Named trainable parameters plus non-trainable buffers (batch-norm running statistics).

    Every parameter is initialized from its own random stream, seeded by
    (store seed, parameter name). Two stores built with the same seed therefore
    hold identical values for every parameter they share by name and shape,
    whatever else they contain. This is what makes vanilla and split twins
    share their trunk weights.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.params: Dict[str, Tensor] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.params or name in self.buffers

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.params[name]
        except KeyError:
            raise KeyError(f"Parameter '{name}' is not defined in this store.") from None

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.params.items())

    def _rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.seed, f"init/{name}"))

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"Parameter '{name}' registered twice.")
        tensor = Tensor(data, requires_grad=True, name=name)
        self.params[name] = tensor
        return tensor

    def fan_in_uniform(self, name: str, shape: Sequence[int], fan_in: int) -> Tensor:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights."""
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        return self._register(name, self._rng(name).uniform(-bound, bound, size=tuple(shape)))

    def constant(self, name: str, shape: Sequence[int], value: float) -> Tensor:
        return self._register(name, np.full(tuple(shape), value))

    def buffer(self, name: str, shape: Sequence[int], value: float) -> np.ndarray:
        if name in self.buffers:
            raise KeyError(f"Buffer '{name}' registered twice.")
        array = np.full(tuple(shape), value, dtype=np.float64)
        self.buffers[name] = array
        return array

    def get_buffer(self, name: str) -> np.ndarray:
        return self.buffers[name]

    # --- state handling ---
    def count(self, prefix: Optional[str] = None) -> int:
        """Number of trainable scalars, optionally restricted to names starting with prefix."""
        return int(sum(t.size for name, t in self.params.items() if prefix is None or name.startswith(prefix)))

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: t.shape for name, t in self.params.items()}

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def state_arrays(self) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
        """Copies of (parameters, buffers) keyed by name."""
        return (
            {name: t.data.copy() for name, t in self.params.items()},
            {name: b.copy() for name, b in self.buffers.items()},
        )

    def load_arrays(self, params: Dict[str, np.ndarray], buffers: Dict[str, np.ndarray]) -> None:
        """
        Replaces all values. Names and shapes must match exactly.

        Raises:
            KeyError: when the named blocks differ (e.g. a split head loaded into a vanilla model).
            ValueError: when a block's shape differs.
        """
        expected, provided = set(self.params), set(params)
        if expected != provided:
            missing = sorted(expected - provided)
            unexpected = sorted(provided - expected)
            raise KeyError(f"Parameter blocks differ: missing {missing}, unexpected {unexpected}.")
        if set(self.buffers) != set(buffers):
            raise KeyError(f"Buffer blocks differ: expected {sorted(self.buffers)}, got {sorted(buffers)}.")
        for name, array in params.items():
            if tuple(array.shape) != self.params[name].shape:
                raise ValueError(f"Parameter '{name}' has shape {array.shape}, expected {self.params[name].shape}.")
        for name, array in buffers.items():
            if tuple(array.shape) != self.buffers[name].shape:
                raise ValueError(f"Buffer '{name}' has shape {array.shape}, expected {self.buffers[name].shape}.")
        dtype = get_dtype()
        for name, array in params.items():
            self.params[name].data = np.array(array, dtype=dtype)
            self.params[name].zero_grad()
        for name, array in buffers.items():
            self.buffers[name][...] = array
        logger.debug(f"Loaded {len(params)} parameter blocks and {len(buffers)} buffers.")

    def cast(self, dtype: type) -> None:
        """Re-casts parameter data (e.g. after switching the precision mode)."""
        for tensor in self.params.values():
            tensor.data = tensor.data.astype(dtype)
            tensor.zero_grad()

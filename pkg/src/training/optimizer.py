# src/training/optimizer.py
import logging
from typing import Dict, Tuple

import numpy as np

from ..nn_blocks import ParameterStore

logger = logging.getLogger(__name__)


class Adam:
    """Adam without weight decay, updating a ParameterStore in place."""

    def __init__(self, store: ParameterStore, lr: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"Learning rate must be positive, got {lr}.")
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(t.data, dtype=np.float64) for name, t in store}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(t.data, dtype=np.float64) for name, t in store}

    def zero_grad(self) -> None:
        self.store.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for name, param in self.store:
            if param.grad is None:
                continue
            grad = param.grad.astype(np.float64)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            update = self.lr * (self.m[name] / correction1) / (np.sqrt(self.v[name] / correction2) + self.eps)
            param.data = (param.data - update).astype(param.data.dtype)

    def state_dict(self) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
        """Scalar hyperparameters plus moment arrays keyed 'm/<name>' and 'v/<name>'."""
        scalars = {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps, "step_count": self.step_count}
        arrays = {f"m/{name}": arr for name, arr in self.m.items()}
        arrays.update({f"v/{name}": arr for name, arr in self.v.items()})
        return scalars, arrays

    def load_state_dict(self, scalars: Dict[str, float], arrays: Dict[str, np.ndarray]) -> None:
        for name in self.m:
            if f"m/{name}" not in arrays or f"v/{name}" not in arrays:
                raise KeyError(f"Optimizer state is missing moments for '{name}'.")
        self.lr = float(scalars["lr"])
        self.beta1, self.beta2 = float(scalars["beta1"]), float(scalars["beta2"])
        self.eps = float(scalars["eps"])
        self.step_count = int(scalars["step_count"])
        for name in self.m:
            self.m[name] = np.array(arrays[f"m/{name}"], dtype=np.float64)
            self.v[name] = np.array(arrays[f"v/{name}"], dtype=np.float64)

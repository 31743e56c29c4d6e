# src/latent_analysis/collapse.py
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Tuple

import numpy as np

from ..autodiff import no_grad

if TYPE_CHECKING:
    from ..vae_core.model import VAEModel

logger = logging.getLogger(__name__)

DEFAULT_ACTIVE_THRESHOLD = 0.01


def per_unit_kl(mu: np.ndarray, logvar: np.ndarray) -> np.ndarray:
    """Closed-form KL to N(0, 1) per latent unit, averaged over the rows."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    terms = 0.5 * (mu ** 2 + np.exp(logvar) - logvar - 1.0)
    return terms.mean(axis=0) if terms.ndim == 2 else terms


def active_units(kl_per_unit: np.ndarray, threshold: float = DEFAULT_ACTIVE_THRESHOLD) -> Tuple[int, np.ndarray]:
    """
    A unit is collapsed when its average KL is below `threshold` nats.

    Returns:
        (number of active units, boolean collapsed mask)
    """
    if threshold <= 0:
        raise ValueError(f"Active-unit threshold must be positive, got {threshold}.")
    collapsed = np.asarray(kl_per_unit, dtype=np.float64) < threshold
    return int(np.count_nonzero(~collapsed)), collapsed


@dataclass
class LatentBatch:
    """Encoder means and log-variances over a dataset, with per-unit KL averaged over it."""
    codes: np.ndarray
    logvars: np.ndarray
    kl_per_unit: np.ndarray

    def __post_init__(self):
        if self.codes.shape != self.logvars.shape:
            raise ValueError(f"codes {self.codes.shape} and logvars {self.logvars.shape} differ.")
        if not (np.all(np.isfinite(self.codes)) and np.all(np.isfinite(self.logvars))):
            raise ValueError("LatentBatch contains non-finite values.")

    @property
    def count(self) -> int:
        return self.codes.shape[0]

    @property
    def dim(self) -> int:
        return self.codes.shape[1]


def encode_dataset(model: "VAEModel", images: np.ndarray, batch_size: int = 256,
                   limit: Optional[int] = None) -> LatentBatch:
    """Encodes images in eval mode (no recording) into a LatentBatch."""
    if limit is not None:
        images = images[:limit]
    codes, logvars = [], []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            latent = model.encode(images[start:start + batch_size], training=False)
            codes.append(latent.mu.data.astype(np.float64))
            logvars.append(latent.logvar.data.astype(np.float64))
    codes_arr, logvars_arr = np.concatenate(codes), np.concatenate(logvars)
    return LatentBatch(codes=codes_arr, logvars=logvars_arr, kl_per_unit=per_unit_kl(codes_arr, logvars_arr))

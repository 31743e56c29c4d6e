# src/data_management/synthetic_data_generator.py
import logging

import numpy as np

from ..utils.helpers import derive_seed
from .data_loader import Dataset

logger = logging.getLogger(__name__)

MIN_SIZE = 8
RECTANGLE, ELLIPSE = 0, 1
DARK, BRIGHT = 0, 1
NOISE_TERMS, NOISE_HALF_WIDTH = 4, 16


class SyntheticDataGenerator:
    """
    Generates small image datasets without any download, for smoke runs and tests.

    Generation only uses integer draws and integer arithmetic, so a seed gives
    the same bytes on every platform.
    """
    def __init__(self, size: int = 16, seed: int = 0):
        if size < MIN_SIZE:
            raise ValueError(f"Synthetic images must be at least {MIN_SIZE}x{MIN_SIZE}, got {size}.")
        self.size = size
        self.rng = np.random.default_rng(seed)

    def _rectangle(self, canvas: np.ndarray) -> None:
        s = self.size
        w, h = self.rng.integers(s // 4, s // 2 + 1, size=2)
        x0 = self.rng.integers(0, s - w + 1)
        y0 = self.rng.integers(0, s - h + 1)
        canvas[y0:y0 + h, x0:x0 + w] = self.rng.integers(128, 256)

    def _ellipse(self, canvas: np.ndarray) -> None:
        s = self.size
        rx, ry = self.rng.integers(max(2, s // 8), s // 4 + 1, size=2)
        cx = self.rng.integers(rx, s - rx)
        cy = self.rng.integers(ry, s - ry)
        yy, xx = np.mgrid[0:s, 0:s]
        inside = (xx - cx) ** 2 * ry ** 2 + (yy - cy) ** 2 * rx ** 2 <= rx ** 2 * ry ** 2
        canvas[inside] = self.rng.integers(128, 256)

    def generate_shapes(self, count: int) -> Dataset:
        """One rectangle or ellipse per blank canvas; label is the shape kind."""
        pixels = np.zeros((count, self.size, self.size), dtype=np.int64)
        labels = self.rng.integers(0, 2, size=count)
        for i in range(count):
            if labels[i] == RECTANGLE:
                self._rectangle(pixels[i])
            else:
                self._ellipse(pixels[i])
        logger.info(f"Generated {count} synthetic shape images of {self.size}x{self.size}.")
        return Dataset(images=(pixels / 255.0)[..., None], labels=labels)

    def generate_two_gaussians(self, count: int) -> Dataset:
        """
        Dark and bright noise images centred at 64 and 191 out of 255. The
        per-pixel noise is a sum of uniform integer draws, roughly Gaussian
        with standard deviation 19, clipped to the byte range.
        """
        labels = self.rng.integers(0, 2, size=count)
        centres = np.where(labels == BRIGHT, 191, 64)[:, None, None]
        noise = self.rng.integers(-NOISE_HALF_WIDTH, NOISE_HALF_WIDTH + 1,
                                  size=(NOISE_TERMS, count, self.size, self.size)).sum(axis=0)
        pixels = np.clip(centres + noise, 0, 255)
        logger.info(f"Generated {count} synthetic two-gaussians images of {self.size}x{self.size}.")
        return Dataset(images=(pixels / 255.0)[..., None], labels=labels)


def synth_dataset(kind: str, count: int, size: int, seed: int, split: str = "train") -> Dataset:
    """
    Args:
        kind: 'shapes' or 'two-gaussians'.
        count: Number of images.
        size: Square image extent, at least 8.
        seed: Generator seed of the train split; the test split draws from a seed derived from it.
        split: 'train' or 'test'.
    """
    if split not in ("train", "test"):
        raise ValueError(f"Unknown split '{split}'.")
    generator = SyntheticDataGenerator(size=size, seed=seed if split == "train" else derive_seed(seed, "synthetic/test"))
    if kind == "shapes":
        dataset = generator.generate_shapes(count)
    elif kind == "two-gaussians":
        dataset = generator.generate_two_gaussians(count)
    else:
        raise ValueError(f"Unknown synthetic dataset '{kind}'.")
    dataset.split = split
    return dataset

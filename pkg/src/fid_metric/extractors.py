# src/fid_metric/extractors.py
"""
Feature extractors for Frechet distances.

Extractors are configured by short spec strings: `identity`, `pca(d)`,
`random_conv(d)` and `from_file:<path>`.
"""
import logging
import re
from typing import Optional, Tuple, Union

import numpy as np
import scipy.linalg

from ..autodiff import Tensor, no_grad, ops, precision
from ..data_management.persistence import load_matrix
from ..utils.helpers import derive_seed
from .stats import FeatureMatrix, FidReport, fid_from_features

logger = logging.getLogger(__name__)

_SPEC_PATTERN = re.compile(r"^(pca|random_conv)\((\d+)\)$")


def parse_extractor_spec(spec: str) -> Tuple[str, Union[int, str, None]]:
    """
    Returns (kind, argument): ('identity', None), ('pca', d), ('random_conv', d)
    or ('from_file', path).
    """
    spec = spec.strip()
    if spec == "identity":
        return "identity", None
    if spec.startswith("from_file:"):
        path = spec[len("from_file:"):]
        if not path:
            raise ValueError("Extractor 'from_file:' needs a path.")
        return "from_file", path
    match = _SPEC_PATTERN.match(spec)
    if match is None:
        raise ValueError(f"Malformed extractor spec '{spec}' (expected identity, pca(d), random_conv(d) or from_file:<path>).")
    dim = int(match.group(2))
    if dim < 1:
        raise ValueError(f"Extractor dimension must be positive, got {dim}.")
    return match.group(1), dim


def _flatten(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim < 2:
        raise ValueError(f"Expected a stack of images, got shape {images.shape}.")
    return images.reshape(images.shape[0], -1)


class FeatureExtractor:
    """Maps a stack of images to a FeatureMatrix. `fit` is a no-op unless overridden."""
    spec = "identity"
    needs_fit = False

    def fit(self, reference: np.ndarray) -> "FeatureExtractor":
        return self

    def extract(self, images: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(_flatten(images))


class PCAExtractor(FeatureExtractor):
    needs_fit = True

    def __init__(self, dim: int):
        self.dim = dim
        self.spec = f"pca({dim})"
        self.mean: Optional[np.ndarray] = None
        self.components: Optional[np.ndarray] = None

    def fit(self, reference: np.ndarray) -> "PCAExtractor":
        flat = _flatten(reference)
        if self.dim > min(flat.shape):
            raise ValueError(f"pca({self.dim}) needs at least {self.dim} reference images and pixels, got {flat.shape}.")
        self.mean = flat.mean(axis=0)
        _, _, vt = scipy.linalg.svd(flat - self.mean, full_matrices=False)
        self.components = vt[:self.dim]
        logger.info(f"Fitted {self.spec} extractor on {flat.shape[0]} reference images.")
        return self

    def extract(self, images: np.ndarray) -> FeatureMatrix:
        if self.components is None:
            raise RuntimeError(f"{self.spec} extractor used before fit().")
        flat = _flatten(images)
        if flat.shape[1] != self.mean.shape[0]:
            raise ValueError(f"{self.spec} was fitted on {self.mean.shape[0]} pixels, got {flat.shape[1]}.")
        return FeatureMatrix((flat - self.mean) @ self.components.T)


class RandomConvExtractor(FeatureExtractor):
    """
    Two fixed random 3x3 stride-2 convolutions with ReLU, then global average
    pooling to d features. Weights depend only on the seed and input channels.
    """
    def __init__(self, dim: int, seed: int = 0, batch_size: int = 256):
        self.dim = dim
        self.seed = seed
        self.batch_size = batch_size
        self.spec = f"random_conv({dim})"

    def _kernels(self, channels: int) -> Tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(derive_seed(self.seed, f"random_conv/{channels}/{self.dim}"))
        first = rng.standard_normal((3, 3, channels, self.dim)) / np.sqrt(9 * channels)
        second = rng.standard_normal((3, 3, self.dim, self.dim)) / np.sqrt(9 * self.dim)
        return first, second

    def extract(self, images: np.ndarray) -> FeatureMatrix:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim != 4:
            raise ValueError(f"{self.spec} expects (m, H, W, C) images, got shape {images.shape}.")
        first, second = self._kernels(images.shape[-1])
        features = []
        with precision("float64"), no_grad():
            k1, k2 = Tensor(first), Tensor(second)
            for start in range(0, images.shape[0], self.batch_size):
                h = ops.relu(ops.conv2d(Tensor(images[start:start + self.batch_size]), k1, stride=2))
                h = ops.relu(ops.conv2d(h, k2, stride=2))
                features.append(ops.global_avg_pool(h).data)
        return FeatureMatrix(np.concatenate(features))


class FromFileExtractor(FeatureExtractor):
    """Activations computed elsewhere (e.g. Inception pool features), stored in the matrix format."""
    def __init__(self, path: str, expected_dim: Optional[int] = None):
        self.path = path
        self.expected_dim = expected_dim
        self.spec = f"from_file:{path}"

    def extract(self, images: Optional[np.ndarray] = None) -> FeatureMatrix:
        """Returns the stored matrix. Raises ValueError when handed images, which it cannot featurize."""
        if images is not None:
            raise ValueError(
                f"{self.spec} holds precomputed features and cannot featurize {len(images)} images; "
                "compare two feature matrix files instead."
            )
        values = load_matrix(self.path)
        if self.expected_dim is not None and values.shape[1] != self.expected_dim:
            raise ValueError(f"{self.path}: feature dimension {values.shape[1]}, expected {self.expected_dim}.")
        return FeatureMatrix(values)


def build_extractor(spec: str, seed: int = 0) -> FeatureExtractor:
    kind, arg = parse_extractor_spec(spec)
    if kind == "identity":
        return FeatureExtractor()
    if kind == "pca":
        return PCAExtractor(arg)
    if kind == "random_conv":
        return RandomConvExtractor(arg, seed=seed)
    return FromFileExtractor(arg)


def extract_features(images: np.ndarray, extractor: FeatureExtractor) -> FeatureMatrix:
    return extractor.extract(images)


def fid_between_sets(images_a: np.ndarray, images_b: np.ndarray, extractor: FeatureExtractor) -> FidReport:
    """Frechet distance between the feature distributions of two image sets."""
    return fid_from_features(extract_features(images_a, extractor), extract_features(images_b, extractor))

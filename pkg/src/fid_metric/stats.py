# src/fid_metric/stats.py
import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-8
NEGATIVE_FID_TOLERANCE = 1e-6
SHRINKAGE = 1e-6

GaussianStats = Tuple[np.ndarray, np.ndarray]


@dataclass
class FeatureMatrix:
    """m feature vectors of dimension d, one row per image."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"FeatureMatrix must be (m, d), got shape {self.values.shape}.")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


@dataclass
class FidReport:
    mu1: np.ndarray
    mu2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    mean_term: float
    trace_term: float
    fid: float

    def to_dict(self) -> Dict[str, Any]:
        """Scalar summary for JSON reports (moments are left out)."""
        return {
            "fid": self.fid,
            "mean_term": self.mean_term,
            "trace_term": self.trace_term,
            "dims": int(self.mu1.shape[0]),
        }


def gaussian_stats(features: FeatureMatrix) -> GaussianStats:
    """
    Empirical mean and unbiased covariance (divisor m - 1) of the rows.

    When m < d + 1 the covariance is rank deficient; a ridge of
    1e-6 * trace / d is added and a warning logged.
    """
    m, d = features.rows, features.dims
    if m < 2:
        raise ValueError(f"gaussian_stats needs at least 2 feature rows, got {m}.")
    mu = features.values.mean(axis=0)
    centered = features.values - mu
    cov = centered.T @ centered / (m - 1)
    cov = 0.5 * (cov + cov.T)
    if m < d + 1:
        ridge = SHRINKAGE * np.trace(cov) / d
        logger.warning(f"Only {m} samples for {d} feature dimensions; covariance shrunk by {ridge:.3g}.")
        cov = cov + ridge * np.eye(d)
    return mu, cov


def sqrtm_psd(matrix: np.ndarray) -> np.ndarray:
    """
    Square root of a symmetric positive semi-definite matrix through its
    eigendecomposition; negative eigenvalues are clamped to zero.
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOLERANCE * scale:
        raise ValueError("sqrtm_psd: input matrix is not symmetric.")
    eigvals, eigvecs = scipy.linalg.eigh(0.5 * (matrix + matrix.T))
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    return (eigvecs * roots) @ eigvecs.T


def frechet_distance(stats1: GaussianStats, stats2: GaussianStats) -> FidReport:
    """
    ||mu1 - mu2||^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2)).

    The cross term is evaluated as Tr(sqrtm(S1 C2 S1)) with S1 = sqrtm(C1),
    which has the same trace as (C1 C2)^(1/2) but stays symmetric.
    """
    mu1, c1 = np.atleast_1d(stats1[0]), np.atleast_2d(stats1[1])
    mu2, c2 = np.atleast_1d(stats2[0]), np.atleast_2d(stats2[1])
    if mu1.shape != mu2.shape or c1.shape != c2.shape or c1.shape != (mu1.shape[0], mu1.shape[0]):
        raise ValueError(f"Feature statistics differ in dimension: {mu1.shape}/{c1.shape} vs {mu2.shape}/{c2.shape}.")
    for name, value in (("mu1", mu1), ("mu2", mu2), ("c1", c1), ("c2", c2)):
        if not np.all(np.isfinite(value)):
            raise ValueError(f"frechet_distance: {name} contains non-finite values.")

    diff = mu1 - mu2
    mean_term = float(diff @ diff)
    s1 = sqrtm_psd(c1)
    cross = s1 @ c2 @ s1
    covmean_trace = float(np.trace(sqrtm_psd(0.5 * (cross + cross.T))))
    trace_term = float(np.trace(c1) + np.trace(c2) - 2.0 * covmean_trace)
    fid = mean_term + trace_term
    if fid < -NEGATIVE_FID_TOLERANCE:
        logger.warning(f"Negative Frechet distance {fid:.3g} clamped to 0.")
        trace_term, fid = -mean_term, 0.0
    return FidReport(mu1=mu1, mu2=mu2, c1=c1, c2=c2, mean_term=mean_term, trace_term=trace_term, fid=fid)


def fid_from_features(features_a: FeatureMatrix, features_b: FeatureMatrix) -> FidReport:
    if features_a.dims != features_b.dims:
        raise ValueError(f"Feature dimensions differ: {features_a.dims} vs {features_b.dims}.")
    return frechet_distance(gaussian_stats(features_a), gaussian_stats(features_b))

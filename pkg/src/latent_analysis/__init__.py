# src/latent_analysis/__init__.py
from .gmm import ConvergenceError, GaussianMixture, fit_gmm, sample_gmm
from .collapse import LatentBatch, active_units, encode_dataset, per_unit_kl

__all__ = [
    "ConvergenceError",
    "GaussianMixture",
    "fit_gmm",
    "sample_gmm",
    "LatentBatch",
    "active_units",
    "encode_dataset",
    "per_unit_kl",
]

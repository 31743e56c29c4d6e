# src/fid_metric/__init__.py
from .stats import FeatureMatrix, FidReport, fid_from_features, frechet_distance, gaussian_stats, sqrtm_psd
from .extractors import (
    FeatureExtractor,
    FromFileExtractor,
    PCAExtractor,
    RandomConvExtractor,
    build_extractor,
    extract_features,
    fid_between_sets,
    parse_extractor_spec,
)

__all__ = [
    "FeatureMatrix",
    "FidReport",
    "fid_from_features",
    "frechet_distance",
    "gaussian_stats",
    "sqrtm_psd",
    "FeatureExtractor",
    "FromFileExtractor",
    "PCAExtractor",
    "RandomConvExtractor",
    "build_extractor",
    "extract_features",
    "fid_between_sets",
    "parse_extractor_spec",
]

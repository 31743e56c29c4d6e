# src/pipeline/evaluation.py
import logging
from typing import Dict, List, Optional

import numpy as np

from ..fid_metric.extractors import FromFileExtractor, build_extractor
from ..fid_metric.stats import FidReport, frechet_distance, gaussian_stats
from ..latent_analysis.collapse import encode_dataset
from ..latent_analysis.gmm import GaussianMixture, fit_gmm
from ..utils.helpers import derive_seed
from ..vae_core.generation import GeneratedBatch, GenerationConfig, generate
from ..vae_core.model import VAEModel

logger = logging.getLogger(__name__)

SPLIT_VARIANTS = ("composed", "x1", "x2", "random_mix")
RECONSTRUCTION = "reconstruction"


def batch_variants(batch: GeneratedBatch) -> List[str]:
    return list(SPLIT_VARIANTS) if batch.is_split else ["composed"]


def reconstruct_images(model: VAEModel, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([model.reconstruct(images[start:start + batch_size])[0]
                           for start in range(0, images.shape[0], batch_size)])


class FidEvaluator:
    """
    Frechet distances of image sets against one fixed reference set.

    The extractor is fitted on the reference images once (for pca(d)) and the
    reference moments are cached, so repeated evaluations during training
    only pay for the generated side.
    """
    def __init__(self, reference_images: np.ndarray, extractor_spec: str, seed: int = 0):
        self.extractor = build_extractor(extractor_spec, seed=derive_seed(seed, "fid/extractor"))
        if isinstance(self.extractor, FromFileExtractor):
            raise ValueError("from_file features only compare two precomputed sets; use eval-fid with two feature files.")
        if reference_images.shape[0] < 2:
            raise ValueError(f"FID needs at least 2 reference images, got {reference_images.shape[0]}.")
        if self.extractor.needs_fit:
            self.extractor.fit(reference_images)
        self.reference_images = reference_images
        self.reference_stats = gaussian_stats(self.extractor.extract(reference_images))
        self.reference_count = reference_images.shape[0]
        logger.info(f"FID reference: {self.reference_count} images, extractor {self.extractor.spec}.")

    def score(self, images: np.ndarray) -> FidReport:
        if images.shape[0] < 2:
            raise ValueError(f"FID needs at least 2 images, got {images.shape[0]}.")
        return frechet_distance(self.reference_stats, gaussian_stats(self.extractor.extract(images)))

    def score_batch(self, batch: GeneratedBatch, seed: int = 0) -> Dict[str, FidReport]:
        """Scores the composed images and, for split batches, x1, x2 and their random mix."""
        return {name: self.score(batch.variant(name, seed)) for name in batch_variants(batch)}

    def score_reconstruction(self, model: VAEModel, count: Optional[int] = None) -> FidReport:
        """
        Reconstructs the first `count` reference images through the posterior
        mean and scores them against the whole reference set; the baseline
        generated samples are compared with.
        """
        images = self.reference_images if count is None else self.reference_images[:count]
        return self.score(reconstruct_images(model, images))


def fit_latent_mixture(model: VAEModel, images: np.ndarray, components: int, seed: int,
                       max_iters: int = 200, tol: float = 1e-6, covariance_type: str = "full") -> GaussianMixture:
    """Encodes `images` to posterior means and fits the ex-post mixture on them."""
    latents = encode_dataset(model, images)
    if components > latents.count:
        raise ValueError(f"Cannot fit {components} components to {latents.count} encoded samples.")
    return fit_gmm(latents.codes, components, max_iters=max_iters, tol=tol,
                   seed=derive_seed(seed, "gmm"), covariance_type=covariance_type)


def score_model(model: VAEModel, evaluator: FidEvaluator, count: int, seed: int,
                mixture: Optional[GaussianMixture] = None, stream: int = 0,
                reconstruction: bool = False) -> Dict[str, float]:
    """
    Generates `count` images (GMM sampler when a mixture is given) and scores
    every variant. With `reconstruction`, up to `count` reference images are
    also reconstructed and scored under the 'reconstruction' key.
    """
    gen_cfg = GenerationConfig(sampler="gmm" if mixture is not None else "prior", count=count, seed=seed, stream=stream)
    batch = generate(model, gen_cfg, mixture)
    reports = evaluator.score_batch(batch, seed)
    scores = {name: report.fid for name, report in reports.items()}
    if reconstruction:
        scores[RECONSTRUCTION] = evaluator.score_reconstruction(model, count).fid
    return scores

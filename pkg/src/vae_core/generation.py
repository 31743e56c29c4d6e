# src/vae_core/generation.py
import logging
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from pydantic import Field, PositiveInt

from ..autodiff import ShapeError, no_grad
from ..data_management.schemas import StrictSchema
from ..latent_analysis.gmm import GaussianMixture, sample_gmm
from ..utils.helpers import derive_seed
from .model import VAEModel

logger = logging.getLogger(__name__)


class GenerationConfig(StrictSchema):
    """
    Ancestral sampling settings. The prior is the fixed standard normal over
    the model's latent dimensions; `gmm` draws from a fitted mixture instead.
    `stream` separates the random streams of repeated calls sharing a seed.
    """
    sampler: Literal["prior", "gmm"] = "prior"
    count: PositiveInt = 25
    seed: int = Field(default=0, ge=0)
    stream: int = Field(default=0, ge=0)
    batch_size: PositiveInt = 256


@dataclass
class GeneratedBatch:
    """
    Images decoded from sampled latents, all arrays float64 in (0, 1).

    For split models `sigma_maps`, `x1` and `x2` hold the parts that were
    composed into `images`; they are None for vanilla models.
    """
    latents: np.ndarray
    images: np.ndarray
    sigma_maps: Optional[np.ndarray] = None
    x1: Optional[np.ndarray] = None
    x2: Optional[np.ndarray] = None

    @property
    def is_split(self) -> bool:
        return self.sigma_maps is not None

    def __len__(self) -> int:
        return self.images.shape[0]

    def random_mix(self, seed: int) -> np.ndarray:
        """Per sample, picks x1 or x2 with equal probability."""
        if not self.is_split:
            raise ValueError("random_mix requires a split-model batch.")
        rng = np.random.default_rng(derive_seed(seed, "generate/random_mix"))
        pick_first = rng.random(len(self)) < 0.5
        return np.where(pick_first[:, None, None, None], self.x1, self.x2)

    def variant(self, name: str, seed: int = 0) -> np.ndarray:
        """One of: composed, x1, x2, random_mix."""
        if name == "composed":
            return self.images
        if name == "random_mix":
            return self.random_mix(seed)
        if name in ("x1", "x2"):
            if not self.is_split:
                raise ValueError(f"Variant '{name}' requires a split-model batch.")
            return getattr(self, name)
        raise ValueError(f"Unknown image variant '{name}'.")


def sample_latents(gen_cfg: GenerationConfig, latent_dim: int,
                   mixture: Optional[GaussianMixture] = None) -> np.ndarray:
    seed = derive_seed(gen_cfg.seed, f"generate/{gen_cfg.sampler}/{gen_cfg.stream}")
    if gen_cfg.sampler == "prior":
        rng = np.random.default_rng(seed)
        return rng.standard_normal((gen_cfg.count, latent_dim))
    if mixture is None:
        raise ValueError("sampler=gmm requires a fitted GaussianMixture.")
    if mixture.dim != latent_dim:
        raise ShapeError(f"Mixture dimension {mixture.dim} does not match decoder latent_dim {latent_dim}.")
    return sample_gmm(mixture, gen_cfg.count, seed)


def generate(model: VAEModel, gen_cfg: GenerationConfig,
             mixture: Optional[GaussianMixture] = None) -> GeneratedBatch:
    """
    Samples latents and decodes them in eval mode.

    Args:
        model: Trained model; read-only during generation.
        gen_cfg: Sampler, count and seed.
        mixture: Fitted mixture, required when gen_cfg.sampler is 'gmm'.

    Returns:
        GeneratedBatch with the composed images and, for split models, the
        sigma map and both candidate images.
    """
    latents = sample_latents(gen_cfg, model.latent_dim, mixture)
    images, sigmas, x1s, x2s = [], [], [], []
    step = min(gen_cfg.batch_size, gen_cfg.count)
    with no_grad():
        for start in range(0, gen_cfg.count, step):
            image, split = model.decode(latents[start:start + step], training=False)
            images.append(image.data.astype(np.float64))
            if split is not None:
                sigmas.append(split.sigma_map.data.astype(np.float64))
                x1s.append(split.x1.data.astype(np.float64))
                x2s.append(split.x2.data.astype(np.float64))
    logger.info(f"Generated {gen_cfg.count} images with the {gen_cfg.sampler} sampler (seed {gen_cfg.seed}).")
    if not sigmas:
        return GeneratedBatch(latents=latents, images=np.concatenate(images))
    return GeneratedBatch(
        latents=latents,
        images=np.concatenate(images),
        sigma_maps=np.concatenate(sigmas),
        x1=np.concatenate(x1s),
        x2=np.concatenate(x2s),
    )

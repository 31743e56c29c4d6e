# src/vae_core/model.py
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import Field, PositiveInt

from ..autodiff import ShapeError, Tensor, as_tensor, no_grad, ops
from ..data_management.schemas import ArchitectureConfig, ModelKind, StrictSchema
from ..nn_blocks import ParameterStore, decoder_forward, encoder_forward, init_decoder, init_encoder
from .heads import HEAD_PREFIXES, SplitOutput, head_layer, init_head, split_head, vanilla_head

logger = logging.getLogger(__name__)


@dataclass
class LatentParams:
    """Posterior moments: mu and log-variance, each (N, k) or (k,)."""
    mu: Tensor
    logvar: Tensor

    def __post_init__(self):
        self.mu, self.logvar = as_tensor(self.mu), as_tensor(self.logvar)
        if self.mu.shape != self.logvar.shape:
            raise ShapeError(f"LatentParams: mu {self.mu.shape} and logvar {self.logvar.shape} differ.")


@dataclass
class ModelOutput:
    latent: LatentParams
    z: Tensor
    image: Tensor  # composed x_hat for split models
    split: Optional[SplitOutput] = None


class ModelConfig(StrictSchema):
    """Everything needed to rebuild a model; stored in checkpoints."""
    kind: ModelKind = "split"
    image_shape: Tuple[PositiveInt, PositiveInt, PositiveInt]
    latent_dim: PositiveInt = 32
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    seed: int = Field(default=0, ge=0)


def reparameterize(params: LatentParams, noise) -> Tensor:
    """
    z = mu + exp(0.5 * logvar) * noise, differentiable in mu and logvar.

    Args:
        params: Posterior moments.
        noise: Standard-normal draws with the shape of params.mu, sampled by the caller.
    """
    noise = as_tensor(noise)
    if noise.shape != params.mu.shape:
        raise ShapeError(f"reparameterize: noise {noise.shape} does not match mu {params.mu.shape}.")
    std = ops.exp(ops.mul(params.logvar, 0.5))
    return ops.add(params.mu, ops.mul(std, noise))


class VAEModel:
    """
    Encoder, decoder and output head sharing one ParameterStore.

    Vanilla and split models built from the same config seed differ only in
    the head parameters (`decoder.head.*` or `decoder.split_head.*`).
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.encoder_cfg = config.architecture.encoder_cfg(config.image_shape, config.latent_dim)
        self.decoder_cfg = config.architecture.decoder_cfg(config.image_shape, config.latent_dim)
        self.store = ParameterStore(seed=config.seed)
        init_encoder(self.store, self.encoder_cfg)
        init_decoder(self.store, self.decoder_cfg)
        init_head(self.store, config.kind, self.decoder_cfg.base_dim, self.image_channels)
        logger.info(
            f"Built {config.kind} VAE: image {tuple(config.image_shape)}, latent_dim {config.latent_dim}, "
            f"{self.parameter_count():,} parameters"
        )

    def __repr__(self) -> str:
        return f"<VAEModel(kind={self.kind}, latent_dim={self.latent_dim}, params={self.parameter_count()})>"

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def is_split(self) -> bool:
        return self.config.kind == "split"

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.config.image_shape)

    @property
    def image_channels(self) -> int:
        return self.config.image_shape[2]

    @property
    def params(self) -> Dict[str, Tensor]:
        return self.store.params

    def parameter_count(self) -> int:
        return self.store.count()

    def trunk_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Shapes of every parameter outside the output head."""
        head_names = tuple(HEAD_PREFIXES.values())
        return {name: shape for name, shape in self.store.shapes().items() if not name.startswith(head_names)}

    # --- forward pieces ---
    def encode(self, x, training: bool = False) -> LatentParams:
        mu, logvar = encoder_forward(as_tensor(x), self.encoder_cfg, self.store, training)
        return LatentParams(mu=mu, logvar=logvar)

    def decode_features(self, z, training: bool = False) -> Tensor:
        return decoder_forward(as_tensor(z), self.decoder_cfg, self.store, training)

    def apply_head(self, features: Tensor) -> Tuple[Tensor, Optional[SplitOutput]]:
        head_out = head_layer(features, self.store, self.kind)
        if self.is_split:
            split = split_head(head_out, self.image_channels)
            return split.composed, split
        return vanilla_head(head_out, self.image_channels), None

    def decode(self, z, training: bool = False) -> Tuple[Tensor, Optional[SplitOutput]]:
        return self.apply_head(self.decode_features(z, training))

    def forward(self, x, noise, training: bool = True) -> ModelOutput:
        latent = self.encode(x, training)
        z = reparameterize(latent, noise)
        image, split = self.decode(z, training)
        return ModelOutput(latent=latent, z=z, image=image, split=split)

    def reconstruct(self, x) -> Tuple[np.ndarray, Optional[SplitOutput]]:
        """Deterministic reconstruction through the posterior mean (eval mode, no recording)."""
        with no_grad():
            latent = self.encode(x, training=False)
            image, split = self.decode(latent.mu, training=False)
        return image.data, split

    # --- state ---
    def state_arrays(self) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
        return self.store.state_arrays()

    def load_arrays(self, params: Dict[str, np.ndarray], buffers: Dict[str, np.ndarray]) -> None:
        self.store.load_arrays(params, buffers)

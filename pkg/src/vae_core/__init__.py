# src/vae_core/__init__.py
from .heads import SplitOutput, compose, head_channels, split_head, vanilla_head
from .model import LatentParams, ModelConfig, ModelOutput, VAEModel, reparameterize
from .generation import GeneratedBatch, GenerationConfig, generate, sample_latents

__all__ = [
    "SplitOutput",
    "compose",
    "head_channels",
    "split_head",
    "vanilla_head",
    "LatentParams",
    "ModelConfig",
    "ModelOutput",
    "VAEModel",
    "reparameterize",
    "GeneratedBatch",
    "GenerationConfig",
    "generate",
    "sample_latents",
]

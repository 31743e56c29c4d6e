# src/vae_core/heads.py
import logging
from dataclasses import dataclass

import numpy as np

from ..autodiff import ShapeError, Tensor, as_tensor, ops
from ..nn_blocks import ParameterStore, conv_layer, init_conv

logger = logging.getLogger(__name__)

HEAD_PREFIXES = {"vanilla": "decoder.head", "split": "decoder.split_head"}


@dataclass
class SplitOutput:
    """
    Output of a split decoder.

    Attributes:
        sigma_map: (N, H, W, 1) compositional weights strictly inside (0, 1).
        x1: (N, H, W, C) first candidate image.
        x2: (N, H, W, C) second candidate image.
        composed: sigma_map * x1 + (1 - sigma_map) * x2, broadcast over channels.
    """
    sigma_map: Tensor
    x1: Tensor
    x2: Tensor
    composed: Tensor


def head_channels(kind: str, image_channels: int) -> int:
    """Channels emitted by the final decoder layer: C for vanilla, 1 + 2C for split."""
    if kind == "vanilla":
        return image_channels
    if kind == "split":
        return 1 + 2 * image_channels
    raise ValueError(f"Unknown model kind '{kind}'.")


def head_prefix(kind: str) -> str:
    """Parameter-name prefix of the output head; split and vanilla heads never share block names."""
    if kind not in HEAD_PREFIXES:
        raise ValueError(f"Unknown model kind '{kind}'.")
    return HEAD_PREFIXES[kind]


def init_head(store: ParameterStore, kind: str, feature_channels: int, image_channels: int) -> None:
    init_conv(store, head_prefix(kind), 3, feature_channels, head_channels(kind, image_channels))


def head_layer(features: Tensor, store: ParameterStore, kind: str) -> Tensor:
    return conv_layer(features, store, head_prefix(kind))


def compose(sigma, x1, x2) -> Tensor:
    """
    Elementwise sigma * x1 + (1 - sigma) * x2 with sigma broadcast over channels.

    Raises:
        ShapeError: if x1 and x2 differ in shape or sigma does not match them
            up to the channel axis.
        ValueError: if sigma has values outside [0, 1].
    """
    sigma, x1, x2 = as_tensor(sigma), as_tensor(x1), as_tensor(x2)
    if x1.shape != x2.shape:
        raise ShapeError(f"compose: x1 {x1.shape} and x2 {x2.shape} must have the same shape.")
    if sigma.shape[:-1] != x1.shape[:-1] or sigma.shape[-1] not in (1, x1.shape[-1]):
        raise ShapeError(f"compose: sigma {sigma.shape} does not match images {x1.shape} up to channels.")
    if np.any(sigma.data < 0.0) or np.any(sigma.data > 1.0):
        raise ValueError("compose: sigma must lie in [0, 1].")
    return ops.add(ops.mul(sigma, x1), ops.mul(ops.sub(1.0, sigma), x2))


def split_head(head_out: Tensor, image_channels: int) -> SplitOutput:
    """
    Splits 1 + 2C head channels into the sigma map (channel 0), x1 (channels
    1..C) and x2 (channels C+1..2C), squashes each with the logistic function
    and composes them.
    """
    expected = head_channels("split", image_channels)
    if head_out.shape[-1] != expected:
        raise ShapeError(f"split_head: expected {expected} channels for C={image_channels}, got {head_out.shape[-1]}.")
    c = image_channels
    sigma_map = ops.sigmoid(ops.slice_channels(head_out, 0, 1))
    x1 = ops.sigmoid(ops.slice_channels(head_out, 1, 1 + c))
    x2 = ops.sigmoid(ops.slice_channels(head_out, 1 + c, 1 + 2 * c))
    return SplitOutput(sigma_map=sigma_map, x1=x1, x2=x2, composed=compose(sigma_map, x1, x2))


def vanilla_head(head_out: Tensor, image_channels: int) -> Tensor:
    """Logistic-squashed C-channel image."""
    if head_out.shape[-1] != image_channels:
        raise ShapeError(f"vanilla_head: expected {image_channels} channels, got {head_out.shape[-1]}.")
    return ops.sigmoid(head_out)

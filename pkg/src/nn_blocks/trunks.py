# src/nn_blocks/trunks.py
import logging
from typing import Tuple

from ..autodiff import ShapeError, Tensor, ops
from ..data_management.schemas import DecoderCfg, EncoderCfg
from .blocks import (
    conv_layer,
    dense_block_forward,
    dense_layer,
    init_conv,
    init_dense,
    init_dense_block,
    init_scale_block,
    scale_block_forward,
)
from .params import ParameterStore

logger = logging.getLogger(__name__)

ENCODER_PREFIX = "encoder"
DECODER_PREFIX = "decoder"


def init_encoder(store: ParameterStore, cfg: EncoderCfg) -> None:
    p = ENCODER_PREFIX
    channels_in = cfg.image_shape[2]
    init_conv(store, f"{p}.stem", 3, channels_in, cfg.channels_at(0))
    for s in range(cfg.num_scales + 1):
        width = cfg.channels_at(s)
        for b in range(cfg.scale_blocks_per_scale):
            init_scale_block(store, f"{p}.scale{s}.block{b}", cfg.scale_block_cfg(width))
        if s < cfg.num_scales:
            init_conv(store, f"{p}.down{s}", 3, width, cfg.channels_at(s + 1))
    init_dense(store, f"{p}.dense_in", cfg.channels_at(cfg.num_scales), cfg.dense_block_width)
    init_dense_block(store, f"{p}.dense_block", cfg.dense_block_width)
    init_dense(store, f"{p}.mu", cfg.dense_block_width, cfg.latent_dim)
    init_dense(store, f"{p}.logvar", cfg.dense_block_width, cfg.latent_dim)


def encoder_forward(x: Tensor, cfg: EncoderCfg, params: ParameterStore, training: bool = False) -> Tuple[Tensor, Tensor]:
    """
    Maps images (N, H, W, C) to the posterior moments (mu, logvar), each (N, latent_dim).

    Raises:
        ShapeError: if the spatial extents are not divisible by 2 ** num_scales
            or the channel count differs from the configured image shape.
    """
    if x.ndim == 3:
        x = ops.reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise ShapeError(f"encoder: expected NHWC images, got shape {x.shape}.")
    _, height, width, channels = x.shape
    factor = 2 ** cfg.num_scales
    if height % factor or width % factor:
        raise ShapeError(
            f"encoder: spatial extents {height}x{width} are not divisible by 2**num_scales = {factor}."
        )
    if channels != cfg.image_shape[2]:
        raise ShapeError(f"encoder: expected {cfg.image_shape[2]} channels, got {channels}.")

    p = ENCODER_PREFIX
    h = conv_layer(x, params, f"{p}.stem")
    for s in range(cfg.num_scales + 1):
        block_cfg = cfg.scale_block_cfg(cfg.channels_at(s))
        for b in range(cfg.scale_blocks_per_scale):
            h = scale_block_forward(h, block_cfg, params, f"{p}.scale{s}.block{b}", training)
        if s < cfg.num_scales:
            h = conv_layer(h, params, f"{p}.down{s}", stride=2)

    features = ops.global_avg_pool(h)
    features = ops.activation(dense_layer(features, params, f"{p}.dense_in"), cfg.activation)
    features = dense_block_forward(features, cfg.dense_block_width, params, f"{p}.dense_block", cfg.activation)
    mu = dense_layer(features, params, f"{p}.mu")
    logvar = dense_layer(features, params, f"{p}.logvar")
    return mu, logvar


def init_decoder(store: ParameterStore, cfg: DecoderCfg) -> None:
    p = DECODER_PREFIX
    base = cfg.base_extent
    init_dense(store, f"{p}.dense_in", cfg.latent_dim, base * base * cfg.base_dim)
    for u in range(cfg.num_upsamples + 1):
        for b in range(cfg.scale_blocks_per_scale):
            init_scale_block(store, f"{p}.scale{u}.block{b}", cfg.scale_block_cfg(cfg.base_dim))
        if u < cfg.num_upsamples:
            init_conv(store, f"{p}.up{u}", 3, cfg.base_dim, cfg.base_dim)


def decoder_forward(z: Tensor, cfg: DecoderCfg, params: ParameterStore, training: bool = False) -> Tensor:
    """
    Maps latents (N, latent_dim) to a feature map (N, H, W, base_dim) at image
    resolution. The output head is applied separately.

    The 4x4 base map is upsampled to the next power-of-two extent covering the
    image and centre-cropped when the image extent is not a power of two.
    """
    if z.ndim == 1:
        z = ops.reshape(z, (1, z.shape[0]))
    if z.ndim != 2 or z.shape[1] != cfg.latent_dim:
        raise ShapeError(f"decoder: expected latents of length {cfg.latent_dim}, got shape {z.shape}.")

    p = DECODER_PREFIX
    base = cfg.base_extent
    h = ops.activation(dense_layer(z, params, f"{p}.dense_in"), cfg.activation)
    h = ops.reshape(h, (z.shape[0], base, base, cfg.base_dim))
    block_cfg = cfg.scale_block_cfg(cfg.base_dim)
    for u in range(cfg.num_upsamples + 1):
        for b in range(cfg.scale_blocks_per_scale):
            h = scale_block_forward(h, block_cfg, params, f"{p}.scale{u}.block{b}", training)
        if u < cfg.num_upsamples:
            h = conv_layer(ops.upsample2x(h), params, f"{p}.up{u}")
    height, width = cfg.image_shape[0], cfg.image_shape[1]
    return ops.center_crop(h, height, width)

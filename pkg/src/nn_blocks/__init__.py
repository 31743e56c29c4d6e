# src/nn_blocks/__init__.py
from .params import ParameterStore
from .blocks import (
    init_residual_block,
    residual_block_forward,
    init_scale_block,
    scale_block_forward,
    init_dense_block,
    dense_block_forward,
    init_conv,
    conv_layer,
)
from .trunks import init_encoder, encoder_forward, init_decoder, decoder_forward

__all__ = [
    "ParameterStore",
    "init_residual_block",
    "residual_block_forward",
    "init_scale_block",
    "scale_block_forward",
    "init_dense_block",
    "dense_block_forward",
    "init_conv",
    "conv_layer",
    "init_encoder",
    "encoder_forward",
    "init_decoder",
    "decoder_forward",
]

# src/nn_blocks/blocks.py
"""
Residual Block, Scale Block and Dense Block.

Each block comes as a pair: `init_*` registers the block's parameters in a
ParameterStore under a name prefix, `*_forward` evaluates it. Convolutions
inside residual blocks carry no bias; the batch-norm shift that follows plays
that role.
"""
import logging

from ..autodiff import ShapeError, Tensor, ops
from ..data_management.schemas import ResidualBlockCfg, ScaleBlockCfg
from .params import ParameterStore

logger = logging.getLogger(__name__)


# --- layers ---

def init_conv(store: ParameterStore, prefix: str, kernel_size: int, cin: int, cout: int, bias: bool = True) -> None:
    store.fan_in_uniform(f"{prefix}.kernel", (kernel_size, kernel_size, cin, cout), fan_in=kernel_size * kernel_size * cin)
    if bias:
        store.constant(f"{prefix}.bias", (cout,), 0.0)


def conv_layer(x: Tensor, store: ParameterStore, prefix: str, stride: int = 1) -> Tensor:
    out = ops.conv2d(x, store[f"{prefix}.kernel"], stride=stride, padding="same")
    bias_name = f"{prefix}.bias"
    if bias_name in store.params:
        out = ops.add(out, store[bias_name])
    return out


def init_batch_norm(store: ParameterStore, prefix: str, channels: int) -> None:
    store.constant(f"{prefix}.gamma", (channels,), 1.0)
    store.constant(f"{prefix}.beta", (channels,), 0.0)
    store.buffer(f"{prefix}.running_mean", (channels,), 0.0)
    store.buffer(f"{prefix}.running_var", (channels,), 1.0)


def batch_norm_layer(x: Tensor, store: ParameterStore, prefix: str, training: bool) -> Tensor:
    return ops.batch_norm(
        x,
        store[f"{prefix}.gamma"],
        store[f"{prefix}.beta"],
        store.get_buffer(f"{prefix}.running_mean"),
        store.get_buffer(f"{prefix}.running_var"),
        training=training,
    )


def init_dense(store: ParameterStore, prefix: str, din: int, dout: int) -> None:
    store.fan_in_uniform(f"{prefix}.weight", (din, dout), fan_in=din)
    store.constant(f"{prefix}.bias", (dout,), 0.0)


def dense_layer(x: Tensor, store: ParameterStore, prefix: str) -> Tensor:
    return ops.dense(x, store[f"{prefix}.weight"], store[f"{prefix}.bias"])


# --- Residual Block ---

def init_residual_block(store: ParameterStore, prefix: str, cfg: ResidualBlockCfg) -> None:
    for i in range(cfg.num_convs):
        init_batch_norm(store, f"{prefix}.bn{i}", cfg.channels)
        init_conv(store, f"{prefix}.conv{i}", 3, cfg.channels, cfg.channels, bias=False)


def residual_block_forward(x: Tensor, cfg: ResidualBlockCfg, params: ParameterStore, prefix: str,
                           training: bool = False) -> Tensor:
    """
    output = x + F(x), where F alternates batch norm, activation and a
    shape-preserving 3x3 convolution `num_convs` times.
    """
    if x.ndim != 4 or x.shape[-1] != cfg.channels:
        raise ShapeError(f"{prefix}: expected NHWC input with {cfg.channels} channels, got {x.shape}.")
    h = x
    for i in range(cfg.num_convs):
        h = batch_norm_layer(h, params, f"{prefix}.bn{i}", training)
        h = ops.activation(h, cfg.activation)
        h = conv_layer(h, params, f"{prefix}.conv{i}")
    return ops.add(x, h)


# --- Scale Block ---

def init_scale_block(store: ParameterStore, prefix: str, cfg: ScaleBlockCfg) -> None:
    for r in range(cfg.num_residual_blocks):
        init_residual_block(store, f"{prefix}.res{r}", cfg.residual)


def scale_block_forward(x: Tensor, cfg: ScaleBlockCfg, params: ParameterStore, prefix: str,
                        training: bool = False) -> Tensor:
    """A sequence of residual blocks at one resolution; spatial extents are preserved."""
    h = x
    for r in range(cfg.num_residual_blocks):
        h = residual_block_forward(h, cfg.residual, params, f"{prefix}.res{r}", training)
    return h


# --- Dense Block ---

def init_dense_block(store: ParameterStore, prefix: str, width: int) -> None:
    init_dense(store, f"{prefix}.fc0", width, width)
    init_dense(store, f"{prefix}.fc1", width, width)


def dense_block_forward(x: Tensor, width: int, params: ParameterStore, prefix: str, activation: str = "relu") -> Tensor:
    """Two fully connected layers with a skip connection: x + fc1(act(fc0(act(x))))."""
    if x.ndim != 2 or x.shape[1] != width:
        raise ShapeError(f"{prefix}: expected (N, {width}) input, got {x.shape}.")
    h = ops.activation(x, activation)
    h = dense_layer(h, params, f"{prefix}.fc0")
    h = ops.activation(h, activation)
    h = dense_layer(h, params, f"{prefix}.fc1")
    return ops.add(x, h)

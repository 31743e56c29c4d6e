# src/autodiff/ops.py
"""
Differentiable operations on NHWC tensors.

Every public function computes its forward value with numpy, checks that the
result is finite and, when recording is enabled and an input requires
gradients, records a backward rule on the calling thread's tape.

Broadcasting is deliberately narrow. Besides identical shapes, only three
cases are accepted: a scalar operand, a channel broadcast (an operand whose
last extent is 1 while all other extents match, e.g. a sigma map against an
image) and a bias vector whose length equals the last extent.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .tensor import (
    ArrayLike,
    ShapeError,
    Tensor,
    as_tensor,
    check_finite,
    current_tape,
    is_recording,
)

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.99
BN_EPSILON = 1e-5
LEAKY_RELU_SLOPE = 0.2


def _result(data: np.ndarray, inputs: Tuple[Tensor, ...], backward, name: str) -> Tensor:
    check_finite(data, name)
    requires_grad = is_recording() and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(data, requires_grad=requires_grad)
    if requires_grad:
        current_tape().record(name, inputs, out, backward)
    return out


def _broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> Tuple[int, ...]:
    if a == b:
        return a
    for big, small in ((a, b), (b, a)):
        if small == ():
            return big
        if len(big) >= 1 and small == (big[-1],):
            return big
        if len(big) >= 2 and len(small) == len(big) and small[:-1] == big[:-1] and small[-1] == 1:
            return big
    raise ShapeError(
        f"{op}: shapes {a} and {b} are incompatible (only scalar, bias or channel broadcasting is supported)."
    )


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum(), dtype=grad.dtype)
    if len(shape) == 1:
        return grad.reshape(-1, shape[0]).sum(axis=0)
    return grad.sum(axis=-1, keepdims=True)


# --- elementwise arithmetic ---

def add(x: ArrayLike, y: ArrayLike) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape(x.shape, y.shape, "add")
    xs, ys = x.shape, y.shape

    def backward(g):
        return _reduce_to(g, xs), _reduce_to(g, ys)

    return _result(x.data + y.data, (x, y), backward, "add")


def sub(x: ArrayLike, y: ArrayLike) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape(x.shape, y.shape, "sub")
    xs, ys = x.shape, y.shape

    def backward(g):
        return _reduce_to(g, xs), _reduce_to(-g, ys)

    return _result(x.data - y.data, (x, y), backward, "sub")


def mul(x: ArrayLike, y: ArrayLike) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape(x.shape, y.shape, "mul")
    xd, yd = x.data, y.data

    def backward(g):
        return _reduce_to(g * yd, xd.shape), _reduce_to(g * xd, yd.shape)

    return _result(xd * yd, (x, y), backward, "mul")


def neg(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return _result(-x.data, (x,), lambda g: (-g,), "neg")


def square(x: Tensor) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _result(xd * xd, (x,), lambda g: (2.0 * xd * g,), "square")


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,), "exp")


# --- activations ---

def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, clipped so outputs stay strictly inside (0, 1) in the working precision."""
    x = as_tensor(x)
    tiny = np.finfo(x.data.dtype).eps
    out = np.clip(expit(x.data), tiny, 1.0 - tiny).astype(x.data.dtype, copy=False)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0  # subgradient 0 at exactly 0
    return _result(np.where(mask, x.data, 0.0).astype(x.data.dtype, copy=False), (x,),
                   lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = LEAKY_RELU_SLOPE) -> Tensor:
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope).astype(x.data.dtype)
    return _result(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x)
    raise ValueError(f"Unknown activation '{kind}'.")


# --- reductions and reshaping ---

def sum(x: Tensor, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    shape = x.shape
    out = np.sum(x.data, axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(np.asarray(out, dtype=x.data.dtype), (x,), backward, "sum")


def mean(x: Tensor, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / count)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {original} into {tuple(shape)}") from e
    return _result(out, (x,), lambda g: (g.reshape(original),), "reshape")


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Selects channels [start, stop) along the last axis."""
    x = as_tensor(x)
    channels = x.shape[-1]
    if not 0 <= start < stop <= channels:
        raise ShapeError(f"slice_channels: range [{start}, {stop}) invalid for {channels} channels.")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return _result(x.data[..., start:stop].copy(), (x,), backward, "slice_channels")


# --- dense and convolutional layers ---

def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Fully connected layer: x (N, Din) @ weight (Din, Dout) + bias (Dout,)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {weight.shape}.")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: bias {bias.shape} must be ({weight.shape[1]},).")
    xd, wd = x.data, weight.data
    out = xd @ wd
    inputs: Tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        out = out + bias.data
        inputs = (x, weight, bias)

    def backward(g):
        grads = [g @ wd.T, xd.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    return _result(out, inputs, backward, "dense")


def conv_output_extent(size: int, kernel: int, stride: int, padding: str) -> Tuple[int, int]:
    """Returns (output extent, leading pad) for one spatial axis."""
    if padding == "same":
        out = math.ceil(size / stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return out, total // 2
    if padding == "valid":
        if size < kernel:
            raise ShapeError(f"conv2d: extent {size} smaller than kernel {kernel} with valid padding.")
        return (size - kernel) // stride + 1, 0
    raise ValueError(f"conv2d: padding must be 'same' or 'valid', got '{padding}'.")


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: str = "same") -> Tensor:
    """
    2-D convolution (cross-correlation) on NHWC input.

    Args:
        x: Input of shape (N, H, W, Cin).
        kernel: Weights of shape (Kh, Kw, Cin, Cout).
        stride: Positive step shared by both spatial axes.
        padding: "same" (output extent ceil(H / stride)) or "valid".

    Returns:
        Tensor of shape (N, Ho, Wo, Cout).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d: expected NHWC input and KhKwCinCout kernel, got {x.shape} and {kernel.shape}.")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be positive, got {stride}.")
    n, h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if cin != kcin:
        raise ShapeError(f"conv2d: input has {cin} channels but kernel expects {kcin}.")

    ho, pad_top = conv_output_extent(h, kh, stride, padding)
    wo, pad_left = conv_output_extent(w, kw, stride, padding)
    hp = max((ho - 1) * stride + kh, h + pad_top)
    wp = max((wo - 1) * stride + kw, w + pad_left)

    xp = np.zeros((n, hp, wp, cin), dtype=x.data.dtype)
    xp[:, pad_top:pad_top + h, pad_left:pad_left + w, :] = x.data

    cols = np.empty((n, ho, wo, kh, kw, cin), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :]
    cols2d = cols.reshape(n * ho * wo, kh * kw * cin)
    kmat = kernel.data.reshape(kh * kw * cin, cout)
    out = (cols2d @ kmat).reshape(n, ho, wo, cout)

    def backward(g):
        g2d = g.reshape(n * ho * wo, cout)
        grad_kernel = (cols2d.T @ g2d).reshape(kh, kw, cin, cout)
        dcols = (g2d @ kmat.T).reshape(n, ho, wo, kh, kw, cin)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride, :] += dcols[:, :, :, i, j, :]
        grad_x = dxp[:, pad_top:pad_top + h, pad_left:pad_left + w, :].copy()
        return grad_x, grad_kernel

    return _result(out, (x, kernel), backward, "conv2d")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = BN_MOMENTUM, eps: float = BN_EPSILON) -> Tensor:
    """
    Batch normalization over every axis but the last (channel) axis.

    In training mode batch statistics are used and the running statistics are
    updated in place as momentum * running + (1 - momentum) * batch. In eval
    mode the running statistics are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    channels = x.shape[-1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise ShapeError(f"batch_norm: gamma/beta must have shape ({channels},), got {gamma.shape}/{beta.shape}.")
    if running_mean.shape != (channels,) or running_var.shape != (channels,):
        raise ShapeError(f"batch_norm: running statistics must have shape ({channels},).")
    axes = tuple(range(x.ndim - 1))
    xd, gd = x.data, gamma.data

    if training:
        if x.shape[0] < 2:
            raise ShapeError(f"batch_norm: training mode needs a batch of at least 2, got {x.shape[0]}.")
        batch_mean = xd.mean(axis=axes)
        batch_var = xd.var(axis=axes)
        inv_std = 1.0 / np.sqrt(batch_var + eps)
        x_hat = (xd - batch_mean) * inv_std
        running_mean *= momentum
        running_mean += (1.0 - momentum) * batch_mean
        running_var *= momentum
        running_var += (1.0 - momentum) * batch_var
        count = xd.size // channels

        def backward(g):
            dx_hat = g * gd
            sum_dx_hat = dx_hat.sum(axis=axes)
            sum_dx_hat_xhat = (dx_hat * x_hat).sum(axis=axes)
            grad_x = (inv_std / count) * (count * dx_hat - sum_dx_hat - x_hat * sum_dx_hat_xhat)
            return grad_x, (g * x_hat).sum(axis=axes), g.sum(axis=axes)
    else:
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(xd.dtype)
        x_hat = (xd - running_mean.astype(xd.dtype)) * inv_std

        def backward(g):
            return g * gd * inv_std, (g * x_hat).sum(axis=axes), g.sum(axis=axes)

    out = (x_hat * gd + beta.data).astype(xd.dtype, copy=False)
    return _result(out, (x, gamma, beta), backward, "batch_norm")


# --- spatial resampling ---

def global_avg_pool(x: Tensor) -> Tensor:
    """(N, H, W, C) -> (N, C) spatial mean."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected NHWC input, got {x.shape}.")
    n, h, w, c = x.shape

    def backward(g):
        return (np.broadcast_to(g[:, None, None, :] / (h * w), (n, h, w, c)).copy(),)

    return _result(x.data.mean(axis=(1, 2)), (x,), backward, "global_avg_pool")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of an NHWC map."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"upsample2x: expected NHWC input, got {x.shape}.")
    n, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def backward(g):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return _result(out, (x,), backward, "upsample2x")


def center_crop(x: Tensor, height: int, width: int) -> Tensor:
    """Crops the spatial centre of an NHWC map to (height, width)."""
    x = as_tensor(x)
    n, h, w, c = x.shape
    if height > h or width > w:
        raise ShapeError(f"center_crop: cannot crop {h}x{w} to {height}x{width}.")
    if (height, width) == (h, w):
        return x
    top, left = (h - height) // 2, (w - width) // 2

    def backward(g):
        full = np.zeros((n, h, w, c), dtype=g.dtype)
        full[:, top:top + height, left:left + width, :] = g
        return (full,)

    return _result(x.data[:, top:top + height, left:left + width, :].copy(), (x,), backward, "center_crop")

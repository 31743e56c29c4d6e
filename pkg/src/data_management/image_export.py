# src/data_management/image_export.py
import logging
import os
import re
from typing import Sequence

import numpy as np
from matplotlib import image as mpimg

from .data_loader import FormatError

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 2
DEFAULT_PAD_VALUE = 0.5


def _as_stack(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[..., None]
    if images.ndim != 4 or images.shape[-1] not in (1, 3):
        raise ValueError(f"Grid rows must be (n, H, W, 1|3) stacks, got shape {images.shape}.")
    return images


def build_grid(rows: Sequence[np.ndarray], margin: int = DEFAULT_MARGIN,
               pad_value: float = DEFAULT_PAD_VALUE) -> np.ndarray:
    """
    Tiles image stacks into one (rows*H + (rows+1)*margin, n*W + (n+1)*margin, C)
    canvas. Single-channel rows are replicated to RGB when any row is RGB.
    """
    if not rows:
        raise ValueError("build_grid needs at least one row.")
    stacks = [_as_stack(r) for r in rows]
    count = stacks[0].shape[0]
    height, width = stacks[0].shape[1:3]
    for stack in stacks:
        if stack.shape[0] != count:
            raise ValueError(f"Grid rows hold different image counts ({stack.shape[0]} vs {count}).")
        if stack.shape[1:3] != (height, width):
            raise ValueError(f"Grid rows mix image sizes ({stack.shape[1:3]} vs {(height, width)}).")
    channels = 3 if any(s.shape[-1] == 3 for s in stacks) else 1
    canvas = np.full(
        (len(stacks) * height + (len(stacks) + 1) * margin, count * width + (count + 1) * margin, channels),
        pad_value,
    )
    for r, stack in enumerate(stacks):
        if stack.shape[-1] != channels:
            stack = np.repeat(stack, channels, axis=-1)
        top = margin + r * (height + margin)
        for i in range(count):
            left = margin + i * (width + margin)
            canvas[top:top + height, left:left + width] = stack[i]
    return np.clip(canvas, 0.0, 1.0)


def _to_bytes(grid: np.ndarray) -> np.ndarray:
    return np.rint(grid * 255.0).astype(np.uint8)


def export_grid(rows: Sequence[np.ndarray], path: str, margin: int = DEFAULT_MARGIN,
                pad_value: float = DEFAULT_PAD_VALUE) -> str:
    """
    Writes an 8-bit grid image. The extension picks the format: `.png`
    (via matplotlib), `.pgm` (grayscale) or `.ppm` (RGB).

    Args:
        rows: Image stacks, one per grid row, equal counts and sizes.
        path: Output file.
        margin: Pixels between and around tiles.
        pad_value: Intensity of the margins.
    """
    grid = build_grid(rows, margin, pad_value)
    pixels = _to_bytes(grid)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        rgb = np.repeat(pixels, 3, axis=-1) if pixels.shape[-1] == 1 else pixels
        mpimg.imsave(path, rgb)
    elif ext in (".pgm", ".ppm"):
        if ext == ".pgm":
            if grid.shape[-1] != 1:
                raise ValueError("PGM output needs single-channel rows; use .ppm or .png for RGB.")
            magic, body = b"P5", pixels[..., 0]
        else:
            magic, body = b"P6", np.repeat(pixels, 3, axis=-1) if pixels.shape[-1] == 1 else pixels
        header = magic + f"\n{body.shape[1]} {body.shape[0]}\n255\n".encode("ascii")
        with open(path, "wb") as f:
            f.write(header + np.ascontiguousarray(body).tobytes())
    else:
        raise ValueError(f"Unsupported grid format '{ext}' (expected .png, .pgm or .ppm).")
    logger.info(f"Grid of {len(rows)} row(s) written to {path} ({grid.shape[1]}x{grid.shape[0]}).")
    return path


def read_grid(path: str) -> np.ndarray:
    """Reads a grid written by export_grid as (H, W, C) floats in [0, 1]."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        pixels = np.asarray(mpimg.imread(path), dtype=np.float64)
        return pixels[..., :3] if pixels.ndim == 3 else pixels[..., None]
    with open(path, "rb") as f:
        raw = f.read()
    header = re.match(rb"(P[56])\s+(\d+)\s+(\d+)\s+255\s", raw)
    if header is None:
        raise FormatError(f"{path}: not an 8-bit binary PGM/PPM file.")
    width, height = int(header.group(2)), int(header.group(3))
    channels = 1 if header.group(1) == b"P5" else 3
    payload = raw[header.end():]
    if len(payload) != width * height * channels:
        raise FormatError(f"{path}: payload length {len(payload)} does not match {width}x{height}x{channels}.")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels) / 255.0

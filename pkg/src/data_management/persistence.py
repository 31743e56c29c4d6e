# src/data_management/persistence.py
"""
Binary containers for checkpoints and matrices.

Checkpoint layout (little-endian):
    magic b"SVAECKPT" | u32 version | u32 section count
    per section: u16 name length | name (utf-8) | u64 payload length | u32 crc32 | payload

Sections holding arrays are sequences of named blocks:
    u16 name length | name | u8 dtype code | u8 ndim | u64 dims... | raw elements

Matrix layout:
    magic b"SVMX" | u32 version | u32 element width (4 or 8) | u64 rows | u64 cols | raw elements
"""
import json
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..latent_analysis.gmm import GaussianMixture
from .data_loader import FormatError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SVAECKPT"
CHECKPOINT_VERSION = 1
MATRIX_MAGIC = b"SVMX"
MATRIX_VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("<i8"): 3}
_CODE_DTYPES = {code: dtype for dtype, code in _DTYPE_CODES.items()}


class CheckpointError(ValueError):
    """A checkpoint cannot be read: wrong version, bad checksum or malformed section."""


@dataclass
class Checkpoint:
    """
    Everything needed to resume training or evaluate a model.

    Attributes:
        config: Model configuration (kind, image shape, latent_dim, architecture, seed).
        params: Parameter blocks by name.
        buffers: Batch-norm running statistics by name.
        optimizer: Optimizer scalars (learning rate, betas, step count).
        optimizer_arrays: Optimizer moment arrays by name.
        training: Epoch, seeds, beta-schedule state and labels.
        mixture: Ex-post Gaussian mixture, once fitted.
    """
    config: Dict[str, Any]
    params: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    optimizer: Dict[str, Any] = field(default_factory=dict)
    optimizer_arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    training: Dict[str, Any] = field(default_factory=dict)
    mixture: Optional[GaussianMixture] = None


# --- block encoding ---

def _encode_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _encode_blocks(blocks: Dict[str, np.ndarray]) -> bytes:
    parts: List[bytes] = []
    for name, array in blocks.items():
        array = np.asarray(array)
        dtype = array.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            raise ValueError(f"Block '{name}' has unsupported dtype {array.dtype}.")
        parts.append(_encode_name(name))
        parts.append(struct.pack("<BB", _DTYPE_CODES[dtype], array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype=dtype).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, raw: bytes, what: str):
        self.raw, self.pos, self.what = raw, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.what}: unexpected end of data.")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"{self.what}: unreadable block name.") from e

    @property
    def done(self) -> bool:
        return self.pos == len(self.raw)


def _decode_blocks(payload: bytes, section: str) -> Dict[str, np.ndarray]:
    reader = _Reader(payload, f"section '{section}'")
    blocks: Dict[str, np.ndarray] = {}
    while not reader.done:
        name = reader.name()
        code, ndim = reader.unpack("<BB")
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"Block '{name}' has unknown dtype code {code}.")
        shape = reader.unpack(f"<{ndim}Q") if ndim else ()
        dtype = _CODE_DTYPES[code]
        count = int(np.prod(shape)) if shape else 1
        data = reader.take(count * dtype.itemsize)
        blocks[name] = np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    return blocks


# --- checkpoint ---

def _json_bytes(value: Dict[str, Any]) -> bytes:
    return json.dumps(value, sort_keys=True).encode("utf-8")


def save_checkpoint(checkpoint: Checkpoint, path: str) -> str:
    """Writes the checkpoint atomically (temporary file, then rename)."""
    sections: List[Tuple[str, bytes]] = [
        ("config", _json_bytes(checkpoint.config)),
        ("params", _encode_blocks(checkpoint.params)),
        ("buffers", _encode_blocks(checkpoint.buffers)),
        ("optimizer", _json_bytes(checkpoint.optimizer)),
        ("optimizer_arrays", _encode_blocks(checkpoint.optimizer_arrays)),
        ("training", _json_bytes(checkpoint.training)),
    ]
    if checkpoint.mixture is not None:
        sections.append(("mixture", _encode_blocks(checkpoint.mixture.to_arrays())))
        sections.append(("mixture_meta", _json_bytes({"covariance_type": checkpoint.mixture.covariance_type})))

    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(sections))]
    for name, payload in sections:
        parts.append(_encode_name(name))
        parts.append(struct.pack("<QI", len(payload), zlib.crc32(payload) & 0xFFFFFFFF))
        parts.append(payload)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "wb") as f:
        f.write(b"".join(parts))
    os.replace(tmp_path, path)
    logger.info(f"Checkpoint saved to {path} ({len(checkpoint.params)} parameter blocks).")
    return path


def load_checkpoint(path: str) -> Checkpoint:
    """
    Reads and verifies every section before building the result, so a
    corrupted file never yields partial state.

    Raises:
        CheckpointError: on a bad magic, version mismatch, checksum failure or
            malformed section.
    """
    with open(path, "rb") as f:
        raw = f.read()
    reader = _Reader(raw, path)
    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file.")
    version, count = reader.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}.")

    payloads: Dict[str, bytes] = {}
    for _ in range(count):
        name = reader.name()
        length, crc = reader.unpack("<QI")
        payload = reader.take(length)
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise CheckpointError(f"{path}: checksum failure in section '{name}'.")
        payloads[name] = payload
    if not reader.done:
        raise CheckpointError(f"{path}: trailing bytes after the last section.")
    for required in ("config", "params", "buffers", "optimizer", "optimizer_arrays", "training"):
        if required not in payloads:
            raise CheckpointError(f"{path}: missing section '{required}'.")

    try:
        mixture = None
        if "mixture" in payloads:
            meta = json.loads(payloads.get("mixture_meta", b"{}") or b"{}")
            mixture = GaussianMixture.from_arrays(
                _decode_blocks(payloads["mixture"], "mixture"), meta.get("covariance_type", "full")
            )
        checkpoint = Checkpoint(
            config=json.loads(payloads["config"]),
            params=_decode_blocks(payloads["params"], "params"),
            buffers=_decode_blocks(payloads["buffers"], "buffers"),
            optimizer=json.loads(payloads["optimizer"]),
            optimizer_arrays=_decode_blocks(payloads["optimizer_arrays"], "optimizer_arrays"),
            training=json.loads(payloads["training"]),
            mixture=mixture,
        )
    except CheckpointError:
        raise
    except (json.JSONDecodeError, KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed section content: {e}") from e
    logger.debug(f"Loaded checkpoint {path} (version {version}, {count} sections).")
    return checkpoint


# --- matrices ---

def save_matrix(matrix: np.ndarray, path: str) -> str:
    """Writes an (m, d) float32 or float64 matrix."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"save_matrix expects a 2-D matrix, got shape {matrix.shape}.")
    if matrix.dtype not in (np.float32, np.float64):
        matrix = matrix.astype(np.float64)
    dtype = matrix.dtype.newbyteorder("<")
    header = MATRIX_MAGIC + struct.pack("<IIQQ", MATRIX_VERSION, dtype.itemsize, *matrix.shape)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header + np.ascontiguousarray(matrix, dtype=dtype).tobytes())
    logger.debug(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} matrix to {path}")
    return path


def load_matrix(path: str) -> np.ndarray:
    """
    Raises:
        FormatError: on a header mismatch or a payload of the wrong length.
    """
    with open(path, "rb") as f:
        raw = f.read()
    header_len = len(MATRIX_MAGIC) + struct.calcsize("<IIQQ")
    if len(raw) < header_len or raw[:len(MATRIX_MAGIC)] != MATRIX_MAGIC:
        raise FormatError(f"{path}: not a matrix file.")
    version, width, rows, cols = struct.unpack("<IIQQ", raw[len(MATRIX_MAGIC):header_len])
    if version != MATRIX_VERSION:
        raise FormatError(f"{path}: matrix version {version}, expected {MATRIX_VERSION}.")
    if width not in (4, 8):
        raise FormatError(f"{path}: unsupported element width {width}.")
    payload = raw[header_len:]
    if len(payload) != rows * cols * width:
        raise FormatError(f"{path}: payload length {len(payload)} does not match {rows}x{cols} elements of {width} bytes.")
    dtype = np.dtype("<f4") if width == 4 else np.dtype("<f8")
    return np.frombuffer(payload, dtype=dtype).reshape(rows, cols).copy()

# src/data_management/data_loader.py
import glob
import gzip
import logging
import os
import struct
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from matplotlib import image as mpimg

from .schemas import RunConfig

logger = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD_BYTES = 1 + 32 * 32 * 3


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


@dataclass
class Dataset:
    """
    Images (m, H, W, C) scaled to [0, 1], optional integer labels.
    """
    images: np.ndarray
    labels: Optional[np.ndarray] = None
    split: str = "train"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"Dataset images must be (m, H, W, C), got shape {self.images.shape}.")
        if self.images.size and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise ValueError("Dataset images must lie in [0, 1].")
        if self.labels is not None and len(self.labels) != len(self.images):
            raise ValueError(f"{len(self.labels)} labels for {len(self.images)} images.")
        if self.split not in ("train", "test"):
            raise ValueError(f"Unknown split '{self.split}'.")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self):
        return tuple(self.images.shape[1:])

    def subset(self, label: int) -> "Dataset":
        if self.labels is None:
            raise ValueError("Dataset has no labels.")
        mask = self.labels == label
        return Dataset(images=self.images[mask], labels=self.labels[mask], split=self.split)


def _open(path: str):
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def _read_idx(path: str, expected_magic: int) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 8:
        raise FormatError(f"{path}: file too short for an IDX header.")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != expected_magic:
        raise FormatError(f"{path}: magic number 0x{magic:08x}, expected 0x{expected_magic:08x}.")
    ndim = magic & 0xFF
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"{path}: truncated IDX header.")
    dims = (count,) + struct.unpack(f">{ndim - 1}I", raw[8:header_len]) if ndim > 1 else (count,)
    expected = int(np.prod(dims))
    payload = raw[header_len:]
    if len(payload) < expected:
        raise FormatError(f"{path}: truncated payload ({len(payload)} of {expected} bytes).")
    return np.frombuffer(payload, dtype=np.uint8, count=expected).reshape(dims)


def load_idx(path: str, split: str = "train") -> Dataset:
    """
    Reads an IDX image file (magic 0x00000803, optionally gzip-compressed).

    Raises:
        FormatError: on a bad magic number or a truncated payload.
    """
    pixels = _read_idx(path, IDX_IMAGE_MAGIC)
    images = (pixels.astype(np.float64) / 255.0)[..., None]
    logger.info(f"Loaded {images.shape[0]} IDX images of {images.shape[1]}x{images.shape[2]} from {path}")
    return Dataset(images=images, split=split)


def load_idx_labels(path: str) -> np.ndarray:
    return _read_idx(path, IDX_LABEL_MAGIC).astype(np.int64)


def save_idx(images: np.ndarray, path: str) -> None:
    """Writes (m, H, W) or (m, H, W, 1) values in [0, 1] as an IDX image file."""
    pixels = np.asarray(images)
    if pixels.ndim == 4:
        if pixels.shape[-1] != 1:
            raise ValueError("IDX image files hold single-channel images only.")
        pixels = pixels[..., 0]
    if pixels.ndim != 3:
        raise ValueError(f"save_idx expects (m, H, W) images, got shape {pixels.shape}.")
    data = np.rint(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = struct.pack(">IIII", IDX_IMAGE_MAGIC, *data.shape)
    with (gzip.open(path, "wb") if path.endswith(".gz") else open(path, "wb")) as f:
        f.write(header + data.tobytes())
    logger.debug(f"Wrote {data.shape[0]} images to {path}")


def load_cifar_batch(path: str, split: str = "train") -> Dataset:
    """
    Reads CIFAR-10 binary batches: 3073-byte records of one label byte
    followed by 3072 channel-planar pixel bytes. `path` may be a single
    batch file or a directory of `*.bin` batches.
    """
    files = sorted(glob.glob(os.path.join(path, "*.bin"))) if os.path.isdir(path) else [path]
    if os.path.isdir(path):
        prefix = "test_batch" if split == "test" else "data_batch"
        files = [f for f in files if os.path.basename(f).startswith(prefix)] or files
    if not files:
        raise FormatError(f"{path}: no CIFAR-10 batch files found.")
    images, labels = [], []
    for file_path in files:
        with open(file_path, "rb") as f:
            raw = f.read()
        if len(raw) == 0 or len(raw) % CIFAR_RECORD_BYTES:
            raise FormatError(f"{file_path}: size {len(raw)} is not a multiple of {CIFAR_RECORD_BYTES} bytes.")
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD_BYTES)
        labels.append(records[:, 0].astype(np.int64))
        images.append(records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1))
    pixels = np.concatenate(images)
    logger.info(f"Loaded {pixels.shape[0]} CIFAR-10 images from {len(files)} batch file(s).")
    return Dataset(images=pixels.astype(np.float64) / 255.0, labels=np.concatenate(labels), split=split)


def load_image_directory(path: str, split: str = "train") -> Dataset:
    """Imports every PNG/JPEG in a directory; all images must share one size."""
    files: List[str] = sorted(
        f for f in glob.glob(os.path.join(path, "*")) if f.lower().endswith((".png", ".jpg", ".jpeg"))
    )
    if not files:
        raise FormatError(f"{path}: no image files found.")
    images = []
    for file_path in files:
        pixels = np.asarray(mpimg.imread(file_path))
        if pixels.dtype == np.uint8:
            pixels = pixels / 255.0
        if pixels.ndim == 2:
            pixels = pixels[..., None]
        elif pixels.shape[-1] == 4:
            pixels = pixels[..., :3]
        if images and pixels.shape != images[0].shape:
            raise FormatError(f"{file_path}: shape {pixels.shape} differs from {images[0].shape}.")
        images.append(pixels.astype(np.float64))
    logger.info(f"Imported {len(images)} images of shape {images[0].shape} from {path}")
    return Dataset(images=np.clip(np.stack(images), 0.0, 1.0), split=split)


def augment_with_flips(dataset: Dataset) -> Dataset:
    """Appends the horizontal mirror of every image."""
    flipped = dataset.images[:, :, ::-1, :]
    labels = None if dataset.labels is None else np.concatenate([dataset.labels, dataset.labels])
    return Dataset(images=np.concatenate([dataset.images, flipped]), labels=labels, split=dataset.split)


class DataLoader:
    """
    Resolves the dataset a run is configured for.
    """
    def __init__(self, run_config: RunConfig):
        self.config = run_config
        logger.info(f"DataLoader initialized for dataset kind '{run_config.dataset_kind}'.")

    def load(self, split: str = "train") -> Dataset:
        cfg = self.config
        kind = cfg.dataset_kind
        try:
            if kind.startswith("synthetic"):
                from .synthetic_data_generator import synth_dataset
                return synth_dataset(kind.split("-", 1)[1], cfg.synthetic_count, cfg.synthetic_size, cfg.seed,
                                     split=split)
            if kind == "idx":
                dataset = load_idx(cfg.dataset_path, split=split)
                if cfg.labels_path:
                    dataset = Dataset(images=dataset.images, labels=load_idx_labels(cfg.labels_path), split=split)
                return dataset
            if kind == "cifar10":
                return load_cifar_batch(cfg.dataset_path, split=split)
            if kind == "image-dir":
                return load_image_directory(cfg.dataset_path, split=split)
        except FileNotFoundError:
            logger.error(f"Dataset file not found at: {cfg.dataset_path}")
            raise
        raise ValueError(f"Unknown dataset kind '{kind}'.")

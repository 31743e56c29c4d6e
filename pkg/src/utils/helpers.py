# src/utils/helpers.py
import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional

import yaml

logger = logging.getLogger(__name__)

_SEED_MODULUS = 2 ** 63 - 1


def derive_seed(base_seed: int, component: str) -> int:
    """
    Derives a component seed from a base seed and a component name.

    Seeds fan out deterministically: the same (base_seed, component) pair always
    yields the same value, and distinct names give unrelated streams.

    Args:
        base_seed: The run seed.
        component: Name of the consumer (e.g. "init/encoder.stem.kernel", "trial/2").

    Returns:
        A non-negative integer suitable for numpy.random.default_rng.
    """
    digest = hashlib.sha256(f"{int(base_seed)}::{component}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % _SEED_MODULUS


def load_config_yaml(file_path: str) -> Optional[Dict[str, Any]]:
    """
    Loads a YAML (or JSON, which is a YAML subset) configuration file.

    Args:
        file_path: Path to the configuration file.

    Returns:
        A dictionary containing the configuration, or None if an error occurs.
    """
    if not os.path.exists(file_path):
        logger.error(f"Configuration file not found: {file_path}")
        return None
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            config_data = yaml.safe_load(f)
        if config_data is None:
            config_data = {}
        if not isinstance(config_data, dict):
            logger.error(f"Configuration file {file_path} does not contain a mapping at top level.")
            return None
        logger.info(f"Successfully loaded configuration from {file_path}")
        return config_data
    except yaml.YAMLError as e:
        logger.error(f"Error parsing YAML file {file_path}: {e}", exc_info=True)
        return None
    except IOError as e:
        logger.error(f"Error reading file {file_path}: {e}", exc_info=True)
        return None


def save_config_json(config: Dict[str, Any], file_path: str) -> str:
    """Writes a configuration mapping as stable, sorted JSON and returns the path."""
    ensure_directory_exists(os.path.dirname(os.path.abspath(file_path)))
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Resolved configuration written to {file_path}")
    return file_path


def deep_update(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Returns a copy of `base` with nested `overrides` applied; None values are ignored."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = deep_update(current if isinstance(current, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def ensure_directory_exists(dir_path: str):
    """
    Ensures that a directory exists, creating it if necessary.
    """
    if not dir_path:
        return
    if not os.path.exists(dir_path):
        try:
            os.makedirs(dir_path, exist_ok=True)  # exist_ok=True handles race conditions
            logger.info(f"Created directory: {dir_path}")
        except OSError as e:
            logger.error(f"Error creating directory {dir_path}: {e}")
            raise
    elif not os.path.isdir(dir_path):
        logger.error(f"Path {dir_path} exists but is not a directory.")
        raise NotADirectoryError(f"Path {dir_path} exists but is not a directory.")


class RunLock:
    """
    Exclusive lock file guarding an output directory against concurrent training runs.

    Usage:
        with RunLock(output_dir):
            ...
    """
    LOCK_NAME = "train.lock"

    def __init__(self, dir_path: str):
        self.path = os.path.join(dir_path, self.LOCK_NAME)
        self._fd: Optional[int] = None

    def __enter__(self) -> "RunLock":
        ensure_directory_exists(os.path.dirname(self.path))
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                f"Output directory is locked by another training run ({self.path}). "
                "Remove the lock file if that run is no longer alive."
            ) from None
        os.write(self._fd, str(os.getpid()).encode("ascii"))
        logger.debug(f"Acquired run lock {self.path}")
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        try:
            os.remove(self.path)
            logger.debug(f"Released run lock {self.path}")
        except FileNotFoundError:
            logger.warning(f"Run lock {self.path} vanished before release.")


ENV_NUM_THREADS = "SVAE_NUM_THREADS"
THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def apply_thread_limit(environ: Optional[Dict[str, str]] = None) -> Optional[int]:
    """
    Copies SVAE_NUM_THREADS into the BLAS thread variables. Only effective
    before numpy is first imported, so the entry script calls it early.
    """
    environ = os.environ if environ is None else environ
    value = environ.get(ENV_NUM_THREADS)
    if not value:
        return None
    threads = int(value)
    if threads < 1:
        raise ValueError(f"{ENV_NUM_THREADS} must be a positive integer, got {value!r}.")
    for name in THREAD_VARIABLES:
        os.environ.setdefault(name, str(threads))
    return threads

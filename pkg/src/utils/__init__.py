# src/utils/__init__.py
from .logger_config import setup_logging, setup_logging_from_config, get_project_logger
from .helpers import (
    derive_seed,
    load_config_yaml,
    save_config_json,
    deep_update,
    ensure_directory_exists,
    RunLock,
    apply_thread_limit,
)

__all__ = [
    "setup_logging",
    "setup_logging_from_config",
    "get_project_logger",
    "derive_seed",
    "load_config_yaml",
    "save_config_json",
    "deep_update",
    "ensure_directory_exists",
    "RunLock",
    "apply_thread_limit",
]

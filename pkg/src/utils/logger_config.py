# src/utils/logger_config.py
import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Any, Mapping, Optional, Union

DEFAULT_LOG_FILE = os.path.join("logs", "svae_lab.log")
DEFAULT_LOG_LEVEL = logging.INFO
FILE_LOG_FORMAT = '%(asctime)s - %(name)s [%(levelname)s] - %(filename)s:%(lineno)d - %(message)s'
CONSOLE_LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'
# third-party loggers that flood DEBUG output during plotting
QUIET_LOGGERS = ("matplotlib", "PIL")


def level_from_name(name: Union[str, int]) -> int:
    """Numeric level for a name such as 'debug' or 'WARNING'."""
    if isinstance(name, int):
        return name
    level = logging.getLevelName(str(name).upper())
    if not isinstance(level, int):
        raise ValueError(f"Unknown log level '{name}'.")
    return level


def setup_logging(log_level: int = DEFAULT_LOG_LEVEL,
                  log_file: Optional[str] = DEFAULT_LOG_FILE,
                  console_log_level: Optional[int] = None,
                  max_bytes: int = 10 * 1024 * 1024,
                  backup_count: int = 5) -> logging.Logger:
    """
    Configures the root logger for a lab command.

    Args:
        log_level: Level of the root logger and of the rotating file handler.
        log_file: Path of the log file; None logs to the console only.
        console_log_level: Level of the stdout handler. Defaults to log_level.
        max_bytes: Size at which the log file is rotated.
        backup_count: Number of rotated files kept.

    Returns:
        The configured root logger. Calling this again replaces its handlers.
    """
    root_logger = logging.getLogger()
    root_logger.setLevel(min(log_level, console_log_level or log_level))
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        handler.close()

    if log_file:
        log_dir = os.path.dirname(log_file)
        try:
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = RotatingFileHandler(log_file, maxBytes=max_bytes, backupCount=backup_count,
                                               encoding='utf-8')
            file_handler.setLevel(log_level)
            file_handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT))
            root_logger.addHandler(file_handler)
        except OSError as e:
            print(f"Error setting up file logger to {log_file}: {e}", file=sys.stderr)
            log_file = None

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(console_log_level if console_log_level is not None else log_level)
    console_handler.setFormatter(logging.Formatter(CONSOLE_LOG_FORMAT))
    root_logger.addHandler(console_handler)

    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)

    root_logger.debug(f"Logging ready (file: {log_file or 'disabled'}).")
    return root_logger


def setup_logging_from_config(log_config: Union[Mapping[str, Any], Any], project_root: str) -> logging.Logger:
    """
    Applies the `logging` section of the lab configuration, given as a
    LoggingConfig or a plain mapping. Relative log files live under project_root.
    """
    if hasattr(log_config, "model_dump"):
        log_config = log_config.model_dump()
    log_level = level_from_name(log_config.get("log_level", "INFO"))
    console_log_level = level_from_name(log_config.get("console_log_level", log_level))

    log_file = log_config.get("log_file", DEFAULT_LOG_FILE)
    if log_file and not os.path.isabs(log_file):
        log_file = os.path.join(project_root, log_file)

    return setup_logging(
        log_level=log_level,
        log_file=log_file,
        console_log_level=console_log_level,
        max_bytes=log_config.get("max_log_file_bytes", 10 * 1024 * 1024),
        backup_count=log_config.get("log_backup_count", 5),
    )


def get_project_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)

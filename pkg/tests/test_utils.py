# tests/test_utils.py
import logging
import os
from logging.handlers import RotatingFileHandler

import pytest

from src.data_management.schemas import LoggingConfig
from src.utils.helpers import (
    THREAD_VARIABLES,
    RunLock,
    apply_thread_limit,
    deep_update,
    derive_seed,
    load_config_yaml,
)
from src.utils.logger_config import level_from_name, setup_logging_from_config


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield root
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


def test_derived_seeds_are_stable_and_independent():
    assert derive_seed(42, "model/init") == derive_seed(42, "model/init")
    assert derive_seed(42, "model/init") != derive_seed(43, "model/init")
    assert derive_seed(42, "trial/0") != derive_seed(42, "trial/1")
    assert 0 <= derive_seed(0, "x") < 2 ** 63


def test_deep_update_merges_sections_and_skips_none():
    base = {"run": {"epochs": 5, "seed": 1}, "logging": {"log_file": "a.log"}}
    merged = deep_update(base, {"run": {"epochs": 9, "seed": None}, "evaluation": {"extractor": "identity"}})
    assert merged == {"run": {"epochs": 9, "seed": 1}, "logging": {"log_file": "a.log"},
                      "evaluation": {"extractor": "identity"}}
    assert base["run"]["epochs"] == 5


def test_config_loader_reads_yaml_and_reports_failures(tmp_path):
    good = tmp_path / "lab.yaml"
    good.write_text("run:\n  epochs: 3\n")
    assert load_config_yaml(str(good)) == {"run": {"epochs": 3}}
    assert load_config_yaml(str(tmp_path / "missing.yaml")) is None
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n")
    assert load_config_yaml(str(listing)) is None


def test_run_lock_is_exclusive_and_released(tmp_path):
    with RunLock(str(tmp_path)) as lock:
        assert os.path.exists(lock.path)
        with pytest.raises(RuntimeError):
            with RunLock(str(tmp_path)):
                pass
    assert not os.path.exists(os.path.join(tmp_path, RunLock.LOCK_NAME))


def test_thread_limit_sets_blas_variables(monkeypatch):
    for name in THREAD_VARIABLES:
        monkeypatch.delenv(name, raising=False)
    assert apply_thread_limit({}) is None
    assert apply_thread_limit({"SVAE_NUM_THREADS": "2"}) == 2
    assert all(os.environ[name] == "2" for name in THREAD_VARIABLES)
    with pytest.raises(ValueError):
        apply_thread_limit({"SVAE_NUM_THREADS": "0"})


def test_level_names():
    assert level_from_name("debug") == logging.DEBUG
    assert level_from_name(logging.ERROR) == logging.ERROR
    with pytest.raises(ValueError):
        level_from_name("chatty")


def test_logging_setup_from_config(tmp_path, restore_root_logger):
    config = LoggingConfig(log_level="DEBUG", console_log_level="WARNING", log_file="logs/lab.log")
    root = setup_logging_from_config(config, str(tmp_path))
    file_handlers = [h for h in root.handlers if isinstance(h, RotatingFileHandler)]
    assert len(file_handlers) == 1
    assert file_handlers[0].baseFilename == os.path.join(str(tmp_path), "logs", "lab.log")
    assert file_handlers[0].level == logging.DEBUG
    console = [h for h in root.handlers if not isinstance(h, RotatingFileHandler)]
    assert console[0].level == logging.WARNING
    assert logging.getLogger("matplotlib").level == logging.WARNING

    root = setup_logging_from_config({"log_file": None}, str(tmp_path))
    assert len(root.handlers) == 1


def test_logging_config_rejects_unknown_levels():
    with pytest.raises(ValueError):
        LoggingConfig(log_level="chatty")

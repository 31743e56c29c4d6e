# src/pipeline/settings.py
import logging
import os
from typing import Any, Dict, Mapping, Optional

from ..data_management.schemas import LabConfig
from ..utils.helpers import deep_update, load_config_yaml

logger = logging.getLogger(__name__)

ENV_OUTPUT_ROOT = "SVAE_OUTPUT_ROOT"


def environment_overrides(file_config: Dict[str, Any], environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """
    Overrides taken from the environment; currently the output root for
    relative output directories. The root is made absolute before joining.
    """
    environ = os.environ if environ is None else environ
    root = environ.get(ENV_OUTPUT_ROOT)
    if not root:
        return {}
    output_dir = file_config.get("run", {}).get("output_dir", LabConfig().run.output_dir)
    if os.path.isabs(output_dir):
        return {}
    return {"run": {"output_dir": os.path.join(os.path.abspath(root), output_dir)}}


def resolve_config(config_path: Optional[str] = None, flag_overrides: Optional[Dict[str, Any]] = None,
                   environ: Optional[Mapping[str, str]] = None) -> LabConfig:
    """
    Builds the effective configuration.

    Precedence: built-in defaults < config file < environment < flags. Flag
    values of None are ignored so unset options never mask the file.

    Raises:
        FileNotFoundError: if `config_path` is given but cannot be loaded.
        pydantic.ValidationError: if the merged configuration is invalid.
    """
    merged: Dict[str, Any] = {}
    if config_path:
        loaded = load_config_yaml(config_path)
        if loaded is None:
            raise FileNotFoundError(f"Could not load configuration from {config_path}")
        merged = deep_update(merged, loaded)
    merged = deep_update(merged, environment_overrides(merged, environ))
    if flag_overrides:
        merged = deep_update(merged, flag_overrides)
    config = LabConfig.model_validate(merged)
    logger.debug(f"Resolved configuration: {config.model_dump(mode='json')}")
    return config

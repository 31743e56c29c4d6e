# src/training/checkpointing.py
import logging
from typing import Any, Dict, Optional, Tuple

from ..data_management.persistence import Checkpoint, load_checkpoint
from ..latent_analysis.gmm import GaussianMixture
from ..vae_core.model import ModelConfig, VAEModel
from .loss import BetaSchedule
from .optimizer import Adam

logger = logging.getLogger(__name__)


def build_checkpoint(model: VAEModel, optimizer: Optional[Adam] = None, schedule: Optional[BetaSchedule] = None,
                     training: Optional[Dict[str, Any]] = None,
                     mixture: Optional[GaussianMixture] = None) -> Checkpoint:
    params, buffers = model.state_arrays()
    scalars, arrays = optimizer.state_dict() if optimizer is not None else ({}, {})
    training_state = dict(training or {})
    if schedule is not None:
        training_state["schedule"] = schedule.to_dict()
    return Checkpoint(
        config=model.config.model_dump(mode="json"),
        params=params,
        buffers=buffers,
        optimizer=scalars,
        optimizer_arrays=arrays,
        training=training_state,
        mixture=mixture,
    )


def model_from_checkpoint(checkpoint: Checkpoint) -> VAEModel:
    """Rebuilds the model described by the checkpoint config and loads its parameters."""
    config = ModelConfig.model_validate(checkpoint.config)
    model = VAEModel(config)
    model.load_arrays(checkpoint.params, checkpoint.buffers)
    return model


def load_model(path: str) -> Tuple[VAEModel, Checkpoint]:
    """Returns (model, checkpoint) for a checkpoint file."""
    checkpoint = load_checkpoint(path)
    model = model_from_checkpoint(checkpoint)
    logger.info(f"Restored {model!r} from {path}")
    return model, checkpoint

# src/training/__init__.py
from .loss import (
    BetaSchedule,
    LossBreakdown,
    ScheduleError,
    kl_gaussian,
    recon_loss,
    total_loss,
    update_beta,
)
from .optimizer import Adam
from .checkpointing import build_checkpoint, load_model, model_from_checkpoint
from .trainer import Trainer

__all__ = [
    "BetaSchedule",
    "LossBreakdown",
    "ScheduleError",
    "kl_gaussian",
    "recon_loss",
    "total_loss",
    "update_beta",
    "Adam",
    "build_checkpoint",
    "load_model",
    "model_from_checkpoint",
    "Trainer",
]

# src/pipeline/__init__.py
from .settings import environment_overrides, resolve_config
from .evaluation import FidEvaluator, fit_latent_mixture, reconstruct_images, score_model
from .commands import (
    build_model,
    check_image_extents,
    cmd_encode,
    cmd_eval_fid,
    cmd_fit_gmm,
    cmd_generate,
    cmd_train,
    load_image_set,
)
from .ablation import AblationResult, cmd_ablate, trial_seeds

__all__ = [
    "environment_overrides",
    "resolve_config",
    "FidEvaluator",
    "fit_latent_mixture",
    "reconstruct_images",
    "score_model",
    "build_model",
    "check_image_extents",
    "cmd_encode",
    "cmd_eval_fid",
    "cmd_fit_gmm",
    "cmd_generate",
    "cmd_train",
    "load_image_set",
    "AblationResult",
    "cmd_ablate",
    "trial_seeds",
]

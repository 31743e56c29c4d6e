# src/pipeline/ablation.py
"""
Vanilla/split twin comparison.

Each trial trains two models that differ only in the decoder's last layer,
on the same data order and noise. After every epoch both twins get an
ex-post mixture fitted on their latents, and images resampled from it are
scored against the training set next to the twin's reconstruction score.
Trajectories are aggregated over trials. The trained twins are scored once
more with the full `run.fid_samples` count.
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..analysis.report_generator import ReportGenerator
from ..autodiff import set_precision
from ..data_management.schemas import LabConfig
from ..training.trainer import Trainer
from ..utils.helpers import derive_seed, save_config_json
from ..vae_core.model import VAEModel
from .commands import RESOLVED_CONFIG_NAME, build_model, load_training_data
from .evaluation import RECONSTRUCTION, FidEvaluator, fit_latent_mixture, score_model

logger = logging.getLogger(__name__)

ABLATION_COLUMNS = ["epoch", "trial", "variant", "fid", "active_units"]
FINAL_COLUMNS = ["trial", "variant", "fid", "samples"]
# variant label in the CSV -> image variant scored for that twin
TWIN_VARIANTS = {
    "vanilla": {"vanilla": "composed", "vanilla_recon": RECONSTRUCTION},
    "split": {"split": "composed", "split_x1": "x1", "split_x2": "x2", "split_mix": "random_mix",
              "split_recon": RECONSTRUCTION},
}


@dataclass
class AblationResult:
    trajectories: pd.DataFrame
    summary: pd.DataFrame
    final: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=FINAL_COLUMNS))
    checks: Dict[str, Any] = field(default_factory=dict)
    paths: Dict[str, Optional[str]] = field(default_factory=dict)


def trial_seeds(base_seed: int, trials: int) -> List[int]:
    return [derive_seed(base_seed, f"trial/{t}") for t in range(trials)]


def twin_init_seed(trial_seed: int, kind: str, shared_init: bool) -> int:
    """Shared init gives both twins identical trunk weights."""
    return derive_seed(trial_seed, "model/init" if shared_init else f"model/init/{kind}")


def _mixture_scores(lab: LabConfig, model: VAEModel, images: np.ndarray, evaluator: FidEvaluator,
                    count: int, gmm_seed: int, fid_seed: int) -> Dict[str, float]:
    evaluation = lab.evaluation
    mixture = fit_latent_mixture(
        model, images, min(lab.run.gmm_components, images.shape[0]), gmm_seed,
        max_iters=evaluation.gmm_max_iters, tol=evaluation.gmm_tol, covariance_type=evaluation.covariance_type,
    )
    return score_model(model, evaluator, count, fid_seed, mixture, reconstruction=True)


def _resampled_fid(lab: LabConfig, images: np.ndarray, evaluator: FidEvaluator, trial_seed: int):
    def callback(model: VAEModel, epoch: int) -> Dict[str, float]:
        return _mixture_scores(lab, model, images, evaluator, lab.evaluation.ablation_fid_samples,
                               derive_seed(trial_seed, f"ablate/gmm/{epoch}"),
                               derive_seed(trial_seed, f"ablate/fid/{epoch}"))

    return callback


def run_trial(lab: LabConfig, images: np.ndarray, evaluator: FidEvaluator, trial: int, trial_seed: int,
              shared_init: bool = True) -> Tuple[List[Dict[str, Any]], List[Dict[str, Any]]]:
    """
    Trains the vanilla and split twins of one trial.

    Returns:
        (per-epoch rows, final rows) in long format, one row per CSV variant label.
    """
    rows: List[Dict[str, Any]] = []
    final_rows: List[Dict[str, Any]] = []
    for kind, variants in TWIN_VARIANTS.items():
        model = build_model(lab, images.shape[1:], kind=kind, init_seed=twin_init_seed(trial_seed, kind, shared_init))
        run_cfg = lab.run.model_copy(update={"model_kind": kind, "seed": trial_seed, "fid_every": 1})
        trainer = Trainer(model, run_cfg, lab.evaluation, output_dir=None,
                          fid_callback=_resampled_fid(lab, images, evaluator, trial_seed))
        log = trainer.fit(images)
        for record in log.to_dict("records"):
            for label, image_variant in variants.items():
                rows.append({
                    "epoch": int(record["epoch"]),
                    "trial": trial,
                    "variant": label,
                    "fid": float(record[f"fid_{image_variant}"]),
                    "active_units": int(record["active_units"]),
                })

        final = _mixture_scores(lab, model, images, evaluator, lab.run.fid_samples,
                                derive_seed(trial_seed, f"ablate/final/gmm/{kind}"),
                                derive_seed(trial_seed, f"ablate/final/fid/{kind}"))
        for label, image_variant in variants.items():
            final_rows.append({"trial": trial, "variant": label, "fid": float(final[image_variant]),
                               "samples": lab.run.fid_samples})
        logger.info(f"Trial {trial}: {kind} twin finished after {trainer.epoch} epochs, "
                    f"final FID {final['composed']:.4f} on {lab.run.fid_samples} samples.")
    return rows, final_rows


def summarize(trajectories: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation across trials per (epoch, variant)."""
    return (
        trajectories.groupby(["epoch", "variant"])
        .agg(fid_mean=("fid", "mean"), fid_std=("fid", "std"), active_units_mean=("active_units", "mean"),
             trials=("trial", "nunique"))
        .reset_index()
    )


def check_trends(trajectories: pd.DataFrame, summary: pd.DataFrame) -> Dict[str, Any]:
    """
    Soft checks, logged as warnings when they fail: at the last epoch the
    split branch images should score below the composed split image, and the
    split twin should keep at least as many active units as the vanilla twin
    in two thirds of the trials. Whether the branches also beat the split
    twin's reconstruction score is reported without a warning.
    """
    last_epoch = int(summary["epoch"].max())
    final = summary[summary["epoch"] == last_epoch].set_index("variant")["fid_mean"]
    branches_below = bool(final["split_x1"] < final["split"] and final["split_x2"] < final["split"])
    if not branches_below:
        logger.warning(
            f"Expected trend not observed at epoch {last_epoch}: split x1 {final['split_x1']:.3f}, "
            f"x2 {final['split_x2']:.3f} vs composed {final['split']:.3f}."
        )
    below_reconstruction = bool(max(final["split_x1"], final["split_x2"]) < final["split_recon"])

    units = (
        trajectories[(trajectories["epoch"] == last_epoch) & trajectories["variant"].isin(["vanilla", "split"])]
        .pivot_table(index="trial", columns="variant", values="active_units", aggfunc="first")
    )
    trials = len(units)
    split_wins = int((units["split"] >= units["vanilla"]).sum())
    needed = math.ceil(2 * trials / 3)
    capacity_ok = split_wins >= needed
    if not capacity_ok:
        logger.warning(
            f"Split twin kept at least as many active units as the vanilla twin in only {split_wins}/{trials} trials."
        )
    all_finite = bool(np.all(np.isfinite(trajectories["fid"].to_numpy())))
    if not all_finite:
        logger.warning("Some ablation FID scores are not finite.")
    return {
        "last_epoch": last_epoch,
        "final_fid": final.to_dict(),
        "branches_below_composed": branches_below,
        "branches_below_reconstruction": below_reconstruction,
        "split_capacity_trials": split_wins,
        "trials": trials,
        "capacity_trend_ok": capacity_ok,
        "all_finite": all_finite,
    }


def cmd_ablate(lab: LabConfig, trials: int = 3, shared_init: bool = True,
               output_dir: Optional[str] = None) -> AblationResult:
    """
    Runs `trials` twin trainings with seeds derived from run.seed and writes
    the trajectory CSV, the per-epoch summary, the final scores, a JSON report,
    the resolved configuration and the plot.
    """
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}.")
    set_precision(lab.run.precision)
    output_dir = os.path.abspath(output_dir or os.path.join(lab.run.output_dir, "ablation"))
    save_config_json(lab.model_dump(mode="json"), os.path.join(output_dir, RESOLVED_CONFIG_NAME))
    dataset = load_training_data(lab)
    evaluator = FidEvaluator(dataset.images, lab.evaluation.extractor, lab.run.seed)

    rows: List[Dict[str, Any]] = []
    final_rows: List[Dict[str, Any]] = []
    for trial, seed in enumerate(trial_seeds(lab.run.seed, trials)):
        logger.info(f"--- Ablation trial {trial + 1}/{trials} (seed {seed}) ---")
        trial_rows, trial_final = run_trial(lab, dataset.images, evaluator, trial, seed, shared_init)
        rows.extend(trial_rows)
        final_rows.extend(trial_final)

    trajectories = pd.DataFrame(rows, columns=ABLATION_COLUMNS)
    final = pd.DataFrame(final_rows, columns=FINAL_COLUMNS)
    summary = summarize(trajectories)
    checks = check_trends(trajectories, summary)

    reporter = ReportGenerator(output_dir)
    paths = {
        "trajectories": reporter.write_table(trajectories, "ablation_trajectories.csv"),
        "summary": reporter.write_table(summary, "ablation_summary.csv"),
        "final": reporter.write_table(final, "ablation_final.csv"),
        "plot": reporter.plot_fid_trajectories(summary),
    }
    reporter.add_data("config", lab.model_dump(mode="json"))
    final_means = final.groupby("variant")["fid"].mean().to_dict()
    paths["report"] = reporter.write_json_report(
        "ablation_report.json",
        {"trials": trials, "shared_init": shared_init, "checks": checks,
         "final_fid": {"samples": lab.run.fid_samples, "mean": final_means}},
    )
    paths["config"] = os.path.join(output_dir, RESOLVED_CONFIG_NAME)
    return AblationResult(trajectories=trajectories, summary=summary, final=final, checks=checks, paths=paths)

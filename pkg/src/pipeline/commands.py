# src/pipeline/commands.py
"""
Subcommand implementations: train, generate, fit-gmm, eval-fid and encode.

Each command takes an already resolved LabConfig plus its own options, writes
its outputs under the configured output directory (or explicit paths) and
returns a small summary for the caller to log.
"""
import glob
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..analysis.report_generator import ReportGenerator
from ..autodiff import set_precision
from ..data_management.data_loader import DataLoader, Dataset, load_cifar_batch, load_idx, load_image_directory
from ..data_management.image_export import DEFAULT_PAD_VALUE, export_grid
from ..data_management.persistence import MATRIX_MAGIC, load_checkpoint, load_matrix, save_checkpoint, save_matrix
from ..data_management.schemas import LabConfig
from ..fid_metric.extractors import build_extractor, fid_between_sets, parse_extractor_spec
from ..fid_metric.stats import FeatureMatrix, FidReport, fid_from_features
from ..latent_analysis.collapse import active_units, encode_dataset
from ..training.checkpointing import load_model
from ..training.trainer import Trainer
from ..utils.helpers import RunLock, derive_seed, ensure_directory_exists, save_config_json
from ..vae_core.generation import GeneratedBatch, GenerationConfig, generate
from ..vae_core.model import ModelConfig, VAEModel
from .evaluation import RECONSTRUCTION, FidEvaluator, fit_latent_mixture, score_model

logger = logging.getLogger(__name__)

RESOLVED_CONFIG_NAME = "resolved_config.json"
DEFAULT_GRID_COLUMNS = 10


# --- shared helpers ---

def check_image_extents(lab: LabConfig, image_shape: Tuple[int, int, int]) -> None:
    """Fails before any compute when the encoder cannot halve the image num_scales times."""
    factor = 2 ** lab.architecture.num_scales
    height, width = image_shape[0], image_shape[1]
    if height % factor or width % factor:
        raise ValueError(
            f"Image extents {height}x{width} are not divisible by 2**num_scales = {factor}; "
            f"lower architecture.num_scales or crop the data."
        )


def build_model(lab: LabConfig, image_shape: Tuple[int, int, int], kind: Optional[str] = None,
                init_seed: Optional[int] = None) -> VAEModel:
    """Model for the run config; the init seed defaults to one derived from the run seed."""
    config = ModelConfig(
        kind=kind or lab.run.model_kind,
        image_shape=tuple(image_shape),
        latent_dim=lab.run.latent_dim,
        architecture=lab.architecture,
        seed=init_seed if init_seed is not None else derive_seed(lab.run.seed, "model/init"),
    )
    return VAEModel(config)


def load_training_data(lab: LabConfig) -> Dataset:
    dataset = DataLoader(lab.run).load()
    check_image_extents(lab, dataset.image_shape)
    return dataset


def _is_matrix_file(path: str) -> bool:
    if not os.path.isfile(path):
        return False
    with open(path, "rb") as f:
        return f.read(len(MATRIX_MAGIC)) == MATRIX_MAGIC


def load_image_set(path: str) -> np.ndarray:
    """Images from an IDX file, a CIFAR-10 batch (file or directory) or a directory of pictures."""
    if os.path.isdir(path):
        if glob.glob(os.path.join(path, "*.bin")):
            return load_cifar_batch(path).images
        return load_image_directory(path).images
    if path.endswith(".bin"):
        return load_cifar_batch(path).images
    return load_idx(path).images


def _chunk_rows(stack: np.ndarray, columns: int) -> List[np.ndarray]:
    """Splits a stack into grid rows of `columns` tiles, padding the last row with blank tiles."""
    if stack.shape[0] <= columns:
        return [stack]
    rows = []
    for start in range(0, stack.shape[0], columns):
        row = stack[start:start + columns]
        if row.shape[0] < columns:
            blank = np.full((columns - row.shape[0],) + row.shape[1:], DEFAULT_PAD_VALUE)
            row = np.concatenate([row, blank])
        rows.append(row)
    return rows


def _sibling_path(path: str, suffix: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}_{suffix}{ext}"


# --- train ---

def cmd_train(lab: LabConfig, resume: Optional[str] = None) -> Dict[str, Any]:
    """
    Trains one model as configured, writing checkpoints, the per-epoch CSV log,
    training curves and a summary report under run.output_dir.
    """
    run = lab.run
    output_dir = os.path.abspath(run.output_dir)
    ensure_directory_exists(output_dir)
    with RunLock(output_dir):
        save_config_json(lab.model_dump(mode="json"), os.path.join(output_dir, RESOLVED_CONFIG_NAME))
        set_precision(run.precision)
        dataset = load_training_data(lab)
        model = build_model(lab, dataset.image_shape)

        fid_callback = None
        if run.fid_every:
            evaluator = FidEvaluator(dataset.images, lab.evaluation.extractor, run.seed)

            def fid_callback(current: VAEModel, epoch: int) -> Dict[str, float]:
                return score_model(current, evaluator, lab.evaluation.ablation_fid_samples,
                                   derive_seed(run.seed, f"train/fid/{epoch}"))

        trainer = Trainer(model, run, lab.evaluation, output_dir=output_dir, fid_callback=fid_callback)
        if resume:
            checkpoint = load_checkpoint(resume)
            if checkpoint.config != model.config.model_dump(mode="json"):
                raise ValueError(f"Checkpoint {resume} was written for a different model configuration.")
            trainer.restore(checkpoint)
        log = trainer.fit(dataset.images)

    reporter = ReportGenerator(output_dir)
    reporter.plot_training_curves(log)
    summary = {
        "model_kind": model.kind,
        "parameters": model.parameter_count(),
        "epochs": trainer.epoch,
        "final": log.iloc[-1].to_dict() if not log.empty else {},
        "best_fid": trainer.best_fid,
        "best_epoch": trainer.best_epoch,
        "checkpoints": sorted(os.listdir(os.path.join(output_dir, "checkpoints"))),
    }
    reporter.write_json_report("train_summary.json", summary)
    return summary


# --- generate ---

def cmd_generate(checkpoint_path: str, sampler: str = "prior", count: int = 100, seed: int = 0,
                 grid_out: Optional[str] = None, columns: int = DEFAULT_GRID_COLUMNS) -> Dict[str, Any]:
    """
    Samples `count` images from a checkpoint and writes image grids.

    Split models get the four-row layout (sigma map, x1, x2, composed) for the
    first `columns` samples plus a separate grid of all sigma maps.
    """
    model, checkpoint = load_model(checkpoint_path)
    if sampler == "gmm" and checkpoint.mixture is None:
        raise ValueError(f"{checkpoint_path} has no fitted mixture; run fit-gmm first or use the prior sampler.")
    mixture = checkpoint.mixture if sampler == "gmm" else None
    batch = generate(model, GenerationConfig(sampler=sampler, count=count, seed=seed), mixture)

    result: Dict[str, Any] = {"count": len(batch), "split": batch.is_split, "grid": None, "sigma_grid": None}
    if grid_out:
        result.update(write_generation_grids(batch, grid_out, columns))
    return result


def write_generation_grids(batch: GeneratedBatch, grid_out: str, columns: int = DEFAULT_GRID_COLUMNS) -> Dict[str, Optional[str]]:
    ensure_directory_exists(os.path.dirname(os.path.abspath(grid_out)))
    if not batch.is_split:
        return {"grid": export_grid(_chunk_rows(batch.images, columns), grid_out), "sigma_grid": None}
    shown = min(columns, len(batch))
    rows = [batch.sigma_maps[:shown], batch.x1[:shown], batch.x2[:shown], batch.images[:shown]]
    grid = export_grid(rows, grid_out)
    sigma_grid = export_grid(_chunk_rows(batch.sigma_maps, columns), _sibling_path(grid_out, "sigma"))
    return {"grid": grid, "sigma_grid": sigma_grid}


# --- fit-gmm ---

def cmd_fit_gmm(checkpoint_path: str, lab: LabConfig, components: Optional[int] = None,
                output_path: Optional[str] = None) -> Dict[str, Any]:
    """Encodes the configured dataset, fits the ex-post mixture and stores it in the checkpoint."""
    components = components or lab.run.gmm_components
    model, checkpoint = load_model(checkpoint_path)
    dataset = DataLoader(lab.run).load()
    if tuple(dataset.image_shape) != tuple(model.image_shape):
        raise ValueError(f"Dataset images {dataset.image_shape} do not match the model's {model.image_shape}.")
    evaluation = lab.evaluation
    mixture = fit_latent_mixture(model, dataset.images, components, lab.run.seed, max_iters=evaluation.gmm_max_iters,
                                 tol=evaluation.gmm_tol, covariance_type=evaluation.covariance_type)
    checkpoint.mixture = mixture
    checkpoint.training["gmm"] = {"components": components, "seed": lab.run.seed,
                                  "covariance_type": evaluation.covariance_type, "samples": len(dataset)}
    target = output_path or checkpoint_path
    save_checkpoint(checkpoint, target)
    logger.info(f"Mixture with {components} components stored in {target}")
    return {"checkpoint": target, "components": components, "samples": len(dataset)}


# --- eval-fid ---

def _fid_two_sets(set_a: str, set_b: str, extractor_spec: str, seed: int) -> Dict[str, FidReport]:
    a_is_matrix, b_is_matrix = _is_matrix_file(set_a), _is_matrix_file(set_b)
    if a_is_matrix != b_is_matrix:
        raise ValueError("Both sets must be feature matrices or both image sets.")
    if a_is_matrix:
        logger.info("Comparing precomputed feature matrices; the extractor setting is not used.")
        return {"set": fid_from_features(FeatureMatrix(load_matrix(set_a)), FeatureMatrix(load_matrix(set_b)))}
    if parse_extractor_spec(extractor_spec)[0] == "from_file":
        raise ValueError(f"Extractor {extractor_spec} only compares feature matrix files, not image sets.")
    images_a, images_b = load_image_set(set_a), load_image_set(set_b)
    if min(len(images_a), len(images_b)) < 2:
        raise ValueError("FID needs at least 2 images per set.")
    extractor = build_extractor(extractor_spec, seed=derive_seed(seed, "fid/extractor"))
    if extractor.needs_fit:
        extractor.fit(images_a)
    return {"set": fid_between_sets(images_a, images_b, extractor)}


def cmd_eval_fid(lab: LabConfig, set_a: Optional[str] = None, set_b: Optional[str] = None,
                 checkpoint_path: Optional[str] = None, sampler: str = "prior", count: Optional[int] = None,
                 extractor: Optional[str] = None, output_path: Optional[str] = None,
                 seed: Optional[int] = None) -> Dict[str, Dict[str, Any]]:
    """
    Frechet distance between two sets, or between a reference set and samples
    from a checkpoint. Split checkpoints are scored four ways: composed, x1,
    x2 and the random mix of x1 and x2. Checkpoint runs also score the
    reconstructions of the reference set as a baseline.

    Returns:
        Variant name to FidReport summary; the same mapping is written as JSON.
    """
    spec = extractor or lab.evaluation.extractor
    seed = lab.run.seed if seed is None else seed
    details: Dict[str, Any] = {"extractor": spec, "seed": seed}
    if checkpoint_path is None:
        if not (set_a and set_b):
            raise ValueError("eval-fid needs two sets or a checkpoint.")
        reports = _fid_two_sets(set_a, set_b, spec, seed)
        details.update({"set_a": set_a, "set_b": set_b})
    else:
        model, checkpoint = load_model(checkpoint_path)
        reference = load_image_set(set_a) if set_a else DataLoader(lab.run).load().images
        evaluator = FidEvaluator(reference, spec, seed)
        if sampler == "gmm" and checkpoint.mixture is None:
            raise ValueError(f"{checkpoint_path} has no fitted mixture for the gmm sampler.")
        gen_cfg = GenerationConfig(sampler=sampler, count=count or lab.run.fid_samples, seed=seed)
        batch = generate(model, gen_cfg, checkpoint.mixture if sampler == "gmm" else None)
        reports = evaluator.score_batch(batch, seed)
        reports[RECONSTRUCTION] = evaluator.score_reconstruction(model, len(batch))
        details.update({"checkpoint": checkpoint_path, "sampler": sampler, "count": len(batch),
                        "label": checkpoint.training.get("label", ""), "epoch": checkpoint.training.get("epoch")})

    scores = {name: report.to_dict() for name, report in reports.items()}
    for name, report in reports.items():
        logger.info(f"FID[{name}] = {report.fid:.4f} (mean term {report.mean_term:.4f}, trace term {report.trace_term:.4f})")
    target = output_path or os.path.join(os.path.abspath(lab.run.output_dir), "fid_report.json")
    reporter = ReportGenerator(os.path.dirname(os.path.abspath(target)))
    reporter.write_json_report(os.path.basename(target), {**details, "scores": scores})
    return scores


# --- encode ---

def cmd_encode(checkpoint_path: str, lab: LabConfig, output_path: Optional[str] = None) -> Dict[str, Any]:
    """Writes the posterior means of the configured dataset as a latent matrix file."""
    model, _ = load_model(checkpoint_path)
    dataset = DataLoader(lab.run).load()
    latents = encode_dataset(model, dataset.images)
    count, collapsed = active_units(latents.kl_per_unit, lab.evaluation.active_threshold)
    target = output_path or os.path.join(os.path.abspath(lab.run.output_dir), "latents.svmx")
    save_matrix(latents.codes, target)
    logger.info(f"Encoded {latents.count} images to {target}: {count}/{latents.dim} active units.")
    return {"matrix": target, "rows": latents.count, "active_units": count,
            "collapsed_units": np.flatnonzero(collapsed).tolist()}

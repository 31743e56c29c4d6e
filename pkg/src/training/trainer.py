# src/training/trainer.py
import logging
import os
import time
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from ..data_management.persistence import Checkpoint, save_checkpoint
from ..data_management.schemas import EvaluationConfig, RunConfig
from ..latent_analysis.collapse import active_units, encode_dataset
from ..utils.helpers import derive_seed, ensure_directory_exists
from ..vae_core.model import VAEModel
from .checkpointing import build_checkpoint
from .loss import BetaSchedule, total_loss
from .optimizer import Adam

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "recon", "kl", "beta_effective", "active_units", "total", "recon_per_pixel"]
MIN_BATCH = 2

# Called after an epoch with (model, epoch); returns FID per image variant, 'composed' first.
FidCallback = Callable[[VAEModel, int], Dict[str, float]]


def _plain_row(row: Dict[str, float]) -> Dict[str, float]:
    return {key: int(value) if key in ("epoch", "active_units") else float(value) for key, value in row.items()}


class Trainer:
    """
    Epoch loop for one model: Adam updates on the negative ELBO with the beta
    schedule advanced on every batch, active units measured after every epoch,
    a CSV row per epoch and periodic checkpoints.
    """
    def __init__(self, model: VAEModel, run_config: RunConfig, eval_config: Optional[EvaluationConfig] = None,
                 output_dir: Optional[str] = None, fid_callback: Optional[FidCallback] = None):
        """
        Args:
            model: Model to train in place.
            run_config: Epochs, batch size, learning rate, beta settings, seed, save interval.
            eval_config: Active-unit threshold and sample count.
            output_dir: Where the CSV log and checkpoints go; None keeps everything in memory.
            fid_callback: Optional per-epoch FID evaluation, run every `fid_every` epochs.
        """
        self.model = model
        self.config = run_config
        self.eval_config = eval_config or EvaluationConfig()
        self.output_dir = output_dir
        self.fid_callback = fid_callback
        self.optimizer = Adam(model.store, lr=run_config.learning_rate)
        self.schedule = BetaSchedule(beta0=run_config.beta0, mode=run_config.schedule_mode,
                                     ema_decay=run_config.ema_decay)
        self.epoch = 0
        self.history: List[Dict[str, float]] = []
        self.best_fid: Optional[float] = None
        self.best_epoch: Optional[int] = None
        if output_dir:
            ensure_directory_exists(os.path.join(output_dir, "checkpoints"))
        logger.info(
            f"Trainer initialized: {model.kind} model, {run_config.epochs} epochs, batch {run_config.batch_size}, "
            f"beta0 {run_config.beta0} ({run_config.schedule_mode})"
        )

    # --- epoch pieces ---
    def _batches(self, count: int, rng: np.random.Generator) -> List[np.ndarray]:
        order = rng.permutation(count)
        size = self.config.batch_size
        batches = [order[i:i + size] for i in range(0, count, size)]
        if batches and len(batches[-1]) < MIN_BATCH:
            logger.debug(f"Dropping a trailing batch of {len(batches[-1])} sample(s).")
            batches = batches[:-1]
        return batches

    def train_epoch(self, images: np.ndarray) -> Dict[str, float]:
        """Runs one pass over `images`; returns batch-averaged loss components."""
        if images.shape[0] < MIN_BATCH:
            raise ValueError(f"Training needs at least {MIN_BATCH} images, got {images.shape[0]}.")
        epoch = self.epoch + 1
        rng = np.random.default_rng(derive_seed(self.config.seed, f"train/epoch/{epoch}"))
        sums = {"total": 0.0, "recon": 0.0, "kl": 0.0, "beta_effective": 0.0, "recon_per_pixel": 0.0}
        batches = self._batches(images.shape[0], rng)
        for index in batches:
            x = images[index]
            noise = rng.standard_normal((len(index), self.model.latent_dim))
            self.optimizer.zero_grad()
            output = self.model.forward(x, noise, training=True)
            breakdown = total_loss(x, output, output.latent, self.schedule)
            breakdown.total.backward()
            self.optimizer.step()
            for key, value in breakdown.as_row().items():
                sums[key] += value
        self.epoch = epoch
        return {key: value / len(batches) for key, value in sums.items()}

    def measure_active_units(self, images: np.ndarray) -> int:
        latents = encode_dataset(self.model, images, limit=self.eval_config.active_units_samples)
        count, _ = active_units(latents.kl_per_unit, self.eval_config.active_threshold)
        return count

    # --- main loop ---
    def fit(self, images: np.ndarray, epochs: Optional[int] = None) -> pd.DataFrame:
        """
        Trains until `epochs` epochs (default: the configured count) have run in total.

        Returns:
            The per-epoch log as a DataFrame.
        """
        target = epochs if epochs is not None else self.config.epochs
        logger.info(f"Training from epoch {self.epoch + 1} to {target} on {images.shape[0]} images.")
        start_time = time.time()
        while self.epoch < target:
            stats = self.train_epoch(images)
            row = {"epoch": self.epoch, **stats, "active_units": self.measure_active_units(images)}
            if self.fid_callback and self.config.fid_every and self.epoch % self.config.fid_every == 0:
                scores = self.fid_callback(self.model, self.epoch)
                row.update({f"fid_{variant}": value for variant, value in scores.items()})
                self._track_best(scores)
            self.history.append(row)
            logger.info(
                f"Epoch {self.epoch}: total {row['total']:.4f}, recon {row['recon']:.4f}, kl {row['kl']:.4f}, "
                f"beta {row['beta_effective']:.4f}, active units {row['active_units']}/{self.model.latent_dim}"
            )
            self._write_log()
            if self.epoch % self.config.save_every == 0:
                self.save(f"epoch_{self.epoch:04d}")
        if self.history:
            self.save("last")
        logger.info(f"Training finished in {time.time() - start_time:.2f} seconds.")
        return self.log_frame()

    def _track_best(self, scores: Dict[str, float]) -> None:
        score = scores.get("composed")
        if score is None:
            return
        if self.best_fid is None or score < self.best_fid:
            self.best_fid, self.best_epoch = score, self.epoch
            logger.info(f"New best FID {score:.4f} at epoch {self.epoch}.")
            self.save("best")

    def log_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.history)
        if frame.empty:
            return pd.DataFrame(columns=LOG_COLUMNS)
        extra = [c for c in frame.columns if c not in LOG_COLUMNS]
        return frame[LOG_COLUMNS + extra]

    def _write_log(self) -> None:
        if not self.output_dir:
            return
        self.log_frame().to_csv(os.path.join(self.output_dir, "training_log.csv"), index=False)

    # --- state ---
    def to_checkpoint(self, label: str = "") -> Checkpoint:
        training = {
            "epoch": self.epoch,
            "seed": self.config.seed,
            "label": label,
            "best_fid": self.best_fid,
            "best_epoch": self.best_epoch,
            "history": [_plain_row(row) for row in self.history],
            "run_config": self.config.model_dump(mode="json"),
        }
        return build_checkpoint(self.model, self.optimizer, self.schedule, training)

    def save(self, label: str) -> Optional[str]:
        if not self.output_dir:
            return None
        path = os.path.join(self.output_dir, "checkpoints", f"{label}.ckpt")
        return save_checkpoint(self.to_checkpoint(label), path)

    def restore(self, checkpoint: Checkpoint) -> None:
        """Continues from a checkpoint written by this trainer (parameters, optimizer, schedule, epoch, log)."""
        self.model.load_arrays(checkpoint.params, checkpoint.buffers)
        self.optimizer.load_state_dict(checkpoint.optimizer, checkpoint.optimizer_arrays)
        training = checkpoint.training
        if "schedule" in training:
            self.schedule = BetaSchedule.from_dict(training["schedule"])
        self.epoch = int(training.get("epoch", 0))
        self.best_fid = training.get("best_fid")
        self.best_epoch = training.get("best_epoch")
        self.history = [dict(row) for row in training.get("history", []) if row["epoch"] <= self.epoch]
        logger.info(f"Trainer restored at epoch {self.epoch} with {len(self.history)} logged epoch(s).")

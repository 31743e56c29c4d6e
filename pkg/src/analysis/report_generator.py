# src/analysis/report_generator.py
import datetime
import json
import logging
import os
from typing import Any, Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

TRAJECTORY_VARIANTS = ("vanilla", "split", "split_x1", "split_x2", "split_recon")


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


class ReportGenerator:
    """
    Writes the file outputs of a run: JSON reports, CSV tables and plots.
    Relative output directories are resolved against the project root.
    """
    def __init__(self, output_dir: str = "outputs"):
        project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", ".."))
        self.output_dir = output_dir if os.path.isabs(output_dir) else os.path.join(project_root, output_dir)
        os.makedirs(self.output_dir, exist_ok=True)
        self.report_data: Dict[str, Any] = {}

    def add_data(self, key: str, value: Any) -> None:
        """Adds a piece of data to the next JSON report."""
        self.report_data[key] = value

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def write_json_report(self, filename: str, data: Optional[Dict[str, Any]] = None) -> str:
        payload = {"generated_at": datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S")}
        payload.update(_to_jsonable(self.report_data))
        if data:
            payload.update(_to_jsonable(data))
        output_path = self.path(filename)
        with open(output_path, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        logger.info(f"Report written to {output_path}")
        return output_path

    def write_table(self, frame: pd.DataFrame, filename: str) -> str:
        output_path = self.path(filename)
        frame.to_csv(output_path, index=False)
        logger.info(f"Table with {len(frame)} rows written to {output_path}")
        return output_path

    def plot_training_curves(self, log_frame: pd.DataFrame, filename: str = "training_curves.png") -> Optional[str]:
        """Reconstruction, KL and effective beta per epoch."""
        if log_frame.empty:
            logger.warning("Empty training log; no curves plotted.")
            return None
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
        for ax, column in zip(axes, ("recon", "kl", "beta_effective")):
            ax.plot(log_frame["epoch"], log_frame[column], marker="o", markersize=3)
            ax.set_title(column)
            ax.set_xlabel("epoch")
        fig.tight_layout()
        output_path = self.path(filename)
        fig.savefig(output_path, dpi=120)
        plt.close(fig)
        return output_path

    def plot_fid_trajectories(self, summary: pd.DataFrame, filename: str = "fid_trajectories.png",
                              variants: Sequence[str] = TRAJECTORY_VARIANTS) -> Optional[str]:
        """
        Mean FID per epoch and variant with a one-standard-deviation band.

        Args:
            summary: Columns epoch, variant, fid_mean, fid_std.
        """
        if summary.empty:
            logger.warning("Empty ablation summary; no trajectories plotted.")
            return None
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for variant in variants:
            rows = summary[summary["variant"] == variant].sort_values("epoch")
            if rows.empty:
                continue
            std = rows["fid_std"].fillna(0.0)
            ax.plot(rows["epoch"], rows["fid_mean"], label=variant)
            ax.fill_between(rows["epoch"], rows["fid_mean"] - std, rows["fid_mean"] + std, alpha=0.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel("FID (GMM resampling)")
        ax.legend()
        fig.tight_layout()
        output_path = self.path(filename)
        fig.savefig(output_path, dpi=120)
        plt.close(fig)
        logger.info(f"FID trajectories plotted to {output_path}")
        return output_path

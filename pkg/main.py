# main.py
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

# Ensure the project root is in the Python path so `src` imports as a package
PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.utils.helpers import apply_thread_limit  # noqa: E402

load_dotenv(os.path.join(PROJECT_ROOT, ".env"))
apply_thread_limit()  # must run before numpy is imported below

from pydantic import ValidationError  # noqa: E402

from src.pipeline import (  # noqa: E402
    cmd_ablate,
    cmd_encode,
    cmd_eval_fid,
    cmd_fit_gmm,
    cmd_generate,
    cmd_train,
    resolve_config,
)
from src.utils.logger_config import get_project_logger, setup_logging_from_config  # noqa: E402

CONFIG_FILE_PATH = os.path.join(PROJECT_ROOT, "config", "config.json")

# flag dest -> (config section, field)
OVERRIDE_FLAGS = {
    "dataset_kind": ("run", "dataset_kind"),
    "dataset_path": ("run", "dataset_path"),
    "labels_path": ("run", "labels_path"),
    "synthetic_count": ("run", "synthetic_count"),
    "synthetic_size": ("run", "synthetic_size"),
    "model_kind": ("run", "model_kind"),
    "latent_dim": ("run", "latent_dim"),
    "beta0": ("run", "beta0"),
    "schedule_mode": ("run", "schedule_mode"),
    "epochs": ("run", "epochs"),
    "batch_size": ("run", "batch_size"),
    "learning_rate": ("run", "learning_rate"),
    "seed": ("run", "seed"),
    "gmm_components": ("run", "gmm_components"),
    "fid_samples": ("run", "fid_samples"),
    "save_every": ("run", "save_every"),
    "fid_every": ("run", "fid_every"),
    "precision": ("run", "precision"),
    "output_dir": ("run", "output_dir"),
    "base_dim": ("architecture", "base_dim"),
    "num_scales": ("architecture", "num_scales"),
    "scale_blocks": ("architecture", "scale_blocks_per_scale"),
    "residual_blocks": ("architecture", "residual_blocks_per_scale_block"),
    "extractor": ("evaluation", "extractor"),
}


def _config_flags() -> argparse.ArgumentParser:
    """Flags shared by every subcommand; they mirror the configuration fields and win over the file."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", default=CONFIG_FILE_PATH, help="Configuration file (JSON or YAML).")
    group = parent.add_argument_group("configuration overrides")
    group.add_argument("--dataset-kind", dest="dataset_kind",
                       choices=["synthetic-shapes", "synthetic-two-gaussians", "idx", "cifar10", "image-dir"])
    group.add_argument("--dataset-path", dest="dataset_path")
    group.add_argument("--labels-path", dest="labels_path")
    group.add_argument("--synthetic-count", dest="synthetic_count", type=int)
    group.add_argument("--synthetic-size", dest="synthetic_size", type=int)
    group.add_argument("--model-kind", dest="model_kind", choices=["vanilla", "split"])
    group.add_argument("--latent-dim", dest="latent_dim", type=int)
    group.add_argument("--beta0", type=float)
    group.add_argument("--schedule-mode", dest="schedule_mode", choices=["fixed", "balanced"])
    group.add_argument("--epochs", type=int)
    group.add_argument("--batch-size", dest="batch_size", type=int)
    group.add_argument("--learning-rate", dest="learning_rate", type=float)
    group.add_argument("--seed", type=int)
    group.add_argument("--gmm-components", dest="gmm_components", type=int)
    group.add_argument("--fid-samples", dest="fid_samples", type=int)
    group.add_argument("--save-every", dest="save_every", type=int)
    group.add_argument("--fid-every", dest="fid_every", type=int)
    group.add_argument("--precision", choices=["float32", "float64"])
    group.add_argument("--output-dir", dest="output_dir")
    group.add_argument("--base-dim", dest="base_dim", type=int)
    group.add_argument("--num-scales", dest="num_scales", type=int)
    group.add_argument("--scale-blocks", dest="scale_blocks", type=int)
    group.add_argument("--residual-blocks", dest="residual_blocks", type=int)
    group.add_argument("--extractor", help="identity, pca(d), random_conv(d) or from_file:<path>")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _config_flags()
    parser = argparse.ArgumentParser(description="Split VAE laboratory: train, sample and evaluate VAEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[parent], help="Train a model.")
    train.add_argument("--resume", help="Continue from a checkpoint written by an earlier run.")

    gen = sub.add_parser("generate", parents=[parent], help="Sample images from a checkpoint.")
    gen.add_argument("--checkpoint", required=True)
    gen.add_argument("--sampler", choices=["prior", "gmm"], default="prior")
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--grid-out", dest="grid_out", help="Grid image path (.png, .pgm or .ppm).")
    gen.add_argument("--columns", type=int, default=10)

    gmm = sub.add_parser("fit-gmm", parents=[parent], help="Fit the ex-post latent mixture into a checkpoint.")
    gmm.add_argument("--checkpoint", required=True)
    gmm.add_argument("--components", type=int)
    gmm.add_argument("--out", help="Write the updated checkpoint here instead of in place.")

    fid = sub.add_parser("eval-fid", parents=[parent], help="Frechet distance between two sets or against samples.")
    fid.add_argument("--set-a", dest="set_a")
    fid.add_argument("--set-b", dest="set_b")
    fid.add_argument("--checkpoint")
    fid.add_argument("--sampler", choices=["prior", "gmm"], default="prior")
    fid.add_argument("--count", type=int)
    fid.add_argument("--out", help="JSON report path.")

    enc = sub.add_parser("encode", parents=[parent], help="Write dataset posterior means as a latent matrix.")
    enc.add_argument("--checkpoint", required=True)
    enc.add_argument("--out")

    ablate = sub.add_parser("ablate", parents=[parent], help="Vanilla versus split twin trainings.")
    ablate.add_argument("--trials", type=int, default=3)
    ablate.add_argument("--shared-init", dest="shared_init", action=argparse.BooleanOptionalAction, default=True)
    ablate.add_argument("--out-dir", dest="out_dir")
    return parser


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Dict[str, Any]] = {}
    for dest, (section, field) in OVERRIDE_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides.setdefault(section, {})[field] = value
    return overrides


def run_command(args: argparse.Namespace, lab) -> Any:
    seed = lab.run.seed
    if args.command == "train":
        return cmd_train(lab, resume=args.resume)
    if args.command == "generate":
        return cmd_generate(args.checkpoint, sampler=args.sampler, count=args.count, seed=seed,
                            grid_out=args.grid_out, columns=args.columns)
    if args.command == "fit-gmm":
        return cmd_fit_gmm(args.checkpoint, lab, components=args.components, output_path=args.out)
    if args.command == "eval-fid":
        return cmd_eval_fid(lab, set_a=args.set_a, set_b=args.set_b, checkpoint_path=args.checkpoint,
                            sampler=args.sampler, count=args.count, output_path=args.out, seed=seed)
    if args.command == "encode":
        return cmd_encode(args.checkpoint, lab, output_path=args.out)
    if args.command == "ablate":
        result = cmd_ablate(lab, trials=args.trials, shared_init=args.shared_init, output_dir=args.out_dir)
        return result.checks
    raise ValueError(f"Unknown command '{args.command}'.")


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point. Returns the process exit status: 0 on success, 1 on any error.
    """
    args = build_parser().parse_args(argv)

    # 1. Resolve configuration (defaults < file < environment < flags)
    try:
        lab = resolve_config(args.config, flag_overrides(args))
    except (FileNotFoundError, ValidationError, ValueError) as e:
        # Fallback basic logging if config fails, so this message is seen
        logging.basicConfig(level=logging.ERROR, format='%(asctime)s - %(levelname)s - %(message)s')
        logging.error(f"Critical Error: invalid configuration ({args.config}): {e}")
        return 1

    # 2. Setup Logging
    try:
        setup_logging_from_config(lab.logging, PROJECT_ROOT)
    except OSError as e:
        logging.basicConfig(level=logging.ERROR, format='%(asctime)s - %(levelname)s - %(message)s')
        logging.error(f"Critical Error: could not set up logging: {e}. Exiting.", exc_info=True)
        return 1
    logger = get_project_logger(__name__)
    logger.info(f"--- Split VAE lab: {args.command} ---")
    logger.info(f"Configuration resolved from {args.config}")

    # 3. Run the command
    try:
        result = run_command(args, lab)
    except KeyboardInterrupt:
        logger.warning(f"{args.command} interrupted by user.")
        return 1
    except Exception as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        return 1
    logger.info(f"{args.command} finished: {result}")
    logger.info("--- Split VAE lab finished ---")
    return 0


if __name__ == "__main__":
    sys.exit(main())

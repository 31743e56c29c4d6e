# src/data_management/__init__.py
from .schemas import (
    ArchitectureConfig,
    DecoderCfg,
    EncoderCfg,
    EvaluationConfig,
    LabConfig,
    LoggingConfig,
    ResidualBlockCfg,
    RunConfig,
    ScaleBlockCfg,
)
from .data_loader import (
    DataLoader,
    Dataset,
    FormatError,
    augment_with_flips,
    load_cifar_batch,
    load_idx,
    load_idx_labels,
    load_image_directory,
    save_idx,
)
from .synthetic_data_generator import SyntheticDataGenerator, synth_dataset
from .persistence import Checkpoint, CheckpointError, load_checkpoint, load_matrix, save_checkpoint, save_matrix
from .image_export import build_grid, export_grid, read_grid

__all__ = [
    "ArchitectureConfig",
    "DecoderCfg",
    "EncoderCfg",
    "EvaluationConfig",
    "LabConfig",
    "LoggingConfig",
    "ResidualBlockCfg",
    "RunConfig",
    "ScaleBlockCfg",
    "DataLoader",
    "Dataset",
    "FormatError",
    "augment_with_flips",
    "load_cifar_batch",
    "load_idx",
    "load_idx_labels",
    "load_image_directory",
    "save_idx",
    "SyntheticDataGenerator",
    "synth_dataset",
    "Checkpoint",
    "CheckpointError",
    "load_checkpoint",
    "load_matrix",
    "save_checkpoint",
    "save_matrix",
    "build_grid",
    "export_grid",
    "read_grid",
]

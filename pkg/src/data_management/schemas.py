# src/data_management/schemas.py
import math
from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

ActivationKind = Literal["relu", "leaky_relu"]
ModelKind = Literal["vanilla", "split"]
ScheduleMode = Literal["fixed", "balanced"]
CovarianceType = Literal["full", "diag"]
DatasetKind = Literal["synthetic-shapes", "synthetic-two-gaussians", "idx", "cifar10", "image-dir"]
LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class StrictSchema(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ResidualBlockCfg(StrictSchema):
    num_convs: PositiveInt = 2
    channels: PositiveInt
    activation: ActivationKind = "relu"


class ScaleBlockCfg(StrictSchema):
    num_residual_blocks: PositiveInt = 1
    residual: ResidualBlockCfg  # shared by every residual block of the scale block


class TrunkCfg(StrictSchema):
    """Fields shared by the encoder and decoder trunks."""
    image_shape: Tuple[PositiveInt, PositiveInt, PositiveInt]  # (H, W, C)
    base_dim: PositiveInt = 32
    num_scales: PositiveInt = 2
    scale_blocks_per_scale: PositiveInt = 1
    residual_blocks_per_scale_block: PositiveInt = 1
    convs_per_residual_block: PositiveInt = 2
    latent_dim: PositiveInt = 32
    dense_block_width: PositiveInt = 64
    activation: ActivationKind = "relu"

    def scale_block_cfg(self, channels: int) -> ScaleBlockCfg:
        return ScaleBlockCfg(
            num_residual_blocks=self.residual_blocks_per_scale_block,
            residual=ResidualBlockCfg(
                num_convs=self.convs_per_residual_block, channels=channels, activation=self.activation
            ),
        )


class EncoderCfg(TrunkCfg):
    def channels_at(self, scale: int) -> int:
        """Channel width at a scale; doubles with every downsample."""
        return self.base_dim * (2 ** scale)


class DecoderCfg(TrunkCfg):
    base_extent: PositiveInt = 4

    @property
    def num_upsamples(self) -> int:
        """Upsamplings from the base map to the next power-of-two extent covering the image."""
        height, width = self.image_shape[0], self.image_shape[1]
        needed = max(height, width) / self.base_extent
        return max(0, math.ceil(math.log2(needed))) if needed > 1 else 0

    @property
    def generated_extent(self) -> int:
        return self.base_extent * (2 ** self.num_upsamples)


class ArchitectureConfig(StrictSchema):
    """`architecture` section of the lab configuration (user configurable hyperparameters)."""
    base_dim: PositiveInt = 32
    num_scales: PositiveInt = 2
    scale_blocks_per_scale: PositiveInt = 1
    residual_blocks_per_scale_block: PositiveInt = 1
    convs_per_residual_block: PositiveInt = 2
    dense_block_width: PositiveInt = 64
    activation: ActivationKind = "relu"

    def encoder_cfg(self, image_shape: Tuple[int, int, int], latent_dim: int) -> EncoderCfg:
        return EncoderCfg(image_shape=tuple(image_shape), latent_dim=latent_dim, **self.model_dump())

    def decoder_cfg(self, image_shape: Tuple[int, int, int], latent_dim: int) -> DecoderCfg:
        return DecoderCfg(image_shape=tuple(image_shape), latent_dim=latent_dim, **self.model_dump())


class RunConfig(StrictSchema):
    """`run` section: everything a training or evaluation command needs besides architecture."""
    dataset_kind: DatasetKind = "synthetic-shapes"
    dataset_path: Optional[str] = None
    labels_path: Optional[str] = None
    synthetic_count: PositiveInt = 2000
    synthetic_size: PositiveInt = 16
    model_kind: ModelKind = "split"
    latent_dim: PositiveInt = 16
    beta0: PositiveFloat = 8.0
    schedule_mode: ScheduleMode = "balanced"
    ema_decay: float = Field(default=0.99, ge=0.0, lt=1.0)
    epochs: PositiveInt = 20
    batch_size: PositiveInt = 64
    learning_rate: PositiveFloat = 1e-3
    seed: int = Field(default=42, ge=0)
    gmm_components: PositiveInt = 20
    fid_samples: PositiveInt = 10000
    save_every: PositiveInt = 5
    fid_every: int = Field(default=0, ge=0)  # 0 disables per-epoch FID during training
    precision: Literal["float32", "float64"] = "float32"
    output_dir: str = "outputs/run"

    @model_validator(mode="after")
    def _check_dataset_path(self) -> "RunConfig":
        if not self.dataset_kind.startswith("synthetic") and not self.dataset_path:
            raise ValueError(f"dataset_kind '{self.dataset_kind}' requires dataset_path.")
        return self


class EvaluationConfig(StrictSchema):
    extractor: str = "pca(64)"
    ablation_fid_samples: PositiveInt = 1000
    gmm_max_iters: PositiveInt = 200
    gmm_tol: PositiveFloat = 1e-6
    covariance_type: CovarianceType = "full"
    active_threshold: PositiveFloat = 0.01
    active_units_samples: PositiveInt = 500

    @field_validator("extractor")
    @classmethod
    def _check_extractor(cls, value: str) -> str:
        from ..fid_metric.extractors import parse_extractor_spec
        parse_extractor_spec(value)  # raises ValueError on malformed specs
        return value


class LoggingConfig(StrictSchema):
    log_level: LogLevel = "INFO"
    console_log_level: LogLevel = "INFO"
    log_file: Optional[str] = "logs/svae_lab.log"
    max_log_file_bytes: PositiveInt = 10 * 1024 * 1024
    log_backup_count: int = Field(default=5, ge=0)


class LabConfig(StrictSchema):
    """Whole configuration file."""
    run: RunConfig = Field(default_factory=RunConfig)
    architecture: ArchitectureConfig = Field(default_factory=ArchitectureConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

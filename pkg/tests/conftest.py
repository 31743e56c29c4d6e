# tests/conftest.py
import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.autodiff import current_tape, set_precision  # noqa: E402
from src.data_management.schemas import ArchitectureConfig, LabConfig  # noqa: E402
from src.vae_core.model import ModelConfig, VAEModel  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training runs (minutes)")


@pytest.fixture(autouse=True)
def double_precision():
    """Every test starts in float64 with an empty tape."""
    set_precision("float64")
    current_tape().clear()
    yield
    set_precision("float64")
    current_tape().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    return ArchitectureConfig(base_dim=4, num_scales=1, dense_block_width=8)


@pytest.fixture
def make_model(tiny_arch):
    """Factory for small models on 8x8 images."""
    def _make(kind="split", channels=1, latent_dim=2, seed=7, size=8):
        return VAEModel(ModelConfig(kind=kind, image_shape=(size, size, channels), latent_dim=latent_dim,
                                    architecture=tiny_arch, seed=seed))
    return _make


@pytest.fixture
def tiny_lab(tmp_path, tiny_arch):
    """Lab configuration small enough to train in seconds."""
    return LabConfig.model_validate({
        "run": {
            "dataset_kind": "synthetic-shapes",
            "synthetic_count": 48,
            "synthetic_size": 8,
            "model_kind": "split",
            "latent_dim": 2,
            "beta0": 1.0,
            "epochs": 2,
            "batch_size": 16,
            "seed": 3,
            "gmm_components": 2,
            "fid_samples": 24,
            "save_every": 1,
            "precision": "float64",
            "output_dir": str(tmp_path / "run"),
        },
        "architecture": tiny_arch.model_dump(),
        "evaluation": {
            "extractor": "pca(4)",
            "ablation_fid_samples": 16,
            "gmm_max_iters": 20,
            "active_units_samples": 48,
        },
        "logging": {"log_file": None},
    })

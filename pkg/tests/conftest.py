"""Pytest configuration and fixtures for the workbench tests."""

import sys
from pathlib import Path

import numpy as np
import pytest
from dotenv import load_dotenv

# Add the project root to the Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# Load environment variables
load_dotenv(project_root / ".env")

from app.config import run_slow_tests  # noqa: E402
from app.datagen.generator import DatasetConfig, generate_dataset  # noqa: E402
from app.models.grid import GridSpec  # noqa: E402
from app.network.config import ModelConfig  # noqa: E402


def pytest_collection_modifyitems(config, items):
    """Skip desk-scale tests unless GW_RUN_SLOW=1."""
    if run_slow_tests():
        return
    skip_slow = pytest.mark.skip(reason="set GW_RUN_SLOW=1 to run desk-scale tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Provide a seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    """Provide a 16x16 grid, the smallest one a four-level network accepts."""
    return GridSpec(height=16, width=16)


@pytest.fixture
def small_dataset_config(small_grid):
    """Provide a small dataset config with a short correlation length."""
    return DatasetConfig(
        grid=small_grid,
        n_samples=6,
        seed=7,
        grf={"correlation_length": 3.0},
    )


@pytest.fixture
def small_dataset(small_dataset_config):
    """Provide six generated 16x16 samples."""
    return generate_dataset(small_dataset_config, jobs=1)


@pytest.fixture
def tiny_model_config():
    """Provide a narrow four-level attention U-Net config."""
    return ModelConfig(variant="attention_unet", encoder_widths=(4, 8, 16, 32))


@pytest.fixture
def tiny_unet_config():
    """Provide a narrow four-level plain U-Net config."""
    return ModelConfig(variant="unet", encoder_widths=(4, 8, 16, 32))

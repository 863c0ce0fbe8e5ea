"""Unit tests for scenario sampling, sample encoding and dataset generation."""

from unittest.mock import patch

import numpy as np
import pytest
from pydantic import ValidationError

from app.datagen.generator import (
    DatasetConfig,
    decode_scenario,
    derive_seed,
    encode_sample,
    generate_dataset,
    generate_sample,
    sample_scenario,
    split_configs,
)
from app.errors import ConvergenceError, EncodingError, GenerationError
from app.models.grid import (
    ConductivityField,
    GridSpec,
    HeadField,
    ScenarioSpec,
    Well,
    build_fixed_mask,
    validate_sample,
)


def test_derive_seed_is_stable_and_spread():
    """Test derived seeds are pure and distinct per index."""
    assert derive_seed(5, 0) == derive_seed(5, 0)
    seeds = {derive_seed(5, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(5, 1) != derive_seed(6, 1)
    assert all(0 <= s < 2**64 for s in seeds)


def test_sample_scenario_well_counts_uniform():
    """Test well counts are uniform over {1, 2, 3}."""
    config = DatasetConfig(grid=GridSpec(height=16, width=16), n_samples=1)
    rng = np.random.default_rng(0)
    counts = np.bincount(
        [len(sample_scenario(rng, config).wells) for _ in range(10000)], minlength=4
    )
    assert counts[0] == 0
    for n in (1, 2, 3):
        assert counts[n] / 10000 == pytest.approx(1 / 3, abs=0.02)


def test_sample_scenario_wells_valid():
    """Test sampled wells are interior, distinct and in [0.5, 1)."""
    config = DatasetConfig(grid=GridSpec(height=8, width=8), n_samples=1)
    rng = np.random.default_rng(1)
    for _ in range(500):
        scenario = sample_scenario(rng, config)
        cells = [(w.row, w.col) for w in scenario.wells]
        assert len(set(cells)) == len(cells)
        for well in scenario.wells:
            assert config.grid.is_interior(well.row, well.col)
            assert 0.5 <= well.head < 1.0
        assert scenario.boundary_head == 1.0


def test_encode_trivial_scenario():
    """Test a no-well scenario encodes a ring of ones and a unit target."""
    grid = GridSpec(height=8, width=8)
    scenario = ScenarioSpec(grid=grid, wells=[])
    K = ConductivityField(grid=grid, values=np.full(grid.shape, 0.55))
    head = HeadField(grid=grid, values=np.ones(grid.shape))
    sample = encode_sample(scenario, K, head)

    assert sample.input.shape == (3, 8, 8)
    assert sample.input[0, 0, 0] == 1.0
    assert sample.input[0, 3, 3] == 0.0
    assert sample.input[1].sum() == grid.ring_size
    np.testing.assert_array_equal(sample.target, 1.0)


def test_encode_mask_cardinality_64():
    """Test three wells on 64x64 give 252 + 3 mask cells."""
    grid = GridSpec(height=64, width=64)
    scenario = ScenarioSpec(grid=grid, wells=[Well(10, 10, 0.6), Well(20, 30, 0.7), Well(40, 50, 0.9)])
    K = ConductivityField(grid=grid, values=np.ones(grid.shape))
    head = HeadField(grid=grid, values=np.ones(grid.shape))
    sample = encode_sample(scenario, K, head)
    assert sample.input[1].sum() == 255


def test_encode_rejects_heads_outside_unit_range():
    """Test heads above 1 cannot be encoded."""
    grid = GridSpec(height=8, width=8)
    scenario = ScenarioSpec(grid=grid, wells=[])
    K = ConductivityField(grid=grid, values=np.ones(grid.shape))
    with pytest.raises(EncodingError):
        encode_sample(scenario, K, HeadField(grid=grid, values=np.full(grid.shape, 1.2)))


def test_decode_recovers_scenario(small_dataset):
    """Test decoding reproduces the mask and the fixed values."""
    for sample in small_dataset.samples:
        scenario = decode_scenario(sample)
        mask = build_fixed_mask(scenario).flags
        np.testing.assert_array_equal(mask, sample.input[1] > 0.5)
        for well in scenario.wells:
            assert np.float32(well.head) == sample.input[0, well.row, well.col]


def test_generated_samples_validate(small_dataset):
    """Test every generated sample satisfies the sample invariants."""
    assert len(small_dataset) == 6
    for sample in small_dataset.samples:
        assert validate_sample(sample) == []
        assert np.all(sample.input[0] * (1 - sample.input[1]) == 0)


def test_generation_is_deterministic(small_dataset_config):
    """Test the same config twice gives identical bytes."""
    first = generate_dataset(small_dataset_config)
    second = generate_dataset(small_dataset_config)
    for a, b in zip(first.samples, second.samples):
        assert a.input.tobytes() == b.input.tobytes()
        assert a.target.tobytes() == b.target.tobytes()


def test_generation_independent_of_workers(small_dataset_config):
    """Test one and two worker processes produce identical samples."""
    serial = generate_dataset(small_dataset_config, jobs=1)
    parallel = generate_dataset(small_dataset_config, jobs=2)
    for a, b in zip(serial.samples, parallel.samples):
        np.testing.assert_array_equal(a.input, b.input)
        np.testing.assert_array_equal(a.target, b.target)


def test_sample_is_pure_function_of_index(small_dataset_config, small_dataset):
    """Test regenerating one index matches the dataset entry."""
    sample = generate_sample(small_dataset_config, 4)
    np.testing.assert_array_equal(sample.input, small_dataset.samples[4].input)


def test_solver_failure_carries_index(small_dataset_config):
    """Test solver errors are wrapped with the sample index."""
    with patch("app.datagen.generator.solve_steady_state", side_effect=ConvergenceError(7, 0.5)):
        with pytest.raises(GenerationError) as excinfo:
            generate_sample(small_dataset_config, 3)
    assert excinfo.value.index == 3
    assert isinstance(excinfo.value.cause, ConvergenceError)


def test_config_validation():
    """Test invalid ranges are rejected."""
    grid = GridSpec(height=8, width=8)
    with pytest.raises(ValidationError):
        DatasetConfig(grid=grid, n_samples=0)
    with pytest.raises(ValidationError):
        DatasetConfig(grid=grid, n_samples=1, well_count_range=(3, 1))
    with pytest.raises(ValidationError):
        DatasetConfig(grid=grid, n_samples=1, well_head_range=(0.2, 0.9))
    with pytest.raises(ValidationError):
        DatasetConfig(grid=GridSpec(height=4, width=4), n_samples=1, well_count_range=(1, 5))


def test_grf_grid_follows_dataset_grid():
    """Test the field grid defaults to the dataset grid."""
    grid = GridSpec(height=16, width=32)
    config = DatasetConfig(grid=grid, n_samples=1, grf={"correlation_length": 4.0})
    assert config.grf.grid == grid
    assert config.grf.correlation_length == 4.0


def test_split_configs_have_distinct_seeds(small_dataset_config):
    """Test every split gets its own seed and size."""
    configs = split_configs(small_dataset_config, {"train": 4, "val": 2, "test": 2})
    assert [c.n_samples for c in configs.values()] == [4, 2, 2]
    assert len({c.seed for c in configs.values()}) == 3
    assert all(c.grid == small_dataset_config.grid for c in configs.values())


def test_with_overrides_revalidates(small_dataset_config):
    """Test overrides go through validation."""
    changed = small_dataset_config.with_overrides(
        well_count_range=(3, 3), grf={"class_values": (0.1, 0.55, 1.0)}
    )
    assert changed.well_count_range == (3, 3)
    assert changed.grf.class_values == (0.1, 0.55, 1.0)
    assert changed.grf.correlation_length == small_dataset_config.grf.correlation_length
    with pytest.raises(ValidationError):
        small_dataset_config.with_overrides(n_samples=-1)

"""Unit tests for MC dropout, ranking, distribution shift and attention focus."""

import csv
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from app.errors import McDropoutError
from app.network.config import ModelConfig
from app.network.unet import AttentionMaps, build_model
from app.training.evaluation import (
    K3_CLASS_VALUES,
    attention_focus,
    generalization_configs,
    generalization_suite,
    mc_dropout_predict,
    rank_predictions,
)


@pytest.fixture
def model(tiny_model_config, small_grid):
    """Provide a tiny attention U-Net."""
    return build_model(tiny_model_config, small_grid, seed=2)


def test_mc_dropout_shapes_and_spread(model, small_dataset):
    """Test mean and std shapes and a positive spread with dropout on."""
    mean, std = mc_dropout_predict(model, small_dataset.inputs([0, 1]), passes=8, seed=1)
    assert mean.shape == std.shape == (2, 1, 16, 16)
    assert np.all(std >= 0.0)
    assert std.max() > 0.0
    assert mean.min() >= 0.0 and mean.max() <= 1.0


def test_mc_dropout_without_dropout_has_zero_std(model, small_dataset):
    """Test disabling dropout reproduces the eval prediction exactly."""
    x = small_dataset.inputs([0])
    mean, std = mc_dropout_predict(model, x, passes=4, dropout=False)
    assert np.all(std == 0.0)
    np.testing.assert_allclose(mean, model.forward(x)[0], rtol=1e-6)


def test_mc_dropout_single_input_and_determinism(model, small_dataset):
    """Test a (3, H, W) input is batched and seeds are reproducible."""
    x = small_dataset.samples[0].input
    a = mc_dropout_predict(model, x, passes=3, seed=9)
    b = mc_dropout_predict(model, x, passes=3, seed=9)
    assert a[0].shape == (1, 1, 16, 16)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_mc_dropout_validation(small_grid, model, small_dataset):
    """Test too few passes and dropout-free models are refused."""
    with pytest.raises(ValueError):
        mc_dropout_predict(model, small_dataset.inputs([0]), passes=1)
    no_dropout = build_model(ModelConfig(encoder_widths=(4, 8, 16, 32), dropout_rate=0.0), small_grid)
    with pytest.raises(McDropoutError):
        mc_dropout_predict(no_dropout, small_dataset.inputs([0]), passes=2)


def test_rank_predictions_breaks_ties_by_index(small_dataset):
    """Test equal errors list the lowest indices first."""
    targets = small_dataset.targets().astype(np.float64)
    offsets = {1: 0.5, 4: 0.5, 2: 0.25}

    def fake_predict(model, inputs, batch_size):
        preds = targets.copy()
        for i, value in offsets.items():
            preds[i, 0, 0, 0] += value
        return preds

    with patch("app.training.evaluation.predict", side_effect=fake_predict):
        report = rank_predictions(None, small_dataset, subset_size=6, k=2)

    assert [s.index for s in report.best] == [0, 3]
    assert [s.index for s in report.worst] == [1, 4]
    assert report.best[0].mse == 0.0
    assert report.subset == list(range(6))
    with tempfile.TemporaryDirectory() as tmpdir:
        with open(report.write_csv(Path(tmpdir) / "ranking.csv"), newline="") as f:
            rows = list(csv.reader(f))
    assert rows[0] == ["set", "rank", "index", "mse"]
    assert rows[3][:3] == ["worst", "1", "1"]


def test_rank_predictions_subset(model, small_dataset):
    """Test a random subset is sorted and reproducible."""
    a = rank_predictions(model, small_dataset, subset_size=4, k=10, seed=5)
    b = rank_predictions(model, small_dataset, subset_size=4, k=10, seed=5)
    assert a.subset == sorted(a.subset) == b.subset
    assert len(a.best) == len(a.worst) == 4
    with pytest.raises(ValueError):
        rank_predictions(model, small_dataset, subset_size=7)
    with pytest.raises(ValueError):
        rank_predictions(model, small_dataset, subset_size=2, k=0)


def test_generalization_configs(small_dataset_config):
    """Test the shifted distributions and their seeds."""
    configs = generalization_configs(small_dataset_config, n_samples=3)
    assert list(configs) == ["in_distribution", "k3", "k10", "wells3", "wells10"]
    assert configs["k3"].grf.class_values == K3_CLASS_VALUES
    assert len(configs["k10"].grf.class_values) == 10
    assert configs["wells3"].well_count_range == (3, 3)
    assert configs["wells10"].well_count_range == (10, 10)
    assert all(c.n_samples == 3 for c in configs.values())
    assert all(c.grid == small_dataset_config.grid for c in configs.values())
    seeds = {c.seed for c in configs.values()}
    assert len(seeds) == 5 and small_dataset_config.seed not in seeds


def test_generalization_suite(model, small_dataset_config):
    """Test a small suite produces one row per requested distribution."""
    report = generalization_suite(
        model, small_dataset_config, n_samples=2, names=["in_distribution", "wells3"]
    )
    assert [r.name for r in report.rows] == ["in_distribution", "wells3"]
    assert report.row("wells3").n_samples == 2
    assert report.row("in_distribution").rmse == pytest.approx(np.sqrt(report.rows[0].mse))
    assert "ratio" in report.to_table()
    with pytest.raises(KeyError):
        report.row("k3")


def test_attention_focus():
    """Test coefficients concentrated on fixed cells count as focused."""
    alpha = np.full((1, 1, 2, 2), 0.2)
    alpha[0, 0, 0, 0] = 0.9
    mask = np.zeros((4, 4), dtype=bool)
    mask[:2, :2] = True
    report = attention_focus(AttentionMaps(maps={"gate1": alpha}), mask)

    assert report.fixed["gate1"] == pytest.approx(0.9)
    assert report.free["gate1"] == pytest.approx(0.2)
    assert report.focused("gate1")

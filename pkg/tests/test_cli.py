"""End-to-end tests for the workbench command line on a tiny grid."""

import os
from unittest.mock import patch

import pytest

from app.cli import (
    EXIT_CHECKPOINT,
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_GENERATION,
    EXIT_OK,
    RUN_MANIFEST,
    exit_code_for,
    main,
)
from app.datagen.storage import read_dataset, read_manifest
from app.errors import (
    CheckpointError,
    ConvergenceError,
    DatasetFormatError,
    GenerationError,
    McDropoutError,
    TrainingDivergedError,
)
from app.network.checkpoint import save_checkpoint
from app.network.unet import build_model

TINY_WIDTHS = "4,8,16,32"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Generate a tiny dataset and train one epoch on it, once per module."""
    root = tmp_path_factory.mktemp("workbench")
    data = root / "data"
    run = root / "train"
    assert main([
        "generate", "--out", str(data), "--train", "6", "--val", "3", "--test", "4",
        "--size", "16", "--jobs", "1", "--correlation-length", "3", "--seed", "4",
    ]) == EXIT_OK
    assert main([
        "train", "--data", str(data), "--out", str(run), "--epochs", "1", "--batch", "2",
        "--widths", TINY_WIDTHS, "--snapshots", "1", "--probes", "0,1",
    ]) == EXIT_OK
    return {"root": root, "data": data, "run": run, "checkpoint": run / "model.gwck"}


def test_generate_outputs(workspace):
    """Test splits, sizes and the run manifest of generate."""
    data = workspace["data"]
    assert [len(read_dataset(data / f"{s}.gwds")) for s in ("train", "val", "test")] == [6, 3, 4]
    manifest = read_manifest(data / RUN_MANIFEST)
    assert manifest["command"] == "generate"
    assert manifest["seed"] == "4"
    assert manifest["flag.size"] == "16"
    assert "split.train.seed" in manifest


def test_train_outputs(workspace):
    """Test checkpoint, metrics, history and attention snapshots of train."""
    run = workspace["run"]
    for name in ("model.gwck", "metrics.csv", "history.csv", "parameters.txt", RUN_MANIFEST):
        assert (run / name).exists(), name
    assert (run / "attention" / "focus.csv").exists()
    assert (run / "attention" / "epoch1_sample1_gate3.pgm").exists()
    manifest = read_manifest(run / RUN_MANIFEST)
    assert manifest["flag.widths"] == TINY_WIDTHS
    assert manifest["grid"] == "16x16"


def test_eval_writes_metrics_and_galleries(workspace):
    """Test eval writes both splits, a ranking and best/worst triplets."""
    out = workspace["root"] / "eval"
    code = main([
        "eval", "--checkpoint", str(workspace["checkpoint"]), "--data", str(workspace["data"]),
        "--out", str(out), "--subset", "4", "--topk", "2",
    ])
    assert code == EXIT_OK
    assert (out / "metrics.csv").read_text().count("\n") == 3
    assert (out / "per_sample_test.csv").exists()
    assert (out / "ranking.csv").exists()
    assert len(list((out / "best").glob("rank1_*_error.pgm"))) == 1
    assert len(list((out / "worst").glob("*_pred.pgm"))) == 2


def test_predict_writes_triplets_and_contours(workspace):
    """Test predict writes images and contour CSVs per sample."""
    out = workspace["root"] / "predict"
    code = main([
        "predict", "--checkpoint", str(workspace["checkpoint"]), "--data", str(workspace["data"]),
        "--out", str(out), "--indices", "0,2", "--model", "attention-unet",
    ])
    assert code == EXIT_OK
    for index in (0, 2):
        for suffix in ("pred.pgm", "target.pgm", "error.pgm", "pred_contours.csv"):
            assert (out / f"sample{index}_{suffix}").exists()


def test_predict_rejects_bad_index(workspace):
    """Test an out-of-range index is a configuration error."""
    code = main([
        "predict", "--checkpoint", str(workspace["checkpoint"]), "--data", str(workspace["data"]),
        "--out", str(workspace["root"] / "bad"), "--indices", "99",
    ])
    assert code == EXIT_CONFIG


def test_uncertainty_and_bench(workspace):
    """Test the MC-dropout maps and the timing table."""
    root = workspace["root"]
    common = ["--checkpoint", str(workspace["checkpoint"]), "--data", str(workspace["data"])]
    assert main(["uncertainty", *common, "--out", str(root / "unc"), "--passes", "3"]) == EXIT_OK
    assert (root / "unc" / "sample0_std.pgm").exists()
    assert main(
        ["bench", *common, "--out", str(root / "bench"), "--n", "2", "--runs", "2"]
    ) == EXIT_OK
    assert "speedup" in (root / "bench" / "bench.txt").read_text()


def test_seed_from_environment(workspace):
    """Test GW_SEED overrides --seed and is recorded."""
    out = workspace["root"] / "seeded"
    with patch.dict(os.environ, {"GW_SEED": "11"}):
        code = main([
            "generate", "--out", str(out), "--train", "2", "--val", "0", "--test", "0",
            "--size", "16", "--jobs", "1",
        ])
    assert code == EXIT_OK
    manifest = read_manifest(out / RUN_MANIFEST)
    assert manifest["seed"] == "11"
    assert manifest["flag.seed"] == "0"
    assert read_dataset(out / "train.gwds").config.seed != 0


def test_missing_data_is_config_error(tmp_path):
    """Test training without datasets exits with the configuration code."""
    code = main(["train", "--data", str(tmp_path / "nothing"), "--out", str(tmp_path / "run")])
    assert code == EXIT_CONFIG


def test_variant_mismatch_is_checkpoint_error(workspace, tiny_unet_config, small_grid):
    """Test a plain U-Net checkpoint loaded as attention-unet exits with code 5."""
    checkpoint = save_checkpoint(
        build_model(tiny_unet_config, small_grid), workspace["root"] / "unet.gwck"
    )
    code = main([
        "eval", "--checkpoint", str(checkpoint), "--data", str(workspace["data"]),
        "--out", str(workspace["root"] / "mismatch"), "--model", "attention-unet",
    ])
    assert code == EXIT_CHECKPOINT


def test_uncertainty_without_dropout_is_config_error(workspace, tiny_model_config, small_grid):
    """Test MC dropout on a model with dropout rate 0 exits with code 2."""
    config = tiny_model_config.model_copy(update={"dropout_rate": 0.0})
    checkpoint = save_checkpoint(
        build_model(config, small_grid), workspace["root"] / "nodropout.gwck"
    )
    code = main([
        "uncertainty", "--checkpoint", str(checkpoint), "--data", str(workspace["data"]),
        "--out", str(workspace["root"] / "nodropout"), "--passes", "3",
    ])
    assert code == EXIT_CONFIG


def test_exit_code_mapping():
    """Test each error family maps to its exit code."""
    assert exit_code_for(CheckpointError("x")) == EXIT_CHECKPOINT
    assert exit_code_for(TrainingDivergedError(1, 0, float("nan"))) == EXIT_DIVERGED
    assert exit_code_for(GenerationError(3, ConvergenceError(5, 0.1))) == EXIT_GENERATION
    assert exit_code_for(DatasetFormatError("bad magic", 0)) == EXIT_CONFIG
    assert exit_code_for(FileNotFoundError("gone")) == EXIT_CONFIG
    assert exit_code_for(McDropoutError("no dropout")) == EXIT_CONFIG
    with pytest.raises(RuntimeError):
        exit_code_for(RuntimeError("unexpected"))

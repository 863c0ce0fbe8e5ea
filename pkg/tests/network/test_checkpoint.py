"""Unit tests for GWCK checkpoint files."""

import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest

from app.errors import CheckpointError, ModelConfigError
from app.network.checkpoint import (
    checkpoint_header,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    write_checkpoint_arrays,
)
from app.network.unet import build_model
from app.nn.tensor import Mode


@pytest.fixture
def model(tiny_model_config, small_grid):
    """Provide a tiny attention U-Net."""
    return build_model(tiny_model_config, small_grid, seed=5)


def test_save_load_forward_is_exact(model, rng):
    """Test a reloaded model reproduces eval outputs bit for bit."""
    x = rng.random((2, 3, 16, 16)).astype(np.float32)
    model.forward(x, Mode.TRAIN, np.random.default_rng(0))
    expected = model.forward(x)[0]

    with tempfile.TemporaryDirectory() as tmpdir:
        path = save_checkpoint(model, Path(tmpdir) / "model.gwck")
        loaded = load_checkpoint(path)

    assert loaded.config == model.config
    assert loaded.grid == model.grid
    for name, array in model.buffers().items():
        np.testing.assert_array_equal(loaded.buffers()[name], array)
    np.testing.assert_array_equal(loaded.forward(x)[0], expected)


def test_same_seed_gives_identical_files(tiny_model_config, small_grid):
    """Test checkpoints of equally seeded models are byte-identical."""
    with tempfile.TemporaryDirectory() as tmpdir:
        a = save_checkpoint(build_model(tiny_model_config, small_grid, seed=1), Path(tmpdir) / "a.gwck")
        b = save_checkpoint(build_model(tiny_model_config, small_grid, seed=1), Path(tmpdir) / "b.gwck")
        assert a.read_bytes() == b.read_bytes()


def test_read_checkpoint_header(model):
    """Test the header carries config, grid and seed."""
    with tempfile.TemporaryDirectory() as tmpdir:
        header, arrays = read_checkpoint(save_checkpoint(model, Path(tmpdir) / "m.gwck"))

    assert header == checkpoint_header(model)
    assert header["seed"] == 5
    assert list(arrays) == list(model.state_arrays())
    assert all(a.dtype == np.float32 for a in arrays.values())


def test_shape_mismatch_names_the_array(model):
    """Test a corrupted array shape is reported by name."""
    arrays = dict(model.state_arrays())
    arrays["down1.conv.weight"] = np.zeros((1, 1, 1, 1), dtype=np.float32)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_checkpoint_arrays(Path(tmpdir) / "m.gwck", checkpoint_header(model), arrays)
        with pytest.raises(CheckpointError, match="shape mismatch at down1.conv.weight"):
            load_checkpoint(path)


def test_missing_and_unexpected_arrays(model):
    """Test a dropped array and a foreign array are both rejected."""
    arrays = dict(model.state_arrays())
    with tempfile.TemporaryDirectory() as tmpdir:
        missing = dict(arrays)
        del missing["head.conv.bias"]
        path = write_checkpoint_arrays(Path(tmpdir) / "a.gwck", checkpoint_header(model), missing)
        with pytest.raises(CheckpointError, match="missing array head.conv.bias"):
            load_checkpoint(path)

        extra = {**arrays, "extra.weight": np.zeros(3, dtype=np.float32)}
        path = write_checkpoint_arrays(Path(tmpdir) / "b.gwck", checkpoint_header(model), extra)
        with pytest.raises(CheckpointError, match="unexpected array extra.weight"):
            load_checkpoint(path)


def test_corrupted_framing(model):
    """Test bad magic, unknown version and trailing bytes."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = save_checkpoint(model, Path(tmpdir) / "m.gwck")
        payload = path.read_bytes()

        path.write_bytes(b"XXXX" + payload[4:])
        with pytest.raises(CheckpointError, match="bad magic"):
            read_checkpoint(path)

        path.write_bytes(payload[:4] + b"\x07\x00\x00\x00" + payload[8:])
        with pytest.raises(CheckpointError, match="version mismatch"):
            read_checkpoint(path)

        path.write_bytes(payload + b"\x00")
        with pytest.raises(CheckpointError, match="trailing"):
            read_checkpoint(path)

        path.write_bytes(payload[:-3])
        with pytest.raises(CheckpointError, match="truncated"):
            read_checkpoint(path)


def test_variant_mismatch(tiny_unet_config, small_grid):
    """Test loading a plain U-Net as the attention variant fails."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = save_checkpoint(build_model(tiny_unet_config, small_grid), Path(tmpdir) / "u.gwck")
        with pytest.raises(ModelConfigError, match="expected attention_unet"):
            load_checkpoint(path, expected_variant="attention-unet")
        assert load_checkpoint(path, expected_variant="unet").config.variant.value == "unet"


def test_corrupted_index_dimension_names_the_array(model):
    """Test a dimension altered in the stored index is reported at its array."""
    name = b"down1.conv.weight"
    with tempfile.TemporaryDirectory() as tmpdir:
        path = save_checkpoint(model, Path(tmpdir) / "m.gwck")
        payload = bytearray(path.read_bytes())
        # name, then u32 dtype length, "<f4", u32 rank, first dimension
        first_dim = payload.index(name) + len(name) + 4 + 3 + 4
        assert struct.unpack_from("<I", payload, first_dim)[0] == 4
        struct.pack_into("<I", payload, first_dim, 3)
        path.write_bytes(bytes(payload))

        with pytest.raises(CheckpointError, match="shape mismatch at down1.conv.weight"):
            load_checkpoint(path)
        with pytest.raises(CheckpointError, match="trailing"):
            read_checkpoint(path)

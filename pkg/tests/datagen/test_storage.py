"""Unit tests for GWDS dataset files and manifests."""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from app.datagen.storage import (
    MAGIC,
    config_from_manifest,
    dataset_manifest,
    manifest_path,
    read_dataset,
    read_manifest,
    write_dataset,
    write_manifest,
)
from app.errors import DatasetFormatError


def test_roundtrip_is_bit_exact(small_dataset):
    """Test read after write returns identical samples and config."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "train.gwds")
        loaded = read_dataset(path)

        assert len(loaded) == len(small_dataset)
        for a, b in zip(small_dataset.samples, loaded.samples):
            assert a.input.tobytes() == b.input.tobytes()
            assert a.target.tobytes() == b.target.tobytes()
        assert loaded.config == small_dataset.config


def test_file_size_matches_layout(small_dataset):
    """Test header plus 4 * (3 + 1) * H * W bytes per sample."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "d.gwds")
        assert path.stat().st_size == 28 + 6 * 4 * 4 * 16 * 16
        assert path.read_bytes()[:4] == MAGIC


def test_bad_magic(small_dataset):
    """Test a flipped magic byte is reported at offset 0."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "d.gwds")
        payload = bytearray(path.read_bytes())
        payload[0] ^= 0xFF
        path.write_bytes(bytes(payload))

        with pytest.raises(DatasetFormatError, match="bad magic") as excinfo:
            read_dataset(path)
        assert excinfo.value.offset == 0


def test_version_mismatch(small_dataset):
    """Test an unknown version is rejected."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "d.gwds")
        payload = bytearray(path.read_bytes())
        payload[4] = 9
        path.write_bytes(bytes(payload))

        with pytest.raises(DatasetFormatError, match="version mismatch"):
            read_dataset(path)


def test_truncated_payload(small_dataset):
    """Test a short file names the first incomplete sample."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "d.gwds")
        payload = path.read_bytes()
        path.write_bytes(payload[:-10])

        with pytest.raises(DatasetFormatError, match="truncated at sample 5"):
            read_dataset(path)


def test_truncated_header():
    """Test a file shorter than the header is rejected."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "d.gwds"
        path.write_bytes(b"GWDS\x01")
        with pytest.raises(DatasetFormatError, match="truncated header"):
            read_dataset(path)


def test_trailing_bytes(small_dataset):
    """Test extra bytes after the last sample are rejected."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "d.gwds")
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(DatasetFormatError, match="trailing"):
            read_dataset(path)


def test_missing_file():
    """Test a missing dataset raises FileNotFoundError."""
    with pytest.raises(FileNotFoundError):
        read_dataset("/nonexistent/d.gwds")


def test_missing_manifest_uses_default_config(small_dataset):
    """Test the grid comes from the header when the manifest is gone."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_dataset(small_dataset, Path(tmpdir) / "d.gwds")
        manifest_path(path).unlink()
        loaded = read_dataset(path)
        assert loaded.config.grid == small_dataset.config.grid
        assert loaded.config.n_samples == 6


def test_manifest_roundtrip(small_dataset_config):
    """Test the manifest rebuilds the same config and keeps extra entries."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_manifest(
            Path(tmpdir) / "d.manifest", dataset_manifest(small_dataset_config, {"split": "val"})
        )
        entries = read_manifest(path)

        assert entries["split"] == "val"
        assert entries["grid"] == "16x16"
        assert config_from_manifest(entries) == small_dataset_config


def test_manifest_skips_comments():
    """Test blank lines and comments are ignored."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "m.manifest"
        path.write_text("# header\n\nseed = 3\nname=a=b\n", encoding="utf-8")
        assert read_manifest(path) == {"seed": "3", "name": "a=b"}


def test_values_survive_float32(small_dataset):
    """Test stored values are the float32 samples themselves."""
    with tempfile.TemporaryDirectory() as tmpdir:
        loaded = read_dataset(write_dataset(small_dataset, Path(tmpdir) / "d.gwds"))
        assert loaded.samples[0].input.dtype == np.float32
        np.testing.assert_array_equal(loaded.targets(), small_dataset.targets())

"""GWDS dataset files and their line-based manifests.

Layout (little-endian): magic "GWDS", then u32 version, H, W, n_samples,
n_in_channels, n_out_channels; then per sample the 3*H*W float32 input
(channel-major, row-major within a channel) followed by the H*W float32
target.
"""

import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.datagen.generator import GENERATOR_VERSION, Dataset, DatasetConfig
from app.errors import DatasetFormatError
from app.models.grid import N_INPUT_CHANNELS, GridSpec, Sample

logger = logging.getLogger(__name__)

MAGIC = b"GWDS"
FORMAT_VERSION = 1
N_OUTPUT_CHANNELS = 1
_HEADER = struct.Struct("<4s6I")
_FLOAT = np.dtype("<f4")

PathLike = Union[str, Path]


def manifest_path(path: PathLike) -> Path:
    """Sidecar manifest path: <name>.manifest next to the dataset file."""
    return Path(path).with_suffix(".manifest")


def write_manifest(path: PathLike, entries: dict[str, object]) -> Path:
    """Write key=value lines in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for key, value in entries.items():
            f.write(f"{key}={value}\n")
    return path


def read_manifest(path: PathLike) -> dict[str, str]:
    """Parse key=value lines; blank lines and '#' comments are skipped."""
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    return entries


def dataset_manifest(config: DatasetConfig, extra: Optional[dict] = None) -> dict[str, object]:
    """Manifest entries that fully describe a dataset config."""
    entries: dict[str, object] = {
        "seed": config.seed,
        "grid": f"{config.grid.height}x{config.grid.width}",
        "n_samples": config.n_samples,
        "well_count_range": f"{config.well_count_range[0]}..{config.well_count_range[1]}",
        "well_head_range": f"{config.well_head_range[0]!r},{config.well_head_range[1]!r}",
        "boundary_head": repr(config.boundary_head),
        "grf.correlation_length": repr(config.grf.correlation_length),
        "grf.class_values": ",".join(repr(v) for v in config.grf.class_values),
        "grf.embedding_padding": repr(config.grf.embedding_padding),
        "generator_version": GENERATOR_VERSION,
    }
    entries.update(extra or {})
    return entries


def config_from_manifest(entries: dict[str, str]) -> DatasetConfig:
    """Rebuild a DatasetConfig from manifest entries."""
    height, width = (int(v) for v in entries["grid"].split("x"))
    grid = GridSpec(height=height, width=width)
    low, high = (int(v) for v in entries["well_count_range"].split(".."))
    head_low, head_high = (float(v) for v in entries["well_head_range"].split(","))
    grf = {
        "grid": grid,
        "correlation_length": float(entries["grf.correlation_length"]),
        "class_values": tuple(float(v) for v in entries["grf.class_values"].split(",")),
    }
    if "grf.embedding_padding" in entries:
        grf["embedding_padding"] = float(entries["grf.embedding_padding"])
    return DatasetConfig(
        grid=grid,
        n_samples=int(entries["n_samples"]),
        seed=int(entries["seed"]),
        well_count_range=(low, high),
        well_head_range=(head_low, head_high),
        boundary_head=float(entries["boundary_head"]),
        grf=grf,
    )


def write_dataset(dataset: Dataset, path: PathLike, extra_manifest: Optional[dict] = None) -> Path:
    """Write a dataset and its manifest.

    Args:
        dataset: Samples to write, all on the config grid
        path: Target file (parent directories are created)
        extra_manifest: Additional manifest entries (split name, warnings)

    Returns:
        Path of the written dataset file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = dataset.config.grid
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                MAGIC,
                FORMAT_VERSION,
                grid.height,
                grid.width,
                len(dataset.samples),
                N_INPUT_CHANNELS,
                N_OUTPUT_CHANNELS,
            )
        )
        for sample in dataset.samples:
            f.write(np.ascontiguousarray(sample.input, dtype=_FLOAT).tobytes())
            f.write(np.ascontiguousarray(sample.target, dtype=_FLOAT).tobytes())

    write_manifest(manifest_path(path), dataset_manifest(dataset.config, extra_manifest))
    logger.info(f"Wrote {len(dataset.samples)} samples to {path}")
    return path


def read_dataset(path: PathLike) -> Dataset:
    """Read a dataset written by write_dataset.

    The config comes from the sidecar manifest when present, otherwise a
    default config on the file's grid is attached.

    Raises:
        DatasetFormatError: On bad magic, version or channel mismatch,
            truncated payload, or trailing bytes
        FileNotFoundError: If the file does not exist
    """
    path = Path(path)
    payload = path.read_bytes()
    if len(payload) < _HEADER.size:
        raise DatasetFormatError("truncated header", len(payload))

    magic, version, height, width, n_samples, n_in, n_out = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"version mismatch: {version} != {FORMAT_VERSION}", 4)
    if n_in != N_INPUT_CHANNELS or n_out != N_OUTPUT_CHANNELS:
        raise DatasetFormatError(f"unsupported channel counts ({n_in}, {n_out})", 20)

    cells = height * width
    input_bytes = n_in * cells * _FLOAT.itemsize
    sample_bytes = input_bytes + n_out * cells * _FLOAT.itemsize
    samples: list[Sample] = []
    offset = _HEADER.size
    for k in range(n_samples):
        if offset + sample_bytes > len(payload):
            raise DatasetFormatError(f"truncated at sample {k}", offset)
        image = np.frombuffer(payload, dtype=_FLOAT, count=n_in * cells, offset=offset)
        target = np.frombuffer(
            payload, dtype=_FLOAT, count=n_out * cells, offset=offset + input_bytes
        )
        samples.append(
            Sample(
                input=image.reshape(n_in, height, width),
                target=target.reshape(n_out, height, width),
            )
        )
        offset += sample_bytes
    if offset != len(payload):
        raise DatasetFormatError(f"{len(payload) - offset} trailing bytes", offset)

    manifest = manifest_path(path)
    if manifest.exists():
        config = config_from_manifest(read_manifest(manifest))
    else:
        config = DatasetConfig(grid=GridSpec(height=height, width=width), n_samples=n_samples)
    return Dataset(config=config, samples=samples)

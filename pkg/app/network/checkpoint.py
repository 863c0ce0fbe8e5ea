"""GWCK checkpoint files.

Layout (little-endian):

    "GWCK" | u32 version | u32 config length | config JSON (UTF-8)
    u32 entry count | per entry: u32 name length, name, u32 dtype length,
    dtype, u32 ndim, ndim x u32 dims
    array data in entry order, float32

The config JSON holds the model config, the grid and the init seed, so a
checkpoint alone is enough to rebuild the model.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.errors import CheckpointError, ModelConfigError
from app.models.grid import GridSpec
from app.network.config import ModelConfig, ModelVariant
from app.network.unet import SurrogateUNet

logger = logging.getLogger(__name__)

MAGIC = b"GWCK"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_FLOAT = np.dtype("<f4")

PathLike = Union[str, Path]


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _U32.pack(len(raw)) + raw


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.payload):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        chunk = self.payload[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def text(self, what: str) -> str:
        return self.take(self.u32(what), what).decode("utf-8")


def checkpoint_header(model: SurrogateUNet) -> dict:
    return {
        "model": model.config.model_dump(mode="json"),
        "grid": model.grid.model_dump(),
        "seed": model.seed,
    }


def write_checkpoint_arrays(path: PathLike, header: dict, arrays: dict[str, np.ndarray]) -> Path:
    """Write a header and named arrays in GWCK layout without any model checks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_U32.pack(FORMAT_VERSION))
        f.write(_pack_str(json.dumps(header, sort_keys=True)))
        f.write(_U32.pack(len(arrays)))
        for name, array in arrays.items():
            f.write(_pack_str(name))
            f.write(_pack_str(_FLOAT.str))
            f.write(_U32.pack(array.ndim))
            for dim in array.shape:
                f.write(_U32.pack(dim))
        for array in arrays.values():
            f.write(np.ascontiguousarray(array, dtype=_FLOAT).tobytes())
    return path


def save_checkpoint(model: SurrogateUNet, path: PathLike) -> Path:
    """Save config, parameters and running statistics."""
    path = write_checkpoint_arrays(path, checkpoint_header(model), model.state_arrays())
    logger.info(f"Saved {model.config.variant.value} checkpoint to {path}")
    return path


def _read_index(path: PathLike) -> tuple[dict, dict[str, tuple[int, ...]], _Reader]:
    """Parse magic, version, header and the array index; the reader stops at the data."""
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a GWCK checkpoint")
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"version mismatch: {version} != {FORMAT_VERSION}")
    header = json.loads(reader.text("config"))

    index = {}
    for _ in range(reader.u32("entry count")):
        name = reader.text("array name")
        dtype = reader.text(f"dtype of {name}")
        if np.dtype(dtype) != _FLOAT:
            raise CheckpointError(f"unsupported dtype {dtype} at {name}")
        index[name] = tuple(
            reader.u32(f"shape of {name}") for _ in range(reader.u32(f"rank of {name}"))
        )
    return header, index, reader


def _read_data(reader: _Reader, index: dict[str, tuple[int, ...]]) -> dict[str, np.ndarray]:
    sizes = {
        name: int(np.prod(shape, dtype=np.int64)) * _FLOAT.itemsize
        for name, shape in index.items()
    }
    declared = sum(sizes.values())
    present = len(reader.payload) - reader.offset
    if present > declared:
        raise CheckpointError(f"{present - declared} trailing bytes")
    if present < declared:
        raise CheckpointError(
            f"truncated checkpoint: index declares {declared} data bytes, {present} present"
        )
    return {
        name: np.frombuffer(reader.take(sizes[name], f"data of {name}"), dtype=_FLOAT)
        .reshape(shape)
        .copy()
        for name, shape in index.items()
    }


def read_checkpoint(path: PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse a checkpoint into its header and named float32 arrays.

    Raises:
        CheckpointError: On bad magic, version mismatch, truncation or trailing bytes
    """
    header, index, reader = _read_index(path)
    return header, _read_data(reader, index)


def load_checkpoint(
    path: PathLike, expected_variant: Optional[Union[str, ModelVariant]] = None
) -> SurrogateUNet:
    """Rebuild a model from a checkpoint.

    The array index is checked against the rebuilt model before any data is
    read, so a corrupted dimension is reported at the array that carries it.

    Args:
        path: Checkpoint file
        expected_variant: Refuse checkpoints of another variant

    Raises:
        ModelConfigError: If the stored variant differs from expected_variant
        CheckpointError: If an array is missing, unexpected, or has the wrong shape
    """
    header, index, reader = _read_index(path)
    config = ModelConfig.model_validate(header["model"])
    if expected_variant is not None:
        if isinstance(expected_variant, ModelVariant):
            expected = expected_variant
        else:
            expected = ModelVariant(expected_variant.replace("-", "_"))
        if config.variant != expected:
            raise ModelConfigError(
                f"checkpoint holds a {config.variant.value} model, expected {expected.value}"
            )
    grid = GridSpec.model_validate(header["grid"])
    model = SurrogateUNet(config, grid, seed=int(header.get("seed", 0)))

    expected_arrays = model.state_arrays()
    for name, target in expected_arrays.items():
        if name not in index:
            raise CheckpointError(f"missing array {name}")
        if index[name] != target.shape:
            raise CheckpointError(
                f"shape mismatch at {name}: expected {target.shape}, got {index[name]}"
            )
    unexpected = sorted(set(index) - set(expected_arrays))
    if unexpected:
        raise CheckpointError(f"unexpected array {unexpected[0]}")
    model.load_state_arrays(_read_data(reader, index))
    logger.info(f"Loaded {config.variant.value} checkpoint from {path}")
    return model

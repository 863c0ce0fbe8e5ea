"""Tensor4 conventions: numpy arrays shaped (N, C, H, W), row-major, W innermost."""

from enum import Enum
from typing import Optional

import numpy as np

from app.errors import ShapeError

Tensor4 = np.ndarray

DEFAULT_DTYPE = np.float32


class Mode(Enum):
    """Forward-pass mode: whether batch norm uses batch statistics and dropout is active."""

    TRAIN = ("train", True, True)
    EVAL = ("eval", False, False)
    MC_DROPOUT = ("mc_dropout", False, True)
    BATCH_STATS = ("batch_stats", True, False)  # deterministic train-mode normalization

    def __init__(self, label: str, batch_stats: bool, dropout: bool):
        self.label = label
        self.batch_stats = batch_stats
        self.dropout = dropout


def check_tensor4(
    x: np.ndarray, channels: Optional[int] = None, block: Optional[str] = None
) -> np.ndarray:
    """Validate an (N, C, H, W) array with all dims >= 1.

    Raises:
        ShapeError: If the rank, a dimension, or the channel count is wrong
    """
    if x.ndim != 4 or min(x.shape) < 1:
        raise ShapeError("(N, C, H, W) with all dims >= 1", x.shape, block)
    if channels is not None and x.shape[1] != channels:
        raise ShapeError(f"(N, {channels}, H, W)", x.shape, block)
    return x


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Spatial output length of a convolution: (size + 2p - k) // s + 1."""
    span = size + 2 * padding - kernel
    if span < 0:
        raise ShapeError(f"input length >= {kernel - 2 * padding}", size)
    return span // stride + 1


def transposed_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    """Spatial output length of a transposed convolution: (size - 1) s - 2p + k."""
    return (size - 1) * stride - 2 * padding + kernel

"""Mean squared error over image batches."""

import numpy as np

from app.errors import ShapeError


def _check(pred: np.ndarray, target: np.ndarray) -> None:
    if pred.shape != target.shape:
        raise ShapeError(target.shape, pred.shape, "mse_loss")
    if pred.ndim < 2 or pred.shape[0] < 1:
        raise ShapeError("(N, ...) with N >= 1", pred.shape, "mse_loss")


def per_sample_mse(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Pixel-mean squared error of every image, shape (N,), float64."""
    _check(pred, target)
    diff = pred.astype(np.float64) - target.astype(np.float64)
    return (diff * diff).reshape(diff.shape[0], -1).mean(axis=1)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Batch mean of the per-image pixel-mean squared error."""
    return float(per_sample_mse(pred, target).mean())


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of mse_loss with respect to pred, in pred's dtype."""
    _check(pred, target)
    return (2.0 * (pred - target) / pred.size).astype(pred.dtype, copy=False)

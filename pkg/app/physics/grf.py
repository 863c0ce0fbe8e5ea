"""Gaussian random fields and their quantization into conductivity classes.

Fields are synthesized by circulant embedding of an isotropic
squared-exponential covariance C(r) = exp(-r^2 / (2 l^2)) on a periodic grid
padded around the model domain, then cropped.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import fft
from scipy.stats import norm

from app.errors import GrfError
from app.models.grid import DEFAULT_CLASS_VALUES, ConductivityField, GridSpec

logger = logging.getLogger(__name__)

# Relative size of a negative eigenvalue that is still treated as round-off.
EIGENVALUE_TOLERANCE = 1e-6


class GrfConfig(BaseModel):
    """Parameters of a quantized Gaussian random conductivity field."""

    model_config = ConfigDict(frozen=True)

    grid: GridSpec = Field(default_factory=GridSpec, description="Model domain")
    correlation_length: float = Field(8.0, gt=0.0, description="Correlation length in cells")
    class_values: tuple[float, ...] = Field(
        DEFAULT_CLASS_VALUES, description="Ascending positive conductivity classes"
    )
    seed: int = Field(0, ge=0, lt=2**64, description="64-bit seed")
    embedding_padding: float = Field(
        8.0, ge=0.0, description="Periodic padding around the domain, in correlation lengths"
    )

    @field_validator("class_values")
    @classmethod
    def _ascending_positive(cls, values: tuple[float, ...]) -> tuple[float, ...]:
        if len(values) < 2:
            raise ValueError("at least two conductivity classes are required")
        if any(v <= 0 for v in values):
            raise ValueError("class values must be positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("class values must be strictly ascending")
        return values


def embedding_size(n: int, correlation_length: float, padding: float) -> int:
    """Periodic grid length for one axis of the circulant embedding."""
    minimum = max(2 * n, n + int(np.ceil(padding * correlation_length)))
    return fft.next_fast_len(minimum)


def _wrapped_lags(m: int) -> np.ndarray:
    lags = np.arange(m)
    return np.minimum(lags, m - lags).astype(np.float64)


def embedding_eigenvalues(
    shape: tuple[int, int], correlation_length: float
) -> np.ndarray:
    """Eigenvalues of the block-circulant covariance on a periodic grid."""
    rows = _wrapped_lags(shape[0])[:, None]
    cols = _wrapped_lags(shape[1])[None, :]
    covariance = np.exp(-(rows**2 + cols**2) / (2.0 * correlation_length**2))
    return fft.fft2(covariance).real


def check_embedding(eigenvalues: np.ndarray) -> np.ndarray:
    """Clip round-off negatives, reject a genuinely indefinite embedding.

    Raises:
        GrfError: If the most negative eigenvalue exceeds the tolerance
    """
    largest = float(eigenvalues.max())
    smallest = float(eigenvalues.min())
    if smallest < -EIGENVALUE_TOLERANCE * largest:
        raise GrfError(
            f"covariance embedding is not positive semi-definite: min eigenvalue "
            f"{smallest:.3e} vs max {largest:.3e}; reduce correlation_length or "
            f"increase embedding_padding"
        )
    return np.clip(eigenvalues, 0.0, None)


def sample_continuous_grf(config: GrfConfig) -> np.ndarray:
    """Draw a zero-mean, unit-variance stationary Gaussian field.

    Args:
        config: Grid, correlation length and seed

    Returns:
        Array of shape (H, W); identical for identical configs

    Raises:
        GrfError: If the covariance embedding is indefinite
    """
    grid = config.grid
    shape = (
        embedding_size(grid.height, config.correlation_length, config.embedding_padding),
        embedding_size(grid.width, config.correlation_length, config.embedding_padding),
    )
    eigenvalues = check_embedding(embedding_eigenvalues(shape, config.correlation_length))

    rng = np.random.default_rng(config.seed)
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    scale = np.sqrt(eigenvalues / (shape[0] * shape[1]))
    field = fft.fft2(scale * noise).real
    logger.debug(f"GRF sampled on embedding {shape} for grid {grid.shape}")
    return np.ascontiguousarray(field[: grid.height, : grid.width])


def class_thresholds(k: int) -> np.ndarray:
    """Equal-probability standard-normal thresholds for k classes."""
    return norm.ppf(np.arange(1, k) / k)


def quantize_field(
    field: np.ndarray, class_values: Sequence[float], grid: Optional[GridSpec] = None
) -> ConductivityField:
    """Map a standard-normal field onto conductivity classes.

    Values equal to a threshold take the lower class.

    Args:
        field: Continuous field of shape (H, W)
        class_values: Ascending class values, at least two
        grid: Grid of the field (inferred from the shape when omitted)

    Returns:
        ConductivityField whose values are drawn exactly from class_values
    """
    values = np.asarray(class_values, dtype=np.float64)
    if values.size < 2:
        raise ValueError("at least two conductivity classes are required")
    field = np.asarray(field, dtype=np.float64)
    if grid is None:
        grid = GridSpec(height=field.shape[0], width=field.shape[1])
    index = np.searchsorted(class_thresholds(values.size), field, side="left")
    return ConductivityField(grid=grid, values=values[index])


def sample_conductivity(config: GrfConfig) -> ConductivityField:
    """Sample and quantize a conductivity field in one step."""
    return quantize_field(sample_continuous_grf(config), config.class_values, config.grid)

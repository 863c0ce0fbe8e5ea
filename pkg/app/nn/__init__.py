"""NumPy tensor kernels and differentiable layers."""

from app.nn.gradcheck import GradientCheckReport, gradient_check, relative_error
from app.nn.layers import (
    Activation,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Dropout,
    Layer,
    Sequential,
    Upsample,
)
from app.nn.tensor import Mode, Tensor4, check_tensor4

__all__ = [
    "GradientCheckReport",
    "gradient_check",
    "relative_error",
    "Activation",
    "BatchNorm2d",
    "Conv2d",
    "ConvTranspose2d",
    "Dropout",
    "Layer",
    "Sequential",
    "Upsample",
    "Mode",
    "Tensor4",
    "check_tensor4",
]

"""U-Net surrogates with optional attention gates."""

from app.network.attention import AttentionGate
from app.network.checkpoint import load_checkpoint, save_checkpoint
from app.network.config import ModelConfig, ModelVariant
from app.network.unet import (
    AttentionMaps,
    ParameterCount,
    SurrogateUNet,
    build_model,
    count_parameters,
    forward,
    predict,
)

__all__ = [
    "AttentionGate",
    "load_checkpoint",
    "save_checkpoint",
    "ModelConfig",
    "ModelVariant",
    "AttentionMaps",
    "ParameterCount",
    "SurrogateUNet",
    "build_model",
    "count_parameters",
    "forward",
    "predict",
]

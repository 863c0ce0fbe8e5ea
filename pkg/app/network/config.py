"""Model configuration."""

from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.errors import ModelConfigError
from app.models.grid import N_INPUT_CHANNELS, GridSpec


class ModelVariant(str, Enum):
    UNET = "unet"
    ATTENTION_UNET = "attention_unet"


class ModelConfig(BaseModel):
    """Architecture hyperparameters for the U-Net family."""

    model_config = ConfigDict(frozen=True)

    variant: ModelVariant = Field(ModelVariant.ATTENTION_UNET, description="unet or attention_unet")
    in_channels: int = Field(N_INPUT_CHANNELS, ge=1, description="Input channels")
    out_channels: int = Field(1, ge=1, description="Output channels")
    encoder_widths: tuple[int, ...] = Field(
        (64, 128, 256, 512), description="Output channels of each down block"
    )
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0, description="Dropout rate")
    leaky_slope: float = Field(0.3, ge=0.0, description="Encoder LeakyReLU slope")
    attention_inter_channels: Optional[tuple[int, ...]] = Field(
        None, description="Per-gate intermediate width, deepest gate first (default: skip width)"
    )
    bn_momentum: float = Field(0.9, gt=0.0, lt=1.0, description="Running-statistics momentum")
    bn_eps: float = Field(1e-5, gt=0.0, description="Batch-norm epsilon")

    @field_validator("variant", mode="before")
    @classmethod
    def _normalize_variant(cls, value):
        # the command line spells it attention-unet
        return value.replace("-", "_") if isinstance(value, str) else value

    @field_validator("encoder_widths")
    @classmethod
    def _check_widths(cls, widths: tuple[int, ...]) -> tuple[int, ...]:
        if len(widths) < 2:
            raise ValueError("encoder_widths needs at least two levels")
        for width in widths:
            if width < 1 or width & (width - 1):
                raise ValueError(f"encoder width {width} is not a power of two")
        if any(b <= a for a, b in zip(widths, widths[1:])):
            raise ValueError(f"encoder_widths {widths} must be strictly ascending")
        return widths

    @model_validator(mode="after")
    def _check_gates(self) -> "ModelConfig":
        if self.attention_inter_channels is not None:
            if len(self.attention_inter_channels) != self.n_gates:
                raise ValueError(
                    f"attention_inter_channels needs {self.n_gates} entries, "
                    f"got {len(self.attention_inter_channels)}"
                )
            if min(self.attention_inter_channels) < 1:
                raise ValueError("attention_inter_channels must be positive")
        return self

    @property
    def depth(self) -> int:
        return len(self.encoder_widths)

    @property
    def n_gates(self) -> int:
        return self.depth - 1

    @property
    def has_attention(self) -> bool:
        return self.variant == ModelVariant.ATTENTION_UNET

    @property
    def grid_divisor(self) -> int:
        """H and W must be multiples of this (16 for four levels)."""
        return 2**self.depth

    def inter_channels(self, gate: int) -> int:
        """Intermediate width of gate 1..n_gates (gate 1 sits at the deepest skip)."""
        if self.attention_inter_channels is not None:
            return self.attention_inter_channels[gate - 1]
        return self.encoder_widths[self.depth - 1 - gate]

    def check_grid(self, grid: GridSpec) -> None:
        """Raises ModelConfigError unless both grid dims divide by grid_divisor."""
        if grid.height % self.grid_divisor or grid.width % self.grid_divisor:
            raise ModelConfigError(
                f"grid {grid.height}x{grid.width} is not divisible by {self.grid_divisor}"
            )

    def halved(self) -> "ModelConfig":
        """Same architecture with every channel width halved (desk-scale profile)."""
        inter = None
        if self.attention_inter_channels is not None:
            inter = tuple(max(1, c // 2) for c in self.attention_inter_channels)
        data = self.model_dump()
        data["encoder_widths"] = tuple(max(1, w // 2) for w in self.encoder_widths)
        data["attention_inter_channels"] = inter
        return ModelConfig.model_validate(data)

"""U-Net and Attention U-Net assembled from the NumPy layers.

Encoder: one down block per encoder width (conv k4/s2/p1, then batch norm
and dropout from the second block on, then LeakyReLU). Decoder: one up block
per skip (nearest x4 upsampling, conv k4/s2/p1, batch norm, dropout on the
first up block only, ReLU), each followed by concatenation with the matching
encoder features. The attention variant gates every skip before the
concatenation with the previous decoder-level features. Head: transposed
conv k4/s2/p1 with bias and a sigmoid.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.errors import ShapeError
from app.models.grid import GridSpec
from app.network.attention import AttentionGate
from app.network.config import ModelConfig
from app.nn.layers import (
    Activation,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Dropout,
    Sequential,
    Upsample,
)
from app.nn.tensor import Mode, check_tensor4

logger = logging.getLogger(__name__)

NO_GATES_WARNING = "model has no attention gates"


@dataclass
class AttentionMaps:
    """Attention coefficients per gate, keyed 'gate1' (deepest) onwards, each (N, 1, h, w)."""

    maps: dict[str, np.ndarray] = field(default_factory=dict)
    warning: Optional[str] = None

    def __len__(self) -> int:
        return len(self.maps)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.maps[name]

    def items(self):
        return self.maps.items()


@dataclass
class ParameterRow:
    block: str
    trainable: int
    non_trainable: int

    @property
    def total(self) -> int:
        return self.trainable + self.non_trainable


@dataclass
class ParameterCount:
    """Per-block parameter counts; running statistics count as non-trainable."""

    rows: list[ParameterRow] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(row.total for row in self.rows)

    @property
    def trainable(self) -> int:
        return sum(row.trainable for row in self.rows)

    def by_block(self) -> dict[str, int]:
        return {row.block: row.total for row in self.rows}

    def to_text(self) -> str:
        lines = [f"{'block':<10}{'trainable':>14}{'non_trainable':>16}{'total':>14}"]
        for row in self.rows:
            lines.append(f"{row.block:<10}{row.trainable:>14}{row.non_trainable:>16}{row.total:>14}")
        lines.append(f"{'total':<10}{self.trainable:>14}{self.total - self.trainable:>16}{self.total:>14}")
        return "\n".join(lines) + "\n"


def _down_block(c_in: int, c_out: int, level: int, config: ModelConfig, rng) -> Sequential:
    layers = [("conv", Conv2d(c_in, c_out, kernel=4, stride=2, padding=1, bias=False, rng=rng))]
    if level > 1:
        layers.append(("bn", BatchNorm2d(c_out, config.bn_momentum, config.bn_eps)))
        layers.append(("dropout", Dropout(config.dropout_rate)))
    layers.append(("act", Activation("leaky_relu", config.leaky_slope)))
    return Sequential(layers)


def _up_block(c_in: int, c_out: int, level: int, config: ModelConfig, rng) -> Sequential:
    layers = [
        ("upsample", Upsample(4)),
        ("conv", Conv2d(c_in, c_out, kernel=4, stride=2, padding=1, bias=False, rng=rng)),
        ("bn", BatchNorm2d(c_out, config.bn_momentum, config.bn_eps)),
    ]
    if level == 1:
        layers.append(("dropout", Dropout(config.dropout_rate)))
    layers.append(("act", Activation("relu")))
    return Sequential(layers)


class SurrogateUNet:
    """Image-to-image network mapping (N, 3, H, W) scenarios to (N, 1, H, W) heads."""

    def __init__(self, config: ModelConfig, grid: GridSpec, seed: int = 0):
        config.check_grid(grid)
        self.config = config
        self.grid = grid
        self.seed = seed
        rng = np.random.default_rng(seed)
        widths = config.encoder_widths
        depth = config.depth

        self.down: list[tuple[str, Sequential]] = []
        c_in = config.in_channels
        for level, width in enumerate(widths, start=1):
            self.down.append((f"down{level}", _down_block(c_in, width, level, config, rng)))
            c_in = width

        self.gates: list[tuple[str, Optional[AttentionGate]]] = []
        self.up: list[tuple[str, Sequential]] = []
        for level in range(1, depth):
            skip_channels = widths[depth - 1 - level]
            if config.has_attention:
                name = f"gate{level}"
                gate = AttentionGate(
                    c_in, skip_channels, config.inter_channels(level), rng=rng, name=name
                )
                self.gates.append((name, gate))
            else:
                self.gates.append((f"gate{level}", None))
            self.up.append((f"up{level}", _up_block(c_in, skip_channels, level, config, rng)))
            c_in = 2 * skip_channels

        self.head = Sequential(
            [
                (
                    "conv",
                    ConvTranspose2d(
                        c_in, config.out_channels, kernel=4, stride=2, padding=1, bias=True, rng=rng
                    ),
                ),
                ("act", Activation("sigmoid")),
            ]
        )
        self.block_shapes: list[tuple[str, tuple[int, ...]]] = []
        self._up_channels: list[int] = []

    @property
    def blocks(self) -> list[tuple[str, object]]:
        """Every parametrized block in a fixed order."""
        named: list[tuple[str, object]] = list(self.down)
        for (gate_name, gate), up in zip(self.gates, self.up):
            if gate is not None:
                named.append((gate_name, gate))
            named.append(up)
        named.append(("head", self.head))
        return named

    def forward(
        self,
        x: np.ndarray,
        mode: Mode = Mode.EVAL,
        rng: Optional[np.random.Generator] = None,
        capture_attention: bool = False,
    ) -> tuple[np.ndarray, Optional[AttentionMaps]]:
        """Run the network.

        Args:
            x: Input batch (N, 3, H, W) with H, W divisible by 2**depth
            mode: TRAIN, EVAL, MC_DROPOUT or BATCH_STATS
            rng: Generator for dropout (required when dropout is active)
            capture_attention: Also return the attention coefficients

        Returns:
            Tuple of (predictions in (0, 1), AttentionMaps or None)

        Raises:
            ShapeError: On a wrong channel count or indivisible spatial size
        """
        check_tensor4(x, channels=self.config.in_channels, block="input")
        divisor = self.config.grid_divisor
        if x.shape[2] % divisor or x.shape[3] % divisor:
            raise ShapeError(f"H and W divisible by {divisor}", x.shape, "input")
        if x.shape[0] < 2 and mode.batch_stats:
            raise ShapeError("batch of at least 2 for batch statistics", x.shape, "input")

        shapes: list[tuple[str, tuple[int, ...]]] = []
        skips = []
        h = x
        for name, block in self.down:
            h = block.forward(h, mode, rng)
            shapes.append((name, h.shape))
            skips.append(h)

        maps = AttentionMaps() if capture_attention else None
        if capture_attention and not self.config.has_attention:
            maps.warning = NO_GATES_WARNING
            logger.warning(f"capture_attention requested on a {self.config.variant.value} model")

        current = skips[-1]
        self._up_channels = []
        for level, ((gate_name, gate), (up_name, up)) in enumerate(zip(self.gates, self.up), start=1):
            skip = skips[-1 - level]
            if gate is not None:
                gated, alpha = gate.forward(current, skip, mode)
                shapes.append((gate_name, gated.shape))
                if maps is not None:
                    maps.maps[gate_name] = alpha
            else:
                gated = skip
            upsampled = up.forward(current, mode, rng)
            shapes.append((up_name, upsampled.shape))
            self._up_channels.append(upsampled.shape[1])
            current = np.concatenate([upsampled, gated], axis=1)
            shapes.append((f"concat{level}", current.shape))

        out = self.head.forward(current, mode, rng)
        shapes.append(("head", out.shape))
        self.block_shapes = shapes
        return out, maps

    def backward(self, dout: np.ndarray) -> np.ndarray:
        """Backpropagate through the last forward pass; accumulates parameter gradients.

        Returns:
            Gradient with respect to the input batch
        """
        depth = self.config.depth
        skip_grads: list[Optional[np.ndarray]] = [None] * depth
        grad = self.head.backward(dout)
        for level in range(depth - 1, 0, -1):
            (_, gate), (_, up) = self.gates[level - 1], self.up[level - 1]
            split = self._up_channels[level - 1]
            d_up, d_gated = grad[:, :split], grad[:, split:]
            grad = up.backward(np.ascontiguousarray(d_up))
            if gate is not None:
                d_gate_signal, d_skip = gate.backward(np.ascontiguousarray(d_gated))
                grad = grad + d_gate_signal
            else:
                d_skip = d_gated
            skip_grads[depth - 1 - level] = d_skip

        for index in range(depth - 1, -1, -1):
            grad = self.down[index][1].backward(grad)
            if index > 0:
                grad = grad + skip_grads[index - 1]
        return grad

    def parameters(self) -> dict[str, np.ndarray]:
        return self._collect("parameters")

    def gradients(self) -> dict[str, np.ndarray]:
        return self._collect("gradients")

    def buffers(self) -> dict[str, np.ndarray]:
        return self._collect("buffers")

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Parameters followed by buffers: everything a checkpoint stores."""
        return {**self.parameters(), **self.buffers()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Copy arrays into the existing parameter and buffer storage."""
        current = self.state_arrays()
        for name, target in current.items():
            if name not in arrays:
                raise KeyError(name)
            np.copyto(target, arrays[name].reshape(target.shape))

    def zero_grad(self) -> None:
        for _, block in self.blocks:
            block.zero_grad()

    def astype(self, dtype) -> "SurrogateUNet":
        for _, block in self.blocks:
            block.astype(dtype)
        return self

    def _collect(self, view: str) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for block_name, block in self.blocks:
            for name, array in getattr(block, view)().items():
                named[f"{block_name}.{name}"] = array
        return named


def build_model(config: ModelConfig, grid: GridSpec, seed: int = 0) -> SurrogateUNet:
    """Build a freshly initialized model; identical seeds give identical parameters.

    Raises:
        ModelConfigError: If the grid is not divisible by 2**depth
    """
    model = SurrogateUNet(config, grid, seed)
    logger.info(
        f"Built {config.variant.value} with widths {list(config.encoder_widths)} "
        f"on {grid.height}x{grid.width} ({count_parameters(model).total} parameters)"
    )
    return model


def forward(
    model: SurrogateUNet,
    x: np.ndarray,
    mode: Mode = Mode.EVAL,
    rng: Optional[np.random.Generator] = None,
    capture_attention: bool = False,
) -> tuple[np.ndarray, Optional[AttentionMaps]]:
    return model.forward(x, mode, rng, capture_attention)


def count_parameters(model: SurrogateUNet) -> ParameterCount:
    counts = ParameterCount()
    for name, block in model.blocks:
        trainable = sum(int(a.size) for a in block.parameters().values())
        non_trainable = sum(int(a.size) for a in block.buffers().values())
        counts.rows.append(ParameterRow(name, trainable, non_trainable))
    return counts


def predict(model: SurrogateUNet, inputs: np.ndarray, batch_size: int = 32) -> np.ndarray:
    """Eval-mode predictions for a stack of inputs, in batches."""
    outputs = [
        model.forward(inputs[start : start + batch_size], Mode.EVAL)[0]
        for start in range(0, len(inputs), batch_size)
    ]
    return np.concatenate(outputs, axis=0)

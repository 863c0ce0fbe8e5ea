"""Additive attention gate for U-Net skip connections.

The gate learns a per-pixel coefficient alpha in (0, 1) from the skip
feature map x and a gating signal g taken one level deeper in the decoder:

    q     = ReLU(W_g g + W_x x)      W_g 1x1 with bias, W_x 1x1 stride 2 no bias
    alpha = up2(sigmoid(psi q))      psi 1x1 to one channel, nearest upsampling
    out   = alpha * x                broadcast over channels
"""

from typing import Optional

import numpy as np

from app.errors import ShapeError
from app.nn import functional as F
from app.nn.layers import Conv2d, named_views
from app.nn.tensor import Mode, check_tensor4


class AttentionGate:
    """Gate with F_g gating channels, F_l skip channels and F_int intermediate channels."""

    def __init__(
        self,
        F_g: int,
        F_l: int,
        F_int: int,
        rng: Optional[np.random.Generator] = None,
        name: str = "gate",
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.name = name
        self.W_g = Conv2d(F_g, F_int, kernel=1, stride=1, bias=True, rng=rng)
        self.W_x = Conv2d(F_l, F_int, kernel=1, stride=2, bias=False, rng=rng)
        self.psi = Conv2d(F_int, 1, kernel=1, stride=1, bias=True, rng=rng)
        self._cache = None

    @property
    def children(self) -> list:
        return [("w_g", self.W_g), ("w_x", self.W_x), ("psi", self.psi)]

    def forward(
        self, g: np.ndarray, x: np.ndarray, mode: Mode = Mode.EVAL, rng=None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Gate the skip tensor.

        Args:
            g: Gating signal (N, F_g, H/2, W/2)
            x: Skip features (N, F_l, H, W)

        Returns:
            Tuple of (alpha * x, alpha) with alpha shaped (N, 1, H, W)

        Raises:
            ShapeError: If g is not at half the resolution of x
        """
        check_tensor4(g, block=self.name)
        check_tensor4(x, block=self.name)
        if x.shape[2] % 2 or x.shape[3] % 2 or g.shape[2:] != (x.shape[2] // 2, x.shape[3] // 2):
            raise ShapeError(
                f"gating signal at (H/2, W/2) of skip {x.shape[2:]}", g.shape, self.name
            )
        if g.shape[0] != x.shape[0]:
            raise ShapeError(f"batch {x.shape[0]}", g.shape, self.name)

        pre = self.W_g.forward(g, mode) + self.W_x.forward(x, mode)
        q = F.relu(pre)
        coeff = F.sigmoid(self.psi.forward(q, mode))
        alpha = F.upsample_nearest(coeff, 2)
        self._cache = (x, pre, coeff, alpha)
        return alpha * x, alpha

    def backward(self, dout: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradients with respect to (g, x)."""
        x, pre, coeff, alpha = self._cache
        dx = dout * alpha
        dalpha = (dout * x).sum(axis=1, keepdims=True)
        dcoeff = F.upsample_nearest_backward(dalpha, 2)
        dq = self.psi.backward(F.sigmoid_backward(dcoeff, coeff))
        dpre = F.relu_backward(dq, pre)
        dx = dx + self.W_x.backward(dpre)
        dg = self.W_g.backward(dpre)
        return dg, dx

    def parameters(self) -> dict[str, np.ndarray]:
        return named_views(self.children, "parameters")

    def gradients(self) -> dict[str, np.ndarray]:
        return named_views(self.children, "gradients")

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def zero_grad(self) -> None:
        for _, child in self.children:
            child.zero_grad()

    def astype(self, dtype) -> "AttentionGate":
        for _, child in self.children:
            child.astype(dtype)
        return self

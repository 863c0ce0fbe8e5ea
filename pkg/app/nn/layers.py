"""Stateful layers: parameters, gradients, buffers and the cache of the last forward.

Every layer exposes the same small protocol so blocks and whole networks can
be composed and gradient-checked uniformly:

    forward(x, mode, rng) -> output
    backward(dout) -> dx            (fills grads)
    parameters() / gradients() / buffers() -> dict[str, np.ndarray]
"""

import math
from typing import Optional, Protocol

import numpy as np

from app.nn import functional as F
from app.nn.tensor import DEFAULT_DTYPE, Mode


class Differentiable(Protocol):
    def forward(
        self, x: np.ndarray, mode: Mode = Mode.EVAL, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray: ...

    def backward(self, dout: np.ndarray) -> np.ndarray: ...

    def parameters(self) -> dict[str, np.ndarray]: ...

    def gradients(self) -> dict[str, np.ndarray]: ...

    def buffers(self) -> dict[str, np.ndarray]: ...


def he_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype=DEFAULT_DTYPE
) -> np.ndarray:
    """He-uniform initialization: U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    """Base layer with named parameter, gradient and buffer dicts."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(
        self, x: np.ndarray, mode: Mode = Mode.EVAL, rng: Optional[np.random.Generator] = None
    ) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, mode: Mode = Mode.EVAL, rng=None):
        return self.forward(x, mode, rng)

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.params)

    def gradients(self) -> dict[str, np.ndarray]:
        return {name: self.grads.get(name, np.zeros_like(p)) for name, p in self.params.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return dict(self.state)

    def zero_grad(self) -> None:
        self.grads = {name: np.zeros_like(p) for name, p in self.params.items()}

    def astype(self, dtype) -> "Layer":
        """Cast parameters and buffers in place; returns self."""
        for store in (self.params, self.state):
            for name in store:
                store[name] = store[name].astype(dtype)
        self.zero_grad()
        return self

    def _accumulate(self, name: str, grad: np.ndarray) -> None:
        if name in self.grads and self.grads[name].shape == grad.shape:
            self.grads[name] = self.grads[name] + grad
        else:
            self.grads[name] = grad


class Conv2d(Layer):
    """Square-kernel convolution; weight (C_out, C_in, k, k)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        bias: bool = False,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.params["weight"] = he_uniform(
            rng, (out_channels, in_channels, kernel, kernel), in_channels * kernel * kernel
        )
        if bias:
            self.params["bias"] = np.zeros(out_channels, dtype=DEFAULT_DTYPE)
        self.zero_grad()

    def forward(self, x, mode=Mode.EVAL, rng=None):
        self._cache = x
        return F.conv2d(x, self.params["weight"], self.stride, self.padding, self.params.get("bias"))

    def backward(self, dout):
        dx, dweight, dbias = F.conv2d_backward(
            dout, self._cache, self.params["weight"], self.stride, self.padding
        )
        self._accumulate("weight", dweight)
        if "bias" in self.params:
            self._accumulate("bias", dbias)
        return dx


class ConvTranspose2d(Layer):
    """Transposed convolution; weight (C_in, C_out, k, k)."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
    ):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.stride = stride
        self.padding = padding
        self.params["weight"] = he_uniform(
            rng, (in_channels, out_channels, kernel, kernel), in_channels * kernel * kernel
        )
        if bias:
            self.params["bias"] = np.zeros(out_channels, dtype=DEFAULT_DTYPE)
        self.zero_grad()

    def forward(self, x, mode=Mode.EVAL, rng=None):
        self._cache = x
        return F.transposed_conv2d(
            x, self.params["weight"], self.stride, self.padding, self.params.get("bias")
        )

    def backward(self, dout):
        dx, dweight, dbias = F.transposed_conv2d_backward(
            dout, self._cache, self.params["weight"], self.stride, self.padding
        )
        self._accumulate("weight", dweight)
        if "bias" in self.params:
            self._accumulate("bias", dbias)
        return dx


class BatchNorm2d(Layer):
    """Per-channel batch norm: trainable gain/bias, running mean/var buffers."""

    def __init__(self, channels: int, momentum: float = F.BN_MOMENTUM, eps: float = F.BN_EPS):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gain"] = np.ones(channels, dtype=DEFAULT_DTYPE)
        self.params["bias"] = np.zeros(channels, dtype=DEFAULT_DTYPE)
        self.state["running_mean"] = np.zeros(channels, dtype=DEFAULT_DTYPE)
        self.state["running_var"] = np.ones(channels, dtype=DEFAULT_DTYPE)
        self.zero_grad()

    def forward(self, x, mode=Mode.EVAL, rng=None):
        out, self._cache = F.batch_norm(
            x,
            self.params["gain"],
            self.params["bias"],
            self.state["running_mean"],
            self.state["running_var"],
            batch_stats=mode.batch_stats,
            momentum=self.momentum,
            eps=self.eps,
        )
        return out

    def backward(self, dout):
        dx, dgain, dbias = F.batch_norm_backward(dout, self._cache)
        self._accumulate("gain", dgain)
        self._accumulate("bias", dbias)
        return dx


class Dropout(Layer):
    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, mode=Mode.EVAL, rng=None):
        out, self._cache = F.dropout(x, self.rate, mode.dropout, rng)
        return out

    def backward(self, dout):
        return F.dropout_backward(dout, self._cache)


class Activation(Layer):
    """Elementwise leaky_relu, relu or sigmoid."""

    def __init__(self, kind: str, alpha: float = 0.3):
        super().__init__()
        if kind not in ("leaky_relu", "relu", "sigmoid"):
            raise ValueError(f"unknown activation '{kind}'")
        self.kind = kind
        self.alpha = alpha

    def forward(self, x, mode=Mode.EVAL, rng=None):
        out = F.activation(self.kind, x, self.alpha)
        # sigmoid backward needs the output, the others the input
        self._cache = out if self.kind == "sigmoid" else x
        return out

    def backward(self, dout):
        if self.kind == "leaky_relu":
            return F.leaky_relu_backward(dout, self._cache, self.alpha)
        if self.kind == "relu":
            return F.relu_backward(dout, self._cache)
        return F.sigmoid_backward(dout, self._cache)


class Upsample(Layer):
    """Nearest-neighbour upsampling by an integer factor."""

    def __init__(self, factor: int):
        super().__init__()
        if factor < 2:
            raise ValueError(f"upsampling factor must be >= 2, got {factor}")
        self.factor = factor

    def forward(self, x, mode=Mode.EVAL, rng=None):
        return F.upsample_nearest(x, self.factor)

    def backward(self, dout):
        return F.upsample_nearest_backward(dout, self.factor)


class Sequential(Layer):
    """Named chain of layers; parameter names are '<layer>.<param>'."""

    def __init__(self, layers: list[tuple[str, Layer]]):
        super().__init__()
        self.layers = layers

    def forward(self, x, mode=Mode.EVAL, rng=None):
        for _, layer in self.layers:
            x = layer.forward(x, mode, rng)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        return named_views(self.layers, "parameters")

    def gradients(self):
        return named_views(self.layers, "gradients")

    def buffers(self):
        return named_views(self.layers, "buffers")

    def zero_grad(self):
        for _, layer in self.layers:
            layer.zero_grad()

    def astype(self, dtype):
        for _, layer in self.layers:
            layer.astype(dtype)
        return self


def named_views(children: list[tuple[str, Layer]], view: str) -> dict[str, np.ndarray]:
    named: dict[str, np.ndarray] = {}
    for prefix, child in children:
        for name, array in getattr(child, view)().items():
            named[f"{prefix}.{name}"] = array
    return named

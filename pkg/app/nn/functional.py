"""Stateless forward and backward kernels.

Every forward function is paired with a backward function that takes the
upstream gradient plus whatever the forward pass needs to keep, and returns
gradients for the input and any parameters.
"""

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.errors import ShapeError
from app.nn.tensor import check_tensor4, conv_output_size, transposed_output_size

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, kernel: int, stride: int, h_out: int, w_out: int) -> np.ndarray:
    """Strided view (N, C, h_out, w_out, k, k) of every receptive field."""
    view = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    return view[:, :, : stride * (h_out - 1) + 1 : stride, : stride * (w_out - 1) + 1 : stride]


def _scatter_add(
    cols_grad: np.ndarray, weight: np.ndarray, stride: int, padded_shape: tuple
) -> np.ndarray:
    """Adjoint of the windowed contraction: spread (N, O, h, w) back through weight.

    weight is (O, C, k, k); the result has padded_shape (N, C, Hp, Wp).
    """
    out = np.zeros(padded_shape, dtype=np.result_type(cols_grad, weight))
    _, _, h, w = cols_grad.shape
    kernel = weight.shape[2]
    for i in range(kernel):
        for j in range(kernel):
            contribution = np.tensordot(cols_grad, weight[:, :, i, j], axes=([1], [0]))
            out[:, :, i : i + stride * (h - 1) + 1 : stride, j : j + stride * (w - 1) + 1 : stride] += (
                contribution.transpose(0, 3, 1, 2)
            )
    return out


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    bias: Optional[np.ndarray] = None,
) -> np.ndarray:
    """2-D cross-correlation.

    Args:
        x: Input (N, C_in, H, W)
        weight: Kernels (C_out, C_in, k, k)
        stride: Stride in both directions
        padding: Zero padding on every side
        bias: Optional (C_out,) offsets

    Returns:
        Output (N, C_out, (H + 2p - k) // s + 1, (W + 2p - k) // s + 1)

    Raises:
        ShapeError: If channel counts disagree or the input is too small
    """
    check_tensor4(x)
    c_out, c_in, kernel, _ = weight.shape
    if x.shape[1] != c_in:
        raise ShapeError(f"(N, {c_in}, H, W)", x.shape, "conv2d")
    h_out = conv_output_size(x.shape[2], kernel, stride, padding)
    w_out = conv_output_size(x.shape[3], kernel, stride, padding)
    cols = _windows(_pad(x, padding), kernel, stride, h_out, w_out)
    out = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(
    dout: np.ndarray, x: np.ndarray, weight: np.ndarray, stride: int, padding: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d.

    Returns:
        Tuple of (dx, dweight, dbias)
    """
    kernel = weight.shape[2]
    _, _, h_out, w_out = dout.shape
    xp = _pad(x, padding)
    cols = _windows(xp, kernel, stride, h_out, w_out)
    dweight = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
    dbias = dout.sum(axis=(0, 2, 3))
    dxp = _scatter_add(dout, weight, stride, xp.shape)
    h, w = x.shape[2], x.shape[3]
    dx = dxp[:, :, padding : padding + h, padding : padding + w]
    return np.ascontiguousarray(dx), dweight, dbias


def transposed_conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    stride: int = 1,
    padding: int = 0,
    bias: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Transposed convolution, the adjoint of conv2d with the same weight.

    Args:
        x: Input (N, C_in, H, W)
        weight: Kernels (C_in, C_out, k, k)
        stride: Stride of the adjoint convolution
        padding: Padding of the adjoint convolution (cropped from the output)
        bias: Optional (C_out,) offsets

    Returns:
        Output (N, C_out, (H - 1) s - 2p + k, (W - 1) s - 2p + k)
    """
    check_tensor4(x)
    c_in, c_out, kernel, _ = weight.shape
    if x.shape[1] != c_in:
        raise ShapeError(f"(N, {c_in}, H, W)", x.shape, "transposed_conv2d")
    n, _, h, w = x.shape
    full = (n, c_out, (h - 1) * stride + kernel, (w - 1) * stride + kernel)
    out_full = _scatter_add(x, weight, stride, full)
    h_out = transposed_output_size(h, kernel, stride, padding)
    w_out = transposed_output_size(w, kernel, stride, padding)
    out = out_full[:, :, padding : padding + h_out, padding : padding + w_out]
    if bias is not None:
        out = out + bias[None, :, None, None]
    return np.ascontiguousarray(out)


def transposed_conv2d_backward(
    dout: np.ndarray, x: np.ndarray, weight: np.ndarray, stride: int, padding: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of transposed_conv2d.

    Returns:
        Tuple of (dx, dweight, dbias)
    """
    kernel = weight.shape[2]
    h, w = x.shape[2], x.shape[3]
    dx = conv2d(dout, weight, stride, padding)
    cols = _windows(_pad(dout, padding), kernel, stride, h, w)
    dweight = np.tensordot(x, cols, axes=([0, 2, 3], [0, 2, 3]))
    dbias = dout.sum(axis=(0, 2, 3))
    return dx, dweight, dbias


def upsample_nearest(x: np.ndarray, factor: int) -> np.ndarray:
    """Replicate every pixel into a factor x factor block."""
    if factor < 2 or int(factor) != factor:
        raise ValueError(f"upsampling factor must be an integer >= 2, got {factor}")
    check_tensor4(x)
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def upsample_nearest_backward(dout: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def batch_norm(
    x: np.ndarray,
    gain: np.ndarray,
    bias: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    batch_stats: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> tuple[np.ndarray, dict]:
    """Per-channel batch normalization over (N, H, W).

    With batch_stats the batch mean/variance are used and the running
    statistics are updated in place; otherwise the running statistics are used.

    Returns:
        Tuple of (output, cache for batch_norm_backward)

    Raises:
        ValueError: If batch statistics are requested for a batch of one
    """
    check_tensor4(x)
    if batch_stats:
        if x.shape[0] < 2:
            raise ValueError("batch normalization with batch statistics needs N >= 2")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gain[None, :, None, None] * x_hat + bias[None, :, None, None]
    cache = {"x_hat": x_hat, "inv_std": inv_std, "gain": gain, "batch_stats": batch_stats}
    return out.astype(x.dtype, copy=False), cache


def batch_norm_backward(dout: np.ndarray, cache: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of batch_norm.

    Returns:
        Tuple of (dx, dgain, dbias)
    """
    x_hat = cache["x_hat"]
    inv_std = cache["inv_std"][None, :, None, None]
    gain = cache["gain"][None, :, None, None]
    dgain = (dout * x_hat).sum(axis=(0, 2, 3))
    dbias = dout.sum(axis=(0, 2, 3))
    dx_hat = dout * gain
    if not cache["batch_stats"]:
        return dx_hat * inv_std, dgain, dbias
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dx = (inv_std / m) * (
        m * dx_hat
        - dx_hat.sum(axis=(0, 2, 3), keepdims=True)
        - x_hat * (dx_hat * x_hat).sum(axis=(0, 2, 3), keepdims=True)
    )
    return dx, dgain, dbias


def dropout(
    x: np.ndarray, rate: float, active: bool, rng: Optional[np.random.Generator]
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Inverted dropout: zero units with probability rate, scale survivors by 1/(1-rate).

    Returns:
        Tuple of (output, scaled keep-mask or None when the layer is the identity)
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not active or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("active dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * keep, keep


def dropout_backward(dout: np.ndarray, keep: Optional[np.ndarray]) -> np.ndarray:
    return dout if keep is None else dout * keep


def leaky_relu(x: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(x > 0, x, x * x.dtype.type(alpha))


def leaky_relu_backward(dout: np.ndarray, x: np.ndarray, alpha: float) -> np.ndarray:
    return np.where(x > 0, dout, dout * dout.dtype.type(alpha))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, dout, 0).astype(dout.dtype, copy=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, to avoid overflow
    positive = x >= 0
    z = np.exp(-np.abs(x))
    return np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)


def sigmoid_backward(dout: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dout * y * (1 - y)


def activation(kind: str, x: np.ndarray, alpha: float = 0.3) -> np.ndarray:
    """Apply an elementwise activation by name: leaky_relu, relu or sigmoid."""
    if kind == "leaky_relu":
        return leaky_relu(x, alpha)
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation '{kind}'")

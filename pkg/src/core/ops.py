"""
Differentiable primitives over Tensor
Broadcasting is limited to per-channel bias/scale along one named axis;
every other shape change is an explicit reshape, transpose, concat or take
"""

from typing import Optional, Sequence, Tuple
import math
import numpy as np

from .tensor import Tensor, from_op
from ..utils.errors import ContractError, DimensionError, NumericError

ACTIVATIONS = ("relu", "gelu", "sigmoid", "tanh")
REDUCTIONS = ("sum", "mean", "avg_pool_global", "avg_pool_2d")

# tanh approximation of GELU
GELU_C = math.sqrt(2.0 / math.pi)
GELU_A = 0.044715


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _check_axis(op: str, x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{op}: axis {axis} invalid for shape {x.shape}")
    return axis % x.ndim


def _channel_view(vector: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vector.shape[0]
    return vector.reshape(shape)


def _other_axes(ndim: int, axis: int) -> Tuple[int, ...]:
    return tuple(i for i in range(ndim) if i != axis)


# ---------------------------------------------------------------- elementwise
def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return from_op("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return from_op("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    return from_op("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def affine(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift for scalar constants"""
    data = x.data * x.dtype.type(scale) + x.dtype.type(shift)
    return from_op("affine", data, (x,), lambda g: (g * x.dtype.type(scale),))


def add_bias(x: Tensor, bias: Tensor, axis: int) -> Tensor:
    """Add a per-channel bias vector along one axis"""
    axis = _check_axis("add_bias", x, axis)
    if bias.shape != (x.shape[axis],):
        raise DimensionError(f"add_bias: bias {bias.shape} does not match axis {axis} of {x.shape}")
    data = x.data + _channel_view(bias.data, x.ndim, axis)

    def _backward(g):
        return g, g.sum(axis=_other_axes(x.ndim, axis))
    return from_op("add_bias", data, (x, bias), _backward)


def channel_scale(x: Tensor, weights: Tensor, axis: int) -> Tensor:
    """Multiply every slice along axis by its channel weight"""
    axis = _check_axis("channel_scale", x, axis)
    if weights.shape != (x.shape[axis],):
        raise DimensionError(f"channel_scale: weights {weights.shape} do not match axis {axis} of {x.shape}")
    w = _channel_view(weights.data, x.ndim, axis)

    def _backward(g):
        return g * w, (g * x.data).sum(axis=_other_axes(x.ndim, axis))
    return from_op("channel_scale", x.data * w, (x, weights), _backward)


def abs(x: Tensor) -> Tensor:
    return from_op("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0) or not np.all(np.isfinite(x.data)):
        raise NumericError(f"log: input must be finite and positive (min {x.data.min()})")
    return from_op("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def smooth_l1(x: Tensor, beta: float = 1.0) -> Tensor:
    """Elementwise smooth-L1 (Huber with slope 1) of a residual"""
    ax = np.abs(x.data)
    quadratic = ax < beta
    data = np.where(quadratic, 0.5 * x.data * x.data / beta, ax - 0.5 * beta)

    def _backward(g):
        return (g * np.where(quadratic, x.data / beta, np.sign(x.data)),)
    return from_op("smooth_l1", data, (x,), _backward)


def binary_cross_entropy(p: Tensor, target: np.ndarray, eps: float = 1e-12) -> Tensor:
    """Elementwise -(t log p + (1 - t) log(1 - p)) with p clipped into [eps, 1 - eps]"""
    target = np.asarray(target, dtype=p.dtype)
    if target.shape != p.shape:
        raise DimensionError(f"binary_cross_entropy: shape mismatch {p.shape} vs {target.shape}")
    q = np.clip(p.data, eps, 1.0 - eps)
    data = -(target * np.log(q) + (1.0 - target) * np.log1p(-q))

    def _backward(g):
        return (g * (q - target) / (q * (1.0 - q)),)
    return from_op("binary_cross_entropy", data, (p,), _backward)


# ---------------------------------------------------------------- activations
def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise relu, gelu (tanh approximation), sigmoid or tanh"""
    d = x.data
    if kind == "relu":
        mask = d > 0
        return from_op("relu", np.where(mask, d, 0).astype(d.dtype), (x,), lambda g: (g * mask,))
    if kind == "sigmoid":
        # kept in the open interval (0, 1) at the working precision
        margin = np.finfo(d.dtype).epsneg
        s = np.clip(0.5 * (1.0 + np.tanh(0.5 * d)), margin, 1.0 - margin).astype(d.dtype)
        return from_op("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))
    if kind == "tanh":
        t = np.tanh(d)
        return from_op("tanh", t, (x,), lambda g: (g * (1.0 - t * t),))
    if kind == "gelu":
        t = np.tanh(GELU_C * (d + GELU_A * d ** 3))
        y = 0.5 * d * (1.0 + t)
        dy = 0.5 * (1.0 + t) + 0.5 * d * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * d * d)
        return from_op("gelu", y, (x,), lambda g: (g * dy,))
    raise ContractError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis("softmax", x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)
    return from_op("softmax", s, (x,), _backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis("log_softmax", x, axis)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    s = np.exp(y)

    def _backward(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)
    return from_op("log_softmax", y, (x,), _backward)


# ---------------------------------------------------------------- linear maps
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an M x K and a K x N tensor"""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def _backward(g):
        return g @ b.data.T, a.data.T @ g
    return from_op("matmul", a.data @ b.data, (a, b), _backward)


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """
    Cross-correlation of a C x H x W input with an O x C x k x k kernel

    Products are accumulated in (channel, row, column) kernel order, the same
    order as a nested-loop reference, so float64 results match it exactly.
    """
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: expected C x H x W input and 4-d kernel, got {x.shape} and {kernel.shape}")
    channels, height, width = x.shape
    out_channels, kernel_channels, kh, kw = kernel.shape
    if kernel_channels != channels or kh != kw:
        raise DimensionError(f"conv2d: kernel {kernel.shape} incompatible with input {x.shape}")
    if stride < 1 or padding < 0:
        raise ContractError(f"conv2d: stride must be >= 1 and padding >= 0, got {stride}, {padding}")
    k = kh
    if height + 2 * padding < k or width + 2 * padding < k:
        raise DimensionError(f"conv2d: kernel {kernel.shape} larger than padded input {x.shape} (padding {padding})")

    out_h = (height + 2 * padding - k) // stride + 1
    out_w = (width + 2 * padding - k) // stride + 1
    span_h = stride * (out_h - 1) + 1
    span_w = stride * (out_w - 1) + 1
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding))) if padding else x.data
    w = kernel.data
    dtype = np.result_type(x.data, w)

    out = np.zeros((out_channels, out_h, out_w), dtype=dtype)
    for c in range(channels):
        for i in range(k):
            for j in range(k):
                patch = xp[c, i:i + span_h:stride, j:j + span_w:stride]
                out += w[:, c, i, j, None, None] * patch[None]

    def _backward(g):
        grad_w = np.empty_like(w)
        grad_xp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                window = (slice(None), slice(i, i + span_h, stride), slice(j, j + span_w, stride))
                grad_w[:, :, i, j] = np.tensordot(g, xp[window], axes=([1, 2], [1, 2]))
                grad_xp[window] += np.tensordot(w[:, :, i, j], g, axes=([0], [0]))
        if padding:
            grad_xp = grad_xp[:, padding:padding + height, padding:padding + width]
        return grad_xp, grad_w
    return from_op("conv2d", out, (x, kernel), _backward)


def conv1d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Same-length single-channel 1-D cross-correlation with zero padding"""
    if x.ndim != 1 or kernel.ndim != 1 or kernel.shape[0] % 2 == 0:
        raise DimensionError(f"conv1d: expected vector input and odd kernel, got {x.shape} and {kernel.shape}")
    k = kernel.shape[0]
    pad = (k - 1) // 2
    length = x.shape[0]
    xp = np.pad(x.data, (pad, pad))
    w = kernel.data
    out = np.zeros(length, dtype=np.result_type(x.data, w))
    for j in range(k):
        out += w[j] * xp[j:j + length]
    inputs = (x, kernel)
    if bias is not None:
        if bias.shape != (1,):
            raise DimensionError(f"conv1d: bias must have shape (1,), got {bias.shape}")
        out = out + bias.data[0]
        inputs = (x, kernel, bias)

    def _backward(g):
        grad_xp = np.zeros_like(xp)
        grad_w = np.empty_like(w)
        for j in range(k):
            grad_w[j] = np.dot(g, xp[j:j + length])
            grad_xp[j:j + length] += g * w[j]
        grads = [grad_xp[pad:pad + length], grad_w]
        if bias is not None:
            grads.append(np.array([g.sum()], dtype=bias.dtype))
        return grads
    return from_op("conv1d", out, inputs, _backward)


# ---------------------------------------------------------------- reductions
def reduce(x: Tensor, kind: str, window: Optional[int] = None) -> Tensor:
    """
    Sum, mean, global average pooling (C x H x W -> C x 1 x 1) or
    non-overlapping average pooling with an exactly dividing window
    """
    if kind == "sum":
        return from_op("sum", np.array([x.data.sum()], dtype=x.dtype), (x,),
                       lambda g: (np.full(x.shape, g[0], dtype=x.dtype),))
    if kind == "mean":
        n = x.size
        return from_op("mean", np.array([x.data.mean()], dtype=x.dtype), (x,),
                       lambda g: (np.full(x.shape, g[0] / n, dtype=x.dtype),))
    if kind == "avg_pool_global":
        if x.ndim != 3:
            raise DimensionError(f"avg_pool_global: expected C x H x W, got {x.shape}")
        n = x.shape[1] * x.shape[2]
        data = x.data.mean(axis=(1, 2), keepdims=True)
        return from_op("avg_pool_global", data, (x,),
                       lambda g: (np.broadcast_to(g / n, x.shape).astype(x.dtype),))
    if kind == "avg_pool_2d":
        if x.ndim != 3 or window is None or window < 1:
            raise DimensionError(f"avg_pool_2d: expected C x H x W and window >= 1, got {x.shape}, {window}")
        channels, height, width = x.shape
        if window > height or window > width or height % window or width % window:
            raise DimensionError(f"avg_pool_2d: window {window} does not tile extents {height} x {width}")
        oh, ow = height // window, width // window
        data = x.data.reshape(channels, oh, window, ow, window).mean(axis=(2, 4))
        area = window * window

        def _backward(g):
            spread = np.repeat(np.repeat(g / area, window, axis=1), window, axis=2)
            return (spread.astype(x.dtype),)
        return from_op("avg_pool_2d", data, (x,), _backward)
    raise ContractError(f"unknown reduction {kind!r}; expected one of {REDUCTIONS}")


def sum(x: Tensor) -> Tensor:
    return reduce(x, "sum")


def mean(x: Tensor) -> Tensor:
    return reduce(x, "mean")


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize along the last axis to zero mean and unit variance"""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    y = centered * inv_std

    def _backward(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gy_mean = (g * y).mean(axis=-1, keepdims=True)
        return (inv_std * (g - g_mean - y * gy_mean),)
    return from_op("layer_norm", y, (x,), _backward)


# ---------------------------------------------------------------- shape ops
def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    return from_op("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return from_op("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (g.transpose(inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat: need at least one tensor")
    first = tensors[0]
    axis = _check_axis("concat", first, axis)
    for t in tensors[1:]:
        if t.ndim != first.ndim or any(t.shape[i] != first.shape[i] for i in _other_axes(first.ndim, axis)):
            raise DimensionError(f"concat: {t.shape} incompatible with {first.shape} along axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def _backward(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))]
    return from_op("concat", data, tuple(tensors), _backward)


def take(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis"""
    axis = _check_axis("take", x, axis)
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"take: range [{start}, {stop}) outside axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def _backward(g):
        grad = np.zeros_like(x.data)
        grad[index] = g
        return (grad,)
    return from_op("take", np.ascontiguousarray(x.data[index]), (x,), _backward)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of a C x H x W map by an integer factor"""
    if x.ndim != 3 or factor < 1:
        raise DimensionError(f"upsample_nearest: expected C x H x W and factor >= 1, got {x.shape}, {factor}")
    channels, height, width = x.shape
    data = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def _backward(g):
        return (g.reshape(channels, height, factor, width, factor).sum(axis=(2, 4)),)
    return from_op("upsample_nearest", data, (x,), _backward)

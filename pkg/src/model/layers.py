"""
Parameterized building blocks over the tensor engine
Every module walks its attributes in definition order, so parameter names
are deterministic and double as checkpoint record names
"""

from collections import OrderedDict
from typing import Iterator, List, Mapping, Optional, Sequence, Tuple
import math
import numpy as np

from ..core import ops
from ..core.init import ParameterFactory
from ..core.tensor import Tensor
from ..utils.errors import ContractError, DimensionError


class Module:
    """Base class: parameters are requires_grad tensors found on the instance"""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, p.data) for name, p in self.named_parameters())

    def load_state_dict(self, records: Mapping[str, np.ndarray]) -> None:
        """Copy matching records into the parameters; every parameter must be present"""
        missing = []
        for name, p in self.named_parameters():
            if name not in records:
                missing.append(name)
                continue
            value = np.asarray(records[name])
            if value.shape != p.shape:
                raise DimensionError(f"parameter {name}: checkpoint shape {value.shape} vs model {p.shape}")
            p.data[...] = value.astype(p.dtype)
        if missing:
            raise ContractError(f"checkpoint lacks {len(missing)} parameters, e.g. {missing[:3]}")


def _walk(value, name: str) -> Iterator[Tuple[str, Tensor]]:
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{name}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(item, f"{name}.{key}")


class Linear(Module):
    """Row-vector affine map: x (N x in) -> N x out"""

    def __init__(self, factory: ParameterFactory, in_features: int, out_features: int, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = factory.weight((in_features, out_features), fan_in=in_features)
        self.bias = factory.zeros((out_features,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return ops.add_bias(y, self.bias, axis=1) if self.bias is not None else y


class Conv2d(Module):
    def __init__(self, factory: ParameterFactory, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, bias: bool = True):
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = factory.weight((out_channels, in_channels, kernel_size, kernel_size), fan_in=fan_in)
        self.bias = factory.zeros((out_channels,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.conv2d(x, self.weight, self.stride, self.padding)
        return ops.add_bias(y, self.bias, axis=0) if self.bias is not None else y


class LayerNorm(Module):
    """Normalization over the last axis with a learned per-feature gain and shift"""

    def __init__(self, factory: ParameterFactory, features: int, eps: float = 1e-5):
        self.eps = eps
        self.gain = factory.ones((features,))
        self.shift = factory.zeros((features,))

    def forward(self, x: Tensor) -> Tensor:
        y = ops.layer_norm(x, self.eps)
        y = ops.channel_scale(y, self.gain, axis=-1)
        return ops.add_bias(y, self.shift, axis=-1)


class Mlp(Module):
    """Stack of Linear layers with an activation between them"""

    def __init__(self, factory: ParameterFactory, sizes: Sequence[int], activation: str = "relu",
                 final_activation: Optional[str] = None):
        if len(sizes) < 2:
            raise ContractError(f"an MLP needs at least input and output sizes, got {tuple(sizes)}")
        self.activation = activation
        self.final_activation = final_activation
        self.layers = [Linear(factory, a, b) for a, b in zip(sizes[:-1], sizes[1:])]

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.activation(x, self.activation)
            elif self.final_activation is not None:
                x = ops.activation(x, self.final_activation)
        return x


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over a token matrix (N x D)"""

    def __init__(self, factory: ParameterFactory, dim: int, heads: int):
        if heads < 1 or dim % heads:
            raise ContractError(f"token dimension {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.qkv = Linear(factory, dim, 3 * dim)
        self.out = Linear(factory, dim, dim)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"attention expects N x {self.dim} tokens, got {x.shape}")
        d = self.dim // self.heads
        scale = 1.0 / math.sqrt(d)
        qkv = self.qkv(x)
        heads = []
        for h in range(self.heads):
            q = ops.take(qkv, 1, h * d, (h + 1) * d)
            k = ops.take(qkv, 1, self.dim + h * d, self.dim + (h + 1) * d)
            v = ops.take(qkv, 1, 2 * self.dim + h * d, 2 * self.dim + (h + 1) * d)
            scores = ops.affine(ops.matmul(q, ops.transpose(k)), scale)
            heads.append(ops.matmul(ops.softmax(scores, axis=-1), v))
        mixed = heads[0] if len(heads) == 1 else ops.concat(heads, axis=1)
        return self.out(mixed)


class GRUCell(Module):
    """Gated recurrent unit on 1 x n row vectors"""

    def __init__(self, factory: ParameterFactory, input_size: int, hidden_size: int):
        self.hidden_size = hidden_size
        self.input_map = Linear(factory, input_size, 3 * hidden_size)
        self.hidden_map = Linear(factory, hidden_size, 3 * hidden_size)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        H = self.hidden_size
        gx = self.input_map(x)
        gh = self.hidden_map(h)
        r = ops.sigmoid(ops.take(gx, 1, 0, H) + ops.take(gh, 1, 0, H))
        z = ops.sigmoid(ops.take(gx, 1, H, 2 * H) + ops.take(gh, 1, H, 2 * H))
        n = ops.activation(ops.take(gx, 1, 2 * H, 3 * H) + r * ops.take(gh, 1, 2 * H, 3 * H), "tanh")
        # h' = (1 - z) * n + z * h
        return n + z * (h - n)

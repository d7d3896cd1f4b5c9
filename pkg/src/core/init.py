"""
Seeded parameter initialization
Weights are uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start at zero
"""

from typing import Sequence, Union
import numpy as np

from .tensor import Tensor, resolve_dtype


class ParameterFactory:
    """Creates trainable tensors from one seeded generator at a fixed precision"""

    def __init__(self, seed: int = 0, precision: Union[str, np.dtype] = "float64"):
        self.rng = np.random.default_rng(seed)
        self.dtype = resolve_dtype(precision)

    def weight(self, shape: Sequence[int], fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(max(1, fan_in))
        data = self.rng.uniform(-bound, bound, size=tuple(shape)).astype(self.dtype)
        return Tensor(data, requires_grad=True)

    def zeros(self, shape: Sequence[int]) -> Tensor:
        return Tensor(np.zeros(tuple(shape), dtype=self.dtype), requires_grad=True)

    def ones(self, shape: Sequence[int]) -> Tensor:
        return Tensor(np.ones(tuple(shape), dtype=self.dtype), requires_grad=True)

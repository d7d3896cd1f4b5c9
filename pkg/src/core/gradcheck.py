"""
Finite-difference verification of backward rules
"""

from typing import Callable, Optional
import numpy as np

from .tensor import Tensor, backward
from ..utils.errors import ContractError, NumericError


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5,
               max_coords: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """
    Compare the analytic gradient of a scalar map with central differences

    Args:
        f: Differentiable map returning a single-element tensor
        x: Point to probe; its data is perturbed in place and restored
        eps: Central-difference step
        max_coords: Probe only this many randomly chosen coordinates (all when None)
        rng: Generator used to choose coordinates

    Returns:
        max over probed coordinates of |analytic - numeric| / max(1, |analytic|)
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    x.requires_grad = True
    x.zero_grad()
    out = f(x)
    if out.size != 1:
        raise ContractError(f"grad_check needs a scalar-valued map, got shape {out.shape}")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    coords = np.arange(flat.size)
    if max_coords is not None and max_coords < flat.size:
        rng = rng if rng is not None else np.random.default_rng(0)
        coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

    worst = 0.0
    for index in coords:
        original = flat[index]
        flat[index] = original + eps
        plus = f(x).item()
        flat[index] = original - eps
        minus = f(x).item()
        flat[index] = original
        if not (np.isfinite(plus) and np.isfinite(minus)):
            raise NumericError(f"non-finite value while probing coordinate {int(index)}")
        numeric = (plus - minus) / (2.0 * eps)
        a = float(analytic.reshape(-1)[index])
        if not np.isfinite(a):
            raise NumericError(f"non-finite analytic gradient at coordinate {int(index)}")
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst

"""
Multi-task training objective
total = l_wp * waypoint + l_O * density + l_M * bev + l_tf * traffic + l_wc * weather
All terms are means so their scale does not depend on the map resolution
"""

from dataclasses import asdict, dataclass, replace
from typing import Mapping, Optional, Tuple, Union
import numpy as np

from ..core import ops
from ..core.tensor import Tensor
from ..data.density_codec import CHANNELS_PER_STEP, TIMESTEPS
from ..utils.config import LOSS, LossWeights, WEATHER_CLASSES
from ..utils.errors import ContractError, DimensionError, NumericError

Scalar = Union[Tensor, float]

# head id -> the loss weight an ablation zeroes
ABLATION_WEIGHTS = {"density": "lambda_O", "bev": "lambda_M", "traffic": "lambda_tf", "weather": "lambda_wc"}


@dataclass
class LossBreakdown:
    """Scalar values of every loss term; tensor holds the differentiable total when one was built"""
    total: float
    wp: float
    O: float
    O_heat: float
    O_reg: float
    M: float
    tf: float
    tf_light: float
    tf_sign: float
    wc: float
    tensor: Optional[Tensor] = None

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("tensor")
        return row


def _value(x: Scalar) -> float:
    return x.item() if isinstance(x, Tensor) else float(x)


def _constant(array, like: Tensor) -> Tensor:
    return Tensor(np.asarray(array, dtype=like.dtype))


def _zero(like: Tensor) -> Tensor:
    return Tensor(np.zeros(1, dtype=like.dtype))


def waypoint_loss(pred: Tensor, expert) -> Tensor:
    """Mean absolute error over all 8 waypoint coordinates"""
    expert = np.asarray(expert, dtype=np.float64)
    if pred.shape != (4, 2) or expert.shape != (4, 2):
        raise ContractError(f"waypoint loss needs two 4 x 2 sets, got {pred.shape} and {expert.shape}")
    return ops.mean(ops.abs(pred - _constant(expert, pred)))


def density_loss(pred: Tensor, target: np.ndarray, mask: np.ndarray,
                 alpha: float = LOSS.alpha, beta: float = LOSS.beta) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Heatmap cross-entropy plus masked smooth-L1 regression

    Args:
        pred: 21 x R x R predicted density (heat channels already in (0, 1))
        target: 21 x R x R encoded ground truth
        mask: 3 x R x R boolean centre-cell mask, one plane per timestep
        alpha: Heat term weight
        beta: Regression term weight

    Returns:
        (alpha * heat + beta * reg, heat, reg)
    """
    target = np.asarray(target)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != target.shape:
        raise ContractError(f"density shapes differ: {pred.shape} vs {target.shape}")
    if pred.ndim != 3 or pred.shape[0] != CHANNELS_PER_STEP * TIMESTEPS:
        raise DimensionError(f"density map must be 21 x R x R, got {pred.shape}")
    if mask.shape != (TIMESTEPS,) + pred.shape[1:]:
        raise DimensionError(f"mask must be {(TIMESTEPS,) + pred.shape[1:]}, got {mask.shape}")

    per_step = CHANNELS_PER_STEP - 1
    heat_terms, reg_terms = [], []
    for t in range(TIMESTEPS):
        base = t * CHANNELS_PER_STEP
        heat = ops.take(pred, 0, base, base + 1)
        heat_terms.append(ops.sum(ops.binary_cross_entropy(heat, target[base:base + 1])))
        if mask[t].any():
            weights = np.broadcast_to(mask[t], (per_step,) + mask.shape[1:])
            residual = ops.take(pred, 0, base + 1, base + CHANNELS_PER_STEP) \
                - _constant(target[base + 1:base + CHANNELS_PER_STEP], pred)
            reg_terms.append(ops.sum(ops.smooth_l1(residual) * _constant(weights, pred)))

    heat_total = heat_terms[0]
    for term in heat_terms[1:]:
        heat_total = heat_total + term
    heat_loss = heat_total / float(TIMESTEPS * pred.shape[1] * pred.shape[2])

    supervised = int(mask.sum()) * per_step
    if supervised:
        reg_total = reg_terms[0]
        for term in reg_terms[1:]:
            reg_total = reg_total + term
        reg_loss = reg_total / float(supervised)
    else:
        reg_loss = _zero(pred)
    return heat_loss * alpha + reg_loss * beta, heat_loss, reg_loss


def bev_loss(logits: Tensor, target: np.ndarray) -> Tensor:
    """Mean per-pixel 3-class cross-entropy of 3 x R x R logits against R x R class ids"""
    target = np.asarray(target)
    if logits.ndim != 3 or logits.shape[0] != 3 or target.shape != logits.shape[1:]:
        raise DimensionError(f"bev loss needs 3 x R x R logits and R x R targets, got {logits.shape}, {target.shape}")
    if target.size and (target.min() < 0 or target.max() > 2 or not np.issubdtype(target.dtype, np.integer)):
        raise ContractError("bev class ids must be integers in {0, 1, 2}")
    one_hot = np.stack([target == c for c in range(3)]).astype(logits.dtype)
    picked = ops.sum(ops.log_softmax(logits, axis=0) * _constant(one_hot, logits))
    return picked * (-1.0 / target.size)


def traffic_loss(pred: Tensor, target, gamma: float = LOSS.gamma,
                 delta: float = LOSS.delta) -> Tuple[Tensor, Tensor, Tensor]:
    """gamma * BCE(stop-required light) + delta * BCE(stop sign); returns (total, light, sign)"""
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != (2,) or target.shape != (2,):
        raise ContractError(f"traffic loss needs 2 scores and 2 targets, got {pred.shape} and {target.shape}")
    if np.any(pred.data <= 0.0) or np.any(pred.data >= 1.0) or not np.all(np.isfinite(pred.data)):
        raise NumericError(f"traffic scores must lie strictly in (0, 1), got {pred.data}")
    bce = ops.binary_cross_entropy(pred, target, eps=0.0)
    light = ops.take(bce, 0, 0, 1)
    sign = ops.take(bce, 0, 1, 2)
    return light * gamma + sign * delta, light, sign


def weather_loss(logits: Tensor, weather: Union[int, str]) -> Tensor:
    """4-class cross-entropy from weather logits"""
    index = WEATHER_CLASSES.index(weather) if isinstance(weather, str) else int(weather)
    if logits.shape != (len(WEATHER_CLASSES),) or not 0 <= index < len(WEATHER_CLASSES):
        raise ContractError(f"weather loss needs {len(WEATHER_CLASSES)} logits and a valid class, "
                            f"got {logits.shape} and {weather!r}")
    return ops.take(ops.log_softmax(logits, axis=0), 0, index, index + 1) * -1.0


def total_loss(parts: Mapping[str, Scalar], weights: LossWeights = LOSS) -> LossBreakdown:
    """
    Weighted sum of the five task losses

    Args:
        parts: wp, O, M, tf, wc (tensors or floats) and optionally the
            O_heat, O_reg, tf_light and tf_sign sub-terms for reporting
        weights: Loss balance coefficients

    Returns:
        LossBreakdown; .tensor is set when any main part is a tensor
    """
    weights.validate()
    terms = [("wp", weights.lambda_wp), ("O", weights.lambda_O), ("M", weights.lambda_M),
             ("tf", weights.lambda_tf), ("wc", weights.lambda_wc)]
    missing = [name for name, _ in terms if name not in parts]
    if missing:
        raise ContractError(f"total_loss is missing parts {missing}")

    total_value = 0.0
    for name, lam in terms:
        total_value += lam * _value(parts[name])

    tensor = None
    for name, lam in terms:
        part = parts[name]
        if isinstance(part, Tensor):
            term = part * lam
            tensor = term if tensor is None else tensor + term
    if tensor is not None:
        total_value = tensor.item() + sum(lam * _value(parts[name]) for name, lam in terms
                                          if not isinstance(parts[name], Tensor))

    return LossBreakdown(
        total=total_value, wp=_value(parts["wp"]), O=_value(parts["O"]),
        O_heat=_value(parts.get("O_heat", 0.0)), O_reg=_value(parts.get("O_reg", 0.0)),
        M=_value(parts["M"]), tf=_value(parts["tf"]),
        tf_light=_value(parts.get("tf_light", 0.0)), tf_sign=_value(parts.get("tf_sign", 0.0)),
        wc=_value(parts["wc"]), tensor=tensor,
    )


def ablated_weights(weights: LossWeights, heads) -> LossWeights:
    """Zero the loss weight of every ablated auxiliary head"""
    changes = {}
    for head in heads:
        if head not in ABLATION_WEIGHTS:
            raise ContractError(f"cannot ablate unknown head {head!r}")
        changes[ABLATION_WEIGHTS[head]] = 0.0
    return replace(weights, **changes)


def compute_losses(outputs, sample, weights: LossWeights = LOSS) -> LossBreakdown:
    """All task losses of one forward pass against one training sample"""
    density, heat, reg = density_loss(outputs.density, sample.density, sample.density_mask,
                                      weights.alpha, weights.beta)
    traffic, light, sign = traffic_loss(outputs.traffic, sample.traffic, weights.gamma, weights.delta)
    parts = {
        "wp": waypoint_loss(outputs.waypoints, sample.waypoints),
        "O": density, "O_heat": heat, "O_reg": reg,
        "M": bev_loss(outputs.bev, sample.bev),
        "tf": traffic, "tf_light": light, "tf_sign": sign,
        "wc": weather_loss(outputs.weather_logits, sample.weather),
    }
    return total_loss(parts, weights)

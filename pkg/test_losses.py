"""
Multi-task objective tests
"""

import math
import numpy as np
import pytest

from src.core import ops
from src.core.tensor import Tensor, backward
from src.data.density_codec import AgentBox, encode
from src.model.losses import (
    LossBreakdown, ablated_weights, bev_loss, density_loss, total_loss, traffic_loss,
    waypoint_loss, weather_loss,
)
from src.utils.config import LossWeights
from src.utils.errors import ContractError, DimensionError, NumericError

EPS = 1e-4
HEAT_CHANNELS = [0, 7, 14]


def entropy(t):
    return -(t * np.log(t) + (1 - t) * np.log(1 - t))


def test_waypoint_loss_values():
    expert = np.array([[1.0, 0.0], [2.0, 0.1], [3.0, 0.2], [4.0, 0.3]])
    assert waypoint_loss(Tensor(expert), expert).item() == 0.0
    assert waypoint_loss(Tensor(expert + [1.0, 0.0]), expert).item() == pytest.approx(0.5)
    moved = expert.copy()
    moved[2, 1] += 2.0
    assert waypoint_loss(Tensor(moved), expert).item() == pytest.approx(0.25)
    with pytest.raises(ContractError):
        waypoint_loss(Tensor(np.zeros((3, 2))), expert[:3])


def _density_target(R=16):
    density, mask = encode([AgentBox(5.0, 1.0, 2.0, 4.5, 0.3, 1), AgentBox(12.0, -3.0, 1.9, 4.0, 1.0, 3)], R)
    target = density.transpose(2, 0, 1).copy()
    target[HEAT_CHANNELS] = np.where(target[HEAT_CHANNELS] > 0.5, 1 - EPS, EPS)
    return target, mask.transpose(2, 0, 1)


def test_density_loss_perfect_prediction_is_entropy():
    target, mask = _density_target()
    combined, heat, reg = density_loss(Tensor(target.copy()), target, mask)
    assert heat.item() == pytest.approx(float(entropy(target[HEAT_CHANNELS]).mean()), rel=1e-9)
    assert reg.item() == 0.0
    assert combined.item() == pytest.approx(heat.item())


def test_density_loss_empty_mask_reg_is_zero():
    target, mask = _density_target()
    pred = Tensor(np.clip(target + 0.3, EPS, 1 - EPS))
    _, _, reg = density_loss(pred, target, np.zeros_like(mask))
    assert reg.item() == 0.0


def test_density_loss_single_regression_residual():
    target, mask = _density_target()
    pred = target.copy()
    row, col = np.argwhere(mask[0])[0]
    pred[1, row, col] += 0.5
    _, _, reg = density_loss(Tensor(pred), target, mask)
    assert reg.item() == pytest.approx(0.125 / (mask.sum() * 6))


def test_density_loss_shape_errors():
    target, mask = _density_target()
    with pytest.raises(ContractError):
        density_loss(Tensor(target[:, :8, :8].copy()), target, mask)
    with pytest.raises(DimensionError):
        density_loss(Tensor(target.copy()), target, mask[:2])


def test_bev_loss_values():
    target = np.random.default_rng(0).integers(0, 3, (8, 8))
    logits = np.full((3, 8, 8), -1000.0)
    for c in range(3):
        logits[c][target == c] = 0.0
    assert bev_loss(Tensor(logits), target).item() == 0.0
    assert bev_loss(Tensor(np.zeros((3, 8, 8))), target).item() == pytest.approx(math.log(3))
    with pytest.raises(ContractError):
        bev_loss(Tensor(np.zeros((3, 8, 8))), np.full((8, 8), 3))


def test_traffic_loss_values():
    total, light, sign = traffic_loss(Tensor([1 - 1e-7, 1e-7]), [1, 0])
    assert total.item() <= 1e-6
    total, light, sign = traffic_loss(Tensor([0.5, 0.5]), [1, 0])
    assert light.item() == pytest.approx(math.log(2)) and sign.item() == pytest.approx(math.log(2))
    total, _, _ = traffic_loss(Tensor([0.5, 0.5]), [0, 1], gamma=2.0, delta=1.0)
    assert total.item() == pytest.approx(3 * math.log(2))
    with pytest.raises(NumericError):
        traffic_loss(Tensor([1.0, 0.5]), [1, 0])


def test_traffic_loss_accepts_confident_sigmoid_scores():
    for precision, logit in (("float32", 20.0), ("float64", 40.0)):
        logits = Tensor([logit, -logit], requires_grad=True, dtype=precision)
        total, light, sign = traffic_loss(ops.sigmoid(logits), [1, 0])
        assert math.isfinite(total.item()) and total.item() < 1e-6
        wrong, _, _ = traffic_loss(ops.sigmoid(logits), [0, 1])
        assert math.isfinite(wrong.item()) and wrong.item() > 10.0
        backward(wrong)
        assert np.all(np.isfinite(logits.grad))
        assert logits.grad[0] > 0.0 and logits.grad[1] < 0.0


def test_weather_loss_values():
    assert weather_loss(Tensor(np.zeros(4)), "rainy").item() == pytest.approx(math.log(4))
    assert weather_loss(Tensor([0.0, 0.0, 50.0, 0.0]), 2).item() < 1e-20
    with pytest.raises(ContractError):
        weather_loss(Tensor(np.zeros(4)), 4)


def test_total_loss_identities():
    zero = total_loss({k: 0.0 for k in ("wp", "O", "M", "tf", "wc")})
    assert isinstance(zero, LossBreakdown) and zero.total == 0.0
    ones = total_loss({k: 1.0 for k in ("wp", "O", "M", "tf", "wc")})
    assert ones.total == pytest.approx(2.2, abs=1e-12)
    assert ones.tensor is None

    rng = np.random.default_rng(11)
    for _ in range(50):
        values = dict(zip(("wp", "O", "M", "tf", "wc"), rng.uniform(0, 10, 5)))
        weights = LossWeights(*rng.uniform(0.01, 2.0, 5))
        got = total_loss(values, weights).total
        expected = (weights.lambda_wp * values["wp"] + weights.lambda_O * values["O"]
                    + weights.lambda_M * values["M"] + weights.lambda_tf * values["tf"]
                    + weights.lambda_wc * values["wc"])
        assert abs(got - expected) < 1e-9


def test_total_loss_tensor_backpropagates_weights():
    parts = {k: Tensor([1.0], requires_grad=True) for k in ("wp", "O", "M", "tf", "wc")}
    breakdown = total_loss(parts)
    backward(breakdown.tensor)
    assert [parts[k].grad[0] for k in ("wp", "O", "M", "tf", "wc")] == pytest.approx([1.0, 0.4, 0.4, 0.2, 0.2])


def test_total_loss_contracts():
    with pytest.raises(ContractError):
        total_loss({"wp": 1.0})
    with pytest.raises(ContractError):
        total_loss({k: 1.0 for k in ("wp", "O", "M", "tf", "wc")}, LossWeights(lambda_wp=0.0))
    with pytest.raises(ContractError):
        total_loss({k: 1.0 for k in ("wp", "O", "M", "tf", "wc")}, LossWeights(lambda_O=-0.1))


def test_ablation_zeroes_head_weight():
    weights = ablated_weights(LossWeights(), ("density", "weather"))
    assert weights.lambda_O == 0.0 and weights.lambda_wc == 0.0
    assert weights.lambda_M == 0.4 and weights.lambda_wp == 1.0
    with pytest.raises(ContractError):
        ablated_weights(LossWeights(), ("planning",))

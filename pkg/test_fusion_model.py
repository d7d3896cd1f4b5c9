"""
Fusion network tests: backbone extents, transformer fusion, scene feature,
channel attention, heads, persistence and an end-to-end gradient check
"""

from dataclasses import replace
import numpy as np
import pytest

from src.core.gradcheck import grad_check
from src.core.init import ParameterFactory
from src.core.tensor import Tensor, backward
from src.data.dataset import Sample
from src.data.density_codec import AgentBox, encode
from src.model.backbone import ConvBackbone
from src.model.heads import EcaModule, PlanningHead, RuleHeads
from src.model.losses import compute_losses, traffic_loss
from src.model.network import DsuNetwork, load_network, stored_model_config
from src.model.transfuser import TransfuserStage
from src.utils.config import HEAD_IDS, LossWeights, ModelConfig
from src.utils.errors import ContractError

TINY = ModelConfig(width_factor=0.0625, R=16, gru_hidden=8, attention_heads=2, input_size=64, token_grid=2,
                   planning_mlp=(16, 16, 8), decoder_channels=(8, 8, 8, 8, 8), precision="float64")


def random_inputs(config, seed=0):
    rng = np.random.default_rng(seed)
    s = config.input_size
    return rng.uniform(0, 1, (3, s, s)), rng.uniform(0, 1, (4, s, s)), np.array([12.0, 1.5])


def synthetic_sample(config, seed=0):
    rng = np.random.default_rng(seed)
    image, lidar, goal = random_inputs(config, seed)
    agents = [AgentBox(9.3, 2.2, 2.0, 4.5, 0.1, 1), AgentBox(20.1, -4.0, 1.8, 4.2, 3.0, 2)]
    density, mask = encode(agents, config.R)
    return Sample(
        image=image, lidar=lidar, goal=goal,
        waypoints=np.array([[1.5, 0.0], [3.0, 0.1], [4.5, 0.2], [6.0, 0.4]]),
        density=density.transpose(2, 0, 1), density_mask=mask.transpose(2, 0, 1),
        bev=rng.integers(0, 3, (config.R, config.R)), traffic=np.array([1.0, 0.0]), weather=2,
    )


# ---------------------------------------------------------------- backbone
def test_backbone_extents_and_scaled_channels():
    config = ModelConfig(width_factor=0.25, precision="float64")
    assert config.stage_channels == (16, 32, 64, 128)
    backbone = ConvBackbone(ParameterFactory(0, "float64"), 3, config)
    stages = backbone(Tensor(np.random.default_rng(0).uniform(0, 1, (3, 256, 256))))
    assert [s.shape for s in stages] == [(16, 64, 64), (32, 32, 32), (64, 16, 16), (128, 8, 8)]


def test_backbone_zero_input_gives_zero_stages():
    backbone = ConvBackbone(ParameterFactory(1, "float64"), 4, TINY)
    for stage in backbone(Tensor(np.zeros((4, 64, 64)))):
        assert not stage.numpy().any()


def test_backbone_rejects_indivisible_extents():
    backbone = ConvBackbone(ParameterFactory(0, "float64"), 3, TINY)
    with pytest.raises(ContractError):
        backbone(Tensor(np.zeros((3, 48, 48))))


# ---------------------------------------------------------------- transfuser
def test_transfuser_token_count():
    stage = TransfuserStage(ParameterFactory(0, "float64"), 16, 8, heads=4, token_grid=8)
    assert stage.patch == 1
    assert stage.token_count == 128


def test_transfuser_identity_with_zero_output_projections():
    stage = TransfuserStage(ParameterFactory(2, "float64"), 8, 8, heads=2, token_grid=4)
    stage.attn.out.weight.data[...] = 0.0
    stage.mlp.layers[-1].weight.data[...] = 0.0
    rng = np.random.default_rng(2)
    img, lidar = Tensor(rng.standard_normal((8, 8, 8))), Tensor(rng.standard_normal((8, 8, 8)))
    img_out, lidar_out = stage(img, lidar)
    assert np.array_equal(img_out.numpy(), img.numpy())
    assert np.array_equal(lidar_out.numpy(), lidar.numpy())


def test_transfuser_mixes_modalities():
    stage = TransfuserStage(ParameterFactory(3, "float64"), 8, 4, heads=2, token_grid=4)
    rng = np.random.default_rng(3)
    img = Tensor(rng.standard_normal((8, 4, 4)))
    a, _ = stage(img, Tensor(np.zeros((8, 4, 4))))
    b, _ = stage(img, Tensor(rng.standard_normal((8, 4, 4))))
    assert not np.allclose(a.numpy(), b.numpy())


def test_transfuser_extent_mismatch():
    stage = TransfuserStage(ParameterFactory(0, "float64"), 8, 8, heads=2, token_grid=4)
    with pytest.raises(ContractError):
        stage(Tensor(np.zeros((8, 8, 8))), Tensor(np.zeros((8, 4, 4))))


# ---------------------------------------------------------------- channel attention and heads
def test_eca_zero_weights_halve_feature():
    eca = EcaModule(ParameterFactory(0, "float64"), 5)
    eca.kernel.data[...] = 0.0
    f = Tensor(np.random.default_rng(0).standard_normal((12, 2, 2)))
    out, w = eca(f)
    assert np.all(w.numpy() == 0.5)
    assert np.array_equal(out.numpy(), f.numpy() / 2)


def test_eca_saturated_bias_passes_feature():
    eca = EcaModule(ParameterFactory(0, "float64"), 5)
    eca.kernel.data[...] = 0.0
    eca.bias.data[...] = 50.0
    f = Tensor(np.random.default_rng(1).standard_normal((12, 2, 2)))
    out, _ = eca(f)
    assert np.max(np.abs(out.numpy() - f.numpy())) < 1e-6


def test_eca_weights_stay_inside_open_interval():
    for precision, bias in (("float32", 30.0), ("float32", -30.0), ("float64", 60.0), ("float64", -60.0)):
        eca = EcaModule(ParameterFactory(0, precision), 5)
        eca.kernel.data[...] = 0.0
        eca.bias.data[...] = bias
        f = Tensor(np.random.default_rng(2).standard_normal((12, 2, 2)), dtype=precision)
        _, w = eca(f)
        assert np.all((w.numpy() > 0.0) & (w.numpy() < 1.0))


def test_planning_zero_weights_stay_at_origin():
    head = PlanningHead(ParameterFactory(0, "float64"), TINY)
    head.delta.weight.data[...] = 0.0
    waypoints, deltas = head(Tensor(np.random.default_rng(0).standard_normal((64, 2, 2))), (10.0, 2.0))
    assert waypoints.shape == (4, 2)
    assert not waypoints.numpy().any()
    assert len(deltas) == 4


def test_planning_waypoints_accumulate_deltas_and_read_goal():
    head = PlanningHead(ParameterFactory(4, "float64"), TINY)
    feature = Tensor(np.random.default_rng(4).standard_normal((64, 2, 2)))
    waypoints, deltas = head(feature, (10.0, 2.0))
    steps = np.concatenate([d.numpy() for d in deltas])
    assert np.allclose(waypoints.numpy(), np.cumsum(steps, axis=0), atol=1e-12)
    other, _ = head(feature, (-5.0, 8.0))
    assert not np.allclose(other.numpy(), waypoints.numpy())


def test_rule_heads_zero_weights():
    rules = RuleHeads(ParameterFactory(0, "float64"), 16)
    rules.traffic.weight.data[...] = 0.0
    rules.weather.weight.data[...] = 0.0
    f = Tensor(np.random.default_rng(0).standard_normal((16, 2, 2)))
    traffic, logits, weather = rules(f, f)
    assert np.array_equal(traffic.numpy(), [0.5, 0.5])
    assert np.allclose(weather.numpy(), 0.25)


def test_rule_heads_confident_float32_scores_stay_trainable():
    rules = RuleHeads(ParameterFactory(0, "float32"), 16)
    rules.traffic.weight.data[...] = 0.0
    rules.traffic.bias.data[...] = [20.0, -20.0]
    f = Tensor(np.random.default_rng(0).standard_normal((16, 2, 2)), dtype="float32")
    traffic, _, _ = rules(f, f)
    scores = traffic.numpy()
    assert scores.dtype == np.float32
    assert np.all((scores > 0.0) & (scores < 1.0))
    total, _, _ = traffic_loss(traffic, [0, 1])
    assert np.isfinite(total.item())
    backward(total)
    assert np.all(np.isfinite(rules.traffic.bias.grad))


# ---------------------------------------------------------------- network
def test_tiny_forward_shapes_and_ranges():
    network = DsuNetwork(TINY)
    out = network(*random_inputs(TINY))
    assert out.scene.shape == (TINY.scene_channels, 2, 2)
    assert out.waypoints.shape == (4, 2)
    assert out.density.shape == (21, 16, 16)
    assert out.bev.shape == (3, 16, 16)
    assert out.traffic.shape == (2,) and out.weather.shape == (4,)
    assert abs(out.weather.numpy().sum() - 1.0) < 1e-12
    heat = out.density.numpy()[[0, 7, 14]]
    assert np.all((heat > 0) & (heat < 1))
    assert set(out.eca) == set(HEAD_IDS)
    assert all(w.shape == (TINY.scene_channels,) for w in out.eca.values())


def test_reduced_fused_width():
    config = replace(TINY, fused_channels=128)
    assert DsuNetwork(config).fuse(Tensor(np.zeros((32, 2, 2))), Tensor(np.zeros((32, 2, 2)))).shape == (128, 2, 2)


def test_fuse_extent_mismatch():
    network = DsuNetwork(TINY)
    with pytest.raises(ContractError):
        network.fuse(Tensor(np.zeros((32, 2, 2))), Tensor(np.zeros((32, 4, 4))))


def test_unknown_head_and_bad_inputs():
    network = DsuNetwork(TINY)
    with pytest.raises(ContractError):
        network.eca_apply(Tensor(np.zeros((64, 2, 2))), "steering")
    image, lidar, _ = random_inputs(TINY)
    with pytest.raises(ContractError):
        network(image, lidar, [np.nan, 0.0])
    with pytest.raises(ContractError):
        network(lidar, lidar, [1.0, 0.0])


def test_forward_is_deterministic():
    a = DsuNetwork(TINY)(*random_inputs(TINY))
    b = DsuNetwork(TINY)(*random_inputs(TINY))
    assert np.array_equal(a.waypoints.numpy(), b.waypoints.numpy())
    assert np.array_equal(a.density.numpy(), b.density.numpy())


def test_full_scale_shapes():
    network = DsuNetwork(ModelConfig())
    out = network(*random_inputs(ModelConfig()))
    assert out.scene.shape == (1024, 8, 8)
    assert out.density.shape == (21, 256, 256)
    assert out.bev.shape == (3, 256, 256)
    assert out.waypoints.shape == (4, 2)
    assert out.traffic.shape == (2,) and out.weather.shape == (4,)
    assert network.fusion[-1].token_count == 128


def test_checkpoint_round_trip_and_meta(tmp_path):
    network = DsuNetwork(TINY)
    path = network.save(tmp_path / "tiny.ckpt")
    loaded, records = load_network(path, TINY)
    for (name, p), (_, q) in zip(network.named_parameters(), loaded.named_parameters()):
        assert np.array_equal(p.numpy(), q.numpy()), name
    assert stored_model_config(records, replace(ModelConfig(), precision="float64")).input_size == 64

    wider = replace(TINY, width_factor=0.125)
    with pytest.raises(ContractError) as info:
        load_network(path, wider)
    assert "0.0625" in str(info.value) and "0.125" in str(info.value)


def test_end_to_end_gradient_check():
    network = DsuNetwork(TINY)
    sample = synthetic_sample(TINY)

    def loss(_):
        outputs = network(sample.image, sample.lidar, sample.goal)
        return compute_losses(outputs, sample, LossWeights()).tensor

    rng = np.random.default_rng(0)
    checked = []
    for name, param in network.named_parameters():
        error = grad_check(loss, param, eps=1e-5, max_coords=2, rng=rng)
        assert error < 1e-3, f"{name}: relative error {error:.2e}"
        checked.append(name)
    assert len(checked) == len(network.parameters())
    prefixes = {name.split(".")[0] for name in checked}
    assert {"image_backbone", "lidar_backbone", "fusion", "planning", "density", "bev", "rules", "eca"} <= prefixes

"""
Tensor engine tests: primitive values, backward rules against central
differences, graph accumulation and the checkpoint container
"""

import math
import numpy as np
import pytest

from src.core import ops
from src.core.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from src.core.gradcheck import grad_check
from src.core.init import ParameterFactory
from src.core.tensor import GradGraph, Tensor, backward, from_op
from src.utils.errors import ContractError, DataIOError, DimensionError, NumericError


def rand(rng, *shape):
    return Tensor(rng.standard_normal(shape), dtype="float64")


def naive_conv(x, w, stride, padding):
    c, h, wd = x.shape
    o, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((o, oh, ow))
    for oc in range(o):
        for i in range(oh):
            for j in range(ow):
                total = 0.0
                for ic in range(c):
                    for a in range(k):
                        for b in range(k):
                            total += w[oc, ic, a, b] * xp[ic, i * stride + a, j * stride + b]
                out[oc, i, j] = total
    return out


# ---------------------------------------------------------------- values
def test_matmul_values():
    eye = Tensor(np.eye(2))
    m = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(ops.matmul(eye, m).numpy(), m.numpy())
    assert ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).item() == 11.0


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as info:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "(2, 3)" in str(info.value)


def test_conv2d_identity_and_sum():
    x = Tensor(np.arange(18, dtype=np.float64).reshape(2, 3, 3))
    kernel = Tensor(np.eye(2).reshape(2, 2, 1, 1))
    assert np.array_equal(ops.conv2d(x, kernel).numpy(), x.numpy())
    ones = ops.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert ones.shape == (1, 1, 1) and ones.item() == 9.0


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_naive_loops_exactly(stride, padding):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 8, 8))
    w = rng.standard_normal((4, 2, 3, 3))
    out = ops.conv2d(Tensor(x), Tensor(w), stride, padding).numpy()
    assert np.array_equal(out, naive_conv(x, w, stride, padding))


def test_conv2d_kernel_larger_than_input():
    with pytest.raises(DimensionError):
        ops.conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))


def test_activation_values():
    assert ops.sigmoid(Tensor([0.0])).item() == 0.5
    assert np.array_equal(ops.relu(Tensor([-3.0, 3.0])).numpy(), [0.0, 3.0])
    with pytest.raises(ContractError):
        ops.activation(Tensor([1.0]), "swish")


def test_softmax_stable_and_normalized():
    assert np.allclose(ops.softmax(Tensor(np.zeros(4))).numpy(), 0.25)
    assert np.array_equal(ops.softmax(Tensor([1000.0, 1000.0])).numpy(), [0.5, 0.5])
    rng = np.random.default_rng(0)
    s = ops.softmax(rand(rng, 7)).numpy()
    assert abs(s.sum() - 1.0) < 1e-12
    with pytest.raises(DimensionError):
        ops.softmax(Tensor(np.ones(3)), axis=2)


def test_reductions():
    const = ops.reduce(Tensor(np.full((3, 4, 4), 2.5)), "avg_pool_global")
    assert const.shape == (3, 1, 1) and np.all(const.numpy() == 2.5)
    assert ops.mean(Tensor([1.0, 2.0, 3.0, 4.0])).item() == 2.5
    ramp = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    pooled = ops.reduce(Tensor(ramp), "avg_pool_2d", 2).numpy()
    expected = np.array([[[np.mean(ramp[0, i:i + 2, j:j + 2]) for j in (0, 2)] for i in (0, 2)]])
    assert np.array_equal(pooled, expected)
    with pytest.raises(DimensionError):
        ops.reduce(Tensor(np.ones((1, 4, 4))), "avg_pool_2d", 8)


# ---------------------------------------------------------------- gradients
def test_backward_linear_and_square():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    backward(ops.sum(x))
    assert np.array_equal(x.grad, np.ones(3))
    x.zero_grad()
    backward(ops.sum(x * x))
    assert np.array_equal(x.grad, 2 * x.numpy())


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        backward(Tensor(np.ones(2), requires_grad=True))


def test_gradients_accumulate_across_fan_out():
    rng = np.random.default_rng(1)
    data = rng.standard_normal(5)
    f = lambda t: ops.sum(ops.sigmoid(t))  # noqa: E731
    g = lambda t: ops.sum(t * t)  # noqa: E731

    x = Tensor(data.copy(), requires_grad=True)
    backward(f(x) + g(x))
    joint = x.grad.copy()

    separate = np.zeros(5)
    for fn in (f, g):
        y = Tensor(data.copy(), requires_grad=True)
        backward(fn(y))
        separate += y.grad
    assert np.allclose(joint, separate, rtol=0, atol=1e-12)


def test_graph_is_topological():
    x = Tensor(np.ones(3), requires_grad=True)
    y = ops.sigmoid(x)
    z = ops.sum(y * y + y)
    graph = GradGraph.trace(z)
    seen = set()
    for node in graph:
        for parent in node.inputs:
            if parent.node is not None:
                assert id(parent.node) in seen
        seen.add(id(node))
    assert len(seen) == len(graph)


PRIMITIVES = {
    "matmul": lambda x, c: ops.sum(ops.matmul(ops.reshape(x, (4, 5)), c["b"])),
    "conv2d": lambda x, c: ops.sum(ops.conv2d(ops.reshape(x, (1, 4, 5)), c["k"], 1, 1) * c["wconv"]),
    "relu": lambda x, c: ops.sum(ops.relu(x) * c["w"]),
    "gelu": lambda x, c: ops.sum(ops.activation(x, "gelu") * c["w"]),
    "sigmoid": lambda x, c: ops.sum(ops.sigmoid(x) * c["w"]),
    "tanh": lambda x, c: ops.sum(ops.activation(x, "tanh") * c["w"]),
    "softmax": lambda x, c: ops.sum(ops.softmax(ops.reshape(x, (4, 5)), axis=1) * c["w45"]),
    "log_softmax": lambda x, c: ops.sum(ops.log_softmax(ops.reshape(x, (4, 5)), axis=0) * c["w45"]),
    "avg_pool_global": lambda x, c: ops.sum(ops.reduce(ops.reshape(x, (5, 2, 2)), "avg_pool_global") * c["w511"]),
    "avg_pool_2d": lambda x, c: ops.sum(ops.reduce(ops.reshape(x, (5, 2, 2)), "avg_pool_2d", 2) * c["w511"]),
    "mean": lambda x, c: ops.mean(x * c["w"]),
    "layer_norm": lambda x, c: ops.sum(ops.layer_norm(ops.reshape(x, (4, 5))) * c["w45"]),
    "add_bias": lambda x, c: ops.sum(ops.add_bias(c["m45"], ops.take(x, 0, 0, 4), axis=0) * c["w45"]),
    "channel_scale": lambda x, c: ops.sum(ops.channel_scale(c["m45"], ops.take(x, 0, 0, 4), axis=0) * c["w45"]),
    "transpose": lambda x, c: ops.sum(ops.transpose(ops.reshape(x, (4, 5))) * c["w54"]),
    "concat": lambda x, c: ops.sum(ops.concat([x, x * 2.0], axis=0) * c["w40"]),
    "upsample_nearest": lambda x, c: ops.sum(ops.upsample_nearest(ops.reshape(x, (5, 2, 2)), 2) * c["w544"]),
    "conv1d": lambda x, c: ops.sum(ops.conv1d(x, c["k5"], c["b1"]) * c["w"]),
    "abs": lambda x, c: ops.sum(ops.abs(x) * c["w"]),
    "smooth_l1": lambda x, c: ops.sum(ops.smooth_l1(x * 3.0) * c["w"]),
    "bce": lambda x, c: ops.sum(ops.binary_cross_entropy(ops.sigmoid(x), c["t"])),
    "log": lambda x, c: ops.sum(ops.log(ops.sigmoid(x))),
    "mul": lambda x, c: ops.sum(ops.mul(x, c["w"])),
    "sub": lambda x, c: ops.sum(ops.sub(x * x, x)),
}


def _constants(rng):
    return {
        "b": rand(rng, 5, 3), "k": rand(rng, 3, 1, 3, 3), "wconv": rand(rng, 3, 4, 5),
        "w": rand(rng, 20), "w45": rand(rng, 4, 5), "w54": rand(rng, 5, 4), "w40": rand(rng, 40),
        "w511": rand(rng, 5, 1, 1), "w544": rand(rng, 5, 4, 4), "m45": rand(rng, 4, 5),
        "k5": rand(rng, 5), "b1": rand(rng, 1), "t": (rng.random(20) > 0.5).astype(np.float64),
    }


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(sorted(PRIMITIVES).index(name))
    consts = _constants(rng)
    for _ in range(10):
        x = Tensor(rng.standard_normal(20), dtype="float64")
        assert grad_check(lambda t: PRIMITIVES[name](t, consts), x, eps=1e-5) < 1e-4


def test_grad_check_linear_is_exact():
    x = Tensor(np.random.default_rng(0).standard_normal(6))
    assert grad_check(ops.sum, x) < 1e-9


def test_grad_check_sigmoid_tight():
    x = Tensor(np.random.default_rng(2).standard_normal(10))
    assert grad_check(lambda t: ops.sum(ops.sigmoid(t)), x, eps=1e-5) < 1e-6


def test_grad_check_detects_corrupted_backward():
    def broken_square(t):
        return from_op("broken", t.data * t.data, (t,), lambda g: (g * t.data,))  # true rule is 2 * t

    x = Tensor(np.random.default_rng(4).standard_normal(6) + 2.0)
    assert grad_check(lambda t: ops.sum(broken_square(t)), x) > 1e-2


def test_grad_check_reports_non_finite():
    x = Tensor(np.array([1e-6, 0.5]))
    with pytest.raises(NumericError):
        grad_check(lambda t: ops.sum(ops.log(t)), x, eps=1e-3)


# ---------------------------------------------------------------- tensors and parameters
def test_tensor_rejects_empty_extents():
    with pytest.raises(DimensionError):
        Tensor(np.zeros((0, 3)))


def test_parameter_factory_is_seeded_and_bounded():
    a = ParameterFactory(7, "float64").weight((16, 9), fan_in=9)
    b = ParameterFactory(7, "float64").weight((16, 9), fan_in=9)
    assert np.array_equal(a.numpy(), b.numpy())
    assert np.all(np.abs(a.numpy()) <= 1.0 / 3.0)
    assert ParameterFactory(0, "float32").zeros((3,)).dtype == np.float32


# ---------------------------------------------------------------- checkpoint container
def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    records = {"a.weight": rng.standard_normal((3, 4)), "b": rng.standard_normal(7), "meta/R": np.array([64.0])}
    path = save_checkpoint(tmp_path / "model.ckpt", records, "float64")
    precision, loaded = load_checkpoint(path)
    assert precision == "float64"
    assert list(loaded) == list(records)
    for name, value in records.items():
        assert loaded[name].tobytes() == value.tobytes()
    assert encode_checkpoint(loaded, "float64") == path.read_bytes()


def test_checkpoint_float32_records():
    blob = encode_checkpoint({"w": np.array([0.1, 0.2])}, "float32")
    precision, loaded = decode_checkpoint(blob)
    assert precision == "float32" and loaded["w"].dtype == np.float32
    assert loaded["w"][0] == np.float32(0.1)


def test_checkpoint_corruption_is_reported(tmp_path):
    blob = encode_checkpoint({"w": np.ones((2, 2))}, "float64")
    with pytest.raises(DataIOError):
        decode_checkpoint(blob[:-3])
    with pytest.raises(DataIOError):
        decode_checkpoint(b"NOTACKPT" + blob[6:])
    with pytest.raises(DataIOError):
        load_checkpoint(tmp_path / "missing.ckpt")
    with pytest.raises(ContractError):
        encode_checkpoint({"w": np.ones(2)}, "float16")


def test_sigmoid_stays_inside_open_interval():
    for precision, logit in (("float64", 1000.0), ("float64", 40.0), ("float32", 20.0)):
        x = Tensor([-logit, logit], requires_grad=True, dtype=precision)
        s = ops.sigmoid(x).numpy()
        assert s.dtype == np.dtype(precision)
        assert np.all(np.isfinite(s)) and 0.0 < s[0] < s[1] < 1.0
        backward(ops.sum(ops.sigmoid(x)))
        assert np.all(np.isfinite(x.grad)) and np.all(x.grad > 0.0)
    assert math.isclose(ops.log_softmax(Tensor([0.0, 0.0])).numpy()[0], -math.log(2.0))

"""
Task heads on the fused scene feature: per-head channel attention, the GRU
planning header, the density and BEV decoders and the traffic/weather heads
"""

from typing import List, Sequence, Tuple
import numpy as np

from .layers import Conv2d, GRUCell, Linear, Mlp, Module
from ..core import ops
from ..core.init import ParameterFactory
from ..core.tensor import Tensor
from ..data.density_codec import CHANNELS_PER_STEP, TIMESTEPS
from ..utils.config import MODEL, ModelConfig

T_FUTURE = 4
BEV_CLASSES = 3
TRAFFIC_OUTPUTS = 2
WEATHER_OUTPUTS = 4


class EcaModule(Module):
    """Efficient channel attention: sigmoid(conv1d(avg_pool(f))) as per-channel weights"""

    def __init__(self, factory: ParameterFactory, kernel_size: int):
        self.kernel = factory.weight((kernel_size,), fan_in=kernel_size)
        self.bias = factory.zeros((1,))

    def weights(self, feature: Tensor) -> Tensor:
        channels = feature.shape[0]
        pooled = ops.reshape(ops.reduce(feature, "avg_pool_global"), (channels,))
        return ops.sigmoid(ops.conv1d(pooled, self.kernel, self.bias))

    def forward(self, feature: Tensor) -> Tuple[Tensor, Tensor]:
        w = self.weights(feature)
        return ops.channel_scale(feature, w, axis=0), w


def pooled_vector(feature: Tensor) -> Tensor:
    """C x H x W -> 1 x C global average"""
    return ops.reshape(ops.reduce(feature, "avg_pool_global"), (1, feature.shape[0]))


class PlanningHead(Module):
    """
    Pooled scene vector -> 3-layer MLP -> autoregressive GRU chain

    Each step consumes the previous waypoint (origin first) concatenated with
    the goal point and emits a delta added to that waypoint.
    """

    def __init__(self, factory: ParameterFactory, config: ModelConfig = MODEL):
        sizes = (config.scene_channels,) + tuple(config.planning_mlp)
        self.mlp = Mlp(factory, sizes, activation="relu", final_activation="relu")
        self.init_hidden = Linear(factory, sizes[-1], config.gru_hidden)
        self.gru = GRUCell(factory, 4, config.gru_hidden)
        self.delta = Linear(factory, config.gru_hidden, 2)

    def forward(self, feature: Tensor, goal) -> Tuple[Tensor, List[Tensor]]:
        """
        Args:
            feature: ECA-weighted scene feature (C x h x w)
            goal: Goal point (x, y) in metres, ego frame

        Returns:
            (waypoints 4 x 2, list of the four 1 x 2 deltas)
        """
        dtype = feature.dtype
        goal_row = Tensor(np.asarray(goal, dtype=dtype).reshape(1, 2))
        h = self.init_hidden(self.mlp(pooled_vector(feature)))
        previous = Tensor(np.zeros((1, 2), dtype=dtype))
        waypoints, deltas = [], []
        for _ in range(T_FUTURE):
            h = self.gru(ops.concat([previous, goal_row], axis=1), h)
            delta = self.delta(h)
            previous = previous + delta
            deltas.append(delta)
            waypoints.append(previous)
        return ops.concat(waypoints, axis=0), deltas


class UpsampleDecoder(Module):
    """Stages of nearest 2x upsampling + 3x3 conv + ReLU"""

    def __init__(self, factory: ParameterFactory, in_channels: int, widths: Sequence[int]):
        sources = (in_channels,) + tuple(widths[:-1])
        self.convs = [Conv2d(factory, a, b, 3, padding=1) for a, b in zip(sources, widths)]

    @property
    def out_channels(self) -> int:
        return self.convs[-1].weight.shape[0]

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = ops.relu(conv(ops.upsample_nearest(x, 2)))
        return x


class DensityHead(Module):
    """Decoder plus 1x1 heatmap and regression convolutions; output 21 x R x R"""

    def __init__(self, factory: ParameterFactory, config: ModelConfig = MODEL):
        self.decoder = UpsampleDecoder(factory, config.scene_channels, config.decoder_widths)
        width = self.decoder.out_channels
        self.heat = Conv2d(factory, width, TIMESTEPS, 1)
        self.regression = Conv2d(factory, width, TIMESTEPS * (CHANNELS_PER_STEP - 1), 1)

    def forward(self, feature: Tensor) -> Tensor:
        x = self.decoder(feature)
        heat = ops.sigmoid(self.heat(x))
        reg = self.regression(x)
        per_step = CHANNELS_PER_STEP - 1
        parts = []
        for t in range(TIMESTEPS):
            parts.append(ops.take(heat, 0, t, t + 1))
            parts.append(ops.take(reg, 0, t * per_step, (t + 1) * per_step))
        return ops.concat(parts, axis=0)


class BevHead(Module):
    """Decoder plus a 1x1 convolution to drivable / line / other logits; output 3 x R x R"""

    def __init__(self, factory: ParameterFactory, config: ModelConfig = MODEL):
        self.decoder = UpsampleDecoder(factory, config.scene_channels, config.decoder_widths)
        self.classify = Conv2d(factory, self.decoder.out_channels, BEV_CLASSES, 1)

    def forward(self, feature: Tensor) -> Tensor:
        return self.classify(self.decoder(feature))


class RuleHeads(Module):
    """One fully connected layer each for traffic rules (sigmoid) and weather (softmax)"""

    def __init__(self, factory: ParameterFactory, channels: int):
        self.traffic = Linear(factory, channels, TRAFFIC_OUTPUTS)
        self.weather = Linear(factory, channels, WEATHER_OUTPUTS)

    def forward(self, traffic_feature: Tensor, weather_feature: Tensor) -> Tuple[Tensor, Tensor, Tensor]:
        """Returns (traffic scores (2,), weather logits (4,), weather probabilities (4,))"""
        traffic = ops.sigmoid(ops.reshape(self.traffic(pooled_vector(traffic_feature)), (TRAFFIC_OUTPUTS,)))
        logits = ops.reshape(self.weather(pooled_vector(weather_feature)), (WEATHER_OUTPUTS,))
        return traffic, logits, ops.softmax(logits, axis=0)

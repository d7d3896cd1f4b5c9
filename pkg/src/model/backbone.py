"""
Residual convolutional backbone with four stages
Stage channels follow ModelConfig.stage_channels; downsampling is /4, /2, /2, /2
"""

from typing import List

from .layers import Conv2d, Module
from ..core import ops
from ..core.init import ParameterFactory
from ..core.tensor import Tensor
from ..utils.config import MODEL, ModelConfig
from ..utils.errors import ContractError

DOWNSAMPLE = (4, 2, 2, 2)


class ResidualBlock(Module):
    def __init__(self, factory: ParameterFactory, channels: int):
        self.conv1 = Conv2d(factory, channels, channels, 3, padding=1)
        self.conv2 = Conv2d(factory, channels, channels, 3, padding=1)

    def forward(self, x: Tensor) -> Tensor:
        y = self.conv2(ops.relu(self.conv1(x)))
        return ops.relu(x + y)


class BackboneStage(Module):
    """Strided patchify convolution followed by residual blocks"""

    def __init__(self, factory: ParameterFactory, in_channels: int, out_channels: int,
                 factor: int, blocks: int):
        self.entry = Conv2d(factory, in_channels, out_channels, factor, stride=factor)
        self.blocks = [ResidualBlock(factory, out_channels) for _ in range(blocks)]

    def forward(self, x: Tensor) -> Tensor:
        x = ops.relu(self.entry(x))
        for block in self.blocks:
            x = block(x)
        return x


class ConvBackbone(Module):
    """One per modality; the fusion network runs stages one at a time"""

    def __init__(self, factory: ParameterFactory, in_channels: int, config: ModelConfig = MODEL):
        self.in_channels = in_channels
        channels = config.stage_channels
        sources = (in_channels,) + channels[:-1]
        self.stages = [BackboneStage(factory, src, dst, factor, config.blocks_per_stage)
                       for src, dst, factor in zip(sources, channels, DOWNSAMPLE)]

    def check_input(self, x: Tensor) -> None:
        if x.ndim != 3 or x.shape[0] != self.in_channels:
            raise ContractError(f"backbone expects {self.in_channels} x H x W input, got {x.shape}")
        if x.shape[1] % 32 or x.shape[2] % 32:
            raise ContractError(f"backbone input extents {x.shape[1:]} are not divisible by 32")

    def stage(self, index: int, x: Tensor) -> Tensor:
        return self.stages[index](x)

    def forward(self, x: Tensor) -> List[Tensor]:
        """
        Run all four stages without fusion

        Args:
            x: C x H x W input with H and W divisible by 32

        Returns:
            Stage feature maps at 1/4, 1/8, 1/16 and 1/32 resolution
        """
        self.check_input(x)
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features

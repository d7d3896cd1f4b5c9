"""
Transformer fusion stage between the image and LiDAR branches

Each feature map is average-pooled into a grid of patch tokens, both token
sets get learned positional encodings and pass through one joint pre-norm
attention + MLP block. The residual update of each token is upsampled back
onto its source map.
"""

from typing import Tuple

from .layers import LayerNorm, Mlp, Module, MultiHeadSelfAttention
from ..core import ops
from ..core.init import ParameterFactory
from ..core.tensor import Tensor
from ..utils.errors import ContractError


class TransfuserStage(Module):
    def __init__(self, factory: ParameterFactory, channels: int, feature_size: int, heads: int,
                 token_grid: int = 8, mlp_ratio: int = 2):
        grid = min(token_grid, feature_size)
        if feature_size % grid:
            raise ContractError(f"token grid {grid} does not tile a {feature_size} x {feature_size} map")
        self.channels = channels
        self.feature_size = feature_size
        self.grid = grid
        self.patch = feature_size // grid
        self.position = factory.weight((self.token_count, channels), fan_in=channels)
        self.norm1 = LayerNorm(factory, channels)
        self.attn = MultiHeadSelfAttention(factory, channels, heads)
        self.norm2 = LayerNorm(factory, channels)
        self.mlp = Mlp(factory, (channels, mlp_ratio * channels, channels), activation="gelu")

    @property
    def tokens_per_modality(self) -> int:
        return self.grid * self.grid

    @property
    def token_count(self) -> int:
        return 2 * self.tokens_per_modality

    def _check(self, name: str, feat: Tensor) -> None:
        expected = (self.channels, self.feature_size, self.feature_size)
        if feat.shape != expected:
            raise ContractError(f"{name} features {feat.shape} do not match stage extents {expected}")

    def tokenize(self, feat: Tensor) -> Tensor:
        """C x S x S map -> (grid * grid) x C patch tokens"""
        pooled = ops.reduce(feat, "avg_pool_2d", self.patch) if self.patch > 1 else feat
        return ops.transpose(ops.reshape(pooled, (self.channels, self.tokens_per_modality)))

    def scatter(self, tokens: Tensor, feat: Tensor) -> Tensor:
        grid = ops.reshape(ops.transpose(tokens), (self.channels, self.grid, self.grid))
        if self.patch > 1:
            grid = ops.upsample_nearest(grid, self.patch)
        return feat + grid

    def forward(self, img_feat: Tensor, lidar_feat: Tensor) -> Tuple[Tensor, Tensor]:
        self._check("image", img_feat)
        self._check("lidar", lidar_feat)
        n = self.tokens_per_modality
        tokens = ops.concat([self.tokenize(img_feat), self.tokenize(lidar_feat)], axis=0) + self.position
        x = tokens + self.attn(self.norm1(tokens))
        x = x + self.mlp(self.norm2(x))
        update = x - tokens
        return (self.scatter(ops.take(update, 0, 0, n), img_feat),
                self.scatter(ops.take(update, 0, n, 2 * n), lidar_feat))

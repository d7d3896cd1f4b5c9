"""
The II-DSU fusion network
Two backbones exchange information through four transformer fusion stages;
the final maps are fused by a 1x1 convolution into the scene feature, which
every task head reads through its own channel attention
"""

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union
import logging
import numpy as np

from .backbone import ConvBackbone
from .heads import BevHead, DensityHead, EcaModule, PlanningHead, RuleHeads
from .layers import Conv2d, Module
from .transfuser import TransfuserStage
from ..core import ops
from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.init import ParameterFactory
from ..core.tensor import Tensor, resolve_dtype
from ..utils.config import HEAD_IDS, MODEL, ModelConfig
from ..utils.errors import ContractError

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3
LIDAR_CHANNELS = 4
META_PREFIX = "meta/"
# ModelConfig fields that fix parameter shapes; stored with every checkpoint
SHAPE_FIELDS = ("width_factor", "R", "gru_hidden", "attention_heads", "eca_kernel", "fused_channels",
                "blocks_per_stage", "mlp_ratio", "input_size", "token_grid")
# Per-layer widths, stored as one vector each
WIDTH_FIELDS = ("base_channels", "decoder_channels", "planning_mlp")


@dataclass
class ModelOutputs:
    """Everything one forward pass produces; maps are channel-first"""
    waypoints: Tensor
    deltas: List[Tensor]
    density: Tensor
    bev: Tensor
    traffic: Tensor
    weather_logits: Tensor
    weather: Tensor
    scene: Tensor
    eca: Dict[str, Tensor] = field(default_factory=dict)
    image_stages: List[Tensor] = field(default_factory=list)
    lidar_stages: List[Tensor] = field(default_factory=list)


class DsuNetwork(Module):
    def __init__(self, config: ModelConfig = MODEL):
        self.config = config
        factory = ParameterFactory(config.seed, config.precision)
        self.dtype = resolve_dtype(config.precision)
        channels = config.stage_channels
        self.image_backbone = ConvBackbone(factory, IMAGE_CHANNELS, config)
        self.lidar_backbone = ConvBackbone(factory, LIDAR_CHANNELS, config)
        sizes = [config.input_size // (4 * 2 ** i) for i in range(4)]
        self.fusion = [TransfuserStage(factory, c, size, config.attention_heads, config.token_grid,
                                       config.mlp_ratio) for c, size in zip(channels, sizes)]
        self.fuse_conv = Conv2d(factory, 2 * channels[-1], config.scene_channels, 1)
        self.eca = {head: EcaModule(factory, config.eca_kernel) for head in HEAD_IDS}
        self.planning = PlanningHead(factory, config)
        self.density = DensityHead(factory, config)
        self.bev = BevHead(factory, config)
        self.rules = RuleHeads(factory, config.scene_channels)
        logger.debug(f"Built network with {self.parameter_count()} parameters "
                     f"(stages {channels}, scene {config.scene_channels})")

    def as_input(self, array, channels: int, name: str) -> Tensor:
        tensor = array if isinstance(array, Tensor) else Tensor(np.asarray(array, dtype=self.dtype))
        size = self.config.input_size
        if tensor.shape != (channels, size, size):
            raise ContractError(f"{name} input must be {(channels, size, size)}, got {tensor.shape}")
        return tensor

    def encode(self, image: Tensor, lidar: Tensor) -> Tuple[List[Tensor], List[Tensor]]:
        """Interleave backbone stages with fusion stages"""
        self.image_backbone.check_input(image)
        self.lidar_backbone.check_input(lidar)
        img_stages, lidar_stages = [], []
        x_img, x_lidar = image, lidar
        for i, stage in enumerate(self.fusion):
            x_img = self.image_backbone.stage(i, x_img)
            x_lidar = self.lidar_backbone.stage(i, x_lidar)
            x_img, x_lidar = stage(x_img, x_lidar)
            img_stages.append(x_img)
            lidar_stages.append(x_lidar)
        return img_stages, lidar_stages

    def fuse(self, final_img: Tensor, final_lidar: Tensor) -> Tensor:
        """Channel concat and 1x1 convolution into the scene feature"""
        if final_img.shape[1:] != final_lidar.shape[1:]:
            raise ContractError(f"cannot fuse maps of extents {final_img.shape[1:]} and {final_lidar.shape[1:]}")
        return self.fuse_conv(ops.concat([final_img, final_lidar], axis=0))

    def eca_apply(self, scene: Tensor, head: str) -> Tuple[Tensor, Tensor]:
        if head not in self.eca:
            raise ContractError(f"unknown head {head!r}; expected one of {HEAD_IDS}")
        return self.eca[head](scene)

    def forward(self, image, lidar, goal) -> ModelOutputs:
        """
        Full forward pass

        Args:
            image: 3 x S x S camera tensor in [0, 1]
            lidar: 4 x S x S LiDAR pseudo-image
            goal: Goal point (x, y) in the ego frame

        Returns:
            ModelOutputs with waypoints, head maps, rule outputs and ECA weights
        """
        image = self.as_input(image, IMAGE_CHANNELS, "image")
        lidar = self.as_input(lidar, LIDAR_CHANNELS, "lidar")
        goal = np.asarray(goal, dtype=np.float64).reshape(-1)
        if goal.shape != (2,) or not np.all(np.isfinite(goal)):
            raise ContractError(f"goal must be a finite (x, y) pair, got {goal}")

        img_stages, lidar_stages = self.encode(image, lidar)
        scene = self.fuse(img_stages[-1], lidar_stages[-1])
        weighted, eca = {}, {}
        for head in HEAD_IDS:
            weighted[head], eca[head] = self.eca_apply(scene, head)

        waypoints, deltas = self.planning(weighted["planning"], goal)
        traffic, weather_logits, weather = self.rules(weighted["traffic"], weighted["weather"])
        return ModelOutputs(
            waypoints=waypoints, deltas=deltas,
            density=self.density(weighted["density"]), bev=self.bev(weighted["bev"]),
            traffic=traffic, weather_logits=weather_logits, weather=weather,
            scene=scene, eca=eca, image_stages=img_stages, lidar_stages=lidar_stages,
        )

    # ------------------------------------------------------------ persistence
    def meta_records(self) -> "OrderedDict[str, np.ndarray]":
        records = OrderedDict((f"{META_PREFIX}{name}", np.array([float(getattr(self.config, name))]))
                              for name in SHAPE_FIELDS)
        for name in WIDTH_FIELDS:
            records[f"{META_PREFIX}{name}"] = np.array(getattr(self.config, name), dtype=np.float64)
        return records

    def checkpoint_records(self) -> "OrderedDict[str, np.ndarray]":
        records = self.meta_records()
        records.update(self.state_dict())
        return records

    def check_meta(self, records: Mapping[str, np.ndarray], source: str = "checkpoint") -> None:
        """Compare stored shape metadata against this network's config"""
        for name in SHAPE_FIELDS:
            key = f"{META_PREFIX}{name}"
            if key not in records:
                raise ContractError(f"{source} has no {key} record")
            stored = float(np.asarray(records[key]).reshape(-1)[0])
            expected = float(np.asarray(getattr(self.config, name), dtype=np.float32))
            if float(np.float32(stored)) != expected:
                raise ContractError(f"{source} {name}={stored:g} does not match config {name}="
                                    f"{getattr(self.config, name)}")
        for name in WIDTH_FIELDS:
            key = f"{META_PREFIX}{name}"
            if key not in records:
                raise ContractError(f"{source} has no {key} record")
            stored = tuple(int(round(float(v))) for v in np.asarray(records[key]).reshape(-1))
            if stored != tuple(getattr(self.config, name)):
                raise ContractError(f"{source} {name}={stored} does not match config {name}="
                                    f"{tuple(getattr(self.config, name))}")

    def load_records(self, records: Mapping[str, np.ndarray], source: str = "checkpoint") -> None:
        self.check_meta(records, source)
        self.load_state_dict(records)

    def save(self, path: Union[str, Path], extra: Optional[Mapping[str, np.ndarray]] = None) -> Path:
        records = self.checkpoint_records()
        if extra:
            records.update(extra)
        return save_checkpoint(path, records, self.config.precision)


def stored_model_config(records: Mapping[str, np.ndarray], base: ModelConfig = MODEL) -> ModelConfig:
    """ModelConfig with the shape fields a checkpoint was written with"""
    values = {}
    for name in SHAPE_FIELDS:
        key = f"{META_PREFIX}{name}"
        if key in records:
            value = float(np.asarray(records[key]).reshape(-1)[0])
            values[name] = value if isinstance(getattr(base, name), float) else int(round(value))
    for name in WIDTH_FIELDS:
        key = f"{META_PREFIX}{name}"
        if key in records:
            values[name] = tuple(int(round(float(v))) for v in np.asarray(records[key]).reshape(-1))
    return replace(base, **values)


def load_network(path: Union[str, Path], config: ModelConfig = MODEL) -> Tuple[DsuNetwork, "OrderedDict[str, np.ndarray]"]:
    """Build a network for config and load a checkpoint into it; returns the network and all records"""
    precision, records = load_checkpoint(path)
    network = DsuNetwork(config)
    network.load_records(records, source=str(path))
    logger.info(f"Loaded {precision} checkpoint {path} into a {config.precision} network")
    return network, records

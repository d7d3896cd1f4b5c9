"""
Configuration settings for the II-DSU driving model
Dataclass defaults plus a strict sectioned key = value file loader
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple, get_type_hints
import logging

from .errors import ContractError, DataIOError

logger = logging.getLogger(__name__)


WEATHER_CLASSES: Tuple[str, ...] = ("sunny", "cloudy", "rainy", "foggy")
HEAD_IDS: Tuple[str, ...] = ("planning", "density", "bev", "traffic", "weather")
INFRACTION_KINDS: Tuple[str, ...] = ("Ped", "Veh", "Lay", "Red", "OR", "Dev", "TO", "Block")


@dataclass
class SensorConfig:
    """LiDAR BEV and camera crop configuration"""
    # BEV window: 32 m ahead, 16 m to each side, 8 px/m -> 256 x 256
    bev_forward_m: float = 32.0
    bev_side_m: float = 16.0
    bev_pixels: int = 256

    # Histogram split and count normalization
    z_ground: float = 0.2
    count_cap: int = 16

    # Camera
    raw_width: int = 400
    raw_height: int = 300
    crop_size: int = 256
    crop_top: Optional[int] = None  # None anchors the crop to the bottom rows

    @property
    def pixels_per_meter(self) -> float:
        return self.bev_pixels / self.bev_forward_m


@dataclass
class ModelConfig:
    """II-DSU network configuration"""
    width_factor: float = 1.0
    R: int = 256
    gru_hidden: int = 64
    attention_heads: int = 4
    eca_kernel: int = 5
    precision: str = "float32"
    fused_channels: int = 0  # 0 -> twice the last backbone stage
    blocks_per_stage: int = 1
    mlp_ratio: int = 2
    multi_frame: bool = True
    input_size: int = 256  # camera crop and LiDAR pseudo-image side
    token_grid: int = 8    # patches per side per modality in each fusion stage
    seed: int = 0

    base_channels: Tuple[int, int, int, int] = (64, 128, 256, 512)
    decoder_channels: Tuple[int, ...] = (256, 128, 64, 32, 32)
    planning_mlp: Tuple[int, int, int] = (512, 256, 128)

    @property
    def stage_channels(self) -> Tuple[int, ...]:
        return tuple(max(4, int(round(c * self.width_factor))) for c in self.base_channels)

    @property
    def scene_channels(self) -> int:
        return self.fused_channels or 2 * self.stage_channels[-1]

    @property
    def scene_size(self) -> int:
        return self.input_size // 32

    @property
    def decoder_widths(self) -> Tuple[int, ...]:
        widths = [max(4, int(round(c * self.width_factor))) for c in self.decoder_channels]
        while len(widths) < self.decoder_stages:
            widths.append(widths[-1])
        return tuple(widths[:self.decoder_stages])

    @property
    def decoder_stages(self) -> int:
        stages = 0
        size = self.scene_size
        while size < self.R:
            size *= 2
            stages += 1
        return stages

    @property
    def dtype(self) -> str:
        return self.precision


@dataclass
class LossWeights:
    """Multi-task loss balance coefficients"""
    lambda_wp: float = 1.0
    lambda_O: float = 0.4
    lambda_M: float = 0.4
    lambda_tf: float = 0.2
    lambda_wc: float = 0.2
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0

    def validate(self) -> "LossWeights":
        for f in fields(self):
            value = getattr(self, f.name)
            if value < 0:
                raise ContractError(f"loss weight {f.name} must be >= 0, got {value}")
        if self.lambda_wp <= 0:
            raise ContractError(f"lambda_wp must be > 0, got {self.lambda_wp}")
        return self


@dataclass
class TrainConfig:
    """Training loop configuration"""
    batch: int = 8
    steps: int = 2000
    optimizer: str = "sgd"
    momentum: float = 0.9
    lr: float = 1e-3
    lr_min: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    checkpoint_every: int = 200
    log_every: int = 10
    seed: int = 0
    ablate: str = ""  # comma list of: density, bev, traffic, weather

    @property
    def ablated_heads(self) -> Tuple[str, ...]:
        return tuple(h.strip() for h in self.ablate.split(",") if h.strip())


@dataclass
class ControllerConfig:
    """Waypoint-following PID configuration"""
    lat_kp: float = 1.25
    lat_ki: float = 0.75
    lat_kd: float = 0.3
    lon_kp: float = 5.0
    lon_ki: float = 0.5
    lon_kd: float = 1.0
    kappa: float = 2.0
    brake_speed: float = 0.4
    overspeed_margin: float = 0.1
    integral_window: int = 20
    integral_clamp: float = float("inf")
    max_throttle: float = 0.75
    dt: float = 0.05


@dataclass
class SimulationConfig:
    """Synthetic world configuration"""
    tick: float = 0.05
    model_interval: float = 0.5
    accel_gain: float = 4.0   # m/s^2 at full throttle
    brake_decel: float = 8.0  # m/s^2 at full brake
    wheelbase: float = 2.8
    max_steer_angle: float = 0.6
    lane_half_width: float = 3.0
    goal_lookahead: float = 20.0
    frames_per_episode: int = 40

    # Scripted expert: cruise speed by weather, comfortable deceleration, stop margin
    expert_speed_clear: float = 6.0
    expert_speed_adverse: float = 4.0
    expert_decel: float = 3.0
    expert_stop_margin: float = 2.5
    expert_max_time: float = 600.0
    control_hold: str = "control"  # "control" holds the command between plans, "waypoints" re-runs the PIDs each tick

    # Behavior classes: (speed limit m/s, safety time gap s, min safety distance m)
    normal: Tuple[float, float, float] = (6.0, 1.5, 4.0)
    aggressive: Tuple[float, float, float] = (8.0, 1.0, 2.0)
    cautious: Tuple[float, float, float] = (4.0, 2.5, 6.0)

    def behavior(self, name: str) -> Tuple[float, float, float]:
        table = {"Normal": self.normal, "Aggressive": self.aggressive, "Cautious": self.cautious}
        if name not in table:
            raise ContractError(f"unknown behavior class {name!r}")
        return table[name]


@dataclass
class EvalConfig:
    """Closed-loop evaluation configuration"""
    penalty_ped: float = 0.50
    penalty_veh: float = 0.60
    penalty_lay: float = 0.65
    penalty_red: float = 0.70
    penalty_or: float = 1.0
    penalty_dev: float = 1.0
    penalty_to: float = 1.0
    penalty_block: float = 1.0
    is_floor: float = 0.0

    dev_threshold: float = 8.0
    offroad_grace: float = 1.0
    block_speed: float = 0.1
    block_window: float = 90.0
    desk_factor: float = 0.2
    timeout_factor: float = 2.0
    difficulty: int = 0
    workers: int = 1

    @property
    def penalties(self) -> Dict[str, float]:
        return {
            "Ped": self.penalty_ped, "Veh": self.penalty_veh, "Lay": self.penalty_lay,
            "Red": self.penalty_red, "OR": self.penalty_or, "Dev": self.penalty_dev,
            "TO": self.penalty_to, "Block": self.penalty_block,
        }

    @property
    def block_seconds(self) -> float:
        return self.block_window * self.desk_factor


@dataclass
class ExperimentConfig:
    """All configuration sections of one experiment"""
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    sim: SimulationConfig = field(default_factory=SimulationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


# Global default instances
SENSOR = SensorConfig()
MODEL = ModelConfig()
LOSS = LossWeights()
TRAIN = TrainConfig()
CONTROLLER = ControllerConfig()
SIMULATION = SimulationConfig()
EVALUATION = EvalConfig()


def _parse_value(raw: str, annotation, where: str):
    """Parse a config value according to the dataclass field annotation"""
    text = raw.strip()
    origin = getattr(annotation, "__origin__", None)
    args = getattr(annotation, "__args__", ())
    try:
        if annotation is bool:
            lowered = text.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if annotation is int:
            return int(text)
        if annotation is float:
            return float(text)
        if annotation is str:
            return text
        if origin is tuple:
            item_type = args[0] if args else float
            return tuple(item_type(part) for part in text.replace(",", " ").split())
        if type(None) in args:  # Optional[...]
            if text.lower() in ("none", ""):
                return None
            inner = next(a for a in args if a is not type(None))
            return _parse_value(text, inner, where)
    except (ValueError, TypeError, StopIteration):
        raise ContractError(f"{where}: cannot parse {text!r}") from None
    raise ContractError(f"{where}: unsupported field type {annotation}")


# [section] name -> ExperimentConfig attribute; loss weights live in [train]
_SECTIONS = {
    "model": ("model",),
    "train": ("train", "loss"),
    "controller": ("controller",),
    "sensor": ("sensor",),
    "sim": ("sim",),
    "eval": ("eval",),
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse sectioned key = value text; unknown sections or keys are hard errors"""
    updates: Dict[str, Dict[str, object]] = {name: {} for name in ExperimentConfig.__dataclass_fields__}
    section: Optional[str] = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        where = f"{source}:{lineno}"
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SECTIONS:
                raise ContractError(f"{where}: unknown section [{section}]")
            continue
        if section is None:
            raise ContractError(f"{where}: key outside of a section")
        if "=" not in stripped:
            raise ContractError(f"{where}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))

        for attr in _SECTIONS[section]:
            cls = ExperimentConfig.__dataclass_fields__[attr].default_factory
            hints = get_type_hints(cls)
            if key in hints and key in cls.__dataclass_fields__:
                if key in updates[attr]:
                    raise ContractError(f"{where}: duplicate key {key!r}")
                updates[attr][key] = _parse_value(value, hints[key], f"{where} {key}")
                break
        else:
            raise ContractError(f"{where}: unknown key {key!r} in [{section}]")

    config = ExperimentConfig()
    for attr, values in updates.items():
        if values:
            setattr(config, attr, replace(getattr(config, attr), **values))
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Cross-field checks shared by file-loaded and programmatic configs"""
    config.loss.validate()
    if config.model.precision not in ("float32", "float64"):
        raise ContractError(f"precision must be float32 or float64, got {config.model.precision!r}")
    if config.model.R < 8 or config.model.R & (config.model.R - 1):
        raise ContractError(f"R must be a power of two >= 8, got {config.model.R}")
    if config.model.input_size < 32 or config.model.input_size % 32:
        raise ContractError(f"input_size must be a positive multiple of 32, got {config.model.input_size}")
    if config.model.R < config.model.scene_size:
        raise ContractError(f"R {config.model.R} is smaller than the scene feature side {config.model.scene_size}")
    if config.model.eca_kernel < 1 or config.model.eca_kernel % 2 == 0:
        raise ContractError(f"eca_kernel must be odd and positive, got {config.model.eca_kernel}")
    for head in config.train.ablated_heads:
        if head not in HEAD_IDS[1:]:
            raise ContractError(f"cannot ablate unknown head {head!r}")
    if config.sim.control_hold not in ("control", "waypoints"):
        raise ContractError(f"control_hold must be control or waypoints, got {config.sim.control_hold!r}")
    if config.train.optimizer not in ("sgd", "adam"):
        raise ContractError(f"optimizer must be sgd or adam, got {config.train.optimizer!r}")
    for kind, value in config.eval.penalties.items():
        if not 0.0 < value <= 1.0:
            raise ContractError(f"penalty for {kind} must lie in (0, 1], got {value}")
    return config


def load_config(path: Optional[str]) -> ExperimentConfig:
    """Load a config file; a missing path yields the defaults"""
    if path is None:
        return ExperimentConfig()
    config_path = Path(path)
    if not config_path.is_file():
        raise DataIOError(f"config file not found: {config_path}")
    logger.info(f"Loading configuration from {config_path}")
    return parse_config_text(config_path.read_text(), source=str(config_path))

"""
On-disk training frames and the label text schema

Layout of one frame directory (frame_%06d/):
    lidar_t0.bin, lidar_t-1.bin, lidar_t-2.bin   little-endian float32 x y z triplets
    pose_t0.txt, pose_t-1.txt, pose_t-2.txt      "x y yaw"
    image.ppm                                    raw 400 x 300 camera frame (P6)
    bev.pgm                                      256 x 256 BEV class ids 0/1/2 (P5)
    labels.txt                                   expert labels, one typed record per line:
        weather <sunny|cloudy|rainy|foggy>
        goal <x> <y>
        waypoint <x> <y>                         exactly four lines, in order
        traffic <light_stop 0|1> <stop_sign 0|1>
        speed <m/s>
        agent <timestep 1..3> <vehicle|pedestrian> <x> <y> <w> <l> <theta>   zero or more
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging
import numpy as np
from PIL import Image

from .density_codec import AgentBox, encode
from .sensor_pipeline import EgoPose, PointCloud, build_lidar_input, crop_image
from ..utils.config import MODEL, SENSOR, WEATHER_CLASSES, ModelConfig, SensorConfig
from ..utils.errors import ContractError, DataIOError

logger = logging.getLogger(__name__)

FRAME_PATTERN = "frame_{:06d}"
TIME_INDICES = (0, -1, -2)
LABEL_KEYS = ("weather", "goal", "waypoint", "traffic", "speed", "agent")


@dataclass
class FrameLabels:
    """Expert supervision for one frame"""
    weather: str
    goal: tuple
    waypoints: np.ndarray
    traffic: tuple
    agents: List[AgentBox]
    speed: float
    bev: np.ndarray


@dataclass
class SensorFrame:
    """One frame as stored: three clouds with poses, the raw camera image and labels"""
    clouds: List[PointCloud]
    poses: List[EgoPose]
    image: np.ndarray
    labels: Optional[FrameLabels] = None


@dataclass
class Sample:
    """Model-ready training sample; maps are channel-first"""
    image: np.ndarray          # 3 x S x S
    lidar: np.ndarray          # 4 x S x S
    goal: np.ndarray           # (2,)
    waypoints: np.ndarray      # 4 x 2
    density: np.ndarray        # 21 x R x R
    density_mask: np.ndarray   # 3 x R x R
    bev: np.ndarray            # R x R class ids
    traffic: np.ndarray        # (2,)
    weather: int
    source: str = ""


# ---------------------------------------------------------------- label text
def format_labels(labels: FrameLabels) -> str:
    lines = [f"weather {labels.weather}",
             f"goal {float(labels.goal[0])!r} {float(labels.goal[1])!r}"]
    for x, y in np.asarray(labels.waypoints, dtype=np.float64):
        lines.append(f"waypoint {float(x)!r} {float(y)!r}")
    lines.append(f"traffic {int(labels.traffic[0])} {int(labels.traffic[1])}")
    lines.append(f"speed {float(labels.speed)!r}")
    for a in labels.agents:
        lines.append(f"agent {a.timestep} {a.kind} {a.x!r} {a.y!r} {a.w!r} {a.l!r} {a.theta!r}")
    return "\n".join(lines) + "\n"


def _fields(parts: List[str], count: int, where: str) -> List[str]:
    if len(parts) != count:
        raise DataIOError(f"{where}: expected {count} fields, got {len(parts)}")
    return parts


def parse_labels(text: str, source: str = "<labels>", bev: Optional[np.ndarray] = None) -> FrameLabels:
    """Strict parser for labels.txt; any schema violation raises DataIOError"""
    values: Dict[str, object] = {}
    waypoints, agents = [], []
    try:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            where = f"{source}:{lineno}"
            key, *parts = line.split()
            if key not in LABEL_KEYS:
                raise DataIOError(f"{where}: unknown record {key!r}")
            if key in ("weather", "goal", "traffic", "speed") and key in values:
                raise DataIOError(f"{where}: duplicate {key} record")
            if key == "weather":
                (tag,) = _fields(parts, 1, where)
                if tag not in WEATHER_CLASSES:
                    raise DataIOError(f"{where}: unknown weather tag {tag!r}")
                values[key] = tag
            elif key == "goal":
                values[key] = tuple(float(v) for v in _fields(parts, 2, where))
            elif key == "waypoint":
                waypoints.append([float(v) for v in _fields(parts, 2, where)])
            elif key == "traffic":
                flags = tuple(int(v) for v in _fields(parts, 2, where))
                if any(f not in (0, 1) for f in flags):
                    raise DataIOError(f"{where}: traffic flags must be 0 or 1")
                values[key] = flags
            elif key == "speed":
                values[key] = float(_fields(parts, 1, where)[0])
            else:
                t, kind, *nums = _fields(parts, 7, where)
                x, y, w, l, theta = (float(v) for v in nums)
                agents.append(AgentBox(x, y, w, l, theta, int(t), kind))
    except (ValueError, ContractError) as exc:
        raise DataIOError(f"{source}: malformed labels ({exc})") from None

    missing = [k for k in ("weather", "goal", "traffic", "speed") if k not in values]
    if missing:
        raise DataIOError(f"{source}: missing records {missing}")
    if len(waypoints) != 4:
        raise DataIOError(f"{source}: expected 4 waypoint records, got {len(waypoints)}")
    return FrameLabels(weather=values["weather"], goal=values["goal"], waypoints=np.array(waypoints),
                       traffic=values["traffic"], agents=agents, speed=values["speed"],
                       bev=bev if bev is not None else np.zeros((0, 0), dtype=np.int64))


# ---------------------------------------------------------------- frame files
def frame_files() -> List[str]:
    names = [f"lidar_t{i}.bin" for i in TIME_INDICES] + [f"pose_t{i}.txt" for i in TIME_INDICES]
    return names + ["image.ppm", "bev.pgm", "labels.txt"]


def write_frame(frame_dir: Union[str, Path], frame: SensorFrame) -> Path:
    """Write one frame directory; clouds and poses are given oldest first"""
    if frame.labels is None:
        raise ContractError("only labelled frames can be written")
    frame_dir = Path(frame_dir)
    by_index = {c.frame_time_index: (c, p) for c, p in zip(frame.clouds, frame.poses)}
    if sorted(by_index) != sorted(TIME_INDICES):
        raise ContractError(f"frame needs clouds at time indices {TIME_INDICES}, got {sorted(by_index)}")
    try:
        frame_dir.mkdir(parents=True, exist_ok=True)
        for index in TIME_INDICES:
            cloud, pose = by_index[index]
            (frame_dir / f"lidar_t{index}.bin").write_bytes(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())
            (frame_dir / f"pose_t{index}.txt").write_text(f"{pose.x!r} {pose.y!r} {pose.yaw!r}\n")
        Image.fromarray(np.asarray(frame.image, dtype=np.uint8)).save(frame_dir / "image.ppm", format="PPM")
        Image.fromarray(np.asarray(frame.labels.bev, dtype=np.uint8)).save(frame_dir / "bev.pgm", format="PPM")
        (frame_dir / "labels.txt").write_text(format_labels(frame.labels))
    except OSError as exc:
        raise DataIOError(f"cannot write frame {frame_dir}: {exc}") from None
    return frame_dir


def read_frame(frame_dir: Union[str, Path]) -> SensorFrame:
    """Load a frame directory; missing or corrupt files raise DataIOError"""
    frame_dir = Path(frame_dir)
    absent = [name for name in frame_files() if not (frame_dir / name).is_file()]
    if absent:
        raise DataIOError(f"{frame_dir}: missing {', '.join(absent)}")
    clouds, poses = [], []
    try:
        for index in sorted(TIME_INDICES):
            raw = (frame_dir / f"lidar_t{index}.bin").read_bytes()
            if len(raw) % 12:
                raise DataIOError(f"{frame_dir}/lidar_t{index}.bin: size {len(raw)} is not a multiple of 12")
            points = np.frombuffer(raw, dtype="<f4").reshape(-1, 3).astype(np.float64)
            clouds.append(PointCloud(points, index))
            x, y, yaw = (float(v) for v in (frame_dir / f"pose_t{index}.txt").read_text().split())
            poses.append(EgoPose(x, y, yaw))
        with Image.open(frame_dir / "image.ppm") as img:
            image = np.asarray(img.convert("RGB"), dtype=np.uint8)
        with Image.open(frame_dir / "bev.pgm") as img:
            bev = np.asarray(img, dtype=np.int64)
    except (ValueError, OSError, ContractError) as exc:
        raise DataIOError(f"{frame_dir}: corrupt frame ({exc})") from None
    labels = parse_labels((frame_dir / "labels.txt").read_text(), str(frame_dir / "labels.txt"), bev)
    return SensorFrame(clouds, poses, image, labels)


# ---------------------------------------------------------------- model tensors
def resize_map(array: np.ndarray, size: int) -> np.ndarray:
    """Block-average a C x S x S map down to C x size x size"""
    side = array.shape[-1]
    if side == size:
        return array
    if side % size:
        raise ContractError(f"cannot shrink {side} x {side} inputs to {size} x {size}")
    f = side // size
    return array.reshape(array.shape[0], size, f, size, f).mean(axis=(2, 4))


def downsample_classes(bev: np.ndarray, R: int) -> np.ndarray:
    """Pick the block-centre class of each R x R output cell"""
    side = bev.shape[0]
    if side == R:
        return bev
    if side % R:
        raise ContractError(f"cannot resample a {side} BEV map to {R}")
    f = side // R
    return bev[f // 2::f, f // 2::f]


def model_inputs(clouds: Sequence[PointCloud], poses: Sequence[EgoPose], raw_image: np.ndarray,
                 model: ModelConfig = MODEL, sensor: SensorConfig = SENSOR):
    """Channel-first (image, lidar) tensors at the model input size"""
    lidar = build_lidar_input(clouds, poses, sensor, model.multi_frame).transpose(2, 0, 1)
    image = crop_image(raw_image, sensor).transpose(2, 0, 1)
    return resize_map(image, model.input_size), resize_map(lidar, model.input_size)


def frame_to_sample(frame: SensorFrame, model: ModelConfig = MODEL, sensor: SensorConfig = SENSOR,
                    source: str = "") -> Sample:
    labels = frame.labels
    if labels is None:
        raise ContractError("frame has no labels")
    image, lidar = model_inputs(frame.clouds, frame.poses, frame.image, model, sensor)
    density, mask = encode(labels.agents, model.R, sensor.bev_forward_m, sensor.bev_side_m)
    return Sample(
        image=image, lidar=lidar,
        goal=np.asarray(labels.goal, dtype=np.float64),
        waypoints=np.asarray(labels.waypoints, dtype=np.float64),
        density=density.transpose(2, 0, 1), density_mask=mask.transpose(2, 0, 1),
        bev=downsample_classes(labels.bev, model.R),
        traffic=np.asarray(labels.traffic, dtype=np.float64),
        weather=WEATHER_CLASSES.index(labels.weather),
        source=source,
    )


class FrameDataset:
    """Frame directories under one root, converted to samples on first access"""

    def __init__(self, root: Union[str, Path], model: ModelConfig = MODEL, sensor: SensorConfig = SENSOR):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataIOError(f"dataset directory not found: {self.root}")
        self.frames = sorted(p for p in self.root.iterdir() if p.is_dir() and p.name.startswith("frame_"))
        if not self.frames:
            raise DataIOError(f"no frame directories in {self.root}")
        self.model = model
        self.sensor = sensor
        self._cache: Dict[int, Sample] = {}
        logger.info(f"Dataset {self.root}: {len(self.frames)} frames")

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, index: int) -> Sample:
        if index not in self._cache:
            path = self.frames[index]
            self._cache[index] = frame_to_sample(read_frame(path), self.model, self.sensor, source=path.name)
        return self._cache[index]

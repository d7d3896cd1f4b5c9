"""
BEV and camera panel renderer
Color key: drivable area grey, lanes white, background black, ego red,
other agents yellow, ego waypoints blue
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging
import math
import numpy as np
from PIL import Image, ImageDraw

from ..data.dataset import SensorFrame, downsample_classes
from ..data.density_codec import AgentBox, TIMESTEPS, decode
from ..data.sensor_pipeline import bev_cells, build_lidar_input, crop_image
from ..model.network import ModelOutputs
from ..utils.config import SENSOR, SensorConfig, WEATHER_CLASSES
from ..utils.errors import DataIOError

logger = logging.getLogger(__name__)

CLASS_COLORS = np.array([(123, 123, 123), (228, 228, 228), (0, 0, 0)], dtype=np.uint8)
EGO_COLOR = (255, 0, 0)
AGENT_COLOR = (223, 218, 8)
WAYPOINT_COLOR = (0, 0, 255)
EGO_EXTENT = (1.9, 4.5)  # w, l in metres


@dataclass
class BevCanvas:
    """R x R RGB canvas over the BEV window"""
    image: Image.Image
    forward_m: float
    side_m: float

    @property
    def size(self) -> int:
        return self.image.size[0]

    @property
    def ppm(self) -> float:
        return self.size / self.forward_m

    def to_pixel(self, x: float, y: float):
        """Continuous (col, row) drawing coordinates of an ego-frame point"""
        return (y + self.side_m) * self.ppm, self.size - x * self.ppm

    def box(self, x: float, y: float, w: float, l: float, theta: float, color) -> None:
        c, s = math.cos(theta), math.sin(theta)
        corners = []
        for dl, dw in ((l / 2, w / 2), (l / 2, -w / 2), (-l / 2, -w / 2), (-l / 2, w / 2)):
            corners.append(self.to_pixel(x + c * dl - s * dw, y + s * dl + c * dw))
        ImageDraw.Draw(self.image).polygon(corners, fill=color)

    def points(self, xy: np.ndarray, color, radius: int = 1) -> None:
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        rows, cols, inside = bev_cells(xy[:, 0], xy[:, 1], self.size, self.forward_m, self.side_m)
        draw = ImageDraw.Draw(self.image)
        for r, c in zip(rows[inside], cols[inside]):
            draw.rectangle([int(c) - radius, int(r) - radius, int(c) + radius, int(r) + radius], fill=color)

    def array(self) -> np.ndarray:
        return np.asarray(self.image, dtype=np.uint8)


def class_canvas(classes: np.ndarray, config: SensorConfig = SENSOR) -> BevCanvas:
    classes = np.asarray(classes)
    colors = CLASS_COLORS[np.clip(classes, 0, 2)]
    return BevCanvas(Image.fromarray(colors), config.bev_forward_m, config.bev_side_m)


def render_bev_panel(classes: np.ndarray, agents: Sequence[AgentBox] = (), waypoints: Optional[np.ndarray] = None,
                     config: SensorConfig = SENSOR) -> np.ndarray:
    """
    Colorized BEV class map with agent boxes, the ego box and waypoints

    Args:
        classes: R x R class ids (0 drivable, 1 lane lines, 2 other)
        agents: Boxes drawn in the agent color
        waypoints: Optional 4 x 2 ego-frame waypoints
        config: Sensor configuration giving the BEV window

    Returns:
        R x R x 3 uint8 image
    """
    canvas = class_canvas(classes, config)
    for agent in agents:
        canvas.box(agent.x, agent.y, agent.w, agent.l, agent.theta, AGENT_COLOR)
    canvas.box(0.0, 0.0, EGO_EXTENT[0], EGO_EXTENT[1], 0.0, EGO_COLOR)
    if waypoints is not None:
        canvas.points(waypoints, WAYPOINT_COLOR)
    return canvas.array()


def render_timestep_panels(classes: np.ndarray, density: np.ndarray, heat_threshold: float = 0.5,
                           config: SensorConfig = SENSOR) -> List[np.ndarray]:
    """One panel per predicted timestep: the BEV map with the agents decoded at that timestep"""
    agents = decode(density, heat_threshold, config.bev_forward_m, config.bev_side_m)
    return [render_bev_panel(classes, [a for a in agents if a.timestep == t], None, config)
            for t in range(1, TIMESTEPS + 1)]


def render_lidar_panel(frame: SensorFrame, config: SensorConfig = SENSOR) -> np.ndarray:
    """Current LiDAR frame: ground counts dim grey, above-ground counts white"""
    lidar = build_lidar_input(frame.clouds, frame.poses, config)
    ground, current = lidar[:, :, 0] / 3.0, lidar[:, :, 3]
    level = np.clip(np.maximum(ground * 96.0, current * 255.0), 0, 255).astype(np.uint8)
    return np.repeat(level[:, :, None], 3, axis=2)


def render_camera_panel(frame: SensorFrame, config: SensorConfig = SENSOR) -> np.ndarray:
    return np.clip(np.round(crop_image(frame.image, config) * 255.0), 0, 255).astype(np.uint8)


def describe_outputs(outputs: ModelOutputs, agents: Sequence[AgentBox]) -> str:
    """Text sidecar: traffic rule scores, weather distribution, waypoints and detections"""
    traffic = outputs.traffic.numpy()
    weather = outputs.weather.numpy()
    lines = [f"traffic_light_stop {traffic[0]:.4f} {'STOP' if traffic[0] >= 0.5 else 'GO'}",
             f"stop_sign {traffic[1]:.4f} {'STOP' if traffic[1] >= 0.5 else 'GO'}",
             f"weather {WEATHER_CLASSES[int(np.argmax(weather))]}"]
    lines += [f"weather_p {tag} {p:.4f}" for tag, p in zip(WEATHER_CLASSES, weather)]
    lines += [f"waypoint {x:.3f} {y:.3f}" for x, y in outputs.waypoints.numpy()]
    for t in range(1, TIMESTEPS + 1):
        lines.append(f"detections t+{t} {sum(1 for a in agents if a.timestep == t)}")
    for a in agents:
        lines.append(f"agent {a.timestep} {a.kind} {a.x:.3f} {a.y:.3f} {a.w:.3f} {a.l:.3f} {a.theta:.4f}")
    return "\n".join(lines) + "\n"


def write_ppm(path: Union[str, Path], array: np.ndarray) -> Path:
    path = Path(path)
    try:
        Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path, format="PPM")
    except OSError as exc:
        raise DataIOError(f"cannot write image {path}: {exc}") from None
    return path


class PanelRenderer:
    """Writes the input, prediction and label panels of one frame"""

    def __init__(self, config: SensorConfig = SENSOR, heat_threshold: float = 0.5):
        self.config = config
        self.heat_threshold = heat_threshold

    def render(self, frame: SensorFrame, outputs: ModelOutputs, out_dir: Union[str, Path]) -> Dict[str, Path]:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataIOError(f"cannot create {out_dir}: {exc}") from None

        classes = np.argmax(outputs.bev.numpy(), axis=0)
        density = outputs.density.numpy().transpose(1, 2, 0).astype(np.float64)
        agents = decode(density, self.heat_threshold, self.config.bev_forward_m, self.config.bev_side_m)
        waypoints = outputs.waypoints.numpy().astype(np.float64)

        written = {
            "camera": write_ppm(out_dir / "input_camera.ppm", render_camera_panel(frame, self.config)),
            "lidar": write_ppm(out_dir / "input_lidar.ppm", render_lidar_panel(frame, self.config)),
            "bev": write_ppm(out_dir / "pred_bev.ppm",
                             render_bev_panel(classes, [a for a in agents if a.timestep == 1], waypoints,
                                              self.config)),
        }
        for t, panel in enumerate(render_timestep_panels(classes, density, self.heat_threshold, self.config), 1):
            written[f"t{t}"] = write_ppm(out_dir / f"pred_t{t}.ppm", panel)
        if frame.labels is not None and frame.labels.bev.size:
            label_classes = downsample_classes(frame.labels.bev, classes.shape[0])
            truth = [a for a in frame.labels.agents if a.timestep == 1]
            written["label"] = write_ppm(out_dir / "label_bev.ppm",
                                         render_bev_panel(label_classes, truth, frame.labels.waypoints, self.config))
        sidecar = out_dir / "predictions.txt"
        try:
            sidecar.write_text(describe_outputs(outputs, agents))
        except OSError as exc:
            raise DataIOError(f"cannot write {sidecar}: {exc}") from None
        written["text"] = sidecar
        logger.info(f"Rendered {len(written)} files to {out_dir}")
        return written

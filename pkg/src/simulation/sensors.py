"""
Synthetic sensors and expert labels
LiDAR is occlusion-free sampling of the ground lattice, curbs and box
surfaces; the camera is a schematic pinhole rasterization drawn with Pillow
"""

from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Tuple
import math
import numpy as np
from PIL import Image, ImageDraw

from .controller import WaypointController
from .expert import ExpertPolicy, goal_point
from .geometry import to_local
from .world import World
from ..data.dataset import FrameLabels, SensorFrame
from ..data.density_codec import AgentBox
from ..data.sensor_pipeline import EgoPose, PointCloud, T_PAST
from ..utils.config import SENSOR, SIMULATION, SensorConfig, SimulationConfig, CONTROLLER
from ..utils.errors import ContractError

GROUND_SPACING = 0.5
CURB_SPACING = 0.25
CURB_HEIGHT = 0.1
SURFACE_SPACING = 0.2
LIDAR_RANGE = 48.0
OBJECT_HEIGHTS = {"vehicle": 1.6, "pedestrian": 1.8, "layout": 2.0}

# Camera: 100 degree horizontal FOV on a 400 x 300 image, mounted 1.6 m up
CAMERA_FOCAL = 200.0 / math.tan(math.radians(50.0))
CAMERA_HEIGHT = 1.6
HORIZON_ROW = 150

SKY = {"sunny": (120, 170, 235), "cloudy": (165, 170, 180), "rainy": (95, 100, 110), "foggy": (200, 200, 200)}
ROAD = (90, 90, 90)
LINE = (235, 235, 235)
OFFROAD = (70, 110, 60)
OBJECT_COLORS = {"vehicle": (30, 60, 200), "pedestrian": (230, 120, 30), "layout": (120, 80, 60)}
LIGHT_COLORS = {"green": (0, 220, 0), "yellow": (255, 220, 0), "red": (255, 0, 0)}
FOG_COLOR = np.array([200.0, 200.0, 200.0])

BEV_DRIVABLE, BEV_LINE, BEV_OTHER = 0, 1, 2
LINE_HALF_WIDTH = 0.15
LABEL_HORIZON_TICKS = 10  # 0.5 s at the 0.05 s tick


@dataclass
class LidarFrame:
    cloud: PointCloud
    pose: EgoPose


class SensorHistory:
    """Rolling buffer of the last three LiDAR frames"""

    def __init__(self):
        self.frames: Deque[LidarFrame] = deque(maxlen=T_PAST)

    def push(self, frame: LidarFrame) -> None:
        self.frames.append(frame)

    def __len__(self):
        return len(self.frames)

    def indexed(self) -> Tuple[List[PointCloud], List[EgoPose]]:
        """Clouds tagged with time indices -2, -1, 0 (oldest first)"""
        clouds, poses = [], []
        for offset, frame in zip(range(-T_PAST + 1, 1), self.frames):
            clouds.append(PointCloud(frame.cloud.points, offset))
            poses.append(frame.pose)
        return clouds, poses


def _box_surface(corners: np.ndarray, height: float) -> np.ndarray:
    """Points on the vertical faces of a box at fixed height levels"""
    perimeter = []
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        n = max(2, int(np.ceil(np.hypot(*(b - a)) / SURFACE_SPACING)))
        t = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
        perimeter.append(a + t * (b - a))
    ring = np.concatenate(perimeter)
    levels = np.arange(0.5, height + 1e-9, 0.5)
    return np.concatenate([np.column_stack([ring, np.full(len(ring), z)]) for z in levels])


def synth_lidar(world: World) -> LidarFrame:
    """Point cloud of the current world in the ego frame"""
    ego = world.ego
    # world-aligned ground lattice around the ego
    lo_x, hi_x = ego.x - LIDAR_RANGE, ego.x + LIDAR_RANGE
    lo_y, hi_y = ego.y - LIDAR_RANGE, ego.y + LIDAR_RANGE
    gx = np.arange(math.ceil(lo_x / GROUND_SPACING), math.floor(hi_x / GROUND_SPACING) + 1) * GROUND_SPACING
    gy = np.arange(math.ceil(lo_y / GROUND_SPACING), math.floor(hi_y / GROUND_SPACING) + 1) * GROUND_SPACING
    mx, my = np.meshgrid(gx, gy, indexing="ij")
    world_pts = [np.column_stack([mx.ravel(), my.ravel(), np.zeros(mx.size)])]

    # curbs along both lane edges
    route = world.route
    ego_s, _ = world.ego_progress()
    s_values = np.arange(max(0.0, ego_s - 10.0), min(route.length, ego_s + LIDAR_RANGE), CURB_SPACING)
    hw = world.scenario.lane_half_width
    for side in (-1.0, 1.0):
        curb = np.array([world.route_point(s, side * hw)[:2] for s in s_values]).reshape(-1, 2)
        world_pts.append(np.column_stack([curb, np.full(len(curb), CURB_HEIGHT)]))

    for obstacle in world.obstacles():
        if math.hypot(obstacle.x - ego.x, obstacle.y - ego.y) > LIDAR_RANGE:
            continue
        world_pts.append(_box_surface(obstacle.corners(), OBJECT_HEIGHTS[obstacle.kind]))

    pts = np.concatenate(world_pts)
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    dx, dy = pts[:, 0] - ego.x, pts[:, 1] - ego.y
    local = np.column_stack([c * dx + s * dy, -s * dx + c * dy, pts[:, 2]])
    keep = (local[:, 0] > -LIDAR_RANGE / 2) & (np.abs(local[:, 1]) < LIDAR_RANGE / 2)
    return LidarFrame(PointCloud(local[keep]), ego.pose)


def _pixel_world(world: World, xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    ego = world.ego
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    return ego.x + c * xs - s * ys, ego.y + s * xs + c * ys


def bev_class_map(world: World, pixels: int = SENSOR.bev_pixels, config: SensorConfig = SENSOR) -> np.ndarray:
    """R x R class ids (0 drivable, 1 lane lines, 2 other) over the BEV window"""
    ppm = pixels / config.bev_forward_m
    rows, cols = np.meshgrid(np.arange(pixels), np.arange(pixels), indexing="ij")
    xs = (pixels - 1 - rows + 0.5) / ppm
    ys = (cols + 0.5) / ppm - config.bev_side_m
    wx, wy = _pixel_world(world, xs, ys)
    dist = world.route.distance_many(wx, wy, near=(world.ego.x, world.ego.y))
    hw = world.scenario.lane_half_width
    classes = np.full((pixels, pixels), BEV_OTHER, dtype=np.uint8)
    classes[dist < hw] = BEV_DRIVABLE
    classes[np.abs(dist - hw) < max(LINE_HALF_WIDTH, 0.5 / ppm)] = BEV_LINE
    return classes


def _fog(color: np.ndarray, distance: np.ndarray, weather: str) -> np.ndarray:
    if weather == "foggy":
        k = (1.0 - np.exp(-distance / 12.0))[..., None]
        color = color * (1.0 - k) + FOG_COLOR * k
    elif weather == "rainy":
        color = color * 0.7
    elif weather == "cloudy":
        color = color * 0.9
    return color


def synth_camera(world: World, config: SensorConfig = SENSOR) -> np.ndarray:
    """Schematic 400 x 300 RGB frame (uint8, rows x cols x 3)"""
    weather = world.scenario.weather
    width, height = config.raw_width, config.raw_height
    image = np.empty((height, width, 3), dtype=np.float64)
    image[:HORIZON_ROW] = SKY[weather]

    rows = np.arange(HORIZON_ROW, height)[:, None] + 0.5
    cols = np.arange(width)[None, :] + 0.5
    dist = np.broadcast_to(CAMERA_FOCAL * CAMERA_HEIGHT / (rows - HORIZON_ROW), (len(rows), width))
    lateral = (cols - width / 2) * dist / CAMERA_FOCAL
    wx, wy = _pixel_world(world, dist, lateral)
    to_route = world.route.distance_many(wx, wy, near=(world.ego.x, world.ego.y), radius=120.0)
    hw = world.scenario.lane_half_width
    ground = np.empty(dist.shape + (3,))
    ground[:] = OFFROAD
    ground[to_route < hw] = ROAD
    ground[np.abs(to_route - hw) < LINE_HALF_WIDTH * (1.0 + dist / 10.0)] = LINE
    image[HORIZON_ROW:] = _fog(ground, dist, weather)
    image[:HORIZON_ROW] = _fog(image[:HORIZON_ROW], np.full((HORIZON_ROW, width), 60.0), weather)

    canvas = Image.fromarray(np.clip(image, 0, 255).astype(np.uint8), mode="RGB")
    draw = ImageDraw.Draw(canvas)
    ego = world.ego
    items = []
    for obstacle in world.obstacles():
        local = np.array([to_local(cx, cy, ego.x, ego.y, ego.yaw) for cx, cy in obstacle.corners()])
        if local[:, 0].min() < 1.0:
            continue
        near = local[:, 0].min()
        items.append((near, local, OBJECT_HEIGHTS[obstacle.kind], OBJECT_COLORS[obstacle.kind]))
    for light, state in zip(world.scenario.lights, world.light_states()):
        x, y, _ = world.route_point(light.s, world.scenario.lane_half_width + 0.5)
        lx, ly = to_local(x, y, ego.x, ego.y, ego.yaw)
        if lx > 1.0:
            square = np.array([[lx, ly - 0.3], [lx, ly + 0.3]])
            items.append((lx, square, 3.5, LIGHT_COLORS[state]))
    for sign in world.scenario.stop_signs:
        x, y, _ = world.route_point(sign.s, world.scenario.lane_half_width + 0.5)
        lx, ly = to_local(x, y, ego.x, ego.y, ego.yaw)
        if lx > 1.0:
            items.append((lx, np.array([[lx, ly - 0.4], [lx, ly + 0.4]]), 2.2, (200, 0, 0)))

    for near, local, obj_height, color in sorted(items, key=lambda item: -item[0]):
        left = width / 2 + CAMERA_FOCAL * (local[:, 1] / local[:, 0]).min()
        right = width / 2 + CAMERA_FOCAL * (local[:, 1] / local[:, 0]).max()
        bottom = HORIZON_ROW + CAMERA_FOCAL * CAMERA_HEIGHT / near
        top = HORIZON_ROW + CAMERA_FOCAL * (CAMERA_HEIGHT - obj_height) / near
        if right < 0 or left >= width or top >= height:
            continue
        shaded = tuple(int(v) for v in np.clip(_fog(np.array(color, dtype=np.float64), np.array(near), weather), 0, 255))
        draw.rectangle([max(0.0, left), max(0.0, top), min(width - 1.0, right), min(height - 1.0, bottom)],
                       fill=shaded)
    return np.asarray(canvas, dtype=np.uint8).copy()


def _future_agents(world: World, expert: ExpertPolicy, config: SimulationConfig) -> List[AgentBox]:
    """Roll a copy of the world forward under the expert; boxes at +0.5, +1.0, +1.5 s in the current ego frame"""
    ego = world.ego
    anchor = (ego.x, ego.y, ego.yaw)
    future = world.copy()
    planner = ExpertPolicy(config)
    planner.satisfied_signs = set(expert.satisfied_signs)
    controller = WaypointController(CONTROLLER)
    agents: List[AgentBox] = []
    for step in range(1, 3 * LABEL_HORIZON_TICKS + 1):
        command = controller.control(planner.plan(future), future.ego.speed, dt=config.tick)
        future.step(command)
        if step % LABEL_HORIZON_TICKS:
            continue
        timestep = step // LABEL_HORIZON_TICKS
        for obstacle in future.obstacles():
            if obstacle.kind == "layout":
                continue
            x, y = to_local(obstacle.x, obstacle.y, *anchor)
            if not (0.0 <= x < SENSOR.bev_forward_m and -SENSOR.bev_side_m <= y < SENSOR.bev_side_m):
                continue
            agents.append(AgentBox(x, y, obstacle.w, obstacle.l, obstacle.yaw - anchor[2], timestep, obstacle.kind))
    return agents


def frame_labels(world: World, expert: ExpertPolicy, config: SimulationConfig = SIMULATION) -> FrameLabels:
    ego = world.ego
    ego_s, _ = world.ego_progress()
    light_stop = 0
    for light, state in zip(world.scenario.lights, world.light_states()):
        ahead = light.s - ego_s
        if 0.0 < ahead < SENSOR.bev_forward_m and state != "green":
            light_stop = 1
    sign = int(any(0.0 < sign.s - ego_s < SENSOR.bev_forward_m for sign in world.scenario.stop_signs))
    return FrameLabels(
        weather=world.scenario.weather,
        goal=goal_point(world),
        waypoints=expert.plan(world),
        traffic=(light_stop, sign),
        agents=_future_agents(world, expert, config),
        speed=ego.speed,
        bev=bev_class_map(world),
    )


def synth_sensors(world: World, history: SensorHistory, expert: Optional[ExpertPolicy] = None,
                  config: SimulationConfig = SIMULATION) -> SensorFrame:
    """Three aligned LiDAR frames with poses, the raw camera frame and (with an expert) labels"""
    if len(history) < T_PAST:
        raise ContractError(f"synth_sensors needs {T_PAST} buffered frames, have {len(history)}")
    clouds, poses = history.indexed()
    labels = frame_labels(world, expert, config) if expert is not None else None
    return SensorFrame(clouds, poses, synth_camera(world), labels)

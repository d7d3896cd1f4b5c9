"""
Sensor pipeline: LiDAR frame alignment, 2-bin BEV histograms, the 4-channel
pseudo-image and the camera crop

Arrays on this side of the dataset boundary are channel-last (H x W x C).
Ego frame: x forward, y rightward, z up; yaw about the vertical axis.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence
import math
import numpy as np

from ..utils.config import SENSOR, SensorConfig
from ..utils.errors import ContractError, NumericError

T_PAST = 3


def normalize_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]"""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass
class EgoPose:
    """World pose of the ego vehicle"""
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.yaw)):
            raise NumericError(f"pose must be finite, got ({self.x}, {self.y}, {self.yaw})")
        self.yaw = normalize_angle(self.yaw)


@dataclass
class PointCloud:
    """LiDAR returns of one frame in that frame's ego coordinates"""
    points: np.ndarray
    frame_time_index: int = 0

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.size == 0:
            points = points.reshape(0, 3)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ContractError(f"point cloud must be N x 3, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise NumericError("point cloud contains non-finite coordinates")
        if self.frame_time_index > 0:
            raise ContractError(f"frame_time_index must be <= 0, got {self.frame_time_index}")
        self.points = points

    def __len__(self):
        return self.points.shape[0]


@dataclass
class BevHistogram:
    """Per-cell point counts: channel 0 at/below ground threshold, channel 1 above"""
    grid: np.ndarray
    frame_time_index: int = 0
    discarded: int = 0

    @property
    def total(self) -> int:
        return int(self.grid.sum())


def transform_points(pc: PointCloud, source: EgoPose, target: EgoPose) -> PointCloud:
    """
    Re-express points observed from the source pose in the target pose's frame

    The (x, y) part goes through the world frame with a rigid SE(2) transform;
    z is unchanged.
    """
    pts = pc.points
    cs, ss = math.cos(source.yaw), math.sin(source.yaw)
    world_x = source.x + cs * pts[:, 0] - ss * pts[:, 1]
    world_y = source.y + ss * pts[:, 0] + cs * pts[:, 1]

    ct, st = math.cos(target.yaw), math.sin(target.yaw)
    dx = world_x - target.x
    dy = world_y - target.y
    out = np.empty_like(pts)
    out[:, 0] = ct * dx + st * dy
    out[:, 1] = -st * dx + ct * dy
    out[:, 2] = pts[:, 2]
    return PointCloud(out, pc.frame_time_index)


def bev_cells(x: np.ndarray, y: np.ndarray, pixels: int, forward_m: float, side_m: float):
    """
    Map ego-frame (x, y) to BEV (row, col) with the half-open window
    [0, forward) x [-side, side); returns rows, cols and the in-range mask
    """
    ppm = pixels / forward_m
    rows = pixels - 1 - np.floor(x * ppm).astype(np.int64)
    cols = np.floor((y + side_m) * ppm).astype(np.int64)
    inside = (x >= 0) & (x < forward_m) & (y >= -side_m) & (y < side_m)
    inside &= (rows >= 0) & (rows < pixels) & (cols >= 0) & (cols < pixels)
    return rows, cols, inside


def rasterize_bev(pc: PointCloud, config: SensorConfig = SENSOR) -> BevHistogram:
    """Bin points into the R x R x 2 histogram; out-of-range points are tallied and dropped"""
    r = config.bev_pixels
    grid = np.zeros((r, r, 2), dtype=np.int64)
    pts = pc.points
    if len(pts):
        rows, cols, inside = bev_cells(pts[:, 0], pts[:, 1], r, config.bev_forward_m, config.bev_side_m)
        bins = (pts[:, 2] > config.z_ground).astype(np.int64)
        np.add.at(grid, (rows[inside], cols[inside], bins[inside]), 1)
        discarded = int((~inside).sum())
    else:
        discarded = 0
    return BevHistogram(grid, pc.frame_time_index, discarded)


def stack_frames(hists: Sequence[BevHistogram], poses: Optional[Sequence[EgoPose]] = None,
                 config: SensorConfig = SENSOR, multi_frame: bool = True) -> np.ndarray:
    """
    Build the R x R x 4 pseudo-image from three aligned histograms

    Args:
        hists: Three histograms already rasterized in the current ego frame
        poses: Matching poses, checked for count only (alignment happens upstream)
        config: Sensor configuration supplying the count cap
        multi_frame: When False only the current frame contributes

    Returns:
        Channel 0 = summed ground counts, channels 1..3 = above-ground counts
        oldest to current, each as min(count, cap) / cap
    """
    if len(hists) != T_PAST:
        raise ContractError(f"stack_frames needs exactly {T_PAST} frames, got {len(hists)}")
    if poses is not None and len(poses) != T_PAST:
        raise ContractError(f"stack_frames needs exactly {T_PAST} poses, got {len(poses)}")
    shapes = {h.grid.shape for h in hists}
    if len(shapes) != 1:
        raise ContractError(f"histogram extents differ: {sorted(shapes)}")

    ordered = sorted(hists, key=lambda h: h.frame_time_index)
    if not multi_frame:
        current = ordered[-1]
        empty = np.zeros_like(current.grid)
        ordered = [BevHistogram(empty), BevHistogram(empty), current]

    ground = sum(h.grid[:, :, 0] for h in ordered)
    counts = np.stack([ground] + [h.grid[:, :, 1] for h in ordered], axis=-1)
    cap = float(config.count_cap)
    return np.minimum(counts, cap) / cap


def build_lidar_input(clouds: Sequence[PointCloud], poses: Sequence[EgoPose],
                      config: SensorConfig = SENSOR, multi_frame: bool = True) -> np.ndarray:
    """Align past clouds to the current pose, rasterize each and stack them"""
    if len(clouds) != T_PAST or len(poses) != T_PAST:
        raise ContractError(f"need {T_PAST} clouds and poses, got {len(clouds)} and {len(poses)}")
    order = sorted(range(T_PAST), key=lambda i: clouds[i].frame_time_index)
    current_pose = poses[order[-1]]
    hists = [rasterize_bev(transform_points(clouds[i], poses[i], current_pose), config) for i in order]
    return stack_frames(hists, [poses[i] for i in order], config, multi_frame)


def crop_image(raw: np.ndarray, config: SensorConfig = SENSOR) -> np.ndarray:
    """
    Crop a raw 400 x 300 camera frame (array shape 300 x 400 x 3) to 256 x 256 x 3

    Columns are centered; rows are anchored to the bottom unless crop_top is set.
    uint8 input is scaled by 1/255; float input must already lie in [0, 1].
    """
    raw = np.asarray(raw)
    expected = (config.raw_height, config.raw_width, 3)
    if raw.shape != expected:
        raise ContractError(f"raw image must be {expected}, got {raw.shape}")
    size = config.crop_size
    left = (config.raw_width - size) // 2
    top = config.raw_height - size if config.crop_top is None else config.crop_top
    if not 0 <= top <= config.raw_height - size:
        raise ContractError(f"crop_top {top} leaves fewer than {size} rows")
    patch = raw[top:top + size, left:left + size, :]
    if raw.dtype == np.uint8:
        return patch.astype(np.float64) / 255.0
    patch = patch.astype(np.float64)
    if patch.size and (patch.min() < 0.0 or patch.max() > 1.0):
        raise NumericError("float camera image values must lie in [0, 1]")
    return patch

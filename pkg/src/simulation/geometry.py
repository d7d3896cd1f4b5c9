"""
Planar geometry helpers: route polylines and oriented-box overlap
"""

from typing import Optional, Sequence, Tuple
import math
import numpy as np

from ..utils.errors import ContractError

CHUNK = 4096


class Route:
    """Piecewise-linear route with arc-length parameterization"""

    def __init__(self, points: Sequence[Sequence[float]]):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ContractError(f"route needs >= 2 points of (x, y), got shape {pts.shape}")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise ContractError("route has repeated consecutive points")
        self.points = pts
        self._seg = seg
        self._lengths = lengths
        self._cum = np.concatenate([[0.0], np.cumsum(lengths)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def _segment(self, s: float) -> int:
        s = min(max(s, 0.0), self.length)
        return int(min(np.searchsorted(self._cum, s, side="right") - 1, len(self._lengths) - 1))

    def point_at(self, s: float) -> Tuple[float, float]:
        i = self._segment(s)
        t = (min(max(s, 0.0), self.length) - self._cum[i]) / self._lengths[i]
        p = self.points[i] + t * self._seg[i]
        return float(p[0]), float(p[1])

    def heading_at(self, s: float) -> float:
        i = self._segment(s)
        return math.atan2(self._seg[i, 1], self._seg[i, 0])

    def project(self, x: float, y: float) -> Tuple[float, float]:
        """Closest route point: (arc length s, signed lateral offset, positive to the right)"""
        rel = np.array([x, y]) - self.points[:-1]
        t = np.clip((rel * self._seg).sum(axis=1) / self._lengths ** 2, 0.0, 1.0)
        closest = self.points[:-1] + t[:, None] * self._seg
        dist = np.hypot(closest[:, 0] - x, closest[:, 1] - y)
        i = int(np.argmin(dist))
        # y points right of x, so right-hand offsets have positive cross(seg, rel)
        cross = self._seg[i, 0] * (y - closest[i, 1]) - self._seg[i, 1] * (x - closest[i, 0])
        lateral = float(dist[i]) if cross >= 0 else -float(dist[i])
        return float(self._cum[i] + t[i] * self._lengths[i]), lateral

    def distance_many(self, xs: np.ndarray, ys: np.ndarray, near: Optional[Tuple[float, float]] = None,
                      radius: float = 80.0) -> np.ndarray:
        """Unsigned distance from many points to the route, optionally using only segments near a point"""
        starts, seg, lengths = self.points[:-1], self._seg, self._lengths
        if near is not None:
            ends = self.points[1:]
            keep = (np.hypot(starts[:, 0] - near[0], starts[:, 1] - near[1]) < radius) | \
                   (np.hypot(ends[:, 0] - near[0], ends[:, 1] - near[1]) < radius)
            if keep.any():
                starts, seg, lengths = starts[keep], seg[keep], lengths[keep]
        flat_x, flat_y = np.ravel(xs), np.ravel(ys)
        dist = np.empty(flat_x.size)
        for lo in range(0, flat_x.size, CHUNK):
            px = flat_x[lo:lo + CHUNK, None] - starts[:, 0]
            py = flat_y[lo:lo + CHUNK, None] - starts[:, 1]
            t = np.clip((px * seg[:, 0] + py * seg[:, 1]) / lengths ** 2, 0.0, 1.0)
            dist[lo:lo + CHUNK] = np.hypot(px - t * seg[:, 0], py - t * seg[:, 1]).min(axis=1)
        return dist.reshape(np.shape(xs))


def box_corners(x: float, y: float, yaw: float, w: float, l: float) -> np.ndarray:
    """Four corners of a box with length l along its heading and width w across"""
    c, s = math.cos(yaw), math.sin(yaw)
    half = np.array([[l / 2, w / 2], [l / 2, -w / 2], [-l / 2, -w / 2], [-l / 2, w / 2]])
    rot = np.array([[c, -s], [s, c]])
    return half @ rot.T + np.array([x, y])


def boxes_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quadrilaterals given as 4 x 2 corners"""
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        for ex, ey in edges:
            axis = np.array([-ey, ex])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def to_local(x: float, y: float, pose_x: float, pose_y: float, pose_yaw: float) -> Tuple[float, float]:
    """World point expressed in a pose's frame"""
    c, s = math.cos(pose_yaw), math.sin(pose_yaw)
    dx, dy = x - pose_x, y - pose_y
    return c * dx + s * dy, -s * dx + c * dy


def to_world(x: float, y: float, pose_x: float, pose_y: float, pose_yaw: float) -> Tuple[float, float]:
    c, s = math.cos(pose_yaw), math.sin(pose_yaw)
    return pose_x + c * x - s * y, pose_y + s * x + c * y

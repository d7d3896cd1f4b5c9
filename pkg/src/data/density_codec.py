"""
Object density map codec

Agents are encoded per timestep into 7 channels [heat, dx, dy, log w, log l,
sin theta, cos theta] of an R x R x 21 map (channel-last). Heat is a
size-adaptive Gaussian splat; regression channels are written only at center
cells, which the returned mask marks.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple
import math
import numpy as np

from .sensor_pipeline import bev_cells, normalize_angle
from ..utils.config import SENSOR
from ..utils.errors import ContractError

CHANNELS_PER_STEP = 7
TIMESTEPS = 3
HEAT, DX, DY, LOG_W, LOG_L, SIN, COS = range(CHANNELS_PER_STEP)
MIN_RADIUS = 2
MIN_OVERLAP = 0.7
PEDESTRIAN_MAX_EXTENT = 1.5  # metres; larger decoded boxes are vehicles
LOG_CLAMP = 10.0


@dataclass
class AgentBox:
    """Oriented BEV box of one agent at one future timestep"""
    x: float
    y: float
    w: float
    l: float
    theta: float
    timestep: int = 1
    kind: str = "vehicle"

    def __post_init__(self):
        if self.w <= 0 or self.l <= 0:
            raise ContractError(f"box extents must be positive, got w={self.w}, l={self.l}")
        if self.timestep not in (1, 2, 3):
            raise ContractError(f"timestep must be 1..3, got {self.timestep}")
        if self.kind not in ("vehicle", "pedestrian"):
            raise ContractError(f"unknown agent kind {self.kind!r}")
        self.theta = normalize_angle(self.theta)


def gaussian_radius(height: float, width: float, min_overlap: float = MIN_OVERLAP) -> float:
    """CenterNet radius keeping IoU >= min_overlap for a corner-shifted box"""
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1 ** 2 - 4 * c1)) / 2

    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2 ** 2 - 16 * c2)) / 2

    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3 ** 2 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


def _splat(heat: np.ndarray, row: int, col: int, radius: int) -> None:
    """Max-merge a Gaussian with peak 1 at (row, col) into heat"""
    sigma = (2 * radius + 1) / 6.0
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2 * sigma * sigma))
    size = heat.shape[0]
    top, bottom = max(0, row - radius), min(size, row + radius + 1)
    left, right = max(0, col - radius), min(size, col + radius + 1)
    window = kernel[top - row + radius:bottom - row + radius, left - col + radius:right - col + radius]
    np.maximum(heat[top:bottom, left:right], window, out=heat[top:bottom, left:right])


def encode(agents: Sequence[AgentBox], R: int,
           forward_m: float = SENSOR.bev_forward_m, side_m: float = SENSOR.bev_side_m
           ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Encode agent boxes into a density map

    Args:
        agents: Boxes in the current ego frame, each tagged with its timestep
        R: Output resolution (pixels per side)
        forward_m: BEV depth covered by the map
        side_m: Lateral half-width covered by the map

    Returns:
        (density R x R x 21, mask R x R x 3) where mask marks supervised center cells
    """
    density = np.zeros((R, R, CHANNELS_PER_STEP * TIMESTEPS), dtype=np.float64)
    mask = np.zeros((R, R, TIMESTEPS), dtype=bool)
    ppm = R / forward_m
    for agent in agents:
        rows, cols, inside = bev_cells(np.array([agent.x]), np.array([agent.y]), R, forward_m, side_m)
        if not inside[0]:
            continue
        row, col = int(rows[0]), int(cols[0])
        u = agent.x * ppm
        v = (agent.y + side_m) * ppm
        base = (agent.timestep - 1) * CHANNELS_PER_STEP
        radius = max(MIN_RADIUS, int(gaussian_radius(agent.l * ppm, agent.w * ppm)))
        _splat(density[:, :, base + HEAT], row, col, radius)
        density[row, col, base + DX] = u - math.floor(u)
        density[row, col, base + DY] = v - math.floor(v)
        density[row, col, base + LOG_W] = math.log(agent.w)
        density[row, col, base + LOG_L] = math.log(agent.l)
        density[row, col, base + SIN] = math.sin(agent.theta)
        density[row, col, base + COS] = math.cos(agent.theta)
        mask[row, col, agent.timestep - 1] = True
    return density, mask


def local_peaks(heat: np.ndarray, threshold: float) -> np.ndarray:
    """
    Boolean map of 3 x 3 local maxima above threshold

    A cell must exceed neighbours that precede it in row-major order and be
    at least as large as those that follow, so plateaus keep their first cell.
    """
    size_r, size_c = heat.shape
    padded = np.pad(heat, 1, constant_values=-np.inf)
    peaks = heat > threshold
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            neighbour = padded[1 + dr:1 + dr + size_r, 1 + dc:1 + dc + size_c]
            if (dr, dc) < (0, 0):
                peaks &= heat > neighbour
            else:
                peaks &= heat >= neighbour
    return peaks


def decode(density: np.ndarray, heat_threshold: float = 0.5,
           forward_m: float = SENSOR.bev_forward_m, side_m: float = SENSOR.bev_side_m) -> List[AgentBox]:
    """Recover agent boxes from heat peaks, in timestep then row-major order"""
    if not 0.0 < heat_threshold < 1.0:
        raise ContractError(f"heat_threshold must lie in (0, 1), got {heat_threshold}")
    if density.ndim != 3 or density.shape[0] != density.shape[1] \
            or density.shape[2] != CHANNELS_PER_STEP * TIMESTEPS:
        raise ContractError(f"density map must be R x R x 21, got {density.shape}")
    R = density.shape[0]
    ppm = R / forward_m
    agents: List[AgentBox] = []
    for t in range(TIMESTEPS):
        base = t * CHANNELS_PER_STEP
        for row, col in np.argwhere(local_peaks(density[:, :, base + HEAT], heat_threshold)):
            cell = density[row, col, base:base + CHANNELS_PER_STEP]
            x = (R - 1 - row + cell[DX]) / ppm
            y = (col + cell[DY]) / ppm - side_m
            w = math.exp(min(max(cell[LOG_W], -LOG_CLAMP), LOG_CLAMP))
            l = math.exp(min(max(cell[LOG_L], -LOG_CLAMP), LOG_CLAMP))
            theta = math.atan2(cell[SIN], cell[COS])
            if theta == -math.pi:
                theta = math.pi
            kind = "pedestrian" if max(w, l) < PEDESTRIAN_MAX_EXTENT else "vehicle"
            agents.append(AgentBox(float(x), float(y), w, l, theta, t + 1, kind))
    return agents

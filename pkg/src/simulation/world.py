"""
Kinematic world state: bicycle-model ego, car-following NPCs, crossing
pedestrians and scheduled traffic lights
"""

from copy import deepcopy
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
import math
import numpy as np

from .controller import ControlCommand
from .geometry import Route, box_corners
from .scenario import Scenario
from ..data.sensor_pipeline import EgoPose, normalize_angle
from ..utils.config import SIMULATION, SimulationConfig
from ..utils.errors import ContractError

EGO_WIDTH = 2.0
EGO_LENGTH = 4.5


@dataclass
class VehicleState:
    """Pose, speed and extent of a vehicle"""
    x: float
    y: float
    yaw: float
    speed: float = 0.0
    w: float = EGO_WIDTH
    l: float = EGO_LENGTH

    @property
    def pose(self) -> EgoPose:
        return EgoPose(self.x, self.y, self.yaw)

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.yaw, self.w, self.l)


@dataclass
class NpcState:
    """Route-following vehicle with behavior parameters"""
    ident: int
    s: float
    speed: float
    w: float
    l: float
    behavior: str
    speed_limit: float
    time_gap: float
    min_distance: float


@dataclass
class PedestrianState:
    ident: int
    s: float
    lateral: float
    speed: float
    start_time: float
    w: float
    l: float


@dataclass
class Obstacle:
    """World-frame box of something the ego can collide with"""
    kind: str  # vehicle | pedestrian | layout
    ident: int
    x: float
    y: float
    yaw: float
    w: float
    l: float

    def corners(self) -> np.ndarray:
        return box_corners(self.x, self.y, self.yaw, self.w, self.l)


class World:
    """Mutable simulation state advanced tick by tick"""

    def __init__(self, scenario: Scenario, config: SimulationConfig = SIMULATION):
        self.scenario = scenario
        self.config = config
        self.route: Route = scenario.make_route()
        self.time = 0.0
        start_x, start_y = self.route.point_at(0.0)
        self.ego = VehicleState(start_x, start_y, self.route.heading_at(0.0))
        self.npcs: List[NpcState] = []
        for i, agent in enumerate(scenario.agents):
            limit, gap, dist = config.behavior(agent.behavior)
            self.npcs.append(NpcState(i, agent.s, agent.speed, agent.w, agent.l, agent.behavior, limit, gap, dist))
        self.pedestrians = [PedestrianState(i, p.s, p.lateral, p.speed, p.start_time, p.w, p.l)
                            for i, p in enumerate(scenario.pedestrians)]

    # ------------------------------------------------------------ queries
    def route_point(self, s: float, lateral: float = 0.0) -> Tuple[float, float, float]:
        """World (x, y, heading) at arc length s shifted right by lateral"""
        px, py = self.route.point_at(s)
        h = self.route.heading_at(s)
        return px - math.sin(h) * lateral, py + math.cos(h) * lateral, h

    def ego_progress(self) -> Tuple[float, float]:
        return self.route.project(self.ego.x, self.ego.y)

    def light_states(self) -> List[str]:
        return [light.state(self.time) for light in self.scenario.lights]

    def obstacles(self) -> List[Obstacle]:
        """All collidable boxes in world coordinates"""
        out = []
        for npc in self.npcs:
            x, y, h = self.route_point(npc.s)
            out.append(Obstacle("vehicle", npc.ident, x, y, h, npc.w, npc.l))
        for ped in self.pedestrians:
            x, y, h = self.route_point(ped.s, ped.lateral)
            out.append(Obstacle("pedestrian", ped.ident, x, y, h, ped.w, ped.l))
        for i, box in enumerate(self.scenario.layout):
            out.append(Obstacle("layout", i, box.x, box.y, box.yaw, box.w, box.l))
        return out

    def pedestrian_in_lane(self, ped: PedestrianState, margin: float = 1.0) -> bool:
        return abs(ped.lateral) <= self.scenario.lane_half_width + margin

    # ------------------------------------------------------------ dynamics
    def _step_ego(self, command: ControlCommand, dt: float) -> None:
        cfg = self.config
        accel = command.throttle * cfg.accel_gain - command.brake * cfg.brake_decel
        ego = self.ego
        ego.speed = max(0.0, ego.speed + accel * dt)
        steer_angle = command.steer * cfg.max_steer_angle
        ego.x += ego.speed * math.cos(ego.yaw) * dt
        ego.y += ego.speed * math.sin(ego.yaw) * dt
        ego.yaw = normalize_angle(ego.yaw + ego.speed / cfg.wheelbase * math.tan(steer_angle) * dt)

    def _leader_gap(self, npc: NpcState, ego_s: float, ego_lateral: float) -> Optional[float]:
        """Bumper gap to the nearest vehicle ahead in the lane (ego included)"""
        best = None
        for other in self.npcs:
            if other is npc or other.s <= npc.s:
                continue
            gap = other.s - npc.s - (other.l + npc.l) / 2.0
            best = gap if best is None else min(best, gap)
        if ego_s > npc.s and abs(ego_lateral) < self.scenario.lane_half_width:
            gap = ego_s - npc.s - (self.ego.l + npc.l) / 2.0
            best = gap if best is None else min(best, gap)
        for light in self.scenario.lights:
            if light.s > npc.s and light.state(self.time) != "green":
                gap = light.s - npc.s - npc.l / 2.0
                if gap > 0 and (best is None or gap < best):
                    best = gap
        return best

    def _step_npcs(self, dt: float) -> None:
        cfg = self.config
        ego_s, ego_lateral = self.ego_progress()
        # update speeds from the current snapshot, then move everyone
        targets = []
        for npc in self.npcs:
            gap = self._leader_gap(npc, ego_s, ego_lateral)
            target = npc.speed_limit
            if gap is not None:
                target = min(target, max(0.0, (gap - npc.min_distance) / npc.time_gap))
            targets.append((target, gap))
        for npc, (target, gap) in zip(self.npcs, targets):
            change = min(max(target - npc.speed, -cfg.brake_decel * dt), cfg.accel_gain * dt)
            npc.speed = max(0.0, npc.speed + change)
            advance = npc.speed * dt
            if gap is not None:
                advance = min(advance, max(0.0, gap - npc.min_distance))
            npc.s = min(npc.s + advance, self.route.length)

    def _step_pedestrians(self, dt: float) -> None:
        limit = self.scenario.lane_half_width + 3.0
        for ped in self.pedestrians:
            if self.time >= ped.start_time and ped.lateral < limit:
                ped.lateral = min(limit, ped.lateral + ped.speed * dt)

    def step(self, command: ControlCommand, dt: Optional[float] = None) -> "World":
        dt = self.config.tick if dt is None else dt
        if dt <= 0:
            raise ContractError(f"dt must be positive, got {dt}")
        self._step_ego(command, dt)
        self._step_npcs(dt)
        self._step_pedestrians(dt)
        self.time += dt
        return self

    def copy(self) -> "World":
        return deepcopy(self)


def step_world(world: World, command: ControlCommand, dt: float) -> World:
    """Pure variant of World.step: returns the advanced copy"""
    return world.copy().step(command, dt)

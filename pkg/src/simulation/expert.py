"""
Scripted expert with privileged access to the world state
Plans four waypoints along the route at a speed set by weather, lead
vehicles, pedestrians, traffic lights and stop signs
"""

from typing import List, Optional, Set, Tuple
import math
import numpy as np

from .geometry import to_local
from .world import World
from ..utils.config import SIMULATION, SimulationConfig

WAYPOINT_SPACING_S = 0.5
STOP_SIGN_RADIUS = 3.0
STOP_SPEED = 0.1


def cruise_speed(weather: str, config: SimulationConfig = SIMULATION) -> float:
    """Weather-conditioned target speed"""
    return config.expert_speed_adverse if weather in ("rainy", "foggy") else config.expert_speed_clear


class ExpertPolicy:
    """Rule-based planner used for labels, data collection and as an evaluation baseline"""

    needs_sensors = False

    def __init__(self, config: SimulationConfig = SIMULATION):
        self.config = config
        self.satisfied_signs: Set[int] = set()
        self.last_speed_target = 0.0

    def reset(self) -> None:
        self.satisfied_signs.clear()
        self.last_speed_target = 0.0

    def _hazard_gaps(self, world: World, ego_s: float) -> List[float]:
        """Distances from the ego front bumper to everything it must stop behind"""
        ego = world.ego
        front = ego_s + ego.l / 2.0
        gaps = []
        for npc in world.npcs:
            if npc.s > ego_s:
                gaps.append(npc.s - npc.l / 2.0 - front)
        for ped in world.pedestrians:
            if ped.s > ego_s and world.pedestrian_in_lane(ped):
                gaps.append(ped.s - ped.l / 2.0 - front - 1.0)
        braking = ego.speed ** 2 / (2.0 * self.config.expert_decel)
        for light in world.scenario.lights:
            state = light.state(world.time)
            gap = light.s - front
            if gap <= 0 or state == "green":
                continue
            # past the point of a comfortable stop on yellow: keep going
            if state == "yellow" and gap < braking:
                continue
            gaps.append(gap)
        for i, sign in enumerate(world.scenario.stop_signs):
            gap = sign.s - front
            if i in self.satisfied_signs or gap <= 0:
                continue
            if gap < STOP_SIGN_RADIUS + self.config.expert_stop_margin and ego.speed < STOP_SPEED:
                self.satisfied_signs.add(i)
                continue
            gaps.append(gap)
        return gaps

    def target_speed(self, world: World) -> float:
        ego_s, _ = world.ego_progress()
        speed = cruise_speed(world.scenario.weather, self.config)
        for gap in self._hazard_gaps(world, ego_s):
            room = max(0.0, gap - self.config.expert_stop_margin)
            speed = min(speed, math.sqrt(2.0 * self.config.expert_decel * room))
        if ego_s >= world.route.length - 0.5:
            speed = 0.0
        return speed if speed >= 0.5 else 0.0

    def waypoints(self, world: World, speed: float) -> np.ndarray:
        """Route points spaced by speed x 0.5 s, in the ego frame"""
        ego = world.ego
        ego_s, _ = world.ego_progress()
        spacing = speed * WAYPOINT_SPACING_S
        wp = np.zeros((4, 2))
        for k in range(4):
            x, y, _ = world.route_point(ego_s + (k + 1) * spacing)
            if spacing == 0.0:
                x, y = ego.x, ego.y
            wp[k] = to_local(x, y, ego.x, ego.y, ego.yaw)
        return wp

    def plan(self, world: World, frame=None) -> np.ndarray:
        speed = self.target_speed(world)
        self.last_speed_target = speed
        return self.waypoints(world, speed)


def goal_point(world: World, lookahead: Optional[float] = None) -> Tuple[float, float]:
    """Route point lookahead metres ahead of the ego, in the ego frame"""
    lookahead = world.config.goal_lookahead if lookahead is None else lookahead
    ego = world.ego
    ego_s, _ = world.ego_progress()
    x, y, _ = world.route_point(ego_s + lookahead)
    return to_local(x, y, ego.x, ego.y, ego.yaw)

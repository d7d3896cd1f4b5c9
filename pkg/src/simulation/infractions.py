"""
Infraction detection over a driven trajectory
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple
import logging
import math

from .geometry import Route, box_corners, boxes_overlap
from .scenario import Scenario
from .world import Obstacle, World
from ..utils.config import EVALUATION, EvalConfig, INFRACTION_KINDS
from ..utils.errors import ContractError

logger = logging.getLogger(__name__)

COLLISION_KINDS = {"pedestrian": "Ped", "vehicle": "Veh", "layout": "Lay"}
TERMINAL_KINDS = ("Dev", "TO", "Block")


@dataclass
class InfractionEvent:
    kind: str
    time: float
    position: Tuple[float, float]

    def __post_init__(self):
        if self.kind not in INFRACTION_KINDS:
            raise ContractError(f"unknown infraction kind {self.kind!r}")

    def __str__(self):
        return f"{self.kind}@{self.time:.2f}"


@dataclass
class TrajectorySample:
    """Ego state plus everything it could collide with at one instant"""
    time: float
    x: float
    y: float
    yaw: float
    speed: float
    obstacles: List[Obstacle] = field(default_factory=list)
    light_states: List[str] = field(default_factory=list)
    ego_w: float = 2.0
    ego_l: float = 4.5

    @classmethod
    def from_world(cls, world: World) -> "TrajectorySample":
        ego = world.ego
        return cls(world.time, ego.x, ego.y, ego.yaw, ego.speed, world.obstacles(),
                   world.light_states(), ego.w, ego.l)


class InfractionDetector:
    """Incremental detector; feed samples in time order"""

    def __init__(self, scenario: Scenario, config: EvalConfig = EVALUATION,
                 time_budget: float = math.inf):
        self.scenario = scenario
        self.config = config
        self.route: Route = scenario.make_route()
        self.time_budget = time_budget
        self.events: List[InfractionEvent] = []
        self.terminated = False
        self._collided: Set[Tuple[str, int]] = set()
        self._offroad_since: Optional[float] = None
        self._offroad_reported = False
        self._slow_since: Optional[float] = None
        self._prev_s: Optional[float] = None

    def _emit(self, kind: str, sample: TrajectorySample) -> InfractionEvent:
        event = InfractionEvent(kind, round(sample.time, 6), (sample.x, sample.y))
        self.events.append(event)
        if kind in TERMINAL_KINDS:
            self.terminated = True
        logger.debug(f"Infraction {event} at ({sample.x:.1f}, {sample.y:.1f})")
        return event

    def _collisions(self, sample: TrajectorySample) -> List[InfractionEvent]:
        ego_box = box_corners(sample.x, sample.y, sample.yaw, sample.ego_w, sample.ego_l)
        found = []
        for obstacle in sample.obstacles:
            key = (obstacle.kind, obstacle.ident)
            if key in self._collided:
                continue
            if math.hypot(obstacle.x - sample.x, obstacle.y - sample.y) > (sample.ego_l + max(obstacle.l, obstacle.w)):
                continue
            if boxes_overlap(ego_box, obstacle.corners()):
                self._collided.add(key)
                found.append(self._emit(COLLISION_KINDS[obstacle.kind], sample))
        return found

    def update(self, sample: TrajectorySample) -> List[InfractionEvent]:
        """Check one sample; returns the events it produced"""
        if self.terminated:
            return []
        cfg = self.config
        new = self._collisions(sample)
        s, lateral = self.route.project(sample.x, sample.y)

        # red light: the front bumper crosses a stop line while red
        front = s + sample.ego_l / 2.0
        if self._prev_s is not None:
            prev_front = self._prev_s + sample.ego_l / 2.0
            for light, state in zip(self.scenario.lights, sample.light_states):
                if prev_front < light.s <= front and state == "red":
                    new.append(self._emit("Red", sample))
        self._prev_s = s

        if abs(lateral) > self.scenario.lane_half_width:
            if self._offroad_since is None:
                self._offroad_since = sample.time
            if not self._offroad_reported and sample.time - self._offroad_since > cfg.offroad_grace:
                self._offroad_reported = True
                new.append(self._emit("OR", sample))
        else:
            self._offroad_since = None
            self._offroad_reported = False

        if abs(lateral) > cfg.dev_threshold:
            new.append(self._emit("Dev", sample))
            return new

        if sample.speed < cfg.block_speed:
            if self._slow_since is None:
                self._slow_since = sample.time
            if sample.time - self._slow_since > cfg.block_seconds:
                new.append(self._emit("Block", sample))
                return new
        else:
            self._slow_since = None

        if sample.time > self.time_budget:
            new.append(self._emit("TO", sample))
        return new

    def finish(self, sample: Optional[TrajectorySample], completed: bool) -> List[InfractionEvent]:
        """Close a run that stopped; an incomplete route without a terminal event timed out"""
        if completed or self.terminated or sample is None:
            return []
        return [self._emit("TO", sample)]


def detect_infractions(trajectory: Sequence[TrajectorySample], scenario: Scenario,
                       config: EvalConfig = EVALUATION, time_budget: float = math.inf) -> List[InfractionEvent]:
    """Run the incremental detector over a whole trajectory"""
    detector = InfractionDetector(scenario, config, time_budget)
    for sample in trajectory:
        detector.update(sample)
        if detector.terminated:
            break
    return detector.events

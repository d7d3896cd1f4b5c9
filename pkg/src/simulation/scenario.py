"""
Seeded scenario generator for the synthetic driving world
Creates routes, static layout, NPC traffic, pedestrians and traffic rules,
with NPC behavior classes coupled to the weather tag
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import json
import logging
import math
import numpy as np

from .geometry import Route
from ..utils.config import SIMULATION, SimulationConfig, WEATHER_CLASSES
from ..utils.errors import ContractError, DataIOError

logger = logging.getLogger(__name__)

BEHAVIORS = ("Normal", "Aggressive", "Cautious")
ADVERSE_WEATHER = ("rainy", "foggy")


@dataclass
class AgentSpec:
    """NPC vehicle placed on the route"""
    s: float
    speed: float
    w: float
    l: float
    behavior: str


@dataclass
class PedestrianSpec:
    """Pedestrian crossing the route from the left edge to the right edge"""
    s: float
    lateral: float
    speed: float
    start_time: float
    w: float = 0.6
    l: float = 0.6


@dataclass
class TrafficLightSpec:
    """Stop line at arc length s with a green/yellow/red cycle"""
    s: float
    green: float
    yellow: float
    red: float
    offset: float = 0.0

    def state(self, t: float) -> str:
        cycle = self.green + self.yellow + self.red
        phase = (t + self.offset) % cycle
        if phase < self.green:
            return "green"
        if phase < self.green + self.yellow:
            return "yellow"
        return "red"


@dataclass
class StopSignSpec:
    s: float


@dataclass
class LayoutBox:
    """Static obstacle of the scene layout (world frame)"""
    x: float
    y: float
    yaw: float
    w: float
    l: float


@dataclass
class Scenario:
    """Everything needed to replay one route deterministically"""
    seed: int
    difficulty: int
    weather: str
    route: List[Tuple[float, float]]
    lane_half_width: float
    layout: List[LayoutBox] = field(default_factory=list)
    agents: List[AgentSpec] = field(default_factory=list)
    pedestrians: List[PedestrianSpec] = field(default_factory=list)
    lights: List[TrafficLightSpec] = field(default_factory=list)
    stop_signs: List[StopSignSpec] = field(default_factory=list)

    def __post_init__(self):
        if len(self.route) < 2:
            raise ContractError("scenario route needs at least 2 points")
        if self.weather not in WEATHER_CLASSES:
            raise ContractError(f"unknown weather tag {self.weather!r}")
        allowed = permitted_behaviors(self.weather)
        for agent in self.agents:
            if agent.behavior not in allowed:
                raise ContractError(f"behavior {agent.behavior} not permitted on a {self.weather} day")

    def make_route(self) -> Route:
        return Route(self.route)

    def to_dict(self) -> Dict:
        """Convert to dictionary representation"""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "Scenario":
        try:
            return cls(
                seed=int(data["seed"]),
                difficulty=int(data["difficulty"]),
                weather=data["weather"],
                route=[tuple(p) for p in data["route"]],
                lane_half_width=float(data["lane_half_width"]),
                layout=[LayoutBox(**b) for b in data.get("layout", [])],
                agents=[AgentSpec(**a) for a in data.get("agents", [])],
                pedestrians=[PedestrianSpec(**p) for p in data.get("pedestrians", [])],
                lights=[TrafficLightSpec(**t) for t in data.get("lights", [])],
                stop_signs=[StopSignSpec(**s) for s in data.get("stop_signs", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"malformed scenario record: {exc}") from None


def permitted_behaviors(weather: str) -> Tuple[str, ...]:
    return ("Cautious",) if weather in ADVERSE_WEATHER else ("Normal", "Aggressive")


class ScenarioGenerator:
    """Generates deterministic scenarios of increasing difficulty"""

    def __init__(self, seed: int, config: SimulationConfig = SIMULATION):
        self.seed = seed
        self.config = config
        self.rng = np.random.default_rng(seed)

    def _generate_route(self, difficulty: int) -> List[Tuple[float, float]]:
        """Straight at difficulty 0, gentle arcs above"""
        length = 80.0 + 40.0 * min(difficulty, 2)
        step = 2.0
        heading = 0.0
        x, y = 0.0, 0.0
        points = [(x, y)]
        curvature = 0.0
        for i in range(int(length / step)):
            if difficulty > 0 and i % 15 == 0 and i > 0:
                curvature = float(self.rng.uniform(-0.02, 0.02)) * min(difficulty, 2)
            heading += curvature * step
            x += step * math.cos(heading)
            y += step * math.sin(heading)
            points.append((round(x, 6), round(y, 6)))
        return points

    def _generate_layout(self, route: Route, count: int, lane_half_width: float) -> List[LayoutBox]:
        """Roadside obstacles placed beyond the lane edges"""
        boxes = []
        for _ in range(count):
            s = float(self.rng.uniform(10.0, route.length - 5.0))
            side = 1.0 if self.rng.random() < 0.5 else -1.0
            offset = side * (lane_half_width + float(self.rng.uniform(1.5, 4.0)))
            px, py = route.point_at(s)
            h = route.heading_at(s)
            boxes.append(LayoutBox(
                x=round(px - math.sin(h) * offset, 6), y=round(py + math.cos(h) * offset, 6),
                yaw=round(h, 6), w=round(float(self.rng.uniform(1.5, 3.0)), 3),
                l=round(float(self.rng.uniform(2.0, 6.0)), 3)))
        return boxes

    def _generate_agents(self, route: Route, count: int, weather: str) -> List[AgentSpec]:
        """NPC vehicles ahead of the ego start, spaced along the route"""
        behaviors = permitted_behaviors(weather)
        agents = []
        s = 15.0
        for _ in range(count):
            s += float(self.rng.uniform(12.0, 25.0))
            if s > route.length - 10.0:
                break
            behavior = behaviors[int(self.rng.integers(len(behaviors)))]
            limit = self.config.behavior(behavior)[0]
            agents.append(AgentSpec(s=round(s, 3), speed=round(limit * float(self.rng.uniform(0.3, 0.8)), 3),
                                    w=1.9, l=round(float(self.rng.uniform(4.0, 5.0)), 3), behavior=behavior))
        return agents

    def _generate_pedestrians(self, route: Route, count: int, lane_half_width: float) -> List[PedestrianSpec]:
        peds = []
        for _ in range(count):
            peds.append(PedestrianSpec(
                s=round(float(self.rng.uniform(30.0, route.length - 10.0)), 3),
                lateral=-(lane_half_width + 1.0),
                speed=round(float(self.rng.uniform(0.8, 1.4)), 3),
                start_time=round(float(self.rng.uniform(2.0, 12.0)), 3)))
        return peds

    def generate(self, difficulty: int) -> Scenario:
        weather = WEATHER_CLASSES[int(self.rng.integers(len(WEATHER_CLASSES)))]
        lane_half_width = self.config.lane_half_width
        points = self._generate_route(difficulty)
        route = Route(points)
        scenario = Scenario(seed=self.seed, difficulty=difficulty, weather=weather,
                            route=points, lane_half_width=lane_half_width)
        if difficulty <= 0:
            return scenario

        scenario.layout = self._generate_layout(route, 2 + 2 * difficulty, lane_half_width)
        scenario.agents = self._generate_agents(route, difficulty + int(self.rng.integers(2)), weather)
        if difficulty >= 2:
            scenario.pedestrians = self._generate_pedestrians(route, 1, lane_half_width)
            scenario.stop_signs = [StopSignSpec(s=round(float(self.rng.uniform(20.0, 40.0)), 3))]
        light_s = round(float(self.rng.uniform(0.55, 0.75)) * route.length, 3)
        scenario.lights = [TrafficLightSpec(s=light_s, green=8.0, yellow=2.0, red=6.0,
                                            offset=round(float(self.rng.uniform(0.0, 16.0)), 3))]
        return scenario


def generate_scenario(seed: int, difficulty: int = 0, config: SimulationConfig = SIMULATION) -> Scenario:
    """Deterministic in seed: weather uniform over the 4 tags, NPC behavior per the weather rule"""
    scenario = ScenarioGenerator(seed, config).generate(difficulty)
    logger.debug(f"Scenario seed={seed} difficulty={difficulty} weather={scenario.weather} "
                 f"agents={len(scenario.agents)}")
    return scenario


def scenario_to_json(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), sort_keys=True, indent=1)


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(scenario_to_json(scenario))
    except OSError as exc:
        raise DataIOError(f"cannot write scenario {path}: {exc}") from None
    return path


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"scenario file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataIOError(f"corrupt scenario file {path}: {exc}") from None
    return Scenario.from_dict(data)

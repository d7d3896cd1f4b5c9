"""
Closed-loop route runner
Policies plan every model interval; the controller turns plans into
commands; the infraction detector watches every tick
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence
import logging
import math
import numpy as np

from .controller import ControlCommand, WaypointController
from .expert import ExpertPolicy
from .infractions import InfractionDetector, TrajectorySample
from .scenario import Scenario
from .sensors import LidarFrame, SensorFrame, SensorHistory, synth_lidar, synth_sensors
from .world import World
from ..data.sensor_pipeline import PointCloud
from ..utils.config import ExperimentConfig
from ..utils.errors import ContractError
from ..utils.metrics import MetricsCalculator, RouteResult

logger = logging.getLogger(__name__)

COMPLETION_TOLERANCE = 1.0  # metres short of the route end that still count as arrived


@dataclass
class RouteTrace:
    """Per-invocation record of what the policy asked for"""
    times: List[float] = field(default_factory=list)
    waypoints: List[np.ndarray] = field(default_factory=list)
    desired_speeds: List[float] = field(default_factory=list)
    samples: List[TrajectorySample] = field(default_factory=list)


PlanHook = Callable[[World, SensorHistory, int], None]


class RouteRunner:
    """Runs one policy over one scenario"""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.metrics = MetricsCalculator(config.eval)

    def _plan(self, policy, world: World, history: SensorHistory) -> np.ndarray:
        frame: Optional[SensorFrame] = None
        if getattr(policy, "needs_sensors", False):
            frame = synth_sensors(world, history, config=self.config.sim)
        waypoints = np.asarray(policy.plan(world, frame), dtype=np.float64)
        if waypoints.shape != (4, 2) or not np.all(np.isfinite(waypoints)):
            raise ContractError(f"policy returned invalid waypoints {waypoints.shape}")
        return waypoints

    def run(self, scenario: Scenario, policy, route_id: int = 0, time_budget: float = math.inf,
            record: bool = False, on_plan: Optional[PlanHook] = None):
        """
        Drive one route to completion, termination or the hard time cap

        Args:
            scenario: Route to drive
            policy: Object with plan(world, frame) -> 4 x 2 waypoints and optional reset()
            route_id: Identifier copied into the result
            time_budget: Route time after which a TO infraction ends the run
            record: Keep trajectory samples in the returned trace
            on_plan: Called with (world, history, invocation index) before each plan

        Returns:
            (RouteResult, RouteTrace)
        """
        sim = self.config.sim
        world = World(scenario, sim)
        detector = InfractionDetector(scenario, self.config.eval, time_budget)
        controller = WaypointController(self.config.controller)
        history = SensorHistory()
        trace = RouteTrace()
        if hasattr(policy, "reset"):
            policy.reset()

        ticks_per_plan = max(1, int(round(sim.model_interval / sim.tick)))
        hold_waypoints = sim.control_hold == "waypoints"
        command = ControlCommand(brake=1)
        plan_world = None
        waypoints = np.zeros((4, 2))
        best_s, distance = 0.0, 0.0
        tick, invocation = 0, 0
        sample = None
        length = world.route.length
        hard_cap = min(sim.expert_max_time, time_budget + sim.tick) if math.isfinite(time_budget) \
            else sim.expert_max_time

        while world.time < hard_cap:
            if tick % ticks_per_plan == 0:
                history.push(synth_lidar(world) if getattr(policy, "needs_sensors", False) or on_plan
                             else _pose_only_frame(world))
                while len(history) < 3:
                    history.push(history.frames[-1])
                if on_plan is not None:
                    on_plan(world, history, invocation)
                waypoints = self._plan(policy, world, history)
                plan_world = (world.ego.x, world.ego.y, world.ego.yaw)
                command = controller.control(waypoints, world.ego.speed,
                                             dt=sim.tick if hold_waypoints else sim.model_interval)
                trace.times.append(world.time)
                trace.waypoints.append(waypoints)
                trace.desired_speeds.append(controller.last_desired_speed)
                invocation += 1
            elif hold_waypoints:
                local = _reexpress(waypoints, plan_world, world)
                command = controller.control(local, world.ego.speed, dt=sim.tick)

            world.step(command)
            distance += world.ego.speed * sim.tick
            tick += 1
            sample = TrajectorySample.from_world(world)
            if record:
                trace.samples.append(sample)
            detector.update(sample)
            s, _ = world.ego_progress()
            best_s = max(best_s, s)
            if detector.terminated or best_s >= length - COMPLETION_TOLERANCE:
                break

        completed = best_s >= length - COMPLETION_TOLERANCE
        detector.finish(sample, completed)
        fraction = 1.0 if completed else min(1.0, best_s / length)
        result = self.metrics.score(detector.events, fraction)
        result.route_id, result.seed = route_id, scenario.seed
        result.distance_m, result.duration_s = distance, world.time
        logger.debug(f"Route {route_id}: RC={result.rc:.1f} IS={result.is_:.3f} DS={result.ds:.1f} "
                     f"events={[str(e) for e in result.events]}")
        return result, trace

    def expert_time(self, scenario: Scenario) -> float:
        """Time the scripted expert needs for the route (capped)"""
        result, _ = self.run(scenario, ExpertPolicy(self.config.sim))
        return result.duration_s

    def evaluate(self, scenario: Scenario, policy, route_id: int = 0) -> RouteResult:
        budget = self.config.eval.timeout_factor * self.expert_time(scenario)
        result, _ = self.run(scenario, policy, route_id, time_budget=budget)
        return result


def _pose_only_frame(world: World) -> LidarFrame:
    """History entry for policies that do not read sensors"""
    return LidarFrame(PointCloud(np.zeros((0, 3))), world.ego.pose)


def _reexpress(waypoints: np.ndarray, plan_pose, world: World) -> np.ndarray:
    """Waypoints planned in an earlier ego frame, expressed in the current one"""
    px, py, pyaw = plan_pose
    c, s = math.cos(pyaw), math.sin(pyaw)
    wx = px + c * waypoints[:, 0] - s * waypoints[:, 1]
    wy = py + s * waypoints[:, 0] + c * waypoints[:, 1]
    ego = world.ego
    ce, se = math.cos(ego.yaw), math.sin(ego.yaw)
    dx, dy = wx - ego.x, wy - ego.y
    return np.column_stack([ce * dx + se * dy, -se * dx + ce * dy])


def run_route(scenario: Scenario, policy, config: ExperimentConfig, route_id: int = 0) -> RouteResult:
    return RouteRunner(config).evaluate(scenario, policy, route_id)


def evaluate_routes(scenarios: Sequence[Scenario], policy_factory: Callable[[], object],
                    config: ExperimentConfig, workers: int = 1) -> List[RouteResult]:
    """
    Evaluate routes, optionally on a thread pool; one world and policy per route,
    results returned in scenario order
    """
    def _one(indexed):
        index, scenario = indexed
        result = run_route(scenario, policy_factory(), config, route_id=index)
        logger.info(f"Route {index} (seed {scenario.seed}, {scenario.weather}): "
                    f"RC={result.rc:.1f} IS={result.is_:.3f} DS={result.ds:.1f}")
        return result

    jobs = list(enumerate(scenarios))
    if workers <= 1:
        return [_one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs))

"""
Synthetic closed-loop world: scenarios, kinematics, sensors, expert, infractions and the route runner
"""

from .scenario import Scenario, generate_scenario, save_scenario, load_scenario, scenario_to_json
from .world import World, step_world
from .controller import ControlCommand, PidState, WaypointController, pid_step, waypoints_to_control
from .expert import ExpertPolicy, goal_point
from .sensors import SensorHistory, synth_lidar, synth_sensors
from .infractions import InfractionEvent, TrajectorySample, detect_infractions
from .runner import RouteRunner, run_route, evaluate_routes
from .collection import DataCollector, collect_dataset

__all__ = [
    'Scenario', 'generate_scenario', 'save_scenario', 'load_scenario', 'scenario_to_json',
    'World', 'step_world',
    'ControlCommand', 'PidState', 'WaypointController', 'pid_step', 'waypoints_to_control',
    'ExpertPolicy', 'goal_point', 'SensorHistory', 'synth_lidar', 'synth_sensors',
    'InfractionEvent', 'TrajectorySample', 'detect_infractions',
    'RouteRunner', 'run_route', 'evaluate_routes', 'DataCollector', 'collect_dataset',
]

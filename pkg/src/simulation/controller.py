"""
Waypoint-following control: a lateral PID on heading error and a
longitudinal PID on speed error
"""

from collections import deque
from copy import deepcopy
from dataclasses import dataclass, field
from typing import Deque, Optional, Tuple
import math
import numpy as np

from ..utils.config import CONTROLLER, ControllerConfig
from ..utils.errors import ContractError


@dataclass
class PidState:
    """Gains plus windowed integral and previous error"""
    kp: float
    ki: float
    kd: float
    window: int = 20
    clamp: float = float("inf")
    history: Deque[float] = field(default_factory=deque)
    previous: Optional[float] = None

    @property
    def integral(self) -> float:
        total = float(sum(self.history))
        return max(-self.clamp, min(self.clamp, total))

    def step(self, error: float, dt: float) -> float:
        if dt <= 0:
            raise ContractError(f"dt must be positive, got {dt}")
        self.history.append(error * dt)
        while len(self.history) > self.window:
            self.history.popleft()
        derivative = 0.0 if self.previous is None else (error - self.previous) / dt
        self.previous = error
        return self.kp * error + self.ki * self.integral + self.kd * derivative

    def reset(self) -> None:
        self.history.clear()
        self.previous = None


def pid_step(state: PidState, error: float, dt: float) -> Tuple[float, PidState]:
    """Functional PID update: returns the output and the advanced state"""
    advanced = deepcopy(state)
    output = advanced.step(error, dt)
    return output, advanced


@dataclass
class ControlCommand:
    steer: float = 0.0
    throttle: float = 0.0
    brake: int = 0

    def __post_init__(self):
        self.steer = float(np.clip(self.steer, -1.0, 1.0))
        self.throttle = 0.0 if self.brake else float(np.clip(self.throttle, 0.0, 1.0))
        self.brake = 1 if self.brake else 0


def lateral_pid(config: ControllerConfig = CONTROLLER) -> PidState:
    return PidState(config.lat_kp, config.lat_ki, config.lat_kd, config.integral_window, config.integral_clamp)


def longitudinal_pid(config: ControllerConfig = CONTROLLER) -> PidState:
    return PidState(config.lon_kp, config.lon_ki, config.lon_kd, config.integral_window, config.integral_clamp)


def desired_speed(waypoints: np.ndarray, config: ControllerConfig = CONTROLLER) -> float:
    """kappa times the mean spacing of consecutive waypoints"""
    wp = np.asarray(waypoints, dtype=np.float64)
    gaps = np.hypot(*(wp[1:] - wp[:-1]).T)
    return float(config.kappa * gaps.mean())


def waypoints_to_control(waypoints: np.ndarray, speed: float, lat: PidState, lon: PidState,
                         config: ControllerConfig = CONTROLLER, dt: Optional[float] = None) -> ControlCommand:
    """
    Convert 4 ego-frame waypoints into a control command

    Args:
        waypoints: 4 x 2 array of (x forward, y right) in metres
        speed: Current ego speed in m/s
        lat: Lateral PID state, advanced in place
        lon: Longitudinal PID state, advanced in place
        config: Controller configuration
        dt: Controller period (defaults to config.dt)

    Returns:
        ControlCommand with steer in [-1, 1], throttle in [0, max_throttle] and brake in {0, 1}
    """
    if speed < 0:
        raise ContractError(f"speed must be >= 0, got {speed}")
    wp = np.asarray(waypoints, dtype=np.float64)
    if wp.shape != (4, 2):
        raise ContractError(f"expected 4 x 2 waypoints, got {wp.shape}")
    dt = config.dt if dt is None else dt

    aim = (wp[0] + wp[1]) / 2.0
    heading_error = math.atan2(aim[1], aim[0])
    steer = lat.step(heading_error, dt)

    target = desired_speed(wp, config)
    throttle = lon.step(target - speed, dt)
    brake = target < config.brake_speed or speed > target * (1.0 + config.overspeed_margin)
    throttle = min(max(throttle, 0.0), config.max_throttle)
    return ControlCommand(steer=steer, throttle=throttle, brake=int(brake))


class WaypointController:
    """Owns the PID pair of one vehicle"""

    def __init__(self, config: ControllerConfig = CONTROLLER):
        self.config = config
        self.lat = lateral_pid(config)
        self.lon = longitudinal_pid(config)
        self.last_desired_speed = 0.0

    def control(self, waypoints: np.ndarray, speed: float, dt: Optional[float] = None) -> ControlCommand:
        self.last_desired_speed = desired_speed(waypoints, self.config)
        return waypoints_to_control(waypoints, speed, self.lat, self.lon, self.config, dt)

    def reset(self) -> None:
        self.lat.reset()
        self.lon.reset()

"""
Weather-conditioned behavior probe
The same lead-vehicle route is driven under a clear and an adverse weather
tag; only the tag and the lead's weather-permitted behavior class differ
"""

from dataclasses import dataclass
from typing import Callable, Dict, Sequence
import logging
import numpy as np

from ..simulation.runner import RouteRunner
from ..simulation.scenario import AgentSpec, Scenario
from ..utils.config import ExperimentConfig

logger = logging.getLogger(__name__)

PROBE_WEATHERS = ("sunny", "rainy")
LEAD_BEHAVIOR = {"sunny": "Normal", "cloudy": "Normal", "rainy": "Cautious", "foggy": "Cautious"}
ROUTE_LENGTH = 120.0
LEAD_GAP = 25.0
PROBE_SECONDS = 20.0


@dataclass
class WeatherProbeResult:
    weather: str
    mean_desired_speed: float
    invocations: int
    distance_m: float


def probe_scenario(weather: str, config: ExperimentConfig, seed: int = 0) -> Scenario:
    """Straight route with one lead vehicle ahead of the ego"""
    points = [(float(x), 0.0) for x in np.arange(0.0, ROUTE_LENGTH + 1e-9, 2.0)]
    behavior = LEAD_BEHAVIOR[weather]
    lead_speed = 0.6 * config.sim.behavior(behavior)[0]
    return Scenario(seed=seed, difficulty=1, weather=weather, route=points,
                    lane_half_width=config.sim.lane_half_width,
                    agents=[AgentSpec(s=LEAD_GAP, speed=round(lead_speed, 3), w=1.9, l=4.5, behavior=behavior)])


def weather_probe(policy_factory: Callable[[], object], config: ExperimentConfig,
                  weathers: Sequence[str] = PROBE_WEATHERS, seed: int = 0) -> Dict[str, WeatherProbeResult]:
    """Mean controller desired speed per weather variant of the probe route"""
    results = {}
    for weather in weathers:
        runner = RouteRunner(config)
        result, trace = runner.run(probe_scenario(weather, config, seed), policy_factory(),
                                   time_budget=PROBE_SECONDS)
        speeds = trace.desired_speeds
        results[weather] = WeatherProbeResult(
            weather=weather, mean_desired_speed=float(np.mean(speeds)) if speeds else 0.0,
            invocations=len(speeds), distance_m=result.distance_m)
        logger.info(f"Weather probe {weather}: mean desired speed {results[weather].mean_desired_speed:.3f} m/s "
                    f"over {len(speeds)} plans")
    return results


def format_probe(results: Dict[str, WeatherProbeResult]) -> str:
    lines = [f"{'weather':<10}{'mean desired speed (m/s)':>26}{'plans':>8}{'distance (m)':>14}"]
    for r in results.values():
        lines.append(f"{r.weather:<10}{r.mean_desired_speed:>26.4f}{r.invocations:>8d}{r.distance_m:>14.2f}")
    return "\n".join(lines) + "\n"

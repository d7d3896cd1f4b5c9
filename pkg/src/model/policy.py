"""
Closed-loop driving policy backed by the fusion network
"""

from typing import Optional
import logging
import numpy as np

from .network import DsuNetwork, ModelOutputs
from ..data.dataset import SensorFrame, model_inputs
from ..simulation.expert import goal_point
from ..simulation.world import World
from ..utils.config import ExperimentConfig
from ..utils.errors import ContractError

logger = logging.getLogger(__name__)


class ModelPolicy:
    """Plans from synthetic sensors: builds the model inputs, runs a forward pass, returns waypoints"""

    needs_sensors = True

    def __init__(self, network: DsuNetwork, config: ExperimentConfig):
        self.network = network
        self.config = config
        self.last_outputs: Optional[ModelOutputs] = None
        self.invocations = 0

    def reset(self) -> None:
        self.last_outputs = None
        self.invocations = 0

    def plan(self, world: World, frame: Optional[SensorFrame]) -> np.ndarray:
        if frame is None:
            raise ContractError("ModelPolicy needs a sensor frame")
        image, lidar = model_inputs(frame.clouds, frame.poses, frame.image, self.network.config,
                                    self.config.sensor)
        goal = goal_point(world, self.config.sim.goal_lookahead)
        outputs = self.network.forward(image, lidar, goal)
        self.last_outputs = outputs
        self.invocations += 1
        waypoints = outputs.waypoints.numpy().astype(np.float64)
        logger.debug(f"t={world.time:.2f}s waypoints {np.round(waypoints, 2).tolist()}")
        return waypoints

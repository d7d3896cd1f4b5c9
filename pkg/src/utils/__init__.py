"""
Utility modules and configuration
"""

from .config import (
    SENSOR, MODEL, LOSS, TRAIN, CONTROLLER, SIMULATION, EVALUATION,
    ExperimentConfig, load_config, parse_config_text,
)
from .errors import DsuError, DimensionError, ContractError, NumericError, DataIOError

__all__ = [
    'SENSOR', 'MODEL', 'LOSS', 'TRAIN', 'CONTROLLER', 'SIMULATION', 'EVALUATION',
    'ExperimentConfig', 'load_config', 'parse_config_text',
    'DsuError', 'DimensionError', 'ContractError', 'NumericError', 'DataIOError',
]

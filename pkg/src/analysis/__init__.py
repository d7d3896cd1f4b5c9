"""
Interpretability instrumentation: head correlation and the weather probe
"""

from .correlation import (
    CorrelationReport, cosine_similarity, correlation_report, mean_eca_weights, probe_batch,
    similarity_matrix, write_correlation,
)
from .weather_probe import WeatherProbeResult, weather_probe, probe_scenario, format_probe

__all__ = [
    'CorrelationReport', 'cosine_similarity', 'correlation_report', 'mean_eca_weights', 'probe_batch',
    'similarity_matrix', 'write_correlation',
    'WeatherProbeResult', 'weather_probe', 'probe_scenario', 'format_probe',
]

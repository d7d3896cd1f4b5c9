"""
Interpretability analysis tests: cosine similarity, the head correlation
report and the weather probe
"""

import numpy as np
import pytest

from src.analysis.correlation import (
    correlation_report, cosine_similarity, mean_eca_weights, probe_batch, similarity_matrix,
    write_correlation,
)
from src.analysis.weather_probe import format_probe, probe_scenario, weather_probe
from src.model.network import DsuNetwork
from src.model.policy import ModelPolicy
from src.simulation.expert import ExpertPolicy
from src.utils.config import HEAD_IDS, ExperimentConfig, ModelConfig
from src.utils.errors import ContractError

TINY = ModelConfig(width_factor=0.0625, R=16, gru_hidden=8, attention_heads=2, input_size=64, token_grid=2,
                   planning_mlp=(16, 16, 8), decoder_channels=(8, 8, 8, 8, 8), precision="float64")


def test_cosine_similarity_values():
    assert cosine_similarity([1, 0], [1, 0]) == 1.0
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 2, 3], [-1, -2, -3]) == -1.0
    assert cosine_similarity([0.5, 0.5], [2.0, 2.0]) == pytest.approx(1.0)


def test_cosine_similarity_properties():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.standard_normal(32), rng.standard_normal(32)
        ab = cosine_similarity(a, b)
        assert ab == cosine_similarity(b, a)
        assert -1.0 <= ab <= 1.0
        assert cosine_similarity(a, 3.0 * a) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ContractError):
        cosine_similarity(np.zeros(4), np.ones(4))
    with pytest.raises(ContractError):
        cosine_similarity(np.ones(3), np.ones(4))


def test_similarity_matrix_shape():
    rng = np.random.default_rng(0)
    weights = {head: rng.uniform(0, 1, 16) for head in HEAD_IDS}
    matrix = similarity_matrix(weights)
    assert matrix.shape == (5, 5)
    assert np.array_equal(matrix, matrix.T)
    assert np.all(np.diag(matrix) == 1.0)
    assert np.all((matrix >= -1.0) & (matrix <= 1.0))


def _inputs(count=3):
    rng = np.random.default_rng(8)
    return [(rng.uniform(0, 1, (3, 64, 64)), rng.uniform(0, 1, (4, 64, 64)), (15.0, float(i)))
            for i in range(count)]


def test_mean_eca_weights_average_the_batch():
    network = DsuNetwork(TINY)
    inputs = _inputs()
    mean = mean_eca_weights(network, inputs)
    single = [network.forward(*probe).eca["bev"].numpy() for probe in inputs]
    assert np.allclose(mean["bev"], np.mean(single, axis=0), atol=1e-15)
    with pytest.raises(ContractError):
        mean_eca_weights(network, [])


def test_correlation_report_is_deterministic(tmp_path):
    first = correlation_report(DsuNetwork(TINY), _inputs(), probe_seed=7)
    second = correlation_report(DsuNetwork(TINY), _inputs(), probe_seed=7)
    assert first.format_table() == second.format_table()
    assert set(first.planning_pairs()) == set(HEAD_IDS) - {"planning"}
    assert "probe seed 7" in first.format_table()

    table, figure = write_correlation(first, tmp_path / "analysis")
    assert table.read_text() == first.format_table()
    assert figure.stat().st_size > 0


def test_probe_batch_is_seeded():
    config = ExperimentConfig(model=TINY)
    a = probe_batch(config, seed=2, size=2, difficulty=0)
    b = probe_batch(config, seed=2, size=2, difficulty=0)
    assert len(a) == 2
    for (ia, la, ga), (ib, lb, gb) in zip(a, b):
        assert ia.shape == (3, 64, 64) and la.shape == (4, 64, 64)
        assert np.array_equal(ia, ib) and np.array_equal(la, lb) and ga == gb


def test_probe_scenarios_differ_only_in_weather_coupling():
    config = ExperimentConfig()
    sunny, rainy = probe_scenario("sunny", config), probe_scenario("rainy", config)
    assert sunny.route == rainy.route
    assert sunny.agents[0].s == rainy.agents[0].s
    assert sunny.agents[0].behavior == "Normal" and rainy.agents[0].behavior == "Cautious"


def test_weather_probe_expert_slows_down_in_rain():
    config = ExperimentConfig()
    results = weather_probe(lambda: ExpertPolicy(config.sim), config)
    assert results["rainy"].mean_desired_speed < results["sunny"].mean_desired_speed
    assert all(r.invocations > 0 for r in results.values())
    text = format_probe(results)
    assert text.splitlines()[1].startswith("sunny") and text.splitlines()[2].startswith("rainy")


def test_weather_probe_runs_tiny_model():
    config = ExperimentConfig(model=TINY)
    network = DsuNetwork(TINY)
    results = weather_probe(lambda: ModelPolicy(network, config), config)
    assert set(results) == {"sunny", "rainy"}
    for r in results.values():
        assert r.invocations > 0
        assert np.isfinite(r.mean_desired_speed) and r.mean_desired_speed >= 0.0

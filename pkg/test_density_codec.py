"""
Density map codec tests
"""

import math
import numpy as np
import pytest

from src.data.density_codec import (
    CHANNELS_PER_STEP, COS, DX, DY, HEAT, LOG_L, LOG_W, SIN,
    AgentBox, decode, encode, gaussian_radius, local_peaks,
)
from src.data.sensor_pipeline import bev_cells
from src.utils.errors import ContractError

R = 256
PPM = R / 32.0


def cell_center(row, col):
    """Ego-frame coordinates of the middle of a BEV cell"""
    return (R - 1 - row + 0.5) / PPM, (col + 0.5) / PPM - 16.0


def random_agents(rng, max_agents=8):
    agents, taken = [], {1: [], 2: [], 3: []}
    target = int(rng.integers(1, max_agents + 1))
    while len(agents) < target:
        x, y = rng.uniform(0.5, 31.5), rng.uniform(-15.5, 15.5)
        t = int(rng.integers(1, 4))
        rows, cols, _ = bev_cells(np.array([x]), np.array([y]), R, 32.0, 16.0)
        cell = (int(rows[0]), int(cols[0]))
        if any(max(abs(cell[0] - r), abs(cell[1] - c)) < 2 for r, c in taken[t]):
            continue
        taken[t].append(cell)
        agents.append(AgentBox(x, y, rng.uniform(0.5, 5.0), rng.uniform(0.5, 6.0),
                               rng.uniform(-math.pi, math.pi), t))
    return agents


def angle_gap(a, b):
    return abs(math.atan2(math.sin(a - b), math.cos(a - b)))


def test_agent_box_validation():
    with pytest.raises(ContractError):
        AgentBox(1.0, 0.0, 0.0, 4.0, 0.0)
    with pytest.raises(ContractError):
        AgentBox(1.0, 0.0, 2.0, 4.0, 0.0, timestep=4)
    assert AgentBox(1.0, 0.0, 2.0, 4.0, 3 * math.pi).theta == pytest.approx(math.pi)


def test_encode_no_agents():
    density, mask = encode([], R)
    assert density.shape == (R, R, 21) and mask.shape == (R, R, 3)
    assert not density.any() and not mask.any()


def test_encode_cell_center_agent():
    x, y = cell_center(200, 100)
    density, mask = encode([AgentBox(x, y, 2.0, 4.5, 0.0)], R)
    assert density[200, 100, HEAT] == 1.0
    assert density[200, 100, DX] == pytest.approx(0.5)
    assert density[200, 100, DY] == pytest.approx(0.5)
    assert density[200, 100, SIN] == 0.0 and density[200, 100, COS] == 1.0
    assert density[200, 100, LOG_W] == pytest.approx(math.log(2.0))
    assert density[200, 100, LOG_L] == pytest.approx(math.log(4.5))
    assert mask[200, 100, 0] and mask.sum() == 1
    assert density[:, :, HEAT].max() == 1.0
    assert not density[:, :, CHANNELS_PER_STEP:].any()


def test_encode_heading_quarter_turn():
    x, y = cell_center(128, 128)
    density, _ = encode([AgentBox(x, y, 2.0, 4.5, math.pi / 2, timestep=2)], R)
    base = CHANNELS_PER_STEP
    assert density[128, 128, base + SIN] == 1.0
    assert abs(density[128, 128, base + COS]) < 1e-15


def test_encode_drops_out_of_window_agents():
    density, mask = encode([AgentBox(-3.0, 0.0, 2.0, 4.5, 0.0), AgentBox(10.0, 20.0, 2.0, 4.5, 0.0)], R)
    assert not density.any() and not mask.any()


def test_gaussian_radius_grows_with_size():
    assert gaussian_radius(8, 8) < gaussian_radius(36, 16)
    assert gaussian_radius(36, 16) > 0


def test_local_peaks_plateau_keeps_first_cell():
    heat = np.zeros((5, 5))
    heat[2, 2] = heat[2, 3] = 0.9
    assert np.argwhere(local_peaks(heat, 0.5)).tolist() == [[2, 2]]


def test_decode_empty_and_threshold_contract():
    assert decode(np.zeros((R, R, 21)), 0.5) == []
    with pytest.raises(ContractError):
        decode(np.zeros((R, R, 21)), 1.0)
    with pytest.raises(ContractError):
        decode(np.zeros((R, R, 14)), 0.5)


def test_two_agents_ten_metres_apart():
    agents = [AgentBox(8.0, 0.0, 2.0, 4.5, 0.0), AgentBox(18.0, 0.0, 2.0, 4.5, 0.0)]
    found = decode(encode(agents, R)[0], 0.5)
    assert len(found) == 2
    assert sorted(round(a.x, 6) for a in found) == [8.0, 18.0]
    assert all(a.kind == "vehicle" for a in found)


def test_pedestrian_kind_from_extent():
    found = decode(encode([AgentBox(5.0, 2.0, 0.6, 0.6, 0.0, kind="pedestrian")], R)[0], 0.5)
    assert [a.kind for a in found] == ["pedestrian"]


def test_round_trip_random_agent_sets():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        agents = random_agents(rng)
        found = decode(encode(agents, R)[0], 0.5)
        assert len(found) == len(agents)
        for truth in agents:
            match = min((a for a in found if a.timestep == truth.timestep),
                        key=lambda a: (a.x - truth.x) ** 2 + (a.y - truth.y) ** 2)
            assert abs(match.x - truth.x) < 1e-6 and abs(match.y - truth.y) < 1e-6
            assert abs(match.w - truth.w) < 1e-6 and abs(match.l - truth.l) < 1e-6
            assert angle_gap(match.theta, truth.theta) < 1e-9


def test_round_trip_reduced_resolution():
    agents = [AgentBox(6.3, -4.1, 1.9, 4.4, 0.4, 1), AgentBox(20.7, 7.7, 2.1, 5.0, -2.0, 3)]
    found = decode(encode(agents, 64)[0], 0.5)
    assert len(found) == 2
    for truth, match in zip(agents, found):
        assert match.timestep == truth.timestep
        assert abs(match.x - truth.x) < 1e-6 and abs(match.y - truth.y) < 1e-6

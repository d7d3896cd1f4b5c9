"""
Task correlation through channel attention
Each head gates the shared scene feature with its own ECA weights; the
cosine similarity of two heads' mean weight vectors says how much they
draw on the same scene channels
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union
import logging
import numpy as np
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from ..model.network import DsuNetwork
from ..simulation.expert import ExpertPolicy, goal_point
from ..simulation.runner import RouteRunner
from ..simulation.scenario import generate_scenario
from ..simulation.sensors import synth_sensors
from ..data.dataset import model_inputs
from ..data.sensor_pipeline import T_PAST
from ..utils.config import ExperimentConfig, HEAD_IDS
from ..utils.errors import ContractError, DataIOError

logger = logging.getLogger(__name__)

ProbeInput = Tuple[np.ndarray, np.ndarray, Tuple[float, float]]

# Display names of the heads in report rows
HEAD_LABELS = {"planning": "Planning", "density": "Detection & prediction", "bev": "BEV map",
               "traffic": "Traffic rules", "weather": "Weather"}


def cosine_similarity(a, b) -> float:
    """dot(a, b) / (|a| |b|); a zero vector has no defined similarity"""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ContractError(f"cosine similarity needs equal lengths, got {a.size} and {b.size}")
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ContractError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a / norm_a, b / norm_b), -1.0, 1.0))


@dataclass
class CorrelationReport:
    """Pairwise similarity of mean ECA weights over a probe batch"""
    heads: Tuple[str, ...]
    matrix: np.ndarray
    probe_seed: int
    probe_size: int
    mean_weights: Dict[str, np.ndarray] = field(default_factory=dict)

    def planning_pairs(self) -> Dict[str, float]:
        row = self.heads.index("planning")
        return {head: float(self.matrix[row, j]) for j, head in enumerate(self.heads) if head != "planning"}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, index=list(self.heads), columns=list(self.heads))

    def format_table(self) -> str:
        lines = [f"Correlation of auxiliary tasks and planning (probe seed {self.probe_seed}, "
                 f"{self.probe_size} inputs)", "",
                 f"{'Task pair':<36}{'Cosine similarity':>18}"]
        lines.append("-" * 54)
        for head, value in self.planning_pairs().items():
            lines.append(f"{'Planning & ' + HEAD_LABELS[head]:<36}{value:>18.4f}")
        lines += ["", "Full matrix", self.to_frame().to_string(float_format=lambda v: f"{v:.4f}")]
        return "\n".join(lines) + "\n"


def mean_eca_weights(network: DsuNetwork, inputs: Sequence[ProbeInput]) -> Dict[str, np.ndarray]:
    """Per-head ECA weights averaged over the probe inputs"""
    if not inputs:
        raise ContractError("probe batch is empty")
    totals = {head: None for head in HEAD_IDS}
    for image, lidar, goal in inputs:
        outputs = network.forward(image, lidar, goal)
        for head in HEAD_IDS:
            w = outputs.eca[head].numpy().astype(np.float64)
            totals[head] = w.copy() if totals[head] is None else totals[head] + w
    return {head: total / len(inputs) for head, total in totals.items()}


def similarity_matrix(weights: Dict[str, np.ndarray], heads: Sequence[str] = HEAD_IDS) -> np.ndarray:
    n = len(heads)
    matrix = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            matrix[i, j] = matrix[j, i] = cosine_similarity(weights[heads[i]], weights[heads[j]])
    return matrix


def probe_batch(config: ExperimentConfig, seed: int = 0, size: int = 8,
                difficulty: int = 1) -> List[ProbeInput]:
    """
    Model inputs sampled from expert drives over seeded scenarios

    Args:
        config: Experiment configuration (sensor and model sections are used)
        seed: Probe seed; fixes the scenarios and so the batch
        size: Number of inputs
        difficulty: Scenario difficulty

    Returns:
        List of (image, lidar, goal) triples
    """
    rng = np.random.default_rng(seed)
    inputs: List[ProbeInput] = []
    per_route = max(1, min(size, 4))

    class _Enough(Exception):
        pass

    while len(inputs) < size:
        scenario = generate_scenario(int(rng.integers(2 ** 31)), difficulty, config.sim)
        taken = 0

        def on_plan(world, history, invocation):
            nonlocal taken
            if invocation < T_PAST - 1 or invocation % 2:
                return
            frame = synth_sensors(world, history, config=config.sim)
            image, lidar = model_inputs(frame.clouds, frame.poses, frame.image, config.model, config.sensor)
            inputs.append((image, lidar, goal_point(world, config.sim.goal_lookahead)))
            taken += 1
            if taken >= per_route or len(inputs) >= size:
                raise _Enough

        try:
            RouteRunner(config).run(scenario, ExpertPolicy(config.sim), on_plan=on_plan)
        except _Enough:
            pass
    return inputs[:size]


def correlation_report(network: DsuNetwork, inputs: Sequence[ProbeInput], probe_seed: int = 0) -> CorrelationReport:
    weights = mean_eca_weights(network, inputs)
    report = CorrelationReport(heads=tuple(HEAD_IDS), matrix=similarity_matrix(weights),
                               probe_seed=probe_seed, probe_size=len(inputs), mean_weights=weights)
    logger.info("Planning correlations: " + ", ".join(f"{h}={v:.4f}" for h, v in report.planning_pairs().items()))
    return report


def plot_correlation(report: CorrelationReport, path: Union[str, Path]) -> Path:
    """Heat-map of the full similarity matrix"""
    labels = [HEAD_LABELS[h] for h in report.heads]
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    image = ax.imshow(report.matrix, vmin=-1.0, vmax=1.0, cmap="RdBu_r")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=35, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=8)
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{report.matrix[i, j]:.2f}", ha="center", va="center", fontsize=7)
    fig.colorbar(image, ax=ax, fraction=0.046, pad=0.04)
    ax.set_title("ECA channel-weight cosine similarity")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def write_correlation(report: CorrelationReport, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    table_path, figure_path = out_dir / "correlation.txt", out_dir / "correlation.png"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        table_path.write_text(report.format_table())
        plot_correlation(report, figure_path)
    except OSError as exc:
        raise DataIOError(f"cannot write correlation report in {out_dir}: {exc}") from None
    return table_path, figure_path

"""
Expert data collection
Drives the scripted expert over generated routes and writes a labelled
frame directory at every model invocation once three real LiDAR frames
are buffered
"""

from pathlib import Path
from typing import Optional, Union
import logging
import numpy as np
import pandas as pd

from .expert import ExpertPolicy
from .runner import RouteRunner
from .scenario import generate_scenario
from .sensors import synth_sensors
from ..data.dataset import FRAME_PATTERN, write_frame
from ..data.sensor_pipeline import T_PAST
from ..utils.config import ExperimentConfig, WEATHER_CLASSES
from ..utils.errors import ContractError, DataIOError

logger = logging.getLogger(__name__)

MAX_DIFFICULTY = 2


class _FrameBudgetReached(Exception):
    pass


class DataCollector:
    """Writes frame_%06d directories plus manifest.tsv and frames.tsv"""

    def __init__(self, out_dir: Union[str, Path], config: ExperimentConfig, seed: int = 0,
                 difficulty: Optional[int] = None):
        self.out_dir = Path(out_dir)
        self.config = config
        self.seed = seed
        self.difficulty = difficulty
        self.rng = np.random.default_rng(seed)
        self.rows = []

    def _route_frames(self, scenario, route_index: int, remaining: int) -> int:
        expert = ExpertPolicy(self.config.sim)
        runner = RouteRunner(self.config)
        written = 0
        limit = min(remaining, self.config.sim.frames_per_episode)

        def on_plan(world, history, invocation):
            nonlocal written
            if invocation < T_PAST - 1:
                return
            frame = synth_sensors(world, history, expert, self.config.sim)
            index = len(self.rows)
            write_frame(self.out_dir / FRAME_PATTERN.format(index), frame)
            self.rows.append({"frame": FRAME_PATTERN.format(index), "route": route_index,
                              "scenario_seed": scenario.seed, "difficulty": scenario.difficulty,
                              "weather": scenario.weather, "time": round(world.time, 6)})
            written += 1
            if written >= limit:
                raise _FrameBudgetReached

        try:
            runner.run(scenario, expert, route_id=route_index, on_plan=on_plan)
        except _FrameBudgetReached:
            pass
        return written

    def collect(self, num_frames: int) -> pd.DataFrame:
        """
        Generate num_frames labelled frames

        Args:
            num_frames: Exact number of frame directories to write

        Returns:
            Per-frame manifest DataFrame
        """
        if num_frames < 1:
            raise ContractError(f"num_frames must be >= 1, got {num_frames}")
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataIOError(f"cannot create {self.out_dir}: {exc}") from None

        route_index = 0
        while len(self.rows) < num_frames:
            scenario_seed = int(self.rng.integers(2 ** 31))
            difficulty = self.difficulty if self.difficulty is not None \
                else int(self.rng.integers(MAX_DIFFICULTY + 1))
            scenario = generate_scenario(scenario_seed, difficulty, self.config.sim)
            written = self._route_frames(scenario, route_index, num_frames - len(self.rows))
            logger.info(f"Route {route_index} ({scenario.weather}, difficulty {difficulty}): "
                        f"{written} frames, {len(self.rows)}/{num_frames} total")
            route_index += 1

        frames = pd.DataFrame(self.rows)
        self.write_manifest(frames)
        return frames

    def write_manifest(self, frames: pd.DataFrame) -> Path:
        counts = frames["weather"].value_counts()
        summary = [("frames", len(frames)), ("routes", int(frames["route"].nunique())), ("seed", self.seed)]
        summary += [(f"weather/{tag}", int(counts.get(tag, 0))) for tag in WEATHER_CLASSES]
        path = self.out_dir / "manifest.tsv"
        try:
            pd.DataFrame(summary, columns=["key", "value"]).to_csv(path, sep="\t", index=False,
                                                                   lineterminator="\n")
            frames.to_csv(self.out_dir / "frames.tsv", sep="\t", index=False, lineterminator="\n")
        except OSError as exc:
            raise DataIOError(f"cannot write manifest in {self.out_dir}: {exc}") from None
        logger.info(f"Manifest written to {path}")
        return path


def collect_dataset(out_dir: Union[str, Path], num_frames: int, config: ExperimentConfig,
                    seed: int = 0, difficulty: Optional[int] = None) -> pd.DataFrame:
    return DataCollector(out_dir, config, seed, difficulty).collect(num_frames)


def read_manifest(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"manifest not found: {path}")
    table = pd.read_csv(path, sep="\t")
    return dict(zip(table["key"], table["value"]))

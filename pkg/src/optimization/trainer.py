"""
Training loop for the fusion network
Fixed-seed batches, per-step loss log, periodic checkpoints carrying the
optimizer state so a resumed run continues exactly where it stopped
"""

from pathlib import Path
from typing import List, Optional, Tuple, Union
import logging
import numpy as np
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .optimizer import Optimizer, build_optimizer, cosine_lr
from ..core.checkpoint import load_checkpoint
from ..core.tensor import backward
from ..data.dataset import FrameDataset
from ..model.losses import LossBreakdown, ablated_weights, compute_losses
from ..model.network import DsuNetwork
from ..utils.config import ExperimentConfig
from ..utils.errors import ContractError, DataIOError

logger = logging.getLogger(__name__)

STEP_RECORD = "train/step"
LOG_COLUMNS = ["step", "lr", "total", "wp", "O", "O_heat", "O_reg", "M", "tf", "tf_light", "tf_sign", "wc",
               "grad_norm", "bev_acc", "weather_acc", "skipped"]


def artifact_paths(out_path: Union[str, Path]) -> Tuple[Path, Path]:
    """Loss log and loss-curve paths that sit next to a checkpoint"""
    out_path = Path(out_path)
    return out_path.with_name(f"{out_path.stem}_loss.tsv"), out_path.with_name(f"{out_path.stem}_loss.png")


def batch_indices(step: int, batch: int, size: int, seed: int) -> List[int]:
    """Dataset indices for one step; a fresh permutation per pass keeps every step reproducible on its own"""
    indices = []
    for j in range(batch):
        position = step * batch + j
        epoch, offset = divmod(position, size)
        order = np.random.default_rng([seed, epoch]).permutation(size)
        indices.append(int(order[offset]))
    return indices


class Trainer:
    """Drives the network over a FrameDataset with the configured multi-task objective"""

    def __init__(self, network: DsuNetwork, dataset: FrameDataset, config: ExperimentConfig,
                 out_path: Union[str, Path]):
        self.network = network
        self.dataset = dataset
        self.config = config
        self.out_path = Path(out_path)
        self.log_path, self.plot_path = artifact_paths(self.out_path)
        self.weights = ablated_weights(config.loss, config.train.ablated_heads)
        self.optimizer: Optimizer = build_optimizer(network.named_parameters(), config.train)
        self.step = 0
        self.skipped = 0
        self.rows: List[dict] = []
        self._bad = set()
        if config.train.ablated_heads:
            logger.info(f"Ablated heads: {', '.join(config.train.ablated_heads)}")

    @classmethod
    def resume(cls, checkpoint: Union[str, Path], network: DsuNetwork, dataset: FrameDataset,
               config: ExperimentConfig, out_path: Union[str, Path]) -> "Trainer":
        """Restore parameters, optimizer buffers, the step counter and earlier log rows"""
        _, records = load_checkpoint(checkpoint)
        network.load_records(records, source=str(checkpoint))
        trainer = cls(network, dataset, config, out_path)
        trainer.optimizer.load_state(records)
        if STEP_RECORD not in records:
            raise ContractError(f"{checkpoint} has no {STEP_RECORD} record")
        trainer.step = int(round(float(np.asarray(records[STEP_RECORD]).reshape(-1)[0])))
        earlier_log = trainer.log_path if trainer.log_path.is_file() else artifact_paths(checkpoint)[0]
        if earlier_log.is_file():
            previous = pd.read_csv(earlier_log, sep="\t", float_precision="round_trip")
            previous = previous[previous["step"] <= trainer.step]
            trainer.rows = previous.to_dict("records")
            if trainer.rows:
                trainer.skipped = int(trainer.rows[-1]["skipped"])
        logger.info(f"Resumed from {checkpoint} at step {trainer.step}")
        return trainer

    def _sample(self, index: int):
        if index in self._bad:
            return None
        try:
            return self.dataset[index]
        except DataIOError as exc:
            self._bad.add(index)
            logger.warning(f"Skipping corrupt sample {index}: {exc}")
            return None

    def train_step(self) -> dict:
        """One optimizer step over one batch; returns the log row"""
        train = self.config.train
        lr = cosine_lr(self.step, train.steps, train.lr, train.lr_min)
        self.optimizer.zero_grad()

        indices = batch_indices(self.step, train.batch, len(self.dataset), train.seed)
        samples = []
        for index in indices:
            sample = self._sample(index)
            if sample is None:
                self.skipped += 1
            else:
                samples.append(sample)

        parts: List[LossBreakdown] = []
        bev_hits, weather_hits = [], []
        for sample in samples:
            outputs = self.network(sample.image, sample.lidar, sample.goal)
            breakdown = compute_losses(outputs, sample, self.weights)
            backward(breakdown.tensor * (1.0 / len(samples)))
            parts.append(breakdown)
            bev_hits.append(float(np.mean(np.argmax(outputs.bev.numpy(), axis=0) == sample.bev)))
            weather_hits.append(float(int(np.argmax(outputs.weather_logits.numpy())) == sample.weather))

        grad_norm = self.optimizer.grad_norm()
        if samples:
            self.optimizer.step(lr)
        else:
            logger.warning(f"Step {self.step + 1}: every sample in the batch was skipped")
        self.step += 1

        row = {"step": self.step, "lr": lr}
        for name in LOG_COLUMNS[2:12]:
            row[name] = float(np.mean([getattr(b, name) for b in parts])) if parts else float("nan")
        row.update(grad_norm=grad_norm,
                   bev_acc=float(np.mean(bev_hits)) if bev_hits else float("nan"),
                   weather_acc=float(np.mean(weather_hits)) if weather_hits else float("nan"),
                   skipped=self.skipped)
        self.rows.append(row)
        return row

    def checkpoint(self, path: Optional[Union[str, Path]] = None) -> Path:
        extra = self.optimizer.state_records()
        extra[STEP_RECORD] = np.array([float(self.step)])
        return self.network.save(path or self.out_path, extra)

    def fit(self, steps: Optional[int] = None) -> pd.DataFrame:
        """
        Train until the configured step count (or `steps` more steps)

        Args:
            steps: Optional number of steps to run from the current position

        Returns:
            Loss log DataFrame covering every completed step
        """
        train = self.config.train
        target = train.steps if steps is None else self.step + steps
        logger.info(f"Training {self.network.parameter_count()} parameters on {len(self.dataset)} frames: "
                    f"steps {self.step + 1}..{target}, batch {train.batch}, {train.optimizer}")
        while self.step < target:
            row = self.train_step()
            if self.step % train.log_every == 0 or self.step == target:
                logger.info(f"step {self.step}/{target} total={row['total']:.4f} wp={row['wp']:.4f} "
                            f"bev_acc={row['bev_acc']:.3f} weather_acc={row['weather_acc']:.2f} lr={row['lr']:.2e}")
            if train.checkpoint_every and self.step % train.checkpoint_every == 0 and self.step < target:
                self.checkpoint(self.out_path.with_name(f"{self.out_path.stem}_step{self.step:06d}"
                                                        f"{self.out_path.suffix}"))
                self.write_log()
        self.checkpoint()
        return self.write_log()

    def write_log(self) -> pd.DataFrame:
        log = pd.DataFrame(self.rows, columns=LOG_COLUMNS)
        try:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            log.to_csv(self.log_path, sep="\t", index=False, float_format="%.17g", lineterminator="\n")
            plot_loss_curve(log, self.plot_path)
        except OSError as exc:
            raise DataIOError(f"cannot write training log {self.log_path}: {exc}") from None
        return log

    def summary(self) -> dict:
        last = self.rows[-1] if self.rows else {}
        return {"steps": self.step, "final_total": last.get("total"), "final_wp": last.get("wp"),
                "bev_acc": last.get("bev_acc"), "weather_acc": last.get("weather_acc"),
                "skipped": self.skipped, "checkpoint": str(self.out_path), "loss_log": str(self.log_path)}


def plot_loss_curve(log: pd.DataFrame, path: Union[str, Path]) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for column in ("total", "wp", "O", "M", "tf", "wc"):
        ax.plot(log["step"], log[column], label=column, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def train_model(config: ExperimentConfig, data_dir: Union[str, Path], out_path: Union[str, Path],
                resume: Optional[Union[str, Path]] = None) -> Trainer:
    dataset = FrameDataset(data_dir, config.model, config.sensor)
    network = DsuNetwork(config.model)
    if resume is not None:
        trainer = Trainer.resume(resume, network, dataset, config, out_path)
    else:
        trainer = Trainer(network, dataset, config, out_path)
    trainer.fit()
    return trainer

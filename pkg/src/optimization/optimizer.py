"""
First-order optimizers over named parameters, with checkpointable state
"""

from collections import OrderedDict
from typing import Dict, Iterable, Mapping, Tuple
import math
import numpy as np

from ..core.tensor import Tensor
from ..utils.config import TRAIN, TrainConfig
from ..utils.errors import ContractError, DimensionError, NumericError

STATE_PREFIX = "optim/"


def cosine_lr(step: int, total_steps: int, lr: float, lr_min: float = 0.0) -> float:
    """Cosine decay from lr at step 0 to lr_min at total_steps"""
    if total_steps <= 0:
        return lr
    progress = min(max(step, 0), total_steps) / total_steps
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * progress))


class Optimizer:
    """Base class; subclasses keep one buffer per slot and parameter"""

    slots: Tuple[str, ...] = ()

    def __init__(self, named_parameters: Iterable[Tuple[str, Tensor]]):
        self.params: "OrderedDict[str, Tensor]" = OrderedDict(named_parameters)
        if not self.params:
            raise ContractError("optimizer needs at least one parameter")
        self.buffers: Dict[str, Dict[str, np.ndarray]] = {
            slot: {name: np.zeros_like(p.data) for name, p in self.params.items()} for slot in self.slots
        }
        self.iterations = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def grad_norm(self) -> float:
        total = 0.0
        for p in self.params.values():
            if p.grad is not None:
                total += float(np.sum(np.square(p.grad, dtype=np.float64)))
        return math.sqrt(total)

    def step(self, lr: float) -> None:
        self.iterations += 1
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise NumericError(f"non-finite gradient for {name}")
            self._update(name, p, lr)

    def _update(self, name: str, p: Tensor, lr: float) -> None:
        raise NotImplementedError

    def state_records(self) -> "OrderedDict[str, np.ndarray]":
        records = OrderedDict()
        records[f"{STATE_PREFIX}iterations"] = np.array([float(self.iterations)])
        for slot in self.slots:
            for name, buffer in self.buffers[slot].items():
                records[f"{STATE_PREFIX}{slot}/{name}"] = buffer
        return records

    def load_state(self, records: Mapping[str, np.ndarray]) -> None:
        key = f"{STATE_PREFIX}iterations"
        if key not in records:
            raise ContractError(f"checkpoint has no {key} record; was it written by a different optimizer?")
        self.iterations = int(round(float(np.asarray(records[key]).reshape(-1)[0])))
        for slot in self.slots:
            for name, buffer in self.buffers[slot].items():
                record = f"{STATE_PREFIX}{slot}/{name}"
                if record not in records:
                    raise ContractError(f"checkpoint has no {record} record")
                value = np.asarray(records[record])
                if value.shape != buffer.shape:
                    raise DimensionError(f"{record}: checkpoint shape {value.shape} vs optimizer {buffer.shape}")
                buffer[...] = value.astype(buffer.dtype)


class SGD(Optimizer):
    """Gradient descent with heavy-ball momentum: v = mu * v + g; p -= lr * v"""

    slots = ("velocity",)

    def __init__(self, named_parameters, momentum: float = 0.9):
        super().__init__(named_parameters)
        self.momentum = momentum

    def _update(self, name: str, p: Tensor, lr: float) -> None:
        v = self.buffers["velocity"][name]
        v *= self.momentum
        v += p.grad
        p.data -= lr * v


class Adam(Optimizer):
    slots = ("m", "v")

    def __init__(self, named_parameters, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(named_parameters)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def _update(self, name: str, p: Tensor, lr: float) -> None:
        m = self.buffers["m"][name]
        v = self.buffers["v"][name]
        m *= self.beta1
        m += (1.0 - self.beta1) * p.grad
        v *= self.beta2
        v += (1.0 - self.beta2) * np.square(p.grad)
        m_hat = m / (1.0 - self.beta1 ** self.iterations)
        v_hat = v / (1.0 - self.beta2 ** self.iterations)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def build_optimizer(named_parameters, config: TrainConfig = TRAIN) -> Optimizer:
    if config.optimizer == "sgd":
        return SGD(named_parameters, config.momentum)
    if config.optimizer == "adam":
        return Adam(named_parameters, config.adam_beta1, config.adam_beta2)
    raise ContractError(f"unknown optimizer {config.optimizer!r}")

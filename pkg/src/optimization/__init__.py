"""
Optimizers and the training loop
"""

from .optimizer import Optimizer, SGD, Adam, build_optimizer, cosine_lr
from .trainer import Trainer, train_model, batch_indices, artifact_paths

__all__ = ['Optimizer', 'SGD', 'Adam', 'build_optimizer', 'cosine_lr',
           'Trainer', 'train_model', 'batch_indices', 'artifact_paths']

"""
II-DSU fusion network, its task heads, losses and the closed-loop policy
"""

from .layers import Module, Linear, Conv2d, LayerNorm, Mlp, MultiHeadSelfAttention, GRUCell
from .backbone import ConvBackbone
from .transfuser import TransfuserStage
from .heads import EcaModule, PlanningHead, DensityHead, BevHead, RuleHeads
from .network import DsuNetwork, ModelOutputs, load_network, stored_model_config
from .losses import LossBreakdown, compute_losses, total_loss, ablated_weights
from .policy import ModelPolicy

__all__ = [
    'Module', 'Linear', 'Conv2d', 'LayerNorm', 'Mlp', 'MultiHeadSelfAttention', 'GRUCell',
    'ConvBackbone', 'TransfuserStage', 'EcaModule', 'PlanningHead', 'DensityHead', 'BevHead', 'RuleHeads',
    'DsuNetwork', 'ModelOutputs', 'load_network', 'stored_model_config',
    'LossBreakdown', 'compute_losses', 'total_loss', 'ablated_weights', 'ModelPolicy',
]

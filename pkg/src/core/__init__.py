"""
Tensor engine: reverse-mode autodiff over numpy arrays
"""

from .tensor import Tensor, GradNode, GradGraph, backward, from_op, resolve_dtype
from .gradcheck import grad_check
from .init import ParameterFactory
from .checkpoint import save_checkpoint, load_checkpoint, encode_checkpoint, decode_checkpoint
from . import ops

__all__ = [
    'Tensor', 'GradNode', 'GradGraph', 'backward', 'from_op', 'resolve_dtype',
    'grad_check', 'ParameterFactory', 'ops',
    'save_checkpoint', 'load_checkpoint', 'encode_checkpoint', 'decode_checkpoint',
]

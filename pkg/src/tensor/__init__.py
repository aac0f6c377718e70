from .tensor import Tensor, ComputationGraph, Node, no_grad, backward, active_graph
from .ops import apply, op_kinds
from .optim import AdamState, adam_step, clip_grad_norm

__all__ = [
    'Tensor', 'ComputationGraph', 'Node', 'no_grad', 'backward', 'active_graph',
    'apply', 'op_kinds', 'AdamState', 'adam_step', 'clip_grad_norm',
]

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import GraphError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_graph: ContextVar[Optional['ComputationGraph']] = ContextVar('active_graph', default=None)


class Tensor:
    """Dense n-dimensional array with an optional gradient buffer.

    ``values`` is always a contiguous numpy array. ``grad`` is allocated by
    the first backward pass that reaches this tensor and always has the shape
    of ``values``.
    """

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.ascontiguousarray(values)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        if self.values.size != 1:
            raise GraphError(f"item() needs a single-valued tensor, got shape {self.shape}")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.values.dtype, copy=True)
        else:
            self.grad += grad

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    """One recorded operation: kind, input references, output reference."""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


class ComputationGraph:
    """Tape of operations recorded while the graph is active.

    Nodes are appended in execution order, which is a topological order of
    the data flow. ``backward`` may be called once per graph.

    Usage:
        with ComputationGraph() as graph:
            loss = ...
        graph.backward(loss)
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self._token = None
        self._consumed = False

    def __enter__(self) -> 'ComputationGraph':
        self._token = _active_graph.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _active_graph.reset(self._token)
        self._token = None
        return False

    def record(self, node: Node):
        if self._consumed:
            raise GraphError("cannot record operations on a graph after backward")
        self.nodes.append(node)

    def backward(self, loss: Tensor):
        """Populate ``grad`` of every tracked leaf with d(loss)/d(leaf).

        Leaves the loss does not depend on, including every leaf when the loss
        itself carries no gradient, receive zeros.
        """
        if self._consumed:
            raise GraphError("backward was already run on this graph")
        if loss.size != 1 or loss.values.ndim > 1:
            raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._consumed = True

        grads = {id(loss): np.ones_like(loss.values)} if loss.requires_grad else {}
        for node in reversed(self.nodes):
            upstream = grads.pop(id(node.output), None)
            if upstream is None:
                continue
            input_grads = node.backward_fn(upstream)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = grad

        # whatever is left belongs to leaves (parameters and user inputs)
        outputs = {id(node.output) for node in self.nodes}
        leaves = {}
        for node in self.nodes:
            for tensor in node.inputs:
                if id(tensor) not in outputs:
                    leaves[id(tensor)] = tensor
        if id(loss) not in outputs:
            leaves[id(loss)] = loss
        for key, tensor in leaves.items():
            if tensor.requires_grad:
                tensor.accumulate_grad(grads.get(key, np.zeros_like(tensor.values)))


def active_graph() -> Optional[ComputationGraph]:
    return _active_graph.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable operation recording inside the block."""
    token = _active_graph.set(None)
    try:
        yield
    finally:
        _active_graph.reset(token)


def backward(graph: ComputationGraph, loss: Tensor):
    graph.backward(loss)

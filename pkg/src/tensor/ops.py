import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import ShapeError
from .tensor import Node, Tensor, active_graph

OpResult = Tuple[np.ndarray, Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]]

_OPS: Dict[str, Callable[..., OpResult]] = {}

GELU_COEFF = math.sqrt(2.0 / math.pi)


def register(kind: str):
    def decorator(fn):
        _OPS[kind] = fn
        return fn
    return decorator


def op_kinds() -> Tuple[str, ...]:
    return tuple(sorted(_OPS))


def apply(op_kind: str, *inputs: Tensor, **attrs) -> Tensor:
    """Run one operation and record it on the active graph.

    Args:
        op_kind: registered operation name (see ``op_kinds()``)
        inputs: input tensors; plain arrays are wrapped as constants
        attrs: non-differentiable operation attributes (axis, ids, targets, ...)

    Returns:
        The output tensor. It requires grad when any input does and a graph
        is active.

    Raises:
        ShapeError: the inputs violate the op's shape rule
    """
    fn = _OPS.get(op_kind)
    if fn is None:
        raise ValueError(f"unknown op kind '{op_kind}'")
    tensors = tuple(t if isinstance(t, Tensor) else Tensor(np.asarray(t)) for t in inputs)
    values, backward_fn = fn(*(t.values for t in tensors), **attrs)

    graph = active_graph()
    tracked = graph is not None and any(t.requires_grad for t in tensors)
    output = Tensor(values, requires_grad=tracked)
    if tracked:
        graph.record(Node(op=op_kind, inputs=tensors, output=output, backward_fn=backward_fn))
    return output


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: np.ndarray, b: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _stable_log_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


@register('matmul')
def _matmul(a: np.ndarray, b: np.ndarray) -> OpResult:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands need at least 2 dims, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {a.shape}[-1]={a.shape[-1]} vs {b.shape}[-2]={b.shape[-2]}"
        )
    try:
        out = np.matmul(a, b)
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions of {a.shape} and {b.shape} do not broadcast") from None

    def backward(grad):
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2))
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return out, backward


@register('add')
def _add(a: np.ndarray, b: np.ndarray) -> OpResult:
    _broadcast_shape('add', a, b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return a + b, backward


@register('mul')
def _mul(a: np.ndarray, b: np.ndarray) -> OpResult:
    _broadcast_shape('mul', a, b)

    def backward(grad):
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)

    return a * b, backward


@register('scale')
def _scale(x: np.ndarray, factor: float) -> OpResult:
    factor = x.dtype.type(factor)

    def backward(grad):
        return (grad * factor,)

    return x * factor, backward


@register('sum')
def _sum(x: np.ndarray) -> OpResult:
    def backward(grad):
        return (np.broadcast_to(grad, x.shape).copy(),)

    return np.asarray(x.sum(), dtype=x.dtype), backward


@register('mean')
def _mean(x: np.ndarray) -> OpResult:
    count = max(1, x.size)

    def backward(grad):
        return (np.broadcast_to(grad / count, x.shape).astype(x.dtype),)

    return np.asarray(x.sum() / count, dtype=x.dtype), backward


@register('softmax')
def _softmax(x: np.ndarray, axis: int = -1) -> OpResult:
    shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
    out = shifted / np.sum(shifted, axis=axis, keepdims=True)

    def backward(grad):
        inner = np.sum(grad * out, axis=axis, keepdims=True)
        return (out * (grad - inner),)

    return out, backward


@register('log_softmax')
def _log_softmax(x: np.ndarray, axis: int = -1) -> OpResult:
    out = _stable_log_softmax(x, axis)

    def backward(grad):
        probs = np.exp(out)
        return (grad - probs * np.sum(grad, axis=axis, keepdims=True),)

    return out, backward


@register('layer_norm')
def _layer_norm(x: np.ndarray, scale: np.ndarray, offset: np.ndarray, eps: float = 1e-5) -> OpResult:
    width = x.shape[-1]
    if scale.shape != (width,) or offset.shape != (width,):
        raise ShapeError(
            f"layer_norm: scale {scale.shape} and offset {offset.shape} must both be ({width},)"
        )
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    out = normed * scale + offset

    def backward(grad):
        grad_normed = grad * scale
        grad_x = inv_std * (
            grad_normed
            - grad_normed.mean(axis=-1, keepdims=True)
            - normed * np.mean(grad_normed * normed, axis=-1, keepdims=True)
        )
        reduce_axes = tuple(range(x.ndim - 1))
        grad_scale = np.sum(grad * normed, axis=reduce_axes)
        grad_offset = np.sum(grad, axis=reduce_axes)
        return grad_x, grad_scale, grad_offset

    return out, backward


@register('gelu')
def _gelu(x: np.ndarray) -> OpResult:
    # tanh approximation
    inner = GELU_COEFF * (x + 0.044715 * x ** 3)
    tanh = np.tanh(inner)
    out = 0.5 * x * (1.0 + tanh)

    def backward(grad):
        d_inner = GELU_COEFF * (1.0 + 3 * 0.044715 * x ** 2)
        local = 0.5 * (1.0 + tanh) + 0.5 * x * (1.0 - tanh ** 2) * d_inner
        return (grad * local,)

    return out, backward


@register('embedding_lookup')
def _embedding_lookup(table: np.ndarray, ids) -> OpResult:
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: ids must lie in [0, {table.shape[0]}), got range [{ids.min()}, {ids.max()}]"
        )

    def backward(grad):
        grad_table = np.zeros_like(table)
        np.add.at(grad_table, ids.reshape(-1), grad.reshape(-1, table.shape[1]))
        return (grad_table,)

    return table[ids], backward


@register('concat')
def _concat(*parts: np.ndarray, axis: int = -1) -> OpResult:
    if not parts:
        raise ShapeError("concat: needs at least one input")
    ndim = parts[0].ndim
    axis_index = axis % ndim
    for part in parts:
        if part.ndim != ndim or any(
            part.shape[d] != parts[0].shape[d] for d in range(ndim) if d != axis_index
        ):
            raise ShapeError(
                f"concat: shapes {[p.shape for p in parts]} differ outside axis {axis}"
            )
    bounds = np.cumsum([0] + [p.shape[axis_index] for p in parts])

    def backward(grad):
        return tuple(
            np.take(grad, np.arange(bounds[i], bounds[i + 1]), axis=axis_index)
            for i in range(len(parts))
        )

    return np.concatenate(parts, axis=axis_index), backward


@register('slice')
def _slice(x: np.ndarray, index) -> OpResult:
    try:
        out = x[index]
    except IndexError as e:
        raise ShapeError(f"slice: index {index!r} invalid for shape {x.shape}: {e}") from None

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)

    def backward(grad):
        grad_x = np.zeros_like(x)
        if basic:
            grad_x[index] += grad
        else:
            # integer-array indices may repeat rows
            np.add.at(grad_x, index, grad)
        return (grad_x,)

    return np.array(out, copy=True), backward


@register('reshape')
def _reshape(x: np.ndarray, shape: Tuple[int, ...]) -> OpResult:
    try:
        out = x.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None

    def backward(grad):
        return (grad.reshape(x.shape),)

    return out, backward


@register('transpose')
def _transpose(x: np.ndarray, axes: Tuple[int, ...]) -> OpResult:
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} are not a permutation of {x.ndim} dims")
    inverse = np.argsort(axes)

    def backward(grad):
        return (np.transpose(grad, inverse),)

    return np.ascontiguousarray(np.transpose(x, axes)), backward


@register('causal_mask')
def _causal_mask(scores: np.ndarray) -> OpResult:
    if scores.ndim < 2 or scores.shape[-1] != scores.shape[-2]:
        raise ShapeError(f"causal_mask: last two dims must be square, got {scores.shape}")
    length = scores.shape[-1]
    future = np.triu(np.ones((length, length), dtype=bool), k=1)
    out = np.where(future, -np.inf, scores).astype(scores.dtype)

    def backward(grad):
        return (np.where(future, 0.0, grad).astype(grad.dtype),)

    return out, backward


@register('dropout_mask')
def _dropout_mask(x: np.ndarray, rate: float, seed: int) -> OpResult:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout_mask: rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return x, lambda grad: (grad,)
    keep = np.random.default_rng(seed).random(x.shape) >= rate
    factor = (keep / (1.0 - rate)).astype(x.dtype)

    def backward(grad):
        return (grad * factor,)

    return x * factor, backward


@register('cross_entropy')
def _cross_entropy(logits: np.ndarray, targets, reduction: str = 'mean', ignore_index: Optional[int] = None) -> OpResult:
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: logits must be (N, V) with targets (N,), got {logits.shape} and {targets.shape}"
        )
    valid = np.ones(targets.shape, dtype=bool) if ignore_index is None else targets != ignore_index
    safe_targets = np.where(valid, targets, 0)
    if valid.any() and (safe_targets[valid].min() < 0 or safe_targets[valid].max() >= logits.shape[1]):
        raise ShapeError(f"cross_entropy: targets out of range for {logits.shape[1]} classes")
    log_probs = _stable_log_softmax(logits, axis=-1)
    rows = np.arange(logits.shape[0])
    nll = -log_probs[rows, safe_targets] * valid
    count = max(1, int(valid.sum()))
    norm = count if reduction == 'mean' else 1
    out = np.asarray(nll.sum() / norm, dtype=logits.dtype)

    def backward(grad):
        grad_logits = np.exp(log_probs)
        grad_logits[rows, safe_targets] -= 1.0
        grad_logits *= valid[:, None]
        return (grad_logits * (grad / norm),)

    return out, backward


@register('kl_divergence')
def _kl_divergence(target_log_probs: np.ndarray, pred_log_probs: np.ndarray) -> OpResult:
    """Row-mean KL(target || pred) over log-probability rows."""
    if target_log_probs.shape != pred_log_probs.shape or target_log_probs.ndim != 2:
        raise ShapeError(
            f"kl_divergence: needs two equal (N, V) inputs, got {target_log_probs.shape} and {pred_log_probs.shape}"
        )
    rows = max(1, target_log_probs.shape[0])
    target_probs = np.exp(target_log_probs)
    diff = target_log_probs - pred_log_probs
    out = np.asarray(np.sum(target_probs * diff) / rows, dtype=pred_log_probs.dtype)

    def backward(grad):
        scale = grad / rows
        return target_probs * (diff + 1.0) * scale, -target_probs * scale

    return out, backward

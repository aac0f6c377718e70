import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..exceptions import DivergenceError, ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment buffers keyed by parameter name, plus the step counter."""
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor]) -> 'AdamState':
        return cls(
            step=0,
            first_moment={name: np.zeros_like(p.values) for name, p in params.items()},
            second_moment={name: np.zeros_like(p.values) for name, p in params.items()},
        )


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> Tuple[Mapping[str, Tensor], AdamState]:
    """Apply one bias-corrected Adam update in place.

    Parameters without an entry in ``grads`` are left untouched but still
    share the step counter.

    Raises:
        DivergenceError: any gradient holds a non-finite value; nothing is updated
        ShapeError: a moment buffer does not match its parameter
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient for parameter '{name}'")
        if name not in state.first_moment:
            state.first_moment[name] = np.zeros_like(params[name].values)
            state.second_moment[name] = np.zeros_like(params[name].values)
        if state.first_moment[name].shape != params[name].shape:
            raise ShapeError(
                f"adam_step: moment buffer for '{name}' has shape {state.first_moment[name].shape}, "
                f"parameter has {params[name].shape}"
            )

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step

    for name, grad in grads.items():
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / correction1
        v_hat = v / correction2
        param = params[name]
        param.values -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype)

    return params, state


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: Optional[float]) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns:
        The norm before clipping
    """
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm is not None and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for name in grads:
            grads[name] = grads[name] * grads[name].dtype.type(factor)
    return total

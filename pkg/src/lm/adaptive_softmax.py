from typing import List, Mapping

import numpy as np

from ..tensor import Tensor, apply
from .config import AdaptiveSoftmaxConfig


def _cluster_logits(hidden: Tensor, params: Mapping[str, Tensor], tail_index: int) -> Tensor:
    projected = apply("matmul", hidden, params[f"output.tail.{tail_index}.proj"])
    logits = apply("matmul", projected, params[f"output.tail.{tail_index}.weight"])
    return apply("add", logits, params[f"output.tail.{tail_index}.bias"])


def _head_logits(hidden: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    logits = apply("matmul", hidden, params["output.head.weight"])
    return apply("add", logits, params["output.head.bias"])


def adaptive_log_probs(hidden: Tensor, params: Mapping[str, Tensor], config: AdaptiveSoftmaxConfig) -> Tensor:
    """Full-vocabulary log-probabilities from an adaptive softmax output layer.

    Head units take their head-slot log-probability directly. A tail unit u in
    cluster i gets log P(slot i | h) + log P(u | cluster i, h).

    Args:
        hidden: (..., d_hidden) final hidden states
        params: model parameters holding the ``output.head.*`` and ``output.tail.*`` weights
        config: cluster layout

    Returns:
        (..., vocab_size) log-probabilities
    """
    head_size = config.head_size
    head_lp = apply("log_softmax", _head_logits(hidden, params), axis=-1)
    if config.n_tails == 0:
        return head_lp

    parts: List[Tensor] = [apply("slice", head_lp, index=(Ellipsis, slice(0, head_size)))]
    for i in range(1, config.n_tails + 1):
        slot = apply("slice", head_lp, index=(Ellipsis, slice(head_size + i - 1, head_size + i)))
        tail_lp = apply("log_softmax", _cluster_logits(hidden, params, i), axis=-1)
        parts.append(apply("add", slot, tail_lp))
    return apply("concat", *parts, axis=-1)


def adaptive_loss(
    hidden: Tensor,
    targets: np.ndarray,
    params: Mapping[str, Tensor],
    config: AdaptiveSoftmaxConfig,
    ignore_index: int,
) -> Tensor:
    """Mean negative log-likelihood that only evaluates the clusters the targets fall in.

    Args:
        hidden: (N, d_hidden) hidden states
        targets: (N,) gold ids; rows equal to ``ignore_index`` are skipped
    """
    targets = np.asarray(targets, dtype=np.int64)
    valid = np.flatnonzero(targets != ignore_index)
    n_valid = max(1, valid.size)
    rows = apply("slice", hidden, index=valid)
    gold = targets[valid]

    head_size = config.head_size
    head_targets = gold.copy()
    for i, (lo, hi) in enumerate(config.tail_bounds(), start=1):
        head_targets[(gold >= lo) & (gold < hi)] = head_size + i - 1
    total = apply("cross_entropy", _head_logits(rows, params), targets=head_targets, reduction="sum")

    for i, (lo, hi) in enumerate(config.tail_bounds(), start=1):
        members = np.flatnonzero((gold >= lo) & (gold < hi))
        if members.size == 0:
            continue
        cluster_rows = apply("slice", rows, index=members)
        cluster_nll = apply(
            "cross_entropy",
            _cluster_logits(cluster_rows, params, i),
            targets=gold[members] - lo,
            reduction="sum",
        )
        total = apply("add", total, cluster_nll)
    return apply("scale", total, factor=1.0 / n_valid)

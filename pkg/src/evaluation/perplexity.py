import math
from typing import Iterable, Sequence, Tuple

import numpy as np

from ..exceptions import MetricError
from ..lm.model import TransformerLM
from ..tensor import no_grad
from ..tokenizer import PAD_ID
from ..training.data import document_windows


def corpus_nll(model: TransformerLM, documents: Iterable[Sequence[int]], batch_size: int = 32) -> Tuple[float, int]:
    """Summed negative log-likelihood (nats) and token count over BPE units, EOS included.

    Each document is scored on its own, prefixed by BOS, so the result does
    not depend on document order.
    """
    windows = document_windows(documents, model.config.max_context)
    if len(windows) == 0:
        raise MetricError("cannot compute perplexity on an empty corpus")

    total, count = 0.0, 0
    with no_grad():
        for start in range(0, len(windows), batch_size):
            batch = windows[start:start + batch_size]
            inputs, targets = batch[:, :-1], batch[:, 1:]
            # trailing all-pad columns carry no targets
            width = int(np.max(np.sum(targets != PAD_ID, axis=1)))
            inputs, targets = inputs[:, :width], targets[:, :width]
            log_probs = model.log_probs(inputs).values.astype(np.float64)
            mask = targets != PAD_ID
            picked = np.take_along_axis(log_probs, np.where(mask, targets, 0)[..., None], axis=-1)[..., 0]
            total += float(-np.sum(picked[mask]))
            count += int(mask.sum())
    return total, count


def perplexity(model: TransformerLM, documents: Iterable[Sequence[int]], batch_size: int = 32) -> float:
    """exp(mean per-token negative log-likelihood)."""
    total, count = corpus_nll(model, documents, batch_size)
    return math.exp(total / count)

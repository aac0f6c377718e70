import logging
import os
import time
from typing import Optional, Sequence

import numpy as np

from ..exceptions import MetricError, RescoreToolkitError
from ..lm.model import TransformerLM
from ..models import BenchReport

logger = logging.getLogger(__name__)

DEFAULT_REPETITIONS = 10


def declared_threads() -> Optional[int]:
    """Thread budget pinned through OMP_NUM_THREADS before numpy was loaded."""
    value = os.environ.get("OMP_NUM_THREADS")
    return int(value) if value and value.isdigit() else None


def _score_sample(model: TransformerLM, sample: Sequence[np.ndarray]):
    for index, ids in enumerate(sample):
        try:
            model.sequence_log_prob(ids)
        except RescoreToolkitError as e:
            raise MetricError(f"model failed on benchmark candidate {index}: {e}") from e


def bench_latency(model: TransformerLM, sample: Sequence[np.ndarray], repetitions: int = DEFAULT_REPETITIONS,
                  model_id: str = "model", warmup: bool = True) -> BenchReport:
    """
    Time scoring of a candidate sample, one sequence at a time.

    Args:
        model: model under test
        sample: BOS-initial id sequences (BOS + BPE units + EOS)
        repetitions: measured passes over the full sample
        warmup: run one unmeasured pass first

    Returns:
        BenchReport: per-repetition wall-clock seconds and their mean
    """
    if repetitions < 1:
        raise MetricError(f"repetitions must be positive, got {repetitions}")
    if not sample:
        raise MetricError("benchmark sample is empty")
    threads = declared_threads()
    if threads is None:
        logger.warning("OMP_NUM_THREADS is not set; benchmark thread budget is undeclared")

    if warmup:
        _score_sample(model, sample)
    times = []
    for repetition in range(repetitions):
        start = time.perf_counter()
        _score_sample(model, sample)
        times.append(time.perf_counter() - start)
        logger.info(f"bench {model_id}: repetition={repetition + 1}/{repetitions}, seconds={times[-1]:.4f}")

    return BenchReport(
        model_id=model_id,
        candidate_count=len(sample),
        repetitions=repetitions,
        threads=threads,
        times=times,
    )


def speedup(fast: BenchReport, slow: BenchReport) -> float:
    """How many times faster ``fast`` ran than ``slow`` (mean_slow / mean_fast)."""
    if fast.mean_seconds <= 0:
        raise MetricError("cannot compute speedup against a zero mean time")
    return slow.mean_seconds / fast.mean_seconds

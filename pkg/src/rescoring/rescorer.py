import logging
import math
from multiprocessing.pool import ThreadPool
from typing import List, Optional, Sequence

import numpy as np

from ..evaluation.wer import selection_wer
from ..exceptions import RescoreToolkitError, RescoringError
from ..lm.model import TransformerLM
from ..models import Candidate, NBestRecord, RescoreWeights, TuneResult
from ..tokenizer import BOS_ID, EOS_ID, BPETokenizer

logger = logging.getLogger(__name__)

FAILED_SCORE = -math.inf


def candidate_ids(text: str, tokenizer: BPETokenizer) -> np.ndarray:
    """BOS + BPE units of ``text`` + EOS."""
    return np.array([BOS_ID] + tokenizer.encode(text) + [EOS_ID], dtype=np.int64)


def score_candidate(candidate: Candidate, model: TransformerLM, tokenizer: BPETokenizer) -> Candidate:
    """Fill ``nlm_score``; failures keep the candidate with the -inf sentinel."""
    try:
        if not candidate.text.strip():
            raise RescoringError("empty candidate text")
        score, _ = model.sequence_log_prob(candidate_ids(candidate.text, tokenizer))
        return candidate.model_copy(update={"nlm_score": score, "nlm_failed": False})
    except RescoreToolkitError as e:
        logger.warning(f"Could not score candidate '{candidate.text[:40]}': {str(e)}")
        return candidate.model_copy(update={"nlm_score": FAILED_SCORE, "nlm_failed": True})


def score_record(record: NBestRecord, model: TransformerLM, tokenizer: BPETokenizer) -> NBestRecord:
    if not record.candidates:
        logger.warning(f"Record {record.utterance_id} has no candidates; passing through")
        return record
    cache = {}
    scored = []
    for candidate in record.candidates:
        if candidate.text not in cache:
            cache[candidate.text] = score_candidate(candidate, model, tokenizer)
        result = cache[candidate.text]
        scored.append(candidate.model_copy(update={"nlm_score": result.nlm_score, "nlm_failed": result.nlm_failed}))
    return record.model_copy(update={"candidates": scored})


def score_nbest(records: Sequence[NBestRecord], model: TransformerLM, tokenizer: BPETokenizer,
                workers: int = 1) -> List[NBestRecord]:
    """Add neural LM scores to every candidate; output keeps input record order.

    Raises:
        RescoringError: tokenizer and model vocabularies differ in size
    """
    if len(tokenizer.vocab) != model.vocab_size:
        raise RescoringError(
            f"tokenizer has {len(tokenizer.vocab)} units, model expects {model.vocab_size}"
        )
    logger.info(f"Scoring n-best lists: records={len(records)}, workers={workers}")
    if workers <= 1:
        return [score_record(r, model, tokenizer) for r in records]
    with ThreadPool(processes=workers) as pool:
        return pool.map(lambda r: score_record(r, model, tokenizer), records)


def combine(candidate: Candidate, weights: RescoreWeights) -> float:
    """s = am + alpha * ngram + (1 - alpha) * nlm."""
    if candidate.nlm_score is None:
        raise RescoringError(f"candidate '{candidate.text}' has no neural LM score")
    alpha = weights.alpha
    if alpha == 1.0:
        # exact first-pass score, also for failed candidates
        return candidate.am_score + candidate.ngram_score
    return candidate.am_score + alpha * candidate.ngram_score + (1.0 - alpha) * candidate.nlm_score


def _argmax_first(scores: Sequence[float]) -> int:
    best = 0
    for index, score in enumerate(scores):
        if score > scores[best]:
            best = index
    return best


def first_pass_top(record: NBestRecord) -> int:
    """Index the first pass would output: best am + ngram, lower index on ties."""
    if not record.candidates:
        raise RescoringError(f"record {record.utterance_id} has no candidates")
    return _argmax_first([c.first_pass_score for c in record.candidates])


def select_top(record: NBestRecord, weights: RescoreWeights) -> int:
    """Index of the best combined score; ties go to the lower index."""
    if not record.candidates:
        raise RescoringError(f"record {record.utterance_id} has no candidates")
    return _argmax_first([combine(c, weights) for c in record.candidates])


def rescore(records: Sequence[NBestRecord], weights: RescoreWeights) -> List[NBestRecord]:
    """Set ``selected`` on every record with candidates."""
    return [
        r.model_copy(update={"selected": select_top(r, weights)}) if r.candidates else r
        for r in records
    ]


def alpha_grid(step: float = 0.05) -> List[float]:
    count = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(count + 1)]


def tune_alpha(records: Sequence[NBestRecord], grid: Optional[Sequence[float]] = None,
               lowercase: bool = False) -> TuneResult:
    """
    Pick the alpha with the lowest corpus-level dev WER.

    Args:
        records: scored dev records with references
        grid: candidate alphas in [0, 1]; defaults to steps of 0.05

    Returns:
        TuneResult: best alpha, its WER and the full (alpha, WER) curve

    Raises:
        RescoringError: no record carries a reference
    """
    usable = [r for r in records if r.reference is not None and r.candidates]
    if not usable:
        raise RescoringError("alpha tuning needs dev records with references")
    grid = sorted(set(alpha_grid() if grid is None else grid))
    if grid[0] < 0 or grid[-1] > 1:
        raise RescoringError(f"alpha grid must lie in [0, 1], got {grid}")

    curve = []
    best_alpha, best_wer = None, math.inf
    for alpha in grid:
        weights = RescoreWeights(alpha=alpha)
        result = selection_wer(usable, [select_top(r, weights) for r in usable], lowercase).wer
        curve.append([alpha, result])
        # ascending grid: <= hands ties to the larger alpha
        if result <= best_wer:
            best_alpha, best_wer = alpha, result
    logger.info(f"Tuned rescoring weight: alpha={best_alpha}, dev_wer={best_wer:.2f}")
    return TuneResult(alpha=best_alpha, wer=best_wer, curve=curve)

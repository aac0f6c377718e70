import logging
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from ..exceptions import MetricError
from ..models import NBestRecord, WerBreakdown

logger = logging.getLogger(__name__)

Words = Union[str, Sequence[str]]


def _words(text: Words, lowercase: bool = False) -> List[str]:
    words = text.split() if isinstance(text, str) else list(text)
    return [w.lower() for w in words] if lowercase else words


def align(reference: Sequence[str], hypothesis: Sequence[str]) -> Tuple[int, int, int]:
    """
    Minimum-edit-distance alignment with unit costs, returning (S, I, D).

    Each DP cell holds (edits, insertions + deletions) and is minimised
    lexicographically, so among minimal alignments substitutions win over
    insertion/deletion pairs.
    """
    rows, cols = len(reference), len(hypothesis)
    # cell = (edits, ins+del, S, I, D)
    previous = [(j, j, 0, j, 0) for j in range(cols + 1)]
    for i in range(1, rows + 1):
        current = [(i, i, 0, 0, i)]
        for j in range(1, cols + 1):
            if reference[i - 1] == hypothesis[j - 1]:
                diagonal = previous[j - 1]
            else:
                e, g, s, ins, d = previous[j - 1]
                diagonal = (e + 1, g, s + 1, ins, d)
            e, g, s, ins, d = current[j - 1]
            insertion = (e + 1, g + 1, s, ins + 1, d)
            e, g, s, ins, d = previous[j]
            deletion = (e + 1, g + 1, s, ins, d + 1)
            current.append(min(diagonal, insertion, deletion, key=lambda cell: cell[:2]))
        previous = current
    _, _, s, ins, d = previous[cols]
    return s, ins, d


def wer(reference: Words, hypothesis: Words, lowercase: bool = False) -> WerBreakdown:
    """Word error rate of one hypothesis against one whitespace-tokenized reference.

    Raises:
        MetricError: the reference has no words
    """
    ref, hyp = _words(reference, lowercase), _words(hypothesis, lowercase)
    if not ref:
        raise MetricError("WER is undefined for an empty reference")
    s, i, d = align(ref, hyp)
    return WerBreakdown(substitutions=s, insertions=i, deletions=d, reference_words=len(ref))


def corpus_wer(pairs: Iterable[Tuple[Words, Words]], lowercase: bool = False) -> WerBreakdown:
    """Corpus-level WER: edits and reference words are summed before dividing."""
    total: Optional[WerBreakdown] = None
    for reference, hypothesis in pairs:
        breakdown = wer(reference, hypothesis, lowercase)
        total = breakdown if total is None else total + breakdown
    if total is None:
        raise MetricError("corpus WER needs at least one utterance")
    return total


def relative_reduction(baseline: float, value: float) -> float:
    """100 * (baseline - value) / baseline."""
    if baseline == 0:
        raise MetricError("relative reduction is undefined for a zero baseline")
    return 100.0 * (baseline - value) / baseline


def werr(baseline_wer: float, system_wer: float) -> float:
    """Relative WER reduction of a system against a baseline, in percent."""
    if baseline_wer <= 0:
        raise MetricError(f"WERR needs a positive baseline WER, got {baseline_wer}")
    return relative_reduction(baseline_wer, system_wer)


def relative_size(params: int, reference_params: int) -> float:
    """Model size as a percentage of a reference model's parameter count."""
    if reference_params <= 0:
        raise MetricError("reference parameter count must be positive")
    return 100.0 * params / reference_params


def _referenced(records: Sequence[NBestRecord]) -> List[NBestRecord]:
    usable = [r for r in records if r.reference is not None and r.candidates]
    if not usable:
        raise MetricError("no records with both a reference and candidates")
    if len(usable) < len(records):
        logger.warning(f"Skipping {len(records) - len(usable)} records without reference or candidates")
    return usable


def selection_wer(records: Sequence[NBestRecord], selections: Sequence[int], lowercase: bool = False) -> WerBreakdown:
    """Corpus WER of one chosen candidate index per record."""
    if len(selections) != len(records):
        raise MetricError(f"{len(selections)} selections for {len(records)} records")
    return corpus_wer(
        ((r.reference, r.candidates[k].text) for r, k in zip(records, selections)), lowercase
    )


def oracle_wer(records: Sequence[NBestRecord], lowercase: bool = False) -> WerBreakdown:
    """Corpus WER when every record picks its lowest-error candidate."""
    total: Optional[WerBreakdown] = None
    for record in _referenced(records):
        best = min(
            (wer(record.reference, c.text, lowercase) for c in record.candidates),
            key=lambda b: b.errors,
        )
        total = best if total is None else total + best
    return total


def _first_pass_index(record: NBestRecord) -> int:
    scores = [c.first_pass_score for c in record.candidates]
    return scores.index(max(scores))


def nbest_wer(records: Sequence[NBestRecord], lowercase: bool = False) -> WerBreakdown:
    """Corpus WER of each record's ``selected`` candidate (the first-pass best when unset)."""
    usable = _referenced(records)
    selections = [_first_pass_index(r) if r.selected is None else r.selected for r in usable]
    return selection_wer(usable, selections, lowercase)

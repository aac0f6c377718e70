import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from nltk.lm import Laplace
from nltk.lm.preprocessing import pad_both_ends, padded_everygram_pipeline
from nltk.util import bigrams
from pydantic import BaseModel, ConfigDict, Field

from ..evaluation.wer import align
from ..models import Candidate, NBestRecord
from ..utils.seeding import component_rng
from .source import SyntheticSource

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)


class CorruptionRates(BaseModel):
    """Per-word corruption probabilities applied to the reference."""

    model_config = ConfigDict(frozen=True)

    substitution: float = Field(default=0.1, ge=0.0, le=1.0)
    insertion: float = Field(default=0.03, ge=0.0, le=1.0)
    deletion: float = Field(default=0.03, ge=0.0, le=1.0)


class BigramScorer:
    """Add-one bigram LM over whitespace words; scores in natural log."""

    def __init__(self, lines: Sequence[str]):
        sentences = [line.split() for line in lines]
        train, vocab = padded_everygram_pipeline(2, sentences)
        self.lm = Laplace(2)
        self.lm.fit(train, vocab)

    def score(self, text: str) -> float:
        # nltk logscore is base 2
        padded = list(pad_both_ends(text.split(), n=2))
        return sum(self.lm.logscore(word, [prev]) for prev, word in bigrams(padded)) * LOG2


def corrupt(words: List[str], rates: CorruptionRates, vocabulary: Sequence[str],
            rng: np.random.Generator) -> List[str]:
    out: List[str] = []
    for word in words:
        if rng.random() < rates.insertion:
            out.append(vocabulary[rng.integers(len(vocabulary))])
        roll = rng.random()
        if roll < rates.deletion:
            continue
        if roll < rates.deletion + rates.substitution:
            out.append(vocabulary[rng.integers(len(vocabulary))])
        else:
            out.append(word)
    return out


def synth_nbest(
    source: SyntheticSource,
    records: int,
    n: int,
    rates: CorruptionRates = CorruptionRates(),
    length: int = 20,
    ngram_lines: int = 200,
    am_weight: float = 1.0,
    am_noise: float = 2.0,
    seed: int = 0,
) -> List[NBestRecord]:
    """
    Build a synthetic n-best set with known references.

    Each record holds the sampled reference plus ``n - 1`` corrupted copies.
    Acoustic scores are ``-am_weight * word_errors + N(0, am_noise)``; n-gram
    scores come from an add-one bigram trained on ``ngram_lines`` lines, a
    deliberately weak first pass. Candidates are ordered by first-pass score.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    if records < 1:
        raise ValueError(f"records must be at least 1, got {records}")
    rng = component_rng(seed, "synth.nbest")
    scorer = BigramScorer(source.sample_lines(ngram_lines, length, seed=seed + 1))
    references = source.sample_lines(records, length, seed=seed)

    out: List[NBestRecord] = []
    for index, reference in enumerate(references):
        ref_words = reference.split()
        texts = [reference] + [" ".join(corrupt(ref_words, rates, source.words, rng)) for _ in range(n - 1)]
        scored: List[Tuple[float, Candidate]] = []
        for text in texts:
            hyp_words = text.split()
            errors = sum(align(ref_words, hyp_words))
            candidate = Candidate(
                text=text,
                am=-am_weight * errors + float(rng.normal(0.0, am_noise)),
                ngram=scorer.score(text),
            )
            scored.append((candidate.first_pass_score, candidate))
        scored.sort(key=lambda item: -item[0])
        out.append(NBestRecord(utt_id=f"utt{index:06d}", ref=reference, hyps=[c for _, c in scored]))
    logger.info(f"Generated synthetic n-best: records={records}, n={n}, ngram_lines={ngram_lines}")
    return out

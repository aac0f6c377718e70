import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from ..utils.seeding import component_rng

logger = logging.getLogger(__name__)

CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"


def spell_words(count: int, rng: np.random.Generator, max_syllables: int = 3) -> List[str]:
    """``count`` distinct pronounceable words built from consonant+vowel syllables."""
    words: List[str] = []
    seen = set()
    while len(words) < count:
        syllables = int(rng.integers(1, max_syllables + 1))
        word = "".join(
            CONSONANTS[rng.integers(len(CONSONANTS))] + VOWELS[rng.integers(len(VOWELS))]
            for _ in range(syllables)
        )
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


class SyntheticSource:
    """
    Order-k Markov word source with a known entropy rate.

    Next-word logits for a history (w_{t-k}, ..., w_{t-1}) are
    ``sharpness * sum_j E_j[w_{t-k+j}]`` with one random (V, V) matrix per
    history slot; the full (V,)*k + (V,) transition table is materialised.
    Lines start from the stationary history distribution, so per-line
    entropy is exact.
    """

    def __init__(self, order: int, vocab_size: int, seed: int = 0, sharpness: float = 2.0,
                 components: Optional[np.ndarray] = None, words: Optional[Sequence[str]] = None):
        if order < 1:
            raise ValueError(f"order must be at least 1, got {order}")
        if vocab_size < 2:
            raise ValueError(f"vocab_size must be at least 2, got {vocab_size}")
        self.order = order
        self.vocab_size = vocab_size
        self.seed = seed
        self.sharpness = sharpness
        if components is None:
            components = component_rng(seed, "synth.table").standard_normal((order, vocab_size, vocab_size))
        self.components = components
        self.words = list(words) if words is not None else spell_words(vocab_size, component_rng(seed, "synth.words"))
        self.table = self._build_table()
        self.stationary = self._stationary()

    def _build_table(self) -> np.ndarray:
        v, k = self.vocab_size, self.order
        logits = np.zeros((v,) * k + (v,))
        for slot in range(k):
            shape = [1] * k + [v]
            shape[slot] = v
            logits = logits + self.components[slot].reshape(shape)
        logits *= self.sharpness
        logits -= logits.max(axis=-1, keepdims=True)
        table = np.exp(logits)
        table /= table.sum(axis=-1, keepdims=True)
        return table

    def _stationary(self, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
        v, k = self.vocab_size, self.order
        pi = np.full((v,) * k, 1.0 / v ** k)
        for _ in range(max_iter):
            # shift the history window: (h1, h2..hk) -> (h2..hk, w)
            nxt = np.einsum('i...,i...j->...j', pi, self.table)
            nxt /= nxt.sum()
            if np.abs(nxt - pi).sum() < tol:
                return nxt
            pi = nxt
        logger.warning(f"Stationary distribution did not converge within {max_iter} iterations")
        return pi

    def perturbed(self, mix: float, seed: int) -> 'SyntheticSource':
        """A related source over the same words: each E_j is blended with fresh noise."""
        fresh = component_rng(seed, "synth.perturb").standard_normal(self.components.shape)
        components = (1.0 - mix) * self.components + mix * fresh
        return SyntheticSource(self.order, self.vocab_size, seed, self.sharpness, components, self.words)

    # --- entropy ---

    def entropy_rate(self) -> float:
        """Conditional entropy of the next word under the stationary history, in nats."""
        conditional = -np.sum(self.table * np.log(self.table), axis=-1)
        return float(np.sum(self.stationary * conditional))

    def history_entropy(self) -> float:
        pi = self.stationary[self.stationary > 0]
        return float(-np.sum(pi * np.log(pi)))

    def line_entropy(self, length: int) -> float:
        """Entropy in nats of one ``length``-word line (first ``order`` words drawn jointly)."""
        if length < self.order:
            raise ValueError(f"line length {length} is shorter than the Markov order {self.order}")
        return self.history_entropy() + (length - self.order) * self.entropy_rate()

    def analytic_perplexity(self, length: int) -> float:
        """Best achievable per-token PPL over ``length`` words plus a deterministic end-of-line."""
        return math.exp(self.line_entropy(length) / (length + 1))

    # --- sampling ---

    def sample_ids(self, count: int, length: int, rng: np.random.Generator) -> np.ndarray:
        """(count, length) word indices."""
        if length < self.order:
            raise ValueError(f"line length {length} is shorter than the Markov order {self.order}")
        v, k = self.vocab_size, self.order
        flat = rng.choice(v ** k, size=count, p=self.stationary.ravel())
        out = np.zeros((count, length), dtype=np.int64)
        out[:, :k] = np.stack(np.unravel_index(flat, (v,) * k), axis=1)
        for t in range(k, length):
            history = tuple(out[:, t - k + j] for j in range(k))
            cumulative = np.cumsum(self.table[history], axis=-1)
            draws = rng.random(count)[:, None]
            out[:, t] = np.minimum((cumulative < draws).sum(axis=1), v - 1)
        return out

    def render(self, ids: Sequence[int]) -> str:
        return " ".join(self.words[i] for i in ids)

    def sample_lines(self, count: int, length: int = 20, seed: Optional[int] = None) -> List[str]:
        rng = component_rng(self.seed if seed is None else seed, "synth.lines")
        return [self.render(row) for row in self.sample_ids(count, length, rng)]

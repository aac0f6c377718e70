import logging
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple, Union

from ..exceptions import TokenizerError
from .vocabulary import (
    END_OF_WORD,
    SPECIAL_TOKENS,
    MergeTable,
    Vocabulary,
)

logger = logging.getLogger(__name__)

Pair = Tuple[str, str]


def _word_symbols(word: str) -> List[str]:
    symbols = list(word)
    symbols[-1] = symbols[-1] + END_OF_WORD
    return symbols


def _merge_pair(symbols: Sequence[str], pair: Pair) -> List[str]:
    merged, i = [], 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == pair[0] and symbols[i + 1] == pair[1]:
            merged.append(symbols[i] + symbols[i + 1])
            i += 2
        else:
            merged.append(symbols[i])
            i += 1
    return merged


def segment_word(word: str, rank: Dict[Pair, int]) -> List[str]:
    """Split one word into units by repeatedly merging its lowest-ranked pair."""
    symbols = _word_symbols(word)
    while len(symbols) > 1:
        ranked = [(rank[p], p) for p in zip(symbols, symbols[1:]) if p in rank]
        if not ranked:
            break
        _, best = min(ranked)
        symbols = _merge_pair(symbols, best)
    return symbols


def _count_words(lines: Iterable[str], lowercase: bool) -> Dict[str, int]:
    # dict preserves first-occurrence order, which drives tie-breaking
    counts: Dict[str, int] = {}
    for line in lines:
        if lowercase:
            line = line.lower()
        for word in line.split():
            counts[word] = counts.get(word, 0) + 1
    return counts


def train_bpe(lines: Iterable[str], target_size: int, lowercase: bool = False) -> Tuple[MergeTable, Vocabulary]:
    """Learn BPE merges by greedily merging the most frequent adjacent pair.

    Args:
        lines: line-oriented training text; words are whitespace-delimited
        target_size: vocabulary size to reach, specials included
        lowercase: lowercase the corpus before counting

    Returns:
        The merge table and the vocabulary (specials first, then units by frequency)

    Raises:
        TokenizerError: empty corpus, or a target smaller than the base character inventory
    """
    word_counts = _count_words(lines, lowercase)
    if not word_counts:
        raise TokenizerError("cannot train BPE on an empty corpus")

    words = list(word_counts)
    freqs = [word_counts[w] for w in words]
    segments = [_word_symbols(w) for w in words]

    # each character enters in both its mid-word and word-final form
    creation_order: List[str] = list(SPECIAL_TOKENS)
    known: Set[str] = set(creation_order)
    for word in words:
        for char in word:
            for symbol in (char, char + END_OF_WORD):
                if symbol not in known:
                    known.add(symbol)
                    creation_order.append(symbol)

    if target_size < len(creation_order):
        raise TokenizerError(
            f"target_size {target_size} is smaller than the {len(creation_order) - len(SPECIAL_TOKENS)} "
            f"base units plus {len(SPECIAL_TOKENS)} specials"
        )

    pair_counts: Counter = Counter()
    pair_words: Dict[Pair, Set[int]] = defaultdict(set)
    for index, symbols in enumerate(segments):
        for pair in zip(symbols, symbols[1:]):
            pair_counts[pair] += freqs[index]
            pair_words[pair].add(index)

    def first_occurrence(pair: Pair) -> Tuple[int, int]:
        index = min(pair_words[pair])
        symbols = segments[index]
        for position, candidate in enumerate(zip(symbols, symbols[1:])):
            if candidate == pair:
                return index, position
        return index, len(symbols)

    merges = MergeTable()
    while len(creation_order) < target_size:
        best_count = max(pair_counts.values(), default=0)
        if best_count < 2:
            logger.warning(
                f"BPE target size {target_size} unreachable: stopped at {len(creation_order)} units "
                f"after {len(merges)} merges"
            )
            break
        tied = [pair for pair, count in pair_counts.items() if count == best_count]
        best = min(tied, key=first_occurrence)
        merges.add(best)
        unit = best[0] + best[1]
        if unit not in known:
            known.add(unit)
            creation_order.append(unit)

        for index in sorted(pair_words[best]):
            old = segments[index]
            new = _merge_pair(old, best)
            count = freqs[index]
            for pair in zip(old, old[1:]):
                pair_counts[pair] -= count
                if pair_counts[pair] <= 0:
                    del pair_counts[pair]
            for pair in set(zip(old, old[1:])):
                pair_words[pair].discard(index)
            for pair in zip(new, new[1:]):
                pair_counts[pair] += count
                pair_words[pair].add(index)
            segments[index] = new
        pair_words.pop(best, None)

    unit_counts: Counter = Counter()
    for word, count in zip(words, freqs):
        for unit in segment_word(word, merges.rank):
            unit_counts[unit] += count

    vocab = Vocabulary.from_counts(dict(unit_counts), creation_order)
    logger.info(f"Trained BPE: {len(merges)} merges, vocabulary size {len(vocab)}, {len(words)} word types")
    return merges, vocab


def encode(text: str, merges: MergeTable, vocab: Vocabulary) -> List[int]:
    """Encode whitespace-delimited words into unit ids; unknown units map to <unk>."""
    ids: List[int] = []
    for word in text.split():
        ids.extend(vocab.lookup(unit) for unit in segment_word(word, merges.rank))
    return ids


def decode(ids: Iterable[int], vocab: Vocabulary) -> str:
    """Concatenate units, turning end-of-word markers back into spaces; specials are dropped."""
    pieces: List[str] = []
    for index in ids:
        unit = vocab.unit(int(index))
        if int(index) < len(SPECIAL_TOKENS):
            continue
        if unit.endswith(END_OF_WORD):
            pieces.append(unit[:-len(END_OF_WORD)] + ' ')
        else:
            pieces.append(unit)
    return ''.join(pieces).rstrip(' ')


class BPETokenizer:
    """Merge table and vocabulary bundled with a per-word segmentation cache."""

    MERGES_FILE = 'merges.txt'
    VOCAB_FILE = 'vocab.txt'

    def __init__(self, merges: MergeTable, vocab: Vocabulary, lowercase: bool = False):
        self.merges = merges
        self.vocab = vocab
        self.lowercase = lowercase
        self._cache: Dict[str, Tuple[int, ...]] = {}

    @classmethod
    def train(cls, lines: Iterable[str], target_size: int, lowercase: bool = False) -> 'BPETokenizer':
        merges, vocab = train_bpe(lines, target_size, lowercase)
        return cls(merges, vocab, lowercase)

    def __len__(self) -> int:
        return len(self.vocab)

    def encode(self, text: str) -> List[int]:
        if self.lowercase:
            text = text.lower()
        ids: List[int] = []
        for word in text.split():
            cached = self._cache.get(word)
            if cached is None:
                cached = tuple(self.vocab.lookup(u) for u in segment_word(word, self.merges.rank))
                self._cache[word] = cached
            ids.extend(cached)
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        return decode(ids, self.vocab)

    def save(self, directory: Union[str, Path]):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.merges.save(directory / self.MERGES_FILE)
        self.vocab.save(directory / self.VOCAB_FILE)

    @classmethod
    def load(cls, directory: Union[str, Path], lowercase: bool = False) -> 'BPETokenizer':
        directory = Path(directory)
        merges = MergeTable.load(directory / cls.MERGES_FILE)
        vocab = Vocabulary.load(directory / cls.VOCAB_FILE)
        for left, right in merges:
            if left + right not in vocab:
                raise TokenizerError(f"merge output {left + right!r} missing from vocabulary")
        return cls(merges, vocab, lowercase)

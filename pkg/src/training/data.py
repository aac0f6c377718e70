from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence

import numpy as np

from ..exceptions import VocabularyMismatchError
from ..tokenizer import BOS_ID, EOS_ID, PAD_ID, BPETokenizer


@dataclass
class TokenizedCorpus:
    """Train/dev documents encoded with one vocabulary."""
    train: List[List[int]]
    dev: List[List[int]] = field(default_factory=list)
    vocab_size: int = 0
    vocab_digest: Optional[str] = None

    @classmethod
    def from_lines(cls, tokenizer: BPETokenizer, train_lines: Iterable[str],
                   dev_lines: Iterable[str] = ()) -> 'TokenizedCorpus':
        return cls(
            train=[tokenizer.encode(line) for line in train_lines if line.strip()],
            dev=[tokenizer.encode(line) for line in dev_lines if line.strip()],
            vocab_size=len(tokenizer.vocab),
            vocab_digest=tokenizer.vocab.digest(),
        )

    def check_vocab(self, vocab_size: int):
        if self.vocab_size and self.vocab_size != vocab_size:
            raise VocabularyMismatchError(
                f"corpus was tokenized with {self.vocab_size} units, model has {vocab_size}"
            )
        for doc in self.train + self.dev:
            if doc and max(doc) >= vocab_size:
                raise VocabularyMismatchError(f"token id {max(doc)} does not fit a {vocab_size}-unit vocabulary")


def _windows(stream: Sequence[int], context: int) -> List[np.ndarray]:
    windows = []
    for start in range(0, len(stream), context):
        chunk = list(stream[start:start + context])
        window = np.full(context + 1, PAD_ID, dtype=np.int64)
        window[0] = BOS_ID
        window[1:1 + len(chunk)] = chunk
        windows.append(window)
    return windows


def pack_documents(documents: Iterable[Sequence[int]], context: int) -> np.ndarray:
    """Concatenate documents with EOS separators and cut the stream into windows.

    Each row is BOS followed by ``context`` stream tokens (the tail row is
    PAD-filled); inputs are ``row[:-1]`` and targets ``row[1:]``.
    """
    stream: List[int] = []
    for doc in documents:
        stream.extend(doc)
        stream.append(EOS_ID)
    windows = _windows(stream, context)
    if not windows:
        return np.zeros((0, context + 1), dtype=np.int64)
    return np.stack(windows)


def document_windows(documents: Iterable[Sequence[int]], context: int) -> np.ndarray:
    """Windows that never straddle documents: each document plus EOS is chunked on its own."""
    windows: List[np.ndarray] = []
    for doc in documents:
        windows.extend(_windows(list(doc) + [EOS_ID], context))
    if not windows:
        return np.zeros((0, context + 1), dtype=np.int64)
    return np.stack(windows)


def iterate_batches(windows: np.ndarray, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Endless stream of row batches, reshuffled every epoch."""
    if len(windows) == 0:
        raise ValueError("no training windows to batch")
    while True:
        order = rng.permutation(len(windows))
        for start in range(0, len(order), batch_size):
            yield windows[order[start:start + batch_size]]

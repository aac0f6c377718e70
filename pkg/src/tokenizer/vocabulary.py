import hashlib
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from ..exceptions import TokenizerError

END_OF_WORD = '</w>'

BOS = '<bos>'
EOS = '<eos>'
UNK = '<unk>'
PAD = '<pad>'
SPECIAL_TOKENS = (BOS, EOS, UNK, PAD)
BOS_ID, EOS_ID, UNK_ID, PAD_ID = range(4)


class MergeTable:
    """Ordered BPE merge rules; a pair's rank is its list position."""

    def __init__(self, merges: Iterable[Tuple[str, str]] = ()):
        self.merges: List[Tuple[str, str]] = []
        self.rank: Dict[Tuple[str, str], int] = {}
        for pair in merges:
            self.add(pair)

    def add(self, pair: Tuple[str, str]):
        pair = (pair[0], pair[1])
        if pair in self.rank:
            raise TokenizerError(f"duplicate merge {pair}")
        self.rank[pair] = len(self.merges)
        self.merges.append(pair)

    def __len__(self) -> int:
        return len(self.merges)

    def __iter__(self):
        return iter(self.merges)

    def save(self, path: Union[str, Path]):
        """Write one "left right" line per merge, in rank order."""
        with open(path, 'w', encoding='utf-8') as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'MergeTable':
        merges = []
        with open(path, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip('\n')
                if not line:
                    continue
                parts = line.split(' ')
                if len(parts) != 2:
                    raise TokenizerError(f"{path}:{line_number}: expected 'left right', got {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(merges)


class Vocabulary:
    """Dense id space of subword units.

    Specials occupy ids 0-3. The remaining units are stored in descending
    training frequency, so id order is the frequency order adaptive softmax
    clusters are cut over.
    """

    def __init__(self, units: Iterable[str], frequency: Optional[Dict[str, int]] = None):
        units = list(units)
        if tuple(units[:4]) != SPECIAL_TOKENS:
            raise TokenizerError(f"vocabulary must start with {SPECIAL_TOKENS}, got {units[:4]}")
        self.units: List[str] = units
        self.id: Dict[str, int] = {}
        for index, unit in enumerate(units):
            if unit in self.id:
                raise TokenizerError(f"duplicate unit {unit!r} in vocabulary")
            self.id[unit] = index
        frequency = frequency or {}
        self.frequency: Dict[str, int] = {unit: int(frequency.get(unit, 0)) for unit in units}

    @classmethod
    def from_counts(cls, counts: Dict[str, int], creation_order: List[str]) -> 'Vocabulary':
        """Build a vocabulary from unit counts, sorted by frequency then creation order."""
        position = {unit: index for index, unit in enumerate(creation_order)}
        ordered = sorted(
            (u for u in creation_order if u not in SPECIAL_TOKENS),
            key=lambda u: (-counts.get(u, 0), position[u]),
        )
        return cls(list(SPECIAL_TOKENS) + ordered, counts)

    def __len__(self) -> int:
        return len(self.units)

    def __contains__(self, unit: str) -> bool:
        return unit in self.id

    def lookup(self, unit: str) -> int:
        return self.id.get(unit, UNK_ID)

    def unit(self, index: int) -> str:
        if not 0 <= index < len(self.units):
            raise TokenizerError(f"token id {index} out of range for vocabulary of size {len(self.units)}")
        return self.units[index]

    def digest(self) -> str:
        """Stable fingerprint of the unit inventory, used to check shared vocabularies."""
        return hashlib.sha256('\n'.join(self.units).encode('utf-8')).hexdigest()

    def save(self, path: Union[str, Path]):
        """Write one "unit<TAB>frequency" line per unit, in id order."""
        with open(path, 'w', encoding='utf-8') as f:
            for unit in self.units:
                f.write(f"{unit}\t{self.frequency.get(unit, 0)}\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Vocabulary':
        units, frequency = [], {}
        with open(path, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip('\n')
                if not line:
                    continue
                unit, sep, count = line.rpartition('\t')
                if not sep:
                    raise TokenizerError(f"{path}:{line_number}: expected 'unit<TAB>frequency', got {line!r}")
                units.append(unit)
                frequency[unit] = int(count)
        return cls(units, frequency)

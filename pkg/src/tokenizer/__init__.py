from .vocabulary import (
    MergeTable, Vocabulary, END_OF_WORD, SPECIAL_TOKENS,
    BOS, EOS, UNK, PAD, BOS_ID, EOS_ID, UNK_ID, PAD_ID,
)
from .bpe import BPETokenizer, train_bpe, encode, decode, segment_word

__all__ = [
    'MergeTable', 'Vocabulary', 'END_OF_WORD', 'SPECIAL_TOKENS',
    'BOS', 'EOS', 'UNK', 'PAD', 'BOS_ID', 'EOS_ID', 'UNK_ID', 'PAD_ID',
    'BPETokenizer', 'train_bpe', 'encode', 'decode', 'segment_word',
]

from .source import SyntheticSource, spell_words
from .nbest import BigramScorer, CorruptionRates, corrupt, synth_nbest

__all__ = ['SyntheticSource', 'spell_words', 'BigramScorer', 'CorruptionRates', 'corrupt', 'synth_nbest']

from .wer import (
    align, wer, corpus_wer, werr, relative_reduction, relative_size,
    selection_wer, oracle_wer, nbest_wer,
)
from .perplexity import corpus_nll, perplexity
from .latency import bench_latency, speedup, declared_threads, DEFAULT_REPETITIONS
from .report import LAYOUTS, format_table, format_params, format_bpe, write_json, to_jsonable

__all__ = [
    'align', 'wer', 'corpus_wer', 'werr', 'relative_reduction', 'relative_size',
    'selection_wer', 'oracle_wer', 'nbest_wer',
    'corpus_nll', 'perplexity',
    'bench_latency', 'speedup', 'declared_threads', 'DEFAULT_REPETITIONS',
    'LAYOUTS', 'format_table', 'format_params', 'format_bpe', 'write_json', 'to_jsonable',
]

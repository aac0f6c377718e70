from .nbest import read_nbest, write_nbest, parse_record, DEFAULT_N_MAX
from .rescorer import (
    candidate_ids, score_candidate, score_record, score_nbest,
    combine, first_pass_top, select_top, rescore, alpha_grid, tune_alpha, FAILED_SCORE,
)

__all__ = [
    'read_nbest', 'write_nbest', 'parse_record', 'DEFAULT_N_MAX',
    'candidate_ids', 'score_candidate', 'score_record', 'score_nbest',
    'combine', 'first_pass_top', 'select_top', 'rescore', 'alpha_grid', 'tune_alpha', 'FAILED_SCORE',
]

from .nbest import Candidate, NBestRecord, RescoreWeights
from .reports import WerBreakdown, BenchReport, TuneResult, ReportRow

__all__ = [
    'Candidate', 'NBestRecord', 'RescoreWeights',
    'WerBreakdown', 'BenchReport', 'TuneResult', 'ReportRow',
]

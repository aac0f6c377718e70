from typing import List, Optional

from pydantic import BaseModel, Field, computed_field, model_validator


class WerBreakdown(BaseModel):
    substitutions: int = Field(default=0, ge=0)
    insertions: int = Field(default=0, ge=0)
    deletions: int = Field(default=0, ge=0)
    reference_words: int = Field(..., gt=0)

    @computed_field
    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @computed_field
    @property
    def wer(self) -> float:
        """Percentage: 100 * (S + I + D) / reference words."""
        return 100.0 * self.errors / self.reference_words

    def __add__(self, other: 'WerBreakdown') -> 'WerBreakdown':
        return WerBreakdown(
            substitutions=self.substitutions + other.substitutions,
            insertions=self.insertions + other.insertions,
            deletions=self.deletions + other.deletions,
            reference_words=self.reference_words + other.reference_words,
        )


class BenchReport(BaseModel):
    model_id: str
    candidate_count: int
    repetitions: int
    threads: Optional[int] = None
    times: List[float]
    mean_seconds: float = 0.0

    @model_validator(mode="after")
    def _mean(self) -> 'BenchReport':
        if len(self.times) != self.repetitions:
            raise ValueError(f"expected {self.repetitions} timings, got {len(self.times)}")
        self.mean_seconds = sum(self.times) / len(self.times)
        return self


class TuneResult(BaseModel):
    alpha: float
    wer: float
    curve: List[List[float]]


class ReportRow(BaseModel):
    """One system in a results table; unset columns are left blank."""
    approach: str
    bpe: Optional[int] = None
    params: Optional[int] = None
    adaptive: Optional[bool] = None
    teacher: Optional[str] = None
    pretrained: Optional[bool] = None
    perplexity: Optional[float] = None
    wer: Optional[float] = None
    werr: Optional[float] = None

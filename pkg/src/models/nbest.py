import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Candidate(BaseModel):
    """
    One first-pass hypothesis. All scores are natural-log, higher is better.

    ``nlm_score`` is filled by rescoring; a failed candidate keeps
    ``nlm_score = -inf`` and ``nlm_failed = True``.
    """

    model_config = ConfigDict(populate_by_name=True, ser_json_inf_nan='constants')

    text: str
    am_score: float = Field(..., alias="am")
    ngram_score: float = Field(..., alias="ngram")
    nlm_score: Optional[float] = Field(default=None, alias="nlm")
    nlm_failed: bool = Field(default=False, alias="nlm_failed")

    @field_validator("am_score", "ngram_score")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError(f"first-pass scores must be finite, got {value}")
        return value

    @property
    def first_pass_score(self) -> float:
        return self.am_score + self.ngram_score


class NBestRecord(BaseModel):
    """One utterance: optional reference transcript plus ordered candidates."""

    model_config = ConfigDict(populate_by_name=True, ser_json_inf_nan='constants')

    utterance_id: str = Field(..., alias="utt_id")
    reference: Optional[str] = Field(default=None, alias="ref")
    candidates: List[Candidate] = Field(default_factory=list, alias="hyps")
    selected: Optional[int] = None

    @property
    def words(self) -> List[str]:
        return (self.reference or "").split()


class RescoreWeights(BaseModel):
    """Interpolation between n-gram (alpha) and neural LM (1 - alpha) scores."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.5, ge=0.0, le=1.0)

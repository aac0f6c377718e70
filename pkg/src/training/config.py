from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    """Optimisation settings for one training run (Adam + warmup/cosine schedule)."""

    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(default=1e-3, gt=0)
    warmup_steps: Optional[int] = Field(default=None, ge=0)
    min_lr_ratio: float = Field(default=0.1, ge=0.0, le=1.0)
    batch_size: int = Field(default=16, gt=0)
    max_steps: int = Field(default=1000, gt=0)
    eval_interval: int = Field(default=100, gt=0)
    clip_norm: Optional[float] = Field(default=1.0, gt=0)
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(default=1e-8, gt=0)
    seed: int = 0
    checkpoint_dir: Optional[Path] = None
    log_path: Optional[Path] = None

    @property
    def effective_warmup(self) -> int:
        """Explicit warmup, or 1% of the run (at least one step)."""
        if self.warmup_steps is not None:
            return self.warmup_steps
        return max(1, round(0.01 * self.max_steps))


class KDConfig(BaseModel):
    """Distillation loss weights: alpha on hard-label CE, (1 - alpha) on the KL term."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.1, ge=0.0, le=1.0)
    temperature: float = Field(default=1.0, gt=0)
    student_dropout_override: float = Field(default=0.0, ge=0.0, lt=1.0)

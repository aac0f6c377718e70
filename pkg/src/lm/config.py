import math
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..exceptions import ModelConfigError

# Architectures compared in the rescoring study
PRESETS: Dict[str, Dict[str, int]] = {
    "large": {"n_layers": 12, "n_heads": 12, "d_embed": 768, "d_hidden": 768, "d_ffn": 3072},
    "small-one": {"n_layers": 6, "n_heads": 8, "d_embed": 352, "d_hidden": 352, "d_ffn": 1408},
    "small-two": {"n_layers": 6, "n_heads": 8, "d_embed": 256, "d_hidden": 256, "d_ffn": 1024},
}


class AdaptiveSoftmaxConfig(BaseModel):
    """
    Frequency-ordered cluster layout of an adaptive softmax output layer.

    The head cluster covers ids [0, cutoffs[0]) at full hidden width; tail
    cluster i (1-based) covers [cutoffs[i-1], cutoffs[i]) behind a projection
    of width max(1, d_hidden // projection_factor**i).
    """

    model_config = ConfigDict(frozen=True)

    cutoffs: List[int]
    projection_factor: int = Field(default=4, ge=1)

    @field_validator("cutoffs")
    @classmethod
    def _strictly_ascending(cls, cutoffs: List[int]) -> List[int]:
        if not cutoffs:
            raise ValueError("cutoffs must not be empty")
        if cutoffs[0] <= 0:
            raise ValueError(f"first cutoff must be positive, got {cutoffs[0]}")
        if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
            raise ValueError(f"cutoffs must be strictly ascending, got {cutoffs}")
        return cutoffs

    @classmethod
    def default(cls, vocab_size: int) -> "AdaptiveSoftmaxConfig":
        raw = [math.ceil(vocab_size / 5), math.ceil(vocab_size / 2), vocab_size]
        cutoffs = sorted(set(c for c in raw if c > 0))
        return cls(cutoffs=cutoffs, projection_factor=4)

    @property
    def head_size(self) -> int:
        return self.cutoffs[0]

    @property
    def n_tails(self) -> int:
        return len(self.cutoffs) - 1

    def tail_bounds(self) -> List[Tuple[int, int]]:
        return list(zip(self.cutoffs[:-1], self.cutoffs[1:]))

    def tail_width(self, tail_index: int, d_hidden: int) -> int:
        """Projection width of 1-based tail cluster ``tail_index``."""
        return max(1, d_hidden // (self.projection_factor ** tail_index))


class ModelConfig(BaseModel):
    """Hyperparameters of a decoder-only Transformer language model."""

    model_config = ConfigDict(frozen=True)

    n_layers: int = Field(gt=0)
    n_heads: int = Field(gt=0)
    d_embed: int = Field(gt=0)
    d_hidden: int = Field(gt=0)
    d_ffn: int = Field(gt=0)
    vocab_size: int = Field(ge=4)
    max_context: int = Field(default=512, gt=0)
    dropout: float = Field(default=0.1, ge=0.0, lt=1.0)
    softmax_mode: Literal["full", "adaptive"] = "full"
    adaptive_config: Optional[AdaptiveSoftmaxConfig] = None
    tie_embeddings: bool = False

    @model_validator(mode="after")
    def _check_invariants(self) -> "ModelConfig":
        if self.d_hidden % self.n_heads:
            raise ValueError(f"d_hidden {self.d_hidden} is not divisible by n_heads {self.n_heads}")
        if self.softmax_mode == "adaptive":
            if self.adaptive_config is None:
                object.__setattr__(self, "adaptive_config", AdaptiveSoftmaxConfig.default(self.vocab_size))
            if self.adaptive_config.cutoffs[-1] != self.vocab_size:
                raise ValueError(
                    f"last adaptive cutoff {self.adaptive_config.cutoffs[-1]} must equal vocab_size {self.vocab_size}"
                )
        if self.tie_embeddings and (self.softmax_mode != "full" or self.d_embed != self.d_hidden):
            raise ValueError("tie_embeddings needs a full softmax and d_embed == d_hidden")
        return self

    @property
    def head_dim(self) -> int:
        return self.d_hidden // self.n_heads

    @classmethod
    def from_preset(cls, name: str, vocab_size: int, **overrides) -> "ModelConfig":
        """Expand a named architecture ("large", "small-one", "small-two")."""
        if name not in PRESETS:
            raise ModelConfigError(f"unknown preset '{name}', expected one of {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], "vocab_size": vocab_size, **overrides})

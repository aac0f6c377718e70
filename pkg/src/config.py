import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .exceptions import ConfigError
from .lm.config import PRESETS, AdaptiveSoftmaxConfig, ModelConfig
from .training.config import KDConfig, TrainConfig

logger = logging.getLogger(__name__)


class TokenizerSection(BaseModel):
    corpus: Optional[Path] = None
    vocab_size: int = Field(default=1000, ge=4)
    lowercase: bool = False
    output_dir: Optional[Path] = None


class ModelSection(BaseModel):
    """A preset name, explicit dimensions, or a preset with some dimensions overridden."""
    preset: Optional[Literal["large", "small-one", "small-two"]] = "small-two"
    n_layers: Optional[int] = None
    n_heads: Optional[int] = None
    d_embed: Optional[int] = None
    d_hidden: Optional[int] = None
    d_ffn: Optional[int] = None
    max_context: int = 512
    dropout: float = 0.1
    softmax_mode: Literal["full", "adaptive"] = "full"
    adaptive_config: Optional[AdaptiveSoftmaxConfig] = None
    tie_embeddings: bool = False

    def build(self, vocab_size: int) -> ModelConfig:
        """Expand into a validated ``ModelConfig`` for ``vocab_size`` units."""
        dims = {
            key: getattr(self, key)
            for key in ("n_layers", "n_heads", "d_embed", "d_hidden", "d_ffn")
            if getattr(self, key) is not None
        }
        rest = {
            "max_context": self.max_context,
            "dropout": self.dropout,
            "softmax_mode": self.softmax_mode,
            "adaptive_config": self.adaptive_config,
            "tie_embeddings": self.tie_embeddings,
        }
        try:
            if self.preset is not None:
                return ModelConfig.from_preset(self.preset, vocab_size, **dims, **rest)
            return ModelConfig(vocab_size=vocab_size, **dims, **rest)
        except ValidationError as e:
            raise ConfigError(f"invalid model section: {e}") from e


class TrainingSection(BaseModel):
    corpus: Optional[Path] = None
    dev_corpus: Optional[Path] = None
    train: TrainConfig = Field(default_factory=TrainConfig)
    kd: Optional[KDConfig] = None
    teacher_checkpoint: Optional[Path] = None
    pretrain_corpus: Optional[Path] = None
    pretrain_dev_corpus: Optional[Path] = None
    pretrain: Optional[TrainConfig] = None
    pretrain_steps: Optional[int] = Field(default=None, ge=1)
    model_out: Optional[Path] = None


class RescoringSection(BaseModel):
    model: Optional[Path] = None
    nbest_in: Optional[Path] = None
    nbest_out: Optional[Path] = None
    dev_nbest: Optional[Path] = None
    alpha: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    tune_grid: Optional[List[float]] = None
    scores_are_costs: bool = False
    n_max: int = Field(default=50, ge=1)
    workers: int = Field(default=1, ge=1)


class EvaluationSection(BaseModel):
    models: List[Path] = Field(default_factory=list)
    corpus: Optional[Path] = None
    out: Optional[Path] = None
    table_layout: Literal["wer", "adaptive", "teacher", "pretrain"] = "wer"
    repetitions: int = Field(default=10, ge=1)
    bench_candidates: int = Field(default=5000, ge=1)
    lowercase: bool = False


class ExperimentConfig(BaseSettings):
    """
    Complete experiment description. Values come from, in priority order:
    command-line flags, the JSON config file, LMR_* environment variables
    (``LMR_TRAINING__TRAIN__BATCH_SIZE=8``), then defaults.
    """

    model_config = SettingsConfigDict(env_prefix="LMR_", env_nested_delimiter="__", extra="forbid")

    seed: int = 0
    tokenizer: TokenizerSection = Field(default_factory=TokenizerSection)
    model: ModelSection = Field(default_factory=ModelSection)
    training: TrainingSection = Field(default_factory=TrainingSection)
    rescoring: RescoringSection = Field(default_factory=RescoringSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)


def deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_experiment_config(path: Optional[Union[str, Path]] = None,
                           overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Read a JSON experiment config and apply flag overrides on top.

    Raises:
        ConfigError: unreadable file, invalid JSON or invalid values
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    if overrides:
        data = deep_merge(data, overrides)
    try:
        config = ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e
    logger.debug(f"Loaded experiment config: path={path}, seed={config.seed}, preset={config.model.preset}")
    return config


def dump_experiment_config(config: ExperimentConfig, path: Optional[Union[str, Path]] = None) -> str:
    text = json.dumps(config.model_dump(mode="json"), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


__all__ = [
    'PRESETS', 'TokenizerSection', 'ModelSection', 'TrainingSection', 'RescoringSection',
    'EvaluationSection', 'ExperimentConfig', 'deep_merge', 'load_experiment_config', 'dump_experiment_config',
]

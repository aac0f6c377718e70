import math

from .config import TrainConfig


def lr_at(step: int, config: TrainConfig) -> float:
    """Learning rate for 1-based ``step``: linear warmup, then cosine decay to min_lr_ratio."""
    base = config.learning_rate
    warmup = config.effective_warmup
    if warmup and step <= warmup:
        return base * step / warmup
    span = max(1, config.max_steps - warmup)
    progress = min(1.0, (step - warmup) / span)
    floor = base * config.min_lr_ratio
    return floor + (base - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))

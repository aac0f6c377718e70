from .config import ModelConfig, AdaptiveSoftmaxConfig, PRESETS
from .params import ModelParameters, ParamCount, count_params, parameter_shapes
from .adaptive_softmax import adaptive_log_probs, adaptive_loss
from .model import TransformerLM, build_model
from .checkpoint import (
    save_checkpoint, load_checkpoint, save_optimizer_state, load_optimizer_state,
    write_tensor_file, read_tensor_file,
)

__all__ = [
    'ModelConfig', 'AdaptiveSoftmaxConfig', 'PRESETS',
    'ModelParameters', 'ParamCount', 'count_params', 'parameter_shapes',
    'adaptive_log_probs', 'adaptive_loss', 'TransformerLM', 'build_model',
    'save_checkpoint', 'load_checkpoint', 'save_optimizer_state', 'load_optimizer_state',
    'write_tensor_file', 'read_tensor_file',
]

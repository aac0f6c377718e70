from collections import OrderedDict
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np
from pydantic import BaseModel

from ..tensor import Tensor
from .config import ModelConfig


class ParamCount(BaseModel):
    components: Dict[str, int]
    total: int


def parameter_shapes(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Names and shapes of every tensor in a model built from ``config``, in build order."""
    E, H, F, V = config.d_embed, config.d_hidden, config.d_ffn, config.vocab_size
    shapes: List[Tuple[str, Tuple[int, ...]]] = [
        ("tok_embed", (V, E)),
        ("pos_embed", (config.max_context, E)),
    ]
    if E != H:
        shapes.append(("embed_proj", (E, H)))
    for layer in range(config.n_layers):
        prefix = f"blocks.{layer}"
        shapes += [
            (f"{prefix}.ln1.scale", (H,)),
            (f"{prefix}.ln1.offset", (H,)),
            (f"{prefix}.attn.qkv.weight", (H, 3 * H)),
            (f"{prefix}.attn.qkv.bias", (3 * H,)),
            (f"{prefix}.attn.out.weight", (H, H)),
            (f"{prefix}.attn.out.bias", (H,)),
            (f"{prefix}.ln2.scale", (H,)),
            (f"{prefix}.ln2.offset", (H,)),
            (f"{prefix}.ffn.in.weight", (H, F)),
            (f"{prefix}.ffn.in.bias", (F,)),
            (f"{prefix}.ffn.out.weight", (F, H)),
            (f"{prefix}.ffn.out.bias", (H,)),
        ]
    shapes += [("ln_f.scale", (H,)), ("ln_f.offset", (H,))]

    if config.softmax_mode == "full":
        if not config.tie_embeddings:
            shapes.append(("output.weight", (H, V)))
        shapes.append(("output.bias", (V,)))
    else:
        adaptive = config.adaptive_config
        head_width = adaptive.head_size + adaptive.n_tails
        shapes += [("output.head.weight", (H, head_width)), ("output.head.bias", (head_width,))]
        for i, (lo, hi) in enumerate(adaptive.tail_bounds(), start=1):
            width = adaptive.tail_width(i, H)
            shapes += [
                (f"output.tail.{i}.proj", (H, width)),
                (f"output.tail.{i}.weight", (width, hi - lo)),
                (f"output.tail.{i}.bias", (hi - lo,)),
            ]
    return shapes


def _component(name: str) -> str:
    if name.startswith("blocks."):
        return "blocks"
    if name.startswith("ln_f"):
        return "final_norm"
    if name.startswith("output"):
        return "output"
    return {"tok_embed": "token_embedding", "pos_embed": "position_embedding",
            "embed_proj": "embedding_projection"}[name]


def count_params(config: ModelConfig) -> ParamCount:
    """Closed-form parameter count, per component and in total."""
    components: Dict[str, int] = OrderedDict()
    for name, shape in parameter_shapes(config):
        key = _component(name)
        components[key] = components.get(key, 0) + int(np.prod(shape))
    return ParamCount(components=dict(components), total=sum(components.values()))


class ModelParameters(Mapping[str, Tensor]):
    """Ordered name -> Tensor mapping holding a model's learnable weights."""

    def __init__(self, tensors: "OrderedDict[str, Tensor]"):
        self._tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def grads(self) -> Dict[str, np.ndarray]:
        return {name: t.grad for name, t in self._tensors.items() if t.grad is not None}

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, t.values.copy()) for name, t in self._tensors.items())

    def load_state_dict(self, arrays: Mapping[str, np.ndarray]):
        missing = set(self._tensors) - set(arrays)
        if missing:
            raise KeyError(f"state is missing parameters: {sorted(missing)[:5]}")
        for name, tensor in self._tensors.items():
            values = np.asarray(arrays[name], dtype=tensor.dtype)
            if values.shape != tensor.shape:
                raise ValueError(f"parameter '{name}' has shape {tensor.shape}, state has {values.shape}")
            tensor.values = values.copy()

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.values)) for t in self._tensors.values())

import logging
import math
from collections import OrderedDict
from typing import Optional, Tuple

import numpy as np

from ..exceptions import ModelInputError
from ..tensor import Tensor, apply, no_grad
from ..tokenizer.vocabulary import BOS_ID, PAD_ID
from .adaptive_softmax import adaptive_log_probs, adaptive_loss
from .config import ModelConfig
from .params import ModelParameters, parameter_shapes

logger = logging.getLogger(__name__)

INIT_STD = 0.02


class TransformerLM:
    """
    Decoder-only Transformer language model with pre-norm blocks:

        x = tok_embed[ids] + pos_embed[t]
        x = x + Attn(LN(x));  x = x + FFN(LN(x))   (per block)
        log P = Softmax(LN_f(x))                    (full or adaptive)

    The model is a thin object around its config and ``ModelParameters``;
    every computation goes through ``src.tensor.apply`` so it can be
    differentiated when a ``ComputationGraph`` is active.
    """

    def __init__(self, config: ModelConfig, params: ModelParameters):
        self.config = config
        self.params = params

    @property
    def dtype(self) -> np.dtype:
        return self.params["tok_embed"].dtype

    @property
    def vocab_size(self) -> int:
        return self.config.vocab_size

    def set_dropout(self, rate: float):
        self.config = self.config.model_copy(update={"dropout": rate})

    # --- validation ---

    def check_ids(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.ndim != 2 or ids.shape[1] == 0:
            raise ModelInputError(f"token ids must be a non-empty (T,) or (B, T) array, got shape {ids.shape}")
        if ids.shape[1] > self.config.max_context:
            raise ModelInputError(
                f"sequence length {ids.shape[1]} exceeds max_context {self.config.max_context}"
            )
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ModelInputError(
                f"token ids must lie in [0, {self.config.vocab_size}), got range [{ids.min()}, {ids.max()}]"
            )
        return ids

    # --- network ---

    def _dropout(self, x: Tensor, training: bool, rng: Optional[np.random.Generator]) -> Tensor:
        rate = self.config.dropout
        if not training or rate == 0.0 or rng is None:
            return x
        return apply("dropout_mask", x, rate=rate, seed=int(rng.integers(0, 2**31 - 1)))

    def _linear(self, x: Tensor, prefix: str) -> Tensor:
        return apply("add", apply("matmul", x, self.params[f"{prefix}.weight"]), self.params[f"{prefix}.bias"])

    def _layer_norm(self, x: Tensor, prefix: str) -> Tensor:
        return apply("layer_norm", x, self.params[f"{prefix}.scale"], self.params[f"{prefix}.offset"], eps=1e-5)

    def _attention(self, x: Tensor, prefix: str, training: bool, rng) -> Tensor:
        batch, length, _ = x.shape
        heads, head_dim = self.config.n_heads, self.config.head_dim

        qkv = self._linear(x, f"{prefix}.qkv")
        qkv = apply("reshape", qkv, shape=(batch, length, 3, heads, head_dim))
        qkv = apply("transpose", qkv, axes=(2, 0, 3, 1, 4))
        q = apply("slice", qkv, index=0)
        k = apply("slice", qkv, index=1)
        v = apply("slice", qkv, index=2)

        scores = apply("matmul", q, apply("transpose", k, axes=(0, 1, 3, 2)))
        scores = apply("scale", scores, factor=1.0 / math.sqrt(head_dim))
        weights = apply("softmax", apply("causal_mask", scores), axis=-1)
        weights = self._dropout(weights, training, rng)

        context = apply("matmul", weights, v)
        context = apply("transpose", context, axes=(0, 2, 1, 3))
        context = apply("reshape", context, shape=(batch, length, heads * head_dim))
        return self._linear(context, f"{prefix}.out")

    def hidden_states(self, ids: np.ndarray, training: bool = False,
                      rng: Optional[np.random.Generator] = None) -> Tensor:
        """Final-norm hidden states, shape (B, T, d_hidden)."""
        ids = self.check_ids(ids)
        length = ids.shape[1]
        x = apply("embedding_lookup", self.params["tok_embed"], ids=ids)
        positions = apply("embedding_lookup", self.params["pos_embed"], ids=np.arange(length))
        x = self._dropout(apply("add", x, positions), training, rng)
        if "embed_proj" in self.params:
            x = apply("matmul", x, self.params["embed_proj"])

        for layer in range(self.config.n_layers):
            prefix = f"blocks.{layer}"
            attn = self._attention(self._layer_norm(x, f"{prefix}.ln1"), f"{prefix}.attn", training, rng)
            x = apply("add", x, self._dropout(attn, training, rng))
            inner = apply("gelu", self._linear(self._layer_norm(x, f"{prefix}.ln2"), f"{prefix}.ffn.in"))
            ffn = self._linear(inner, f"{prefix}.ffn.out")
            x = apply("add", x, self._dropout(ffn, training, rng))
        return self._layer_norm(x, "ln_f")

    def _full_logits(self, hidden: Tensor) -> Tensor:
        if self.config.tie_embeddings:
            weight = apply("transpose", self.params["tok_embed"], axes=(1, 0))
        else:
            weight = self.params["output.weight"]
        return apply("add", apply("matmul", hidden, weight), self.params["output.bias"])

    def output_log_probs(self, hidden: Tensor) -> Tensor:
        if self.config.softmax_mode == "adaptive":
            return adaptive_log_probs(hidden, self.params, self.config.adaptive_config)
        return apply("log_softmax", self._full_logits(hidden), axis=-1)

    def log_probs(self, ids: np.ndarray, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
        """Per-position log-probabilities over the vocabulary, shape (B, T, V)."""
        return self.output_log_probs(self.hidden_states(ids, training, rng))

    def loss(self, inputs: np.ndarray, targets: np.ndarray, training: bool = False,
             rng: Optional[np.random.Generator] = None) -> Tensor:
        """Mean per-token negative log-likelihood; <pad> targets are ignored."""
        hidden = self.hidden_states(inputs, training, rng)
        batch, length, width = hidden.shape
        flat = apply("reshape", hidden, shape=(batch * length, width))
        targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        if self.config.softmax_mode == "adaptive":
            return adaptive_loss(flat, targets, self.params, self.config.adaptive_config, ignore_index=PAD_ID)
        return apply("cross_entropy", self._full_logits(flat), targets=targets, ignore_index=PAD_ID)

    # --- inference helpers ---

    def forward(self, ids: np.ndarray) -> np.ndarray:
        """Inference-mode log-probabilities; returns (T, V) for 1-D input, else (B, T, V)."""
        squeeze = np.asarray(ids).ndim == 1
        with no_grad():
            out = self.log_probs(ids).values
        return out[0] if squeeze else out

    def sequence_log_prob(self, ids: np.ndarray) -> Tuple[float, np.ndarray]:
        """Sum of log P(w_j | w_<j) over a BOS-initial sequence, plus the per-token terms."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 2:
            raise ModelInputError("sequence_log_prob needs BOS followed by at least one token")
        if ids[0] != BOS_ID:
            raise ModelInputError(f"sequence must begin with BOS id {BOS_ID}, got {ids[0]}")
        log_probs = self.forward(ids[:-1])
        per_token = log_probs[np.arange(ids.size - 1), ids[1:]].astype(np.float64)
        return float(per_token.sum()), per_token


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> TransformerLM:
    """Initialise a model: N(0, 0.02) weights, zero biases, unit layer-norm scales.

    Parameters are drawn in ``parameter_shapes`` order from one seeded
    generator, so equal (config, seed, dtype) gives bitwise-equal weights.
    """
    dtype = np.dtype(dtype)
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in parameter_shapes(config):
        if name.endswith(".scale"):
            values = np.ones(shape, dtype=dtype)
        elif name.endswith(".bias") or name.endswith(".offset"):
            values = np.zeros(shape, dtype=dtype)
        else:
            values = rng.standard_normal(shape, dtype=dtype)
            values *= dtype.type(INIT_STD)
        tensors[name] = Tensor(values, requires_grad=True, name=name)
    model = TransformerLM(config, ModelParameters(tensors))
    logger.info(
        f"Built model: layers={config.n_layers}, d_hidden={config.d_hidden}, vocab={config.vocab_size}, "
        f"softmax={config.softmax_mode}, params={model.params.num_values()}"
    )
    return model

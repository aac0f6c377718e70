"""
Tests for the Transformer LM: causality, normalisation, the adaptive
softmax factorisation, parameter counting and checkpoints.
"""

import json
import struct

import numpy as np
import pytest
from pydantic import ValidationError

from src.exceptions import CheckpointError, ModelConfigError, ModelInputError
from src.lm import (
    AdaptiveSoftmaxConfig,
    ModelConfig,
    build_model,
    count_params,
    load_checkpoint,
    load_optimizer_state,
    save_checkpoint,
    save_optimizer_state,
)
from src.lm.checkpoint import write_tensor_file
from src.tensor import AdamState, ComputationGraph, no_grad
from src.tokenizer import BOS_ID, PAD_ID


def _logsumexp(x, axis=-1):
    top = np.max(x, axis=axis, keepdims=True)
    return (top + np.log(np.sum(np.exp(x - top), axis=axis, keepdims=True)))[..., 0]


def _log_softmax(x):
    return x - _logsumexp(x)[..., None]


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

class TestForward:

    @pytest.mark.parametrize("softmax_mode", ["full", "adaptive"])
    def test_rows_are_normalized(self, tiny_model, rng, softmax_mode):
        model = tiny_model(softmax_mode=softmax_mode)
        log_probs = model.forward(rng.integers(0, 20, size=(3, 10)))
        assert log_probs.shape == (3, 10, 20)
        np.testing.assert_allclose(_logsumexp(log_probs), 0.0, atol=1e-10)

    @pytest.mark.parametrize("softmax_mode", ["full", "adaptive"])
    def test_future_tokens_do_not_leak(self, tiny_model, rng, softmax_mode):
        model = tiny_model(softmax_mode=softmax_mode)
        ids = rng.integers(0, 20, size=12)
        changed = ids.copy()
        changed[7:] = (changed[7:] + 5) % 20
        np.testing.assert_allclose(model.forward(ids)[:7], model.forward(changed)[:7], rtol=0, atol=1e-12)

    @pytest.mark.parametrize("softmax_mode", ["full", "adaptive"])
    def test_every_prefix_is_independent_of_its_suffix(self, tiny_model, rng, softmax_mode):
        model = tiny_model(softmax_mode=softmax_mode)
        ids = rng.integers(0, 20, size=10)
        full = model.forward(ids)
        for split in range(1, ids.size):
            changed = ids.copy()
            changed[split:] = rng.integers(0, 20, size=ids.size - split)
            np.testing.assert_allclose(model.forward(ids[:split]), full[:split], rtol=0, atol=1e-12)
            np.testing.assert_allclose(model.forward(changed)[:split], full[:split], rtol=0, atol=1e-12)

    def test_same_seed_same_weights(self, tiny_config):
        a = build_model(tiny_config(), seed=3)
        b = build_model(tiny_config(), seed=3)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].values, b.params[name].values)

    def test_initialisation_scheme(self, tiny_model):
        model = tiny_model()
        np.testing.assert_array_equal(model.params["blocks.0.ln1.scale"].values, 1.0)
        np.testing.assert_array_equal(model.params["blocks.0.ffn.in.bias"].values, 0.0)
        assert model.params["tok_embed"].values.std() == pytest.approx(0.02, rel=0.3)

    def test_rejects_over_long_input(self, tiny_model):
        with pytest.raises(ModelInputError):
            tiny_model().forward(np.zeros(17, dtype=int))

    def test_rejects_out_of_range_ids(self, tiny_model):
        with pytest.raises(ModelInputError):
            tiny_model().forward(np.array([0, 20]))

    def test_sequence_log_prob_sums_terms(self, tiny_model):
        model = tiny_model()
        ids = np.array([BOS_ID, 5, 9, 11, 1])
        total, terms = model.sequence_log_prob(ids)
        log_probs = model.forward(ids[:-1])
        assert terms.shape == (4,)
        assert total == pytest.approx(sum(log_probs[j, ids[j + 1]] for j in range(4)))

    def test_single_token_sequence(self, tiny_model):
        model = tiny_model()
        total, _ = model.sequence_log_prob(np.array([BOS_ID, 7]))
        assert total == pytest.approx(model.forward(np.array([BOS_ID]))[0, 7], abs=1e-12)

    def test_zeroed_output_layer_is_uniform(self, tiny_model):
        model = tiny_model()
        model.params["output.weight"].values[:] = 0.0
        _, terms = model.sequence_log_prob(np.array([BOS_ID, 4, 9, 1]))
        np.testing.assert_allclose(terms, -np.log(20), atol=1e-12)

    def test_specials_only_vocabulary_runs(self, tiny_model):
        model = tiny_model(vocab_size=4)
        assert model.forward(np.array([0, 3, 2])).shape == (3, 4)

    def test_sequence_log_prob_requires_bos(self, tiny_model):
        with pytest.raises(ModelInputError):
            tiny_model().sequence_log_prob(np.array([5, 6, 7]))

    def test_tied_embeddings_share_the_table(self, tiny_model):
        model = tiny_model(tie_embeddings=True)
        assert "output.weight" not in model.params
        assert model.forward(np.array([0, 4, 6])).shape == (3, 20)


# ---------------------------------------------------------------------------
# Adaptive softmax
# ---------------------------------------------------------------------------

class TestAdaptiveSoftmax:

    def test_chain_rule_over_two_clusters(self, tiny_model, rng):
        config = AdaptiveSoftmaxConfig(cutoffs=[10, 20], projection_factor=2)
        model = tiny_model(softmax_mode="adaptive", adaptive_config=config)
        ids = rng.integers(0, 20, size=(1, 6))
        with no_grad():
            hidden = model.hidden_states(ids).values[0]
        p = {name: model.params[name].values for name in model.params}

        head = _log_softmax(hidden @ p["output.head.weight"] + p["output.head.bias"])
        tail = _log_softmax((hidden @ p["output.tail.1.proj"]) @ p["output.tail.1.weight"] + p["output.tail.1.bias"])
        expected = np.concatenate([head[:, :10], head[:, 10:11] + tail], axis=-1)

        np.testing.assert_allclose(model.forward(ids[0]), expected, rtol=1e-10, atol=1e-12)

    def test_loss_matches_full_log_probs(self, tiny_model, rng):
        model = tiny_model(softmax_mode="adaptive")
        inputs = rng.integers(0, 20, size=(2, 8))
        targets = rng.integers(4, 20, size=(2, 8))
        targets[1, 5:] = PAD_ID
        with no_grad():
            loss = model.loss(inputs, targets).item()
        log_probs = model.forward(inputs)
        mask = targets != PAD_ID
        picked = np.take_along_axis(log_probs, targets[..., None], axis=-1)[..., 0]
        assert loss == pytest.approx(-picked[mask].mean(), rel=1e-10)

    def test_single_cluster_equals_full_softmax(self, tiny_model, rng):
        full = tiny_model()
        adaptive = tiny_model(softmax_mode="adaptive", adaptive_config=AdaptiveSoftmaxConfig(cutoffs=[20]))
        state = full.params.state_dict()
        state["output.head.weight"] = state.pop("output.weight")
        state["output.head.bias"] = state.pop("output.bias")
        adaptive.params.load_state_dict(state)
        ids = rng.integers(0, 20, size=(2, 7))
        np.testing.assert_allclose(adaptive.forward(ids), full.forward(ids), rtol=0, atol=1e-9)

    def test_default_cutoffs(self):
        assert AdaptiveSoftmaxConfig.default(25000).cutoffs == [5000, 12500, 25000]

    @pytest.mark.parametrize("cutoffs", [[], [0, 10], [10, 10, 20], [15, 10]])
    def test_invalid_cutoffs(self, cutoffs):
        with pytest.raises(ValidationError):
            AdaptiveSoftmaxConfig(cutoffs=cutoffs)

    def test_last_cutoff_must_cover_vocabulary(self, tiny_config):
        with pytest.raises(ValidationError):
            tiny_config(softmax_mode="adaptive", adaptive_config=AdaptiveSoftmaxConfig(cutoffs=[5, 15]))


# ---------------------------------------------------------------------------
# Gradients through the whole network
# ---------------------------------------------------------------------------

class TestModelGradients:

    @pytest.mark.parametrize("softmax_mode", ["full", "adaptive"])
    @pytest.mark.parametrize("param", ["tok_embed", "blocks.1.attn.qkv.weight", "blocks.0.ln2.scale"])
    def test_loss_gradient_matches_finite_differences(self, tiny_model, softmax_mode, param):
        model = tiny_model(softmax_mode=softmax_mode)
        rng = np.random.default_rng(11)
        inputs = rng.integers(0, 20, size=(2, 5))
        targets = rng.integers(0, 20, size=(2, 5))

        model.params.zero_grad()
        with ComputationGraph() as graph:
            loss = model.loss(inputs, targets)
        graph.backward(loss)
        analytic = model.params[param].grad

        values = model.params[param].values
        flat_indices = rng.choice(values.size, size=min(8, values.size), replace=False)
        eps = 1e-5
        for flat in flat_indices:
            idx = np.unravel_index(flat, values.shape)
            original = values[idx]
            values[idx] = original + eps
            with no_grad():
                plus = model.loss(inputs, targets).item()
            values[idx] = original - eps
            with no_grad():
                minus = model.loss(inputs, targets).item()
            values[idx] = original
            assert analytic[idx] == pytest.approx((plus - minus) / (2 * eps), rel=1e-4, abs=1e-8)


# ---------------------------------------------------------------------------
# Parameter counting
# ---------------------------------------------------------------------------

class TestParameterCount:

    def test_large_preset_count(self):
        assert count_params(ModelConfig.from_preset("large", 25000)).total == 123_874_216

    @pytest.mark.parametrize("preset", ["large", "small-one", "small-two"])
    def test_adaptive_is_smaller_than_full(self, preset):
        full = count_params(ModelConfig.from_preset(preset, 25000)).total
        adaptive = count_params(ModelConfig.from_preset(preset, 25000, softmax_mode="adaptive")).total
        assert adaptive < full

    @pytest.mark.parametrize("preset", ["large", "small-one", "small-two"])
    def test_larger_vocabulary_costs_more(self, preset):
        assert (count_params(ModelConfig.from_preset(preset, 25000)).total
                > count_params(ModelConfig.from_preset(preset, 5000)).total)

    def test_small_presets_are_smaller(self):
        large = count_params(ModelConfig.from_preset("large", 25000)).total
        small_one = count_params(ModelConfig.from_preset("small-one", 25000)).total
        small_two = count_params(ModelConfig.from_preset("small-two", 25000)).total
        assert large > small_one > small_two

    @pytest.mark.parametrize("preset", ["small-one", "small-two"])
    @pytest.mark.parametrize("softmax_mode", ["full", "adaptive"])
    def test_preset_count_matches_built_model(self, preset, softmax_mode):
        config = ModelConfig.from_preset(preset, 1000, max_context=64, softmax_mode=softmax_mode)
        assert count_params(config).total == build_model(config).params.num_values()

    @pytest.mark.slow
    @pytest.mark.parametrize("softmax_mode, expected", [("full", 123_874_216), ("adaptive", None)])
    def test_large_preset_count_matches_built_model(self, softmax_mode, expected):
        config = ModelConfig.from_preset("large", 25000, softmax_mode=softmax_mode)
        built = build_model(config).params.num_values()
        assert count_params(config).total == built
        if expected is not None:
            assert built == expected

    def test_full_output_layer_formula(self, tiny_config):
        components = count_params(tiny_config()).components
        assert components["output"] == 20 * 8 + 20

    def test_unknown_preset(self):
        with pytest.raises(ModelConfigError):
            ModelConfig.from_preset("huge", 1000)

    @pytest.mark.parametrize("seed", range(50))
    def test_closed_form_matches_built_model(self, seed):
        rng = np.random.default_rng(seed)
        heads = int(rng.integers(1, 4))
        vocab = int(rng.integers(4, 60))
        mode = "adaptive" if rng.random() < 0.5 else "full"
        d_hidden = heads * int(rng.integers(1, 6))
        config = ModelConfig(
            n_layers=int(rng.integers(1, 4)),
            n_heads=heads,
            d_embed=int(rng.integers(1, 12)),
            d_hidden=d_hidden,
            d_ffn=int(rng.integers(1, 20)),
            vocab_size=vocab,
            max_context=int(rng.integers(1, 20)),
            softmax_mode=mode,
        )
        counted = count_params(config)
        assert counted.total == build_model(config, seed=seed).params.num_values()
        assert counted.total == sum(counted.components.values())

    def test_head_count_must_divide_hidden(self):
        with pytest.raises(ValidationError):
            ModelConfig(n_layers=1, n_heads=3, d_embed=8, d_hidden=8, d_ffn=8, vocab_size=10)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

class TestCheckpoint:

    @pytest.mark.parametrize("softmax_mode", ["full", "adaptive"])
    def test_round_trip_is_bitwise(self, tiny_model, tmp_path, rng, softmax_mode):
        model = tiny_model(dtype=np.float32, softmax_mode=softmax_mode)
        save_checkpoint(tmp_path / "m.ckpt", model)
        loaded = load_checkpoint(tmp_path / "m.ckpt")
        assert loaded.config == model.config
        for name in model.params:
            np.testing.assert_array_equal(loaded.params[name].values, model.params[name].values)
        ids = rng.integers(0, 20, size=9)
        np.testing.assert_array_equal(loaded.forward(ids), model.forward(ids))

    def test_truncated_file_raises(self, tiny_model, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, tiny_model(dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_garbage_header_raises(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"\x05\x00\x00\x00\x00\x00\x00\x00nope!")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    @pytest.mark.parametrize("meta", [{}, {"config": {"n_layers": "many"}}])
    def test_header_without_usable_config_raises(self, tiny_model, tmp_path, meta):
        path = tmp_path / "model.ckpt"
        write_tensor_file(path, meta, tiny_model().params.state_dict())
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_manifest_entry_without_shape_raises(self, tmp_path):
        path = tmp_path / "model.ckpt"
        header = json.dumps({"format_version": 1, "tensors": [{"name": "w", "offset": 0}]}).encode()
        path.write_bytes(struct.pack("<Q", len(header)) + header)
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_optimizer_state_round_trip(self, tiny_model, tmp_path):
        model = tiny_model(dtype=np.float32)
        state = AdamState.for_params(model.params)
        state.step = 7
        state.first_moment["tok_embed"] += 0.5
        save_optimizer_state(tmp_path / "m.optim", state)
        loaded = load_optimizer_state(tmp_path / "m.optim")
        assert loaded.step == 7
        np.testing.assert_array_equal(loaded.first_moment["tok_embed"], state.first_moment["tok_embed"])
        assert set(loaded.second_moment) == set(model.params)

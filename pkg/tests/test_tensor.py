"""
Tests for the tensor core: op forward values, finite-difference gradient
checks over every differentiable op, graph rules and the Adam optimizer.
"""

import math

import numpy as np
import pytest

from src.exceptions import DivergenceError, GraphError, ShapeError
from src.tensor import AdamState, ComputationGraph, Tensor, adam_step, apply, clip_grad_norm, no_grad
from src.training import KDConfig, kd_loss

from .conftest import check_gradients


def _normal(rng, *shape):
    return rng.standard_normal(shape)


# name -> (builder, input factory)
GRAD_CASES = {
    "matmul": (lambda a, b: apply("matmul", a, b), lambda r: [_normal(r, 3, 4), _normal(r, 4, 5)]),
    "matmul_batched": (lambda a, b: apply("matmul", a, b), lambda r: [_normal(r, 2, 3, 4), _normal(r, 4, 2)]),
    "add_broadcast": (lambda a, b: apply("add", a, b), lambda r: [_normal(r, 3, 4), _normal(r, 4)]),
    "mul_broadcast": (lambda a, b: apply("mul", a, b), lambda r: [_normal(r, 3, 4), _normal(r, 3, 1)]),
    "scale": (lambda a: apply("scale", a, factor=-0.7), lambda r: [_normal(r, 2, 5)]),
    "sum": (lambda a: apply("sum", a), lambda r: [_normal(r, 3, 3)]),
    "mean": (lambda a: apply("mean", a), lambda r: [_normal(r, 4, 2)]),
    "softmax": (lambda a: apply("softmax", a, axis=-1), lambda r: [_normal(r, 3, 5)]),
    "log_softmax": (lambda a: apply("log_softmax", a, axis=-1), lambda r: [_normal(r, 3, 5)]),
    "layer_norm": (
        lambda x, s, o: apply("layer_norm", x, s, o, eps=1e-5),
        lambda r: [_normal(r, 2, 3, 6), _normal(r, 6), _normal(r, 6)],
    ),
    "gelu": (lambda a: apply("gelu", a), lambda r: [_normal(r, 4, 3)]),
    "embedding_lookup": (
        lambda t: apply("embedding_lookup", t, ids=np.array([[1, 2, 1], [6, 0, 1]])),
        lambda r: [_normal(r, 7, 3)],
    ),
    "concat": (lambda a, b: apply("concat", a, b, axis=-1), lambda r: [_normal(r, 2, 3), _normal(r, 2, 2)]),
    "slice_basic": (lambda a: apply("slice", a, index=(Ellipsis, slice(1, 3))), lambda r: [_normal(r, 2, 4)]),
    "slice_repeated_rows": (lambda a: apply("slice", a, index=np.array([0, 2, 2])), lambda r: [_normal(r, 3, 2)]),
    "reshape": (lambda a: apply("reshape", a, shape=(3, 4)), lambda r: [_normal(r, 2, 6)]),
    "transpose": (lambda a: apply("transpose", a, axes=(2, 0, 1)), lambda r: [_normal(r, 2, 3, 4)]),
    "causal_softmax": (
        lambda a: apply("softmax", apply("causal_mask", a), axis=-1),
        lambda r: [_normal(r, 2, 4, 4)],
    ),
    "dropout_mask": (lambda a: apply("dropout_mask", a, rate=0.3, seed=5), lambda r: [_normal(r, 4, 4)]),
    "cross_entropy": (
        lambda a: apply("cross_entropy", a, targets=np.array([0, 3, 1, 3, 2])),
        lambda r: [_normal(r, 5, 4)],
    ),
    "cross_entropy_ignore_sum": (
        lambda a: apply("cross_entropy", a, targets=np.array([0, 3, 1, 3, 2]), reduction="sum", ignore_index=3),
        lambda r: [_normal(r, 5, 4)],
    ),
    "kl_divergence": (lambda t, p: apply("kl_divergence", t, p), lambda r: [_normal(r, 3, 4), _normal(r, 3, 4)]),
    "kd_loss": (
        lambda s, t: kd_loss(
            apply("log_softmax", s, axis=-1), apply("log_softmax", t, axis=-1),
            np.array([1, 0, 2, 2]), KDConfig(alpha=0.3, temperature=2.0),
        ),
        lambda r: [_normal(r, 4, 3), _normal(r, 4, 3)],
    ),
}


class TestGradients:
    """Analytic gradients against central finite differences in float64."""

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("case", sorted(GRAD_CASES))
    def test_matches_finite_differences(self, case, seed):
        build, inputs = GRAD_CASES[case]
        check_gradients(build, inputs(np.random.default_rng(seed)))

    def test_three_layer_network(self):
        rng = np.random.default_rng(7)

        def network(x, w1, w2, w3):
            h = apply("gelu", apply("matmul", x, w1))
            h = apply("gelu", apply("matmul", h, w2))
            return apply("log_softmax", apply("matmul", h, w3), axis=-1)

        check_gradients(network, [_normal(rng, 3, 4), _normal(rng, 4, 5), _normal(rng, 5, 5), _normal(rng, 5, 3)])

    def test_linear_case(self):
        w = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        x = np.array([[5.0], [7.0]])
        with ComputationGraph() as graph:
            loss = apply("sum", apply("matmul", w, x))
        graph.backward(loss)
        np.testing.assert_array_equal(w.grad, np.outer(np.ones(2), x[:, 0]))

    def test_constant_loss_gives_zero_gradients(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        with ComputationGraph() as graph:
            loss = apply("sum", apply("scale", w, factor=0.0))
        graph.backward(loss)
        np.testing.assert_array_equal(w.grad, np.zeros((2, 2)))

    def test_loss_without_gradient_still_fills_zeros(self):
        w = Tensor(np.ones((2, 2)), requires_grad=True)
        with ComputationGraph() as graph:
            apply("scale", w, factor=2.0)
            loss = apply("sum", Tensor(np.arange(4.0)))
        assert not loss.requires_grad
        graph.backward(loss)
        np.testing.assert_array_equal(w.grad, np.zeros((2, 2)))

    def test_unused_branch_gets_zero_gradient(self):
        used = Tensor(np.full(3, 2.0), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        with ComputationGraph() as graph:
            apply("scale", unused, factor=3.0)
            loss = apply("sum", apply("mul", used, used))
        graph.backward(loss)
        np.testing.assert_array_equal(used.grad, np.full(3, 4.0))
        np.testing.assert_array_equal(unused.grad, np.zeros(3))


class TestForward:

    def test_matmul_identity(self, rng):
        a = rng.standard_normal((2, 2))
        np.testing.assert_array_equal(apply("matmul", np.eye(2), a).values, a)

    def test_softmax_symmetric(self):
        np.testing.assert_allclose(apply("softmax", np.zeros(2), axis=-1).values, [0.5, 0.5])

    def test_log_softmax_is_stable_for_large_logits(self):
        out = apply("log_softmax", np.array([[1000.0, 0.0, -1000.0]]), axis=-1).values
        assert np.all(np.isfinite(out[:, :2]))
        assert out[0, 0] == pytest.approx(0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_softmax_rows_sum_to_one(self, seed):
        logits = np.random.default_rng(seed).normal(0, 10, size=(7, 13))
        probs = apply("softmax", logits, axis=-1).values
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_log_softmax_is_log_of_softmax(self, seed):
        logits = np.random.default_rng(seed).normal(0, 5, size=(7, 13))
        log_probs = apply("log_softmax", logits, axis=-1).values
        probs = apply("softmax", logits, axis=-1).values
        np.testing.assert_allclose(log_probs, np.log(probs), rtol=0, atol=1e-9)

    def test_layer_norm_of_constant_vector_is_zero(self):
        out = apply("layer_norm", np.full((1, 5), 3.0), np.ones(5), np.zeros(5)).values
        np.testing.assert_array_equal(out, np.zeros((1, 5)))

    def test_causal_mask_blocks_future(self, rng):
        weights = apply("softmax", apply("causal_mask", rng.standard_normal((3, 3))), axis=-1).values
        assert np.all(np.triu(weights, k=1) == 0.0)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0)

    def test_shape_error_names_op_and_dims(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 2\)"):
            apply("matmul", np.zeros((2, 3)), np.zeros((4, 2)))

    def test_unknown_op(self):
        with pytest.raises(ValueError):
            apply("conv3d", np.zeros(2))


class TestGraph:

    def test_backward_twice_raises(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with ComputationGraph() as graph:
            loss = apply("sum", w)
        graph.backward(loss)
        with pytest.raises(GraphError):
            graph.backward(loss)

    def test_non_scalar_loss_raises(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with ComputationGraph() as graph:
            out = apply("scale", w, factor=2.0)
        with pytest.raises(GraphError):
            graph.backward(out)

    def test_no_grad_records_nothing(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with ComputationGraph() as graph:
            with no_grad():
                out = apply("sum", w)
        assert graph.nodes == []
        assert not out.requires_grad

    def test_gradients_accumulate_over_reuse(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        with ComputationGraph() as graph:
            loss = apply("sum", apply("mul", w, w))
        graph.backward(loss)
        np.testing.assert_allclose(w.grad, [4.0])


class TestAdam:

    def test_zero_gradients_leave_parameters_unchanged(self):
        params = {"w": Tensor(np.array([1.0, -2.0]), requires_grad=True)}
        state = AdamState.for_params(params)
        adam_step(params, {"w": np.zeros(2)}, state, lr=0.1)
        np.testing.assert_array_equal(params["w"].values, [1.0, -2.0])

    def test_single_step_matches_hand_computation(self):
        params = {"w": Tensor(np.array([0.5]), requires_grad=True)}
        state = AdamState(step=1, first_moment={"w": np.array([0.2])}, second_moment={"w": np.array([0.04])})
        grad, lr, b1, b2, eps = 0.3, 0.01, 0.9, 0.999, 1e-8
        adam_step(params, {"w": np.array([grad])}, state, lr, b1, b2, eps)

        m = b1 * 0.2 + (1 - b1) * grad
        v = b2 * 0.04 + (1 - b2) * grad ** 2
        m_hat, v_hat = m / (1 - b1 ** 2), v / (1 - b2 ** 2)
        expected = 0.5 - lr * m_hat / (math.sqrt(v_hat) + eps)
        assert state.step == 2
        assert params["w"].values[0] == pytest.approx(expected, rel=1e-12)

    def test_identical_inputs_give_identical_updates(self, rng):
        grads = {"w": rng.standard_normal((3, 3))}
        values = rng.standard_normal((3, 3))
        results = []
        for _ in range(2):
            params = {"w": Tensor(values.copy(), requires_grad=True)}
            adam_step(params, grads, AdamState.for_params(params), lr=0.05)
            results.append(params["w"].values)
        np.testing.assert_array_equal(results[0], results[1])

    def test_non_finite_gradient_aborts_without_update(self):
        params = {"a": Tensor(np.ones(2), requires_grad=True), "b": Tensor(np.ones(2), requires_grad=True)}
        state = AdamState.for_params(params)
        with pytest.raises(DivergenceError):
            adam_step(params, {"a": np.ones(2), "b": np.array([np.nan, 0.0])}, state, lr=0.1)
        np.testing.assert_array_equal(params["a"].values, np.ones(2))
        assert state.step == 0

    def test_mismatched_buffer_raises(self):
        params = {"w": Tensor(np.ones(3), requires_grad=True)}
        state = AdamState(first_moment={"w": np.zeros(2)}, second_moment={"w": np.zeros(2)})
        with pytest.raises(ShapeError):
            adam_step(params, {"w": np.ones(3)}, state, lr=0.1)


class TestClipping:

    def test_clips_to_max_norm_and_returns_original(self):
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}
        norm = clip_grad_norm(grads, 1.0)
        assert norm == pytest.approx(5.0)
        clipped = math.sqrt(float(grads["a"][0] ** 2 + grads["b"][0] ** 2))
        assert clipped == pytest.approx(1.0, rel=1e-9)

    def test_small_gradients_untouched(self):
        grads = {"a": np.array([0.1, 0.2])}
        clip_grad_norm(grads, 1.0)
        np.testing.assert_array_equal(grads["a"], [0.1, 0.2])

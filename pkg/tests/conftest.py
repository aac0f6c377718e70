import numpy as np
import pytest

from src.lm import ModelConfig, build_model
from src.tensor import ComputationGraph, Tensor, apply, no_grad


def numeric_gradient(fn, arrays, index, eps=1e-5):
    """Central finite differences of scalar ``fn(*arrays)`` with respect to ``arrays[index]``."""
    target = arrays[index]
    grad = np.zeros_like(target)
    it = np.nditer(target, flags=['multi_index'])
    for _ in it:
        idx = it.multi_index
        original = target[idx]
        target[idx] = original + eps
        plus = fn(*arrays)
        target[idx] = original - eps
        minus = fn(*arrays)
        target[idx] = original
        grad[idx] = (plus - minus) / (2 * eps)
    return grad


def check_gradients(build, arrays, rtol=1e-4, atol=1e-7):
    """Compare graph gradients of ``sum(build(*tensors) * R)`` against finite differences."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    with no_grad():
        sample_output = build(*[Tensor(a) for a in arrays]).values
    weights = np.random.default_rng(123).standard_normal(sample_output.shape)

    def scalar(*values):
        with no_grad():
            out = build(*[Tensor(v) for v in values]).values
        return float(np.sum(out * weights))

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with ComputationGraph() as graph:
        loss = apply("sum", apply("mul", build(*tensors), Tensor(weights)))
    graph.backward(loss)

    for i, tensor in enumerate(tensors):
        expected = numeric_gradient(scalar, [a.copy() for a in arrays], i)
        actual = tensor.grad if tensor.grad is not None else np.zeros_like(arrays[i])
        np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_config():
    def make(vocab_size=20, **overrides):
        fields = dict(n_layers=2, n_heads=2, d_embed=8, d_hidden=8, d_ffn=16,
                      vocab_size=vocab_size, max_context=16, dropout=0.0)
        fields.update(overrides)
        return ModelConfig(**fields)
    return make


@pytest.fixture
def tiny_model(tiny_config):
    def make(seed=0, dtype=np.float64, **overrides):
        return build_model(tiny_config(**overrides), seed=seed, dtype=dtype)
    return make

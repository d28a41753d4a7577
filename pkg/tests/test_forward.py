import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedunlearn.nn import (
    ArchSpec,
    Dense,
    ModelParams,
    NumericalError,
    ShapeMismatchError,
    forward,
    init_weights,
    mlp,
    param_count,
)


def zero_model(arch) -> ModelParams:
    return ModelParams(arch, np.zeros(param_count(arch), dtype=np.float32))


def test_zero_weights_give_uniform_rows():
    arch = mlp((4, 4, 1), 8, 10)
    x = np.random.default_rng(0).uniform(0, 1, (6, 4, 4, 1))
    probs = forward(zero_model(arch), x)
    assert probs.shape == (6, 10)
    assert np.allclose(probs, 0.1)


def test_constructed_logits_softmax():
    # single pixel -> Dense(2) with weights (0, ln 3), zero bias, input 1.0
    arch = ArchSpec((1, 1, 1), (Dense(2),))
    weights = np.array([0.0, math.log(3.0), 0.0, 0.0], dtype=np.float64)
    probs = forward(ModelParams(arch, weights), np.ones((1, 1, 1, 1)))
    assert probs[0] == pytest.approx([0.25, 0.75], abs=1e-12)


def test_row_count_matches_batch():
    arch = mlp((3, 3, 1), 4, 5)
    model = ModelParams(arch, init_weights(arch, 0))
    for b in (1, 7, 32):
        x = np.random.default_rng(b).uniform(0, 1, (b, 3, 3, 1))
        assert forward(model, x).shape == (b, 5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), batch=st.integers(1, 9))
def test_rows_are_probability_vectors(seed, batch):
    arch = mlp((4, 4, 1), 6, 10)
    rng = np.random.default_rng(seed)
    model = ModelParams(arch, init_weights(arch, seed) + rng.normal(0, 0.5, param_count(arch)).astype(np.float32))
    probs = forward(model, rng.uniform(0, 1, (batch, 4, 4, 1)))
    assert np.all(probs >= 0.0) and np.all(probs <= 1.0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_shape_mismatch_rejected():
    arch = mlp((4, 4, 1), 4, 3)
    model = zero_model(arch)
    with pytest.raises(ShapeMismatchError):
        forward(model, np.zeros((2, 5, 4, 1)))
    with pytest.raises(ShapeMismatchError):
        forward(model, np.zeros((4, 4, 1)))


def test_overflow_names_the_layer():
    arch = ArchSpec((1, 1, 2), (Dense(2),))
    huge = np.finfo(np.float32).max
    weights = np.array([huge, huge, huge, huge, 0.0, 0.0], dtype=np.float32)
    with np.errstate(over="ignore"), pytest.raises(NumericalError, match="layer 0"):
        forward(ModelParams(arch, weights), np.ones((1, 1, 1, 2), dtype=np.float32))

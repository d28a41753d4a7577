"""Analytic gradients against a central finite-difference oracle, plus
the closed-form loss anchors."""

import math

import numpy as np
import pytest

from fedunlearn.nn import (
    ArchSpec,
    Conv2D,
    Dense,
    MaxPool,
    ModelParams,
    init_weights,
    loss_and_grad,
    mlp,
    param_count,
)

# tiny architectures covering the dense, conv, and pooling backward paths
TINY_ARCHS = [
    mlp((3, 3, 1), 8, 4),                                                   # 9*8+8+8*4+4 = 116
    ArchSpec((5, 5, 1), (Conv2D(3, (3, 3), padding="valid"), Dense(4))),    # 30 + 112 = 142
    ArchSpec(
        (6, 6, 1),
        (Conv2D(2, (3, 3), padding="same"), MaxPool(), Dense(4, activation="relu"), Dense(3)),
    ),                                                                      # 20 + 76 + 15 = 111
]


def finite_difference_grad(model: ModelParams, x, y, eps=1e-5) -> np.ndarray:
    """Independent oracle: central differences on the scalar loss."""
    base = model.weights.astype(np.float64)
    fd = np.zeros_like(base)
    for i in range(base.shape[0]):
        bumped = base.copy()
        bumped[i] += eps
        up, _ = loss_and_grad(ModelParams(model.arch, bumped), x, y)
        bumped[i] -= 2 * eps
        down, _ = loss_and_grad(ModelParams(model.arch, bumped), x, y)
        fd[i] = (up - down) / (2 * eps)
    return fd


@pytest.mark.parametrize("arch", TINY_ARCHS, ids=["mlp", "conv-valid", "conv-pool"])
def test_gradient_matches_finite_differences(arch):
    assert param_count(arch) <= 200
    rng = np.random.default_rng(7)
    weights = init_weights(arch, 7, dtype=np.float64) + rng.normal(0, 0.05, param_count(arch))
    model = ModelParams(arch, weights)
    x = rng.uniform(0, 1, (5,) + arch.input_shape)
    y = rng.integers(0, arch.num_classes, 5)
    _, grad = loss_and_grad(model, x, y)
    fd = finite_difference_grad(model, x, y)
    scale = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-8)
    assert np.max(np.abs(grad - fd) / scale) <= 1e-4


def test_uniform_prediction_loss_is_log_k():
    arch = mlp((4, 4, 1), 6, 10)
    model = ModelParams(arch, np.zeros(param_count(arch), dtype=np.float32))
    rng = np.random.default_rng(1)
    loss, _ = loss_and_grad(model, rng.uniform(0, 1, (8, 4, 4, 1)), rng.integers(0, 10, 8))
    assert loss == pytest.approx(math.log(10.0), abs=1e-12)


def test_confident_correct_prediction_loss_vanishes():
    # bias gives class 0 a logit margin of 20 -> loss ~ e^-20
    arch = ArchSpec((1, 1, 1), (Dense(2),))
    weights = np.array([0.0, 0.0, 20.0, 0.0], dtype=np.float64)
    model = ModelParams(arch, weights)
    loss, _ = loss_and_grad(model, np.zeros((3, 1, 1, 1)), np.zeros(3, dtype=np.int64))
    assert 0.0 < loss < 1e-6


def test_loss_is_nonnegative_and_deterministic():
    arch = TINY_ARCHS[2]
    rng = np.random.default_rng(3)
    model = ModelParams(arch, init_weights(arch, 3))
    x = rng.uniform(0, 1, (6,) + arch.input_shape)
    y = rng.integers(0, arch.num_classes, 6)
    loss1, grad1 = loss_and_grad(model, x, y)
    loss2, grad2 = loss_and_grad(model, x, y)
    assert loss1 >= 0.0
    assert loss1 == loss2
    assert np.array_equal(grad1, grad2)


def test_empty_batch_rejected():
    arch = mlp((2, 2, 1), 3, 4)
    model = ModelParams(arch, np.zeros(param_count(arch), dtype=np.float32))
    with pytest.raises(ValueError, match="non-empty"):
        loss_and_grad(model, np.zeros((0, 2, 2, 1)), np.zeros(0, dtype=np.int64))


def test_out_of_range_labels_rejected():
    arch = mlp((2, 2, 1), 3, 4)
    model = ModelParams(arch, np.zeros(param_count(arch), dtype=np.float32))
    with pytest.raises(ValueError, match=r"\[0, 4\)"):
        loss_and_grad(model, np.zeros((2, 2, 2, 1)), np.array([0, 4]))

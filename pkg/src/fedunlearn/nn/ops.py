"""SGD with momentum, gradient clipping, and the l2-ball projection.

All three are pure: state goes in and comes out, nothing is mutated.
Norms and update arithmetic run in float64 regardless of the weight
dtype; updated weights are cast back to the model's dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ModelParams, ShapeMismatchError


@dataclass
class OptimizerState:
    """Momentum velocity plus the step hyperparameters."""

    velocity: np.ndarray
    learning_rate: float
    momentum: float = 0.9

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")

    @classmethod
    def zeros(cls, dim: int, learning_rate: float, momentum: float = 0.9) -> "OptimizerState":
        return cls(np.zeros(dim, dtype=np.float64), learning_rate, momentum)


def sgd_step(model: ModelParams, grad: np.ndarray, state: OptimizerState,
             direction: str = "descent") -> tuple[ModelParams, OptimizerState]:
    """One momentum step: v <- beta*v + g, then w -+ lr*v.

    `direction` is "descent" (minimize) or "ascent" (maximize); the two are
    mirror images about the starting weights for identical inputs.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != (model.dim,) or state.velocity.shape != (model.dim,):
        raise ShapeMismatchError(
            f"gradient {grad.shape} / velocity {state.velocity.shape} do not match model dim {model.dim}"
        )
    if direction not in ("descent", "ascent"):
        raise ValueError(f"direction must be 'descent' or 'ascent', got {direction!r}")
    velocity = state.momentum * state.velocity + grad
    sign = -1.0 if direction == "descent" else 1.0
    new_weights = model.weights.astype(np.float64) + sign * state.learning_rate * velocity
    new_model = ModelParams(model.arch, new_weights.astype(model.dtype))
    return new_model, OptimizerState(velocity, state.learning_rate, state.momentum)


def clip_grad(grad: np.ndarray, radius: float) -> np.ndarray:
    """Rescale `grad` onto the l2 ball of the given radius if it is outside.

    Identity inside the ball; never increases the norm. The zero vector
    passes through untouched.
    """
    if radius <= 0.0:
        raise ValueError(f"clip radius must be positive, got {radius}")
    grad = np.asarray(grad)
    norm = float(np.linalg.norm(grad.astype(np.float64, copy=False)))
    if norm <= radius:
        return grad
    return (grad * (radius / norm)).astype(grad.dtype, copy=False)


def project_l2(w: np.ndarray, center: np.ndarray, delta: float) -> np.ndarray:
    """Project `w` onto the l2 ball of radius `delta` around `center`.

    Idempotent, and non-expansive toward the center:
    ||P(w) - center|| <= min(||w - center||, delta).
    """
    w = np.asarray(w)
    center = np.asarray(center)
    if w.shape != center.shape:
        raise ShapeMismatchError(f"point {w.shape} and center {center.shape} differ in shape")
    if delta < 0.0:
        raise ValueError(f"ball radius must be non-negative, got {delta}")
    diff = w.astype(np.float64) - center.astype(np.float64)
    norm = float(np.linalg.norm(diff))
    if norm <= delta:
        return w
    projected = center.astype(np.float64) + diff * (delta / norm)
    return projected.astype(w.dtype, copy=False)


def project_model(model: ModelParams, center: ModelParams, delta: float) -> ModelParams:
    projected = project_l2(model.weights, center.weights, delta)
    if projected is model.weights:
        return model
    return ModelParams(model.arch, projected)

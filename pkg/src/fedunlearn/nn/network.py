"""Forward pass, cross-entropy loss, and hand-derived backpropagation.

Weights and activations are kept in the dtype of the model's flat weight
vector (float32 in normal training); the softmax, the loss, and all
gradient accumulation run in float64. There is no autodiff: each layer
type carries its own backward rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .arch import ArchSpec, Conv2D, Dense, MaxPool, param_count, param_layout


class ShapeMismatchError(ValueError):
    """Input/weight dimensions disagree."""


class NumericalError(FloatingPointError):
    """A non-finite value appeared where the math guarantees finite ones."""


@dataclass
class ModelParams:
    """An architecture plus the flat vector of all its parameters."""

    arch: ArchSpec
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        expected = param_count(self.arch)
        if self.weights.ndim != 1 or self.weights.shape[0] != expected:
            raise ShapeMismatchError(
                f"weight vector has length {self.weights.shape}, architecture needs {expected}"
            )
        if not np.all(np.isfinite(self.weights)):
            raise NumericalError("weight vector contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def dtype(self):
        return self.weights.dtype

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.weights.copy())

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.arch, self.weights.astype(dtype))


def _check_batch(arch: ArchSpec, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features)
    if features.ndim == 3:  # single image without channel axis is not accepted
        raise ShapeMismatchError(f"features must be (batch, H, W, C), got {features.shape}")
    if features.ndim != 4 or tuple(features.shape[1:]) != tuple(arch.input_shape):
        raise ShapeMismatchError(
            f"features shaped {features.shape} do not match input shape {arch.input_shape}"
        )
    return features


def _conv_pad(layer: Conv2D) -> tuple[int, int, int, int]:
    if layer.padding == "valid":
        return 0, 0, 0, 0
    kh, kw = layer.kernel
    return (kh - 1) // 2, kh // 2, (kw - 1) // 2, kw // 2


def _im2col(x: np.ndarray, layer: Conv2D) -> tuple[np.ndarray, int, int]:
    """Patch matrix of shape (B*oh*ow, kh*kw*C) for a stride-1 convolution."""
    kh, kw = layer.kernel
    pt, pb, pl, pr = _conv_pad(layer)
    if pt or pb or pl or pr:
        x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (B, oh, ow, C, kh, kw)
    b, oh, ow = windows.shape[:3]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(b * oh * ow, kh * kw * x.shape[3])
    return cols, oh, ow


def _col2im(dcols: np.ndarray, layer: Conv2D, in_shape: tuple[int, int, int, int],
            oh: int, ow: int) -> np.ndarray:
    """Scatter patch-space gradients back onto the (padded) input."""
    b, h, w, c = in_shape
    kh, kw = layer.kernel
    pt, pb, pl, pr = _conv_pad(layer)
    dwin = dcols.reshape(b, oh, ow, kh, kw, c)
    dx = np.zeros((b, h + pt + pb, w + pl + pr, c), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, i : i + oh, j : j + ow, :] += dwin[:, :, :, i, j, :]
    return dx[:, pt : pt + h, pl : pl + w, :]


def _pool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
    """2x2/stride-2 max pool. Returns output, per-window argmax, input shape."""
    b, h, w, c = x.shape
    oh, ow = h // 2, w // 2
    cropped = x[:, : 2 * oh, : 2 * ow, :]
    windows = cropped.reshape(b, oh, 2, ow, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, oh, ow, c, 4)
    idx = windows.argmax(axis=-1)  # ties resolve to the lowest window offset
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int8), x.shape


def _pool_backward(delta: np.ndarray, idx: np.ndarray, in_shape: tuple[int, ...]) -> np.ndarray:
    b, h, w, c = in_shape
    oh, ow = idx.shape[1], idx.shape[2]
    dwin = np.zeros((b, oh, ow, c, 4), dtype=delta.dtype)
    np.put_along_axis(dwin, idx[..., None].astype(np.intp), delta[..., None], axis=-1)
    dcrop = dwin.reshape(b, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, 2 * oh, 2 * ow, c)
    if 2 * oh == h and 2 * ow == w:
        return dcrop
    dx = np.zeros(in_shape, dtype=delta.dtype)
    dx[:, : 2 * oh, : 2 * ow, :] = dcrop
    return dx


def _stable_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64) - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _run_forward(model: ModelParams, features: np.ndarray, keep_cache: bool,
                 check_finite: bool):
    """Shared forward pass. The cache holds, per layer, whatever that
    layer's backward rule needs (inputs, patch matrices, pool argmaxes,
    pre-activation signs)."""
    arch = model.arch
    dtype = model.weights.dtype
    x = _check_batch(arch, features).astype(dtype, copy=False)
    slots = {slot.layer_index: slot for slot in param_layout(arch)}
    cache: list | None = [] if keep_cache else None

    for idx, layer in enumerate(arch.layers):
        if isinstance(layer, Conv2D):
            slot = slots[idx]
            wmat = slot.weight_view(model.weights).reshape(-1, layer.out_channels)
            bias = slot.bias_view(model.weights)
            in_shape = x.shape
            cols, oh, ow = _im2col(x, layer)
            z = cols @ wmat + bias
            out = np.maximum(z, 0.0) if layer.activation == "relu" else z
            if keep_cache:
                cache.append(("conv", cols, in_shape, oh, ow, z > 0 if layer.activation == "relu" else None))
            x = out.reshape(in_shape[0], oh, ow, layer.out_channels)
        elif isinstance(layer, MaxPool):
            x, pool_idx, in_shape = _pool_forward(x)
            if keep_cache:
                cache.append(("pool", pool_idx, in_shape))
        elif isinstance(layer, Dense):
            unflattened = x.shape if x.ndim == 4 else None
            if x.ndim == 4:
                x = x.reshape(x.shape[0], -1)
            slot = slots[idx]
            w = slot.weight_view(model.weights)
            bias = slot.bias_view(model.weights)
            if x.shape[1] != w.shape[0]:
                raise ShapeMismatchError(
                    f"layer {idx}: dense input width {x.shape[1]} != weight fan-in {w.shape[0]}"
                )
            z = x @ w + bias
            out = np.maximum(z, 0.0) if layer.activation == "relu" else z
            if keep_cache:
                cache.append(("dense", x, unflattened, z > 0 if layer.activation == "relu" else None))
            x = out
        if check_finite and not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite activation after layer {idx} ({type(layer).__name__})")

    return x, cache, slots


def forward(model: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities, one row per example. Rows sum to 1."""
    logits, _, _ = _run_forward(model, features, keep_cache=False, check_finite=True)
    return _stable_softmax(logits)


def loss_and_grad(model: ModelParams, features: np.ndarray,
                  labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient in the flat
    parameter vector (float64)."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] == 0:
        raise ValueError("labels must be a non-empty 1-d array of class indices")
    if np.asarray(features).shape[0] != labels.shape[0]:
        raise ShapeMismatchError(
            f"batch has {np.asarray(features).shape[0]} examples but {labels.shape[0]} labels"
        )
    arch = model.arch
    k = arch.num_classes
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")

    logits, cache, slots = _run_forward(model, features, keep_cache=True, check_finite=False)
    probs = _stable_softmax(logits)
    n = labels.shape[0]
    picked = probs[np.arange(n), labels]
    # log of the exact softmax row; clamped only against a hard zero underflow
    loss = float(-np.log(np.maximum(picked, np.finfo(np.float64).tiny)).mean())
    if not np.isfinite(loss):
        raise NumericalError("loss is non-finite")

    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n  # float64 from here on down

    grad = np.zeros(model.dim, dtype=np.float64)
    for idx in range(len(arch.layers) - 1, -1, -1):
        layer = arch.layers[idx]
        entry = cache[idx]
        if isinstance(layer, Dense):
            _, x, unflattened, relu_mask = entry
            if relu_mask is not None:
                delta = delta * relu_mask
            slot = slots[idx]
            gw = x.astype(np.float64).T @ delta
            gb = delta.sum(axis=0)
            slot.weight_view(grad)[...] = gw
            slot.bias_view(grad)[...] = gb
            if idx > 0:
                w = slot.weight_view(model.weights)
                delta = delta @ w.astype(np.float64).T
                if unflattened is not None:
                    delta = delta.reshape(unflattened)
        elif isinstance(layer, MaxPool):
            _, pool_idx, in_shape = entry
            delta = _pool_backward(delta, pool_idx, in_shape)
        elif isinstance(layer, Conv2D):
            _, cols, in_shape, oh, ow, relu_mask = entry
            dmat = delta.reshape(-1, layer.out_channels)
            if relu_mask is not None:
                dmat = dmat * relu_mask
            slot = slots[idx]
            gw = cols.astype(np.float64).T @ dmat
            gb = dmat.sum(axis=0)
            slot.weight_view(grad)[...] = gw.reshape(slot.w_shape)
            slot.bias_view(grad)[...] = gb
            if idx > 0:
                wmat = slot.weight_view(model.weights).reshape(-1, layer.out_channels)
                dcols = dmat @ wmat.astype(np.float64).T
                delta = _col2im(dcols, layer, in_shape, oh, ow)
    return loss, grad


def evaluate_accuracy(model: ModelParams, features: np.ndarray, labels: np.ndarray,
                      batch_size: int = 512) -> float:
    """Fraction of examples whose argmax class matches the label.

    Argmax ties break toward the lowest class index. Evaluation is batched
    but the result does not depend on the batch size.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    correct = 0
    for start in range(0, n, batch_size):
        chunk = features[start : start + batch_size]
        logits, _, _ = _run_forward(model, chunk, keep_cache=False, check_finite=True)
        correct += int((logits.argmax(axis=1) == labels[start : start + batch_size]).sum())
    return correct / n


def predict_classes(model: ModelParams, features: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Argmax class per example (ties toward the lowest index)."""
    out = []
    for start in range(0, features.shape[0], batch_size):
        logits, _, _ = _run_forward(model, features[start : start + batch_size],
                                    keep_cache=False, check_finite=True)
        out.append(logits.argmax(axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

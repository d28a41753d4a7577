"""Client erasure by constrained loss maximization.

The target client rebuilds the leave-one-out average of the other
clients' last local models from quantities it already holds (the final
global model and its own last local model), sizes an l2 ball around that
reference, and runs projected gradient ascent on its own empirical loss
inside the ball. Early stopping keeps the iterate from degenerating into
an arbitrary model: the walk ends as soon as accuracy on the client's
validation split drops below a threshold.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import ClientDataset
from .federation import Evaluator, FederationConfig, RoundState, posttrain
from .metrics import MetricsRecord
from .nn import (
    ModelParams,
    OptimizerState,
    clip_grad,
    evaluate_accuracy,
    init_weights,
    loss_and_grad,
    project_model,
    sgd_step,
)
from .seeding import PHASE_UNLEARN, child_seed

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnlearnConfig:
    """Hyperparameters of the projected-ascent procedure."""

    learning_rate: float = 0.01
    batch_size: int = 1024
    epochs: int = 5
    momentum: float = 0.9
    early_stop_threshold: float = 0.12  # absolute validation accuracy
    clip_radius: float = 5.0
    delta: float | None = None  # None: one third of the mean distance to random models
    delta_models: int = 10
    validate_clean_only: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.early_stop_threshold <= 1.0:
            raise ValueError(
                f"early-stop threshold must lie in [0, 1], got {self.early_stop_threshold}"
            )
        if self.learning_rate <= 0 or self.clip_radius <= 0 or self.batch_size < 1:
            raise ValueError("learning rate, clip radius, and batch size must be positive")
        if self.epochs < 1:
            raise ValueError(f"need at least 1 epoch, got {self.epochs}")
        if self.delta is not None and self.delta <= 0:
            raise ValueError(f"explicit ball radius must be positive, got {self.delta}")
        if self.delta_models < 1:
            raise ValueError(f"need at least 1 random model for the radius, got {self.delta_models}")


@dataclass
class UnlearnOutcome:
    """What the ascent produced and why it stopped."""

    model: ModelParams
    stop_reason: str  # "early-stop" | "epochs-exhausted"
    steps: int
    final_val_accuracy: float
    distance_to_reference: float
    delta: float


def compute_reference(global_model: ModelParams, target_local: ModelParams,
                      n_clients: int) -> ModelParams:
    """Leave-one-out average of the other clients' last local models,
    reconstructed as (N * global - target_local) / (N - 1)."""
    if n_clients < 2:
        raise ValueError(f"need at least 2 clients to form a reference model, got {n_clients}")
    if global_model.dim != target_local.dim:
        raise ValueError("global and local models disagree on parameter dimension")
    ref = (n_clients * global_model.weights.astype(np.float64)
           - target_local.weights.astype(np.float64)) / (n_clients - 1)
    return ModelParams(global_model.arch, ref.astype(global_model.dtype))


def compute_delta(reference: ModelParams, count: int = 10, seed=0,
                  sample_fn: Callable[[int], np.ndarray] | None = None) -> float:
    """Ball radius: one third of the mean l2 distance between the reference
    and `count` freshly initialized random models.

    `sample_fn(i)` overrides the default fan-in initialization (used by
    tests to pin distances).
    """
    if count < 1:
        raise ValueError(f"need at least 1 random model, got {count}")
    seq = np.random.SeedSequence(entropy=int(seed)) if isinstance(seed, int) else seed
    children = seq.spawn(count)
    ref64 = reference.weights.astype(np.float64)
    total = 0.0
    for i in range(count):
        if sample_fn is not None:
            rand = np.asarray(sample_fn(i), dtype=np.float64)
        else:
            rand = init_weights(reference.arch, children[i], dtype=reference.dtype).astype(np.float64)
        total += float(np.linalg.norm(ref64 - rand))
    delta = total / count / 3.0
    if delta <= 0.0:
        raise ValueError("degenerate ball radius 0; reference equals every random model")
    return delta


def _validation_split(target: ClientDataset, clean_only: bool):
    val = target.val
    if len(val) == 0:
        raise ValueError("target client has an empty validation split")
    if not clean_only:
        return val.features, val.labels
    keep = np.flatnonzero(~val.poisoned)
    if keep.shape[0] == 0:
        raise ValueError("validation split has no clean examples to validate against")
    return val.features[keep], val.labels[keep]


def unlearn_pga(target: ClientDataset, start: ModelParams, reference: ModelParams,
                config: UnlearnConfig) -> UnlearnOutcome:
    """Projected gradient ascent on the target client's empirical loss.

    Per mini-batch: gradient on the batch, l2-clip, momentum ascent step,
    projection onto the delta ball around the reference; then the
    validation check. The loss is the plain cross-entropy over the
    client's train split as stored (poisoned labels included), and by
    default validation also uses labels as stored.
    """
    if len(target.train) == 0:
        raise ValueError("target client has an empty train split")
    val_features, val_labels = _validation_split(target, config.validate_clean_only)
    if start.dim != reference.dim:
        raise ValueError("start and reference models disagree on parameter dimension")

    delta = config.delta
    if delta is None:
        delta = compute_delta(reference, config.delta_models,
                              child_seed(config.seed, PHASE_UNLEARN, 0))
    log.info("unlearning inside a ball of radius %.4f around the reference", delta)

    model = start
    state = OptimizerState.zeros(start.dim, config.learning_rate, config.momentum)
    features, labels = target.train.features, target.train.labels
    rng = np.random.default_rng(child_seed(config.seed, PHASE_UNLEARN, 1))
    steps = 0
    stop_reason = "epochs-exhausted"
    val_acc = evaluate_accuracy(model, val_features, val_labels)

    for _ in range(config.epochs):
        perm = rng.permutation(len(target.train))
        for s in range(0, perm.shape[0], config.batch_size):
            idx = perm[s : s + config.batch_size]
            loss, grad = loss_and_grad(model, features[idx], labels[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite ascent loss at step {steps + 1}")
            grad = clip_grad(grad, config.clip_radius)
            model, state = sgd_step(model, grad, state, direction="ascent")
            model = project_model(model, reference, delta)
            steps += 1
            val_acc = evaluate_accuracy(model, val_features, val_labels)
            if val_acc < config.early_stop_threshold:
                stop_reason = "early-stop"
                break
        if stop_reason == "early-stop":
            break

    distance = float(np.linalg.norm(model.weights.astype(np.float64)
                                    - reference.weights.astype(np.float64)))
    return UnlearnOutcome(
        model=model,
        stop_reason=stop_reason,
        steps=steps,
        final_val_accuracy=float(val_acc),
        distance_to_reference=distance,
        delta=float(delta),
    )


@dataclass
class ErasureResult:
    """Everything produced while erasing one client."""

    reference: ModelParams
    outcome: UnlearnOutcome
    global_model: ModelParams
    records: list[MetricsRecord]


def erase_client(state: RoundState, clients: Sequence[ClientDataset], target_id: int,
                 unlearn_config: UnlearnConfig, federation_config: FederationConfig,
                 evaluator: Evaluator | None = None) -> ErasureResult:
    """Full erasure pipeline: reference model, ball radius, projected
    ascent on the target, then light federated post-training over the
    remaining clients. With zero post-training rounds the returned global
    model is the unlearned local model itself.

    The record trail holds the unlearned local model's accuracies at
    posttrain round 0 and one record per recovery round after it.
    """
    if not 0 <= target_id < len(clients):
        raise ValueError(f"target id {target_id} outside [0, {len(clients)})")
    n = len(clients)
    reference = compute_reference(state.global_model, state.local_models[target_id], n)
    outcome = unlearn_pga(clients[target_id], state.local_models[target_id],
                          reference, unlearn_config)

    records: list[MetricsRecord] = []
    if evaluator is not None:
        clean, backdoor = evaluator(outcome.model)
        records.append(MetricsRecord("posttrain", 0, clean, backdoor, outcome.steps, 0.0))

    remaining = [c for c in clients if c.client_id != target_id]
    model = outcome.model
    if federation_config.posttrain_rounds > 0:
        model, post_records = posttrain(
            outcome.model,
            remaining,
            rounds=federation_config.posttrain_rounds,
            updates_per_round=federation_config.posttrain_updates,
            batch_size=federation_config.batch_size,
            learning_rate=federation_config.learning_rate,
            momentum=federation_config.momentum,
            seed=federation_config.seed,
            weighting=federation_config.weighting,
            evaluator=evaluator,
        )
        records.extend(post_records)
    return ErasureResult(reference=reference, outcome=outcome, global_model=model, records=records)

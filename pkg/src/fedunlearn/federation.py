"""Simulated federated learning: local client training, weighted model
averaging, full multi-round runs, the retrain-from-scratch baseline, and
the light post-training rounds used after erasure.

Clients are plain function calls over their own data; a round is
broadcast -> local training (sequential or thread-parallel, numerically
identical) -> aggregation. Momentum velocity is reset at the start of
every local-training call, so FedAvg only ever moves weights.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import ClientDataset
from .metrics import MetricsRecord
from .nn import ModelParams, OptimizerState, loss_and_grad, sgd_step
from .seeding import PHASE_POSTTRAIN, PHASE_RETRAIN, PHASE_TRAIN, child_seed

# An evaluator maps a model to (clean accuracy, backdoor accuracy).
Evaluator = Callable[[ModelParams], tuple[float, float]]


@dataclass(frozen=True)
class FederationConfig:
    """Knobs of the simulated federation."""

    n_clients: int = 5
    rounds: int = 20
    target_client: int = 0
    local_epochs: int = 1
    batch_size: int = 128
    learning_rate: float = 0.01
    momentum: float = 0.9
    weighting: str = "equal"  # or "proportional" (to client example counts)
    parallel: bool = False
    posttrain_rounds: int = 1
    posttrain_updates: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.n_clients < 2:
            raise ValueError(f"need at least 2 clients, got {self.n_clients}")
        if self.rounds < 1:
            raise ValueError(f"need at least 1 round, got {self.rounds}")
        if not 0 <= self.target_client < self.n_clients:
            raise ValueError(
                f"target client {self.target_client} outside [0, {self.n_clients})"
            )
        if self.learning_rate <= 0 or self.batch_size < 1 or self.local_epochs < 0:
            raise ValueError("learning rate, batch size, and epochs must be positive")
        if self.weighting not in ("equal", "proportional"):
            raise ValueError(f"weighting must be 'equal' or 'proportional', got {self.weighting!r}")
        if self.posttrain_rounds < 0 or self.posttrain_updates < 1:
            raise ValueError("post-training rounds must be >= 0 and updates >= 1")


@dataclass
class RoundState:
    """Where a federation run ended: the global model plus every client's
    local model from the final round (needed to build the reference model
    during erasure)."""

    round_index: int
    global_model: ModelParams
    local_models: list[ModelParams]
    client_sizes: list[int]


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start : start + batch_size]


def local_train(client: ClientDataset, start: ModelParams, epochs: int, batch_size: int,
                learning_rate: float, momentum: float, seed) -> ModelParams:
    """Mini-batch SGD descent over the client's train split.

    Runs `epochs` full seeded-shuffled passes (final partial batch
    included) starting from a zero momentum velocity. epochs=0 returns the
    broadcast model untouched.
    """
    if epochs and len(client.train) == 0:
        raise ValueError(f"client {client.client_id} has an empty train split")
    model = start
    if epochs == 0:
        return model
    state = OptimizerState.zeros(start.dim, learning_rate, momentum)
    rng = np.random.default_rng(seed)
    features, labels = client.train.features, client.train.labels
    for _ in range(epochs):
        for idx in _batches(len(client.train), batch_size, rng):
            _, grad = loss_and_grad(model, features[idx], labels[idx])
            model, state = sgd_step(model, grad, state, direction="descent")
    return model


def aggregation_weights(counts: Sequence[int], mode: str) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    if mode == "equal":
        return np.full(counts.shape[0], 1.0 / counts.shape[0])
    if mode == "proportional":
        total = counts.sum()
        if total <= 0:
            raise ValueError("proportional weighting needs a positive total example count")
        return counts / total
    raise ValueError(f"unknown weighting mode {mode!r}")


def fedavg(models: Sequence[ModelParams], counts: Sequence[int], mode: str = "equal") -> ModelParams:
    """Coordinate-wise weighted mean of the local models.

    Accumulates in float64 and casts back to the models' dtype; weights
    sum to 1 exactly up to float64 rounding.
    """
    if not models:
        raise ValueError("cannot aggregate an empty model list")
    if len(models) != len(counts):
        raise ValueError(f"{len(models)} models but {len(counts)} counts")
    dim = models[0].dim
    for m in models[1:]:
        if m.dim != dim:
            raise ValueError("models disagree on parameter dimension")
    weights = aggregation_weights(counts, mode)
    acc = np.zeros(dim, dtype=np.float64)
    for w, m in zip(weights, models):
        acc += w * m.weights.astype(np.float64)
    return ModelParams(models[0].arch, acc.astype(models[0].dtype))


def _run_clients(clients: Sequence[ClientDataset], model: ModelParams, cfg: FederationConfig,
                 phase_code: int, round_index: int) -> list[ModelParams]:
    def one(client: ClientDataset) -> ModelParams:
        seed = child_seed(cfg.seed, phase_code, round_index, client.client_id)
        return local_train(client, model, cfg.local_epochs, cfg.batch_size,
                           cfg.learning_rate, cfg.momentum, seed)

    if cfg.parallel:
        with ThreadPoolExecutor(max_workers=min(8, len(clients))) as pool:
            return list(pool.map(one, clients))
    return [one(c) for c in clients]


def _updates_per_round(clients: Sequence[ClientDataset], cfg: FederationConfig) -> int:
    per_client = [
        cfg.local_epochs * -(-len(c.train) // cfg.batch_size)  # ceil division
        for c in clients
    ]
    return sum(per_client)


def _train_rounds(clients: Sequence[ClientDataset], model: ModelParams, cfg: FederationConfig,
                  rounds: int, phase: str, phase_code: int,
                  evaluator: Evaluator | None) -> tuple[RoundState, list[MetricsRecord]]:
    counts = [c.n_examples for c in clients]
    records: list[MetricsRecord] = []
    locals_: list[ModelParams] = []
    updates = 0
    for t in range(1, rounds + 1):
        tic = time.perf_counter()
        locals_ = _run_clients(clients, model, cfg, phase_code, t)
        model = fedavg(locals_, counts, cfg.weighting)
        updates += _updates_per_round(clients, cfg)
        if evaluator is not None:
            clean, backdoor = evaluator(model)
            records.append(MetricsRecord(phase, t, clean, backdoor, updates,
                                         time.perf_counter() - tic))
    state = RoundState(round_index=rounds, global_model=model,
                       local_models=locals_, client_sizes=counts)
    return state, records


def train_federation(config: FederationConfig, clients: Sequence[ClientDataset],
                     initial_model: ModelParams,
                     evaluator: Evaluator | None = None) -> tuple[RoundState, list[MetricsRecord]]:
    """Run the full federation for `config.rounds` rounds.

    The returned state keeps the final round's local models; the metrics
    list holds one record per round when an evaluator is supplied.
    """
    if len(clients) != config.n_clients:
        raise ValueError(f"config says {config.n_clients} clients, got {len(clients)}")
    return _train_rounds(clients, initial_model, config, config.rounds,
                         "train", PHASE_TRAIN, evaluator)


def retrain_baseline(config: FederationConfig, remaining_clients: Sequence[ClientDataset],
                     initial_model: ModelParams,
                     evaluator: Evaluator | None = None) -> tuple[RoundState, list[MetricsRecord]]:
    """Train from scratch without the target client.

    `initial_model` must be a fresh random initialization (the runner
    derives its seed from the master seed); aggregation weights are
    renormalized over the remaining clients. A single remaining client
    degenerates to centralized training.
    """
    if len(remaining_clients) < 1:
        raise ValueError("retraining needs at least one remaining client")
    return _train_rounds(remaining_clients, initial_model, config, config.rounds,
                         "retrain", PHASE_RETRAIN, evaluator)


def posttrain(start: ModelParams, remaining_clients: Sequence[ClientDataset],
              rounds: int, updates_per_round: int, batch_size: int, learning_rate: float,
              momentum: float, seed: int, weighting: str = "equal",
              evaluator: Evaluator | None = None) -> tuple[ModelParams, list[MetricsRecord]]:
    """Computationally light recovery rounds after unlearning.

    Each round, every remaining client takes exactly `updates_per_round`
    mini-batch descent steps from the broadcast model (reshuffling and
    wrapping around if its shard has fewer batches), then the results are
    averaged. Zero rounds returns `start` unchanged.
    """
    if len(remaining_clients) < 1:
        raise ValueError("post-training needs at least one remaining client")
    if updates_per_round < 1:
        raise ValueError(f"updates per round must be >= 1, got {updates_per_round}")
    counts = [c.n_examples for c in remaining_clients]
    model = start
    records: list[MetricsRecord] = []
    cumulative = 0
    for t in range(1, rounds + 1):
        tic = time.perf_counter()
        locals_ = []
        for client in remaining_clients:
            rng = np.random.default_rng(child_seed(seed, PHASE_POSTTRAIN, t, client.client_id))
            local = model
            state = OptimizerState.zeros(model.dim, learning_rate, momentum)
            features, labels = client.train.features, client.train.labels
            steps = 0
            while steps < updates_per_round:
                for idx in _batches(len(client.train), batch_size, rng):
                    _, grad = loss_and_grad(local, features[idx], labels[idx])
                    local, state = sgd_step(local, grad, state, direction="descent")
                    steps += 1
                    if steps >= updates_per_round:
                        break
            locals_.append(local)
        model = fedavg(locals_, counts, weighting)
        cumulative += updates_per_round * len(remaining_clients)
        if evaluator is not None:
            clean, backdoor = evaluator(model)
            records.append(MetricsRecord("posttrain", t, clean, backdoor, cumulative,
                                         time.perf_counter() - tic))
    return model, records

"""Datasets, client partitioning, train/validation splitting, and the
synthetic fallback corpus used when MNIST files are not on disk."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    """Images (n, H, W, C) with values in [0, 1], labels, and poison flags."""

    features: np.ndarray
    labels: np.ndarray
    poisoned: np.ndarray
    origin: str = "train"
    num_classes: int = 10

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.poisoned = np.asarray(self.poisoned, dtype=bool)
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.poisoned.shape != (n,):
            raise ValueError(
                f"field lengths disagree: {n} features, {self.labels.shape[0]} labels, "
                f"{self.poisoned.shape[0]} poison flags"
            )
        if self.features.ndim != 4:
            raise ValueError(f"features must be (n, H, W, C), got shape {self.features.shape}")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.features.shape[1:])

    def subset(self, indices: np.ndarray, origin: str | None = None) -> "Dataset":
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            poisoned=self.poisoned[indices],
            origin=origin if origin is not None else self.origin,
            num_classes=self.num_classes,
        )

    @classmethod
    def empty_like(cls, other: "Dataset") -> "Dataset":
        return other.subset(np.zeros(0, dtype=np.intp))


def concat(parts: list[Dataset]) -> Dataset:
    if not parts:
        raise ValueError("nothing to concatenate")
    return Dataset(
        features=np.concatenate([p.features for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        poisoned=np.concatenate([p.poisoned for p in parts]),
        origin=parts[0].origin,
        num_classes=parts[0].num_classes,
    )


@dataclass
class ClientDataset:
    """One client's shard, split into train and validation parts."""

    client_id: int
    train: Dataset
    val: Dataset

    @property
    def n_examples(self) -> int:
        return len(self.train) + len(self.val)

    def all_examples(self) -> Dataset:
        if len(self.val) == 0:
            return self.train
        return concat([self.train, self.val])


def partition(dataset: Dataset, n_clients: int, seed) -> list[ClientDataset]:
    """Shuffle by seed and split into `n_clients` equal shards.

    Shard size is floor(n / n_clients); any remainder examples are dropped
    (and logged) so all clients hold exactly the same amount of data.
    Each shard lands in the client's train split; validation starts empty.
    """
    if n_clients < 2:
        raise ValueError(f"need at least 2 clients, got {n_clients}")
    n = len(dataset)
    if n < n_clients:
        raise ValueError(f"dataset of {n} examples cannot feed {n_clients} clients")
    shard = n // n_clients
    dropped = n - shard * n_clients
    if dropped:
        log.info("partition: dropping %d remainder examples (%d %% %d)", dropped, n, n_clients)
    perm = np.random.default_rng(seed).permutation(n)
    clients = []
    for i in range(n_clients):
        idx = perm[i * shard : (i + 1) * shard]
        shard_ds = dataset.subset(idx)
        clients.append(ClientDataset(client_id=i, train=shard_ds, val=Dataset.empty_like(shard_ds)))
    return clients


def split_train_val(client: ClientDataset, val_fraction: float, seed) -> ClientDataset:
    """Seeded shuffle of the client's pooled examples, then split.

    Poison flags travel with their examples, so a poisoned shard yields a
    proportionally poisoned validation split.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie strictly between 0 and 1, got {val_fraction}")
    pooled = client.all_examples()
    n = len(pooled)
    n_val = int(n * val_fraction)
    if n_val < 1 or n - n_val < 1:
        raise ValueError(f"cannot split {n} examples with val_fraction={val_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return ClientDataset(
        client_id=client.client_id,
        train=pooled.subset(perm[n_val:]),
        val=pooled.subset(perm[:n_val]),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the seeded gaussian-blob digit surrogate.

    Each class has a fixed random prototype image; examples are the
    prototype pulled toward mid-gray by `signal` plus gaussian pixel
    noise, attenuated toward the image border (dark margins, as in
    centered handwritten digits), clipped back into [0, 1]. Lower signal
    / higher noise makes the task harder and the learning curve more
    gradual.
    """

    n_train: int = 10_000
    n_test: int = 2_000
    image_size: int = 8
    num_classes: int = 10
    signal: float = 0.35
    noise: float = 0.25
    seed: int = 0


def _border_mask(h: int, w: int) -> np.ndarray:
    """Smooth attenuation that darkens borders and corners."""
    row = np.sin(np.pi * (np.arange(h) + 0.5) / h) ** 0.75
    col = np.sin(np.pi * (np.arange(w) + 0.5) / w) ** 0.75
    return np.outer(row, col)[..., np.newaxis]


def make_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Seeded train/test pair of gaussian-blob 'digit' images."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(97,)))
    h = w = spec.image_size
    prototypes = rng.uniform(0.0, 1.0, size=(spec.num_classes, h, w, 1))
    mask = _border_mask(h, w)

    def draw(n: int, origin: str) -> Dataset:
        labels = rng.integers(0, spec.num_classes, size=n)
        base = 0.5 + spec.signal * (prototypes[labels] - 0.5)
        images = mask * (base + rng.normal(0.0, spec.noise, size=(n, h, w, 1)))
        np.clip(images, 0.0, 1.0, out=images)
        return Dataset(
            features=images.astype(np.float32),
            labels=labels.astype(np.int64),
            poisoned=np.zeros(n, dtype=bool),
            origin=origin,
            num_classes=spec.num_classes,
        )

    return draw(spec.n_train, "train"), draw(spec.n_test, "test")

"""Pixel-pattern backdoor triggers: training-time injection and the
triggered evaluation set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import ClientDataset, Dataset

CORNERS = ("bottom-right", "bottom-left", "top-right", "top-left")


@dataclass(frozen=True)
class TriggerSpec:
    """A square block of fixed-value pixels stamped at an image corner.

    Examples whose label already equals the target are never selected for
    poisoning and are excluded from the triggered evaluation set.
    """

    size: int = 3
    corner: str = "bottom-right"
    pixel_value: float = 1.0
    target_label: int = 9
    poison_fraction: float = 0.66

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"trigger size must be >= 1, got {self.size}")
        if self.corner not in CORNERS:
            raise ValueError(f"corner must be one of {CORNERS}, got {self.corner!r}")
        if not 0.0 <= self.poison_fraction <= 1.0:
            raise ValueError(f"poison fraction must lie in [0, 1], got {self.poison_fraction}")
        if not 0.0 <= self.pixel_value <= 1.0:
            raise ValueError(f"pixel value must lie in [0, 1], got {self.pixel_value}")
        if self.target_label < 0:
            raise ValueError(f"target label must be non-negative, got {self.target_label}")

    def offsets(self, height: int, width: int) -> tuple[slice, slice]:
        """Row/column slices of the stamped block for the given image size."""
        if self.size > height or self.size > width:
            raise ValueError(
                f"{self.size}x{self.size} trigger does not fit a {height}x{width} image"
            )
        rows = slice(0, self.size) if self.corner.startswith("top") else slice(height - self.size, height)
        cols = slice(0, self.size) if self.corner.endswith("left") else slice(width - self.size, width)
        return rows, cols


def _stamp(features: np.ndarray, indices: np.ndarray, trigger: TriggerSpec) -> None:
    _, h, w, _ = features.shape
    rows, cols = trigger.offsets(h, w)
    features[np.ix_(indices, np.arange(h)[rows], np.arange(w)[cols])] = trigger.pixel_value


def _poison_dataset(ds: Dataset, indices: np.ndarray, trigger: TriggerSpec) -> Dataset:
    features = ds.features.copy()
    labels = ds.labels.copy()
    poisoned = ds.poisoned.copy()
    _stamp(features, indices, trigger)
    labels[indices] = trigger.target_label
    poisoned[indices] = True
    return Dataset(features, labels, poisoned, ds.origin, ds.num_classes)


def inject_backdoor(client: ClientDataset, trigger: TriggerSpec, seed) -> ClientDataset:
    """Poison a seeded fraction of the client's trigger-eligible examples.

    Eligible means the stored label differs from the target label. Exactly
    floor(poison_fraction * n_eligible) examples are stamped with the
    trigger, relabeled to the target, and flagged. Split membership is
    preserved: selection runs over the pooled examples, train split first.
    """
    n_train = len(client.train)
    labels = np.concatenate([client.train.labels, client.val.labels])
    if len(labels) and trigger.target_label >= client.train.num_classes:
        raise ValueError(
            f"target label {trigger.target_label} outside [0, {client.train.num_classes})"
        )
    eligible = np.flatnonzero(labels != trigger.target_label)
    n_poison = int(trigger.poison_fraction * eligible.shape[0])
    rng = np.random.default_rng(seed)
    chosen = eligible[rng.permutation(eligible.shape[0])[:n_poison]]
    train_idx = chosen[chosen < n_train]
    val_idx = chosen[chosen >= n_train] - n_train
    return ClientDataset(
        client_id=client.client_id,
        train=_poison_dataset(client.train, train_idx, trigger),
        val=_poison_dataset(client.val, val_idx, trigger),
    )


def make_backdoor_testset(test: Dataset, trigger: TriggerSpec) -> Dataset:
    """Triggered copy of every test example not already labeled target.

    Labels keep their original (ground-truth) values; the backdoor metric
    counts predictions that land on the target label anyway.
    """
    if len(test) == 0:
        raise ValueError("test dataset is empty")
    keep = np.flatnonzero(test.labels != trigger.target_label)
    if keep.shape[0] == 0:
        raise ValueError("every test example carries the target label; nothing to trigger")
    subset = test.subset(keep)
    features = subset.features.copy()
    _stamp(features, np.arange(features.shape[0]), trigger)
    return Dataset(
        features=features,
        labels=subset.labels,
        poisoned=np.ones(features.shape[0], dtype=bool),
        origin=test.origin,
        num_classes=test.num_classes,
    )

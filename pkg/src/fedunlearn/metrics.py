"""Accuracy metrics, per-round time series, and the unlearn-vs-retrain
recovery comparison."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .nn import ModelParams, evaluate_accuracy, predict_classes


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluation point: phase, round, both accuracies, and cost counters."""

    phase: str
    round_index: int
    clean_accuracy: float
    backdoor_accuracy: float
    updates: int = 0
    seconds: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.clean_accuracy <= 1.0:
            raise ValueError(f"clean accuracy {self.clean_accuracy} outside [0, 1]")
        if not 0.0 <= self.backdoor_accuracy <= 1.0:
            raise ValueError(f"backdoor accuracy {self.backdoor_accuracy} outside [0, 1]")
        if self.round_index < 0:
            raise ValueError(f"round index must be >= 0, got {self.round_index}")


def clean_accuracy(model: ModelParams, test: Dataset) -> float:
    """Fraction of untriggered test examples classified correctly."""
    return evaluate_accuracy(model, test.features, test.labels)


def backdoor_accuracy(model: ModelParams, triggered: Dataset, target_label: int) -> float:
    """Fraction of triggered examples predicted as the attacker's target label.

    The triggered set must already exclude examples whose original label is
    the target (make_backdoor_testset guarantees this), so chance level is
    what a clean model assigns the target class, not 1/K plus the excluded
    mass.
    """
    if len(triggered) == 0:
        raise ValueError("triggered evaluation set is empty")
    preds = predict_classes(model, triggered.features)
    return float((preds == target_label).mean())


@dataclass(frozen=True)
class RecoveryRow:
    round_index: int
    unlearn_clean: float | None
    unlearn_backdoor: float | None
    retrain_clean: float | None
    retrain_backdoor: float | None


@dataclass(frozen=True)
class RecoveryComparison:
    """Aligned per-round table plus rounds-to-recover summaries.

    The recovery target is the retrain baseline's final clean accuracy
    minus two accuracy points; `*_rounds_to_target` is the first round
    index >= 1 at which a method's clean accuracy meets it (None if the
    series never gets there).
    """

    rows: tuple[RecoveryRow, ...]
    target_accuracy: float
    unlearn_rounds_to_target: int | None
    retrain_rounds_to_target: int | None


def _series_by_round(records: list[MetricsRecord]) -> dict[int, MetricsRecord]:
    out: dict[int, MetricsRecord] = {}
    for rec in records:
        if rec.round_index in out:
            raise ValueError(f"duplicate round {rec.round_index} in phase {rec.phase!r} series")
        out[rec.round_index] = rec
    return out


def _rounds_to_target(series: dict[int, MetricsRecord], target: float) -> int | None:
    for rnd in sorted(series):
        if rnd >= 1 and series[rnd].clean_accuracy >= target:
            return rnd
    return None


def compare_recovery(unlearn_records: list[MetricsRecord], retrain_records: list[MetricsRecord],
                     max_rounds: int | None = None, margin: float = 0.02) -> RecoveryComparison:
    """Align the post-unlearning and retrain series round by round."""
    if not unlearn_records or not retrain_records:
        raise ValueError("both series must be non-empty")
    un = _series_by_round(unlearn_records)
    re = _series_by_round(retrain_records)
    final_retrain = re[max(re)].clean_accuracy
    target = final_retrain - margin
    rounds = sorted(set(un) | set(re))
    if max_rounds is not None:
        rounds = [r for r in rounds if r <= max_rounds]
    rows = tuple(
        RecoveryRow(
            round_index=r,
            unlearn_clean=un[r].clean_accuracy if r in un else None,
            unlearn_backdoor=un[r].backdoor_accuracy if r in un else None,
            retrain_clean=re[r].clean_accuracy if r in re else None,
            retrain_backdoor=re[r].backdoor_accuracy if r in re else None,
        )
        for r in rounds
    )
    return RecoveryComparison(
        rows=rows,
        target_accuracy=target,
        unlearn_rounds_to_target=_rounds_to_target(un, target),
        retrain_rounds_to_target=_rounds_to_target(re, target),
    )

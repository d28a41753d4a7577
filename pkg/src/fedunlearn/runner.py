"""Experiment orchestration: data preparation, the train / retrain /
unlearn / full-compare scenarios, checkpoint persistence, and metrics
serialization.

Every run directory gets a MANIFEST.json listing each artifact and its
role plus the exact resolved configuration, so a run can be reproduced
from the manifest alone. Wall-clock fields are the only
non-deterministic content in any artifact.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, serialize_config
from .data import (
    ClientDataset,
    Dataset,
    inject_backdoor,
    load_idx,
    make_backdoor_testset,
    make_synthetic,
    partition,
    split_train_val,
)
from .federation import RoundState, retrain_baseline, train_federation
from .metrics import (
    MetricsRecord,
    RecoveryComparison,
    backdoor_accuracy,
    clean_accuracy,
    compare_recovery,
)
from .nn import ModelParams, init_weights, mlp, paper_cnn, save_checkpoint
from .seeding import PHASE_DATA, PHASE_INIT, PHASE_RETRAIN_INIT, child_rng, child_seed
from .unlearning import ErasureResult, erase_client

log = logging.getLogger(__name__)

METRICS_HEADER = ("phase", "round", "clean_acc", "backdoor_acc", "updates", "seconds")


def export_metrics(records: list[MetricsRecord], path, fmt: str) -> None:
    """Write records as CSV or line-delimited JSON with full float precision."""
    if not records:
        raise ValueError("no metrics records to export")
    path = Path(path)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for r in records:
            writer.writerow([r.phase, r.round_index, repr(r.clean_accuracy),
                             repr(r.backdoor_accuracy), r.updates, repr(r.seconds)])
        path.write_text(buf.getvalue())
    elif fmt == "jsonl":
        lines = [
            json.dumps(
                {
                    "phase": r.phase,
                    "round": r.round_index,
                    "clean_acc": r.clean_accuracy,
                    "backdoor_acc": r.backdoor_accuracy,
                    "updates": r.updates,
                    "seconds": r.seconds,
                }
            )
            for r in records
        ]
        path.write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown metrics format {fmt!r}")


def import_metrics_csv(path) -> list[MetricsRecord]:
    """Inverse of the CSV export (used for round-trip checks)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        return [
            MetricsRecord(row[0], int(row[1]), float(row[2]), float(row[3]),
                          int(row[4]), float(row[5]))
            for row in reader
        ]


def export_recovery(comparison: RecoveryComparison, path) -> None:
    """Two aligned accuracy series per round, ready for plotting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("round", "unlearn_clean", "unlearn_backdoor", "retrain_clean",
                     "retrain_backdoor"))
    fmt = lambda v: "" if v is None else repr(v)
    for row in comparison.rows:
        writer.writerow((row.round_index, fmt(row.unlearn_clean), fmt(row.unlearn_backdoor),
                         fmt(row.retrain_clean), fmt(row.retrain_backdoor)))
    Path(path).write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# data and model assembly


def load_source_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    """The (train, test) pair named by the config: IDX files or synthetic."""
    data = cfg.data
    if data.source == "synthetic":
        return make_synthetic(data.synthetic_spec(cfg.run.seed))
    root = data.resolved_dir()
    train = load_idx(root / data.train_images, root / data.train_labels,
                     origin="train", num_classes=data.num_classes)
    test = load_idx(root / data.test_images, root / data.test_labels,
                    origin="test", num_classes=data.num_classes)
    if data.subset is not None and data.subset < len(train):
        keep = child_rng(cfg.run.seed, PHASE_DATA, 1).permutation(len(train))[: data.subset]
        train = train.subset(keep)
    return train, test


def prepare_clients(train: Dataset, cfg: ExperimentConfig) -> list[ClientDataset]:
    """Partition, poison the target client, and split train/validation."""
    fed = cfg.federation
    clients = partition(train, fed.n_clients, child_seed(cfg.run.seed, PHASE_DATA, 2))
    clients[fed.target_client] = inject_backdoor(
        clients[fed.target_client], cfg.trigger, child_seed(cfg.run.seed, PHASE_DATA, 3)
    )
    return [
        split_train_val(c, cfg.data.val_fraction, child_seed(cfg.run.seed, PHASE_DATA, 4, c.client_id))
        for c in clients
    ]


def build_arch(cfg: ExperimentConfig, image_shape: tuple[int, int, int]):
    if cfg.model.kind == "cnn":
        return paper_cnn(image_shape, cfg.data.num_classes)
    return mlp(image_shape, cfg.model.hidden_units, cfg.data.num_classes)


def make_evaluator(test: Dataset, cfg: ExperimentConfig):
    triggered = make_backdoor_testset(test, cfg.trigger)
    target = cfg.trigger.target_label

    def evaluate(model: ModelParams) -> tuple[float, float]:
        return clean_accuracy(model, test), backdoor_accuracy(model, triggered, target)

    return evaluate


# ---------------------------------------------------------------------------
# scenario runner


@dataclass
class _Artifacts:
    out_dir: Path
    files: list[dict] = field(default_factory=list)

    def add(self, name: str, role: str) -> Path:
        self.files.append({"name": name, "role": role})
        return self.out_dir / name

    def save_model(self, name: str, role: str, model: ModelParams) -> None:
        save_checkpoint(self.add(name, role), model)


def _write_manifest(art: _Artifacts, cfg: ExperimentConfig, status: str,
                    failure_stage: str | None = None) -> None:
    manifest = {
        "package": "fedunlearn",
        "version": __version__,
        "scenario": cfg.run.scenario,
        "seed": cfg.run.seed,
        "status": status,
        "failure_stage": failure_stage,
        "files": art.files,
        "config": serialize_config(cfg),
    }
    (art.out_dir / "MANIFEST.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _format_pct(value: float | None) -> str:
    return "  --  " if value is None else f"{100.0 * value:6.2f}"


def _summary_table(rows: list[tuple[str, float | None, float | None]]) -> str:
    lines = [f"{'model':<12}{'clean':>8}{'backdoor':>10}"]
    for name, clean, backdoor in rows:
        lines.append(f"{name:<12}{_format_pct(clean):>8}{_format_pct(backdoor):>10}")
    return "\n".join(lines)


def run_scenario(cfg: ExperimentConfig, progress=None) -> int:
    """Execute the configured scenario; returns a process exit status.

    Artifacts land in cfg.run.output_dir. On failure the partial artifacts
    stay on disk and MANIFEST.json records the failing stage.
    """
    out_dir = Path(cfg.run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    art = _Artifacts(out_dir)
    say = progress or (lambda msg: log.info("%s", msg))
    stage = "setup"
    try:
        resolved = art.add("config.resolved.ini", "resolved configuration")
        resolved.write_text(serialize_config(cfg))

        stage = "load-data"
        train, test = load_source_data(cfg)
        say(f"loaded {len(train)} train / {len(test)} test examples "
            f"({cfg.data.source}, image {train.image_shape})")

        stage = "prepare-clients"
        clients = prepare_clients(train, cfg)
        evaluator = make_evaluator(test, cfg)
        arch = build_arch(cfg, train.image_shape)

        records: list[MetricsRecord] = []
        scenario = cfg.run.scenario
        fed = cfg.federation

        state: RoundState | None = None
        erasure: ErasureResult | None = None
        if scenario in ("train", "unlearn", "full-compare"):
            stage = "train"
            initial = ModelParams(arch, init_weights(arch, child_seed(cfg.run.seed, PHASE_INIT)))
            art.save_model("initial.ckpt", "federated training initialization", initial)
            state, train_records = train_federation(fed, clients, initial, evaluator)
            records.extend(train_records)
            say(f"trained {fed.rounds} rounds: clean {train_records[-1].clean_accuracy:.4f}, "
                f"backdoor {train_records[-1].backdoor_accuracy:.4f}")
            art.save_model("global_final.ckpt", "final global model", state.global_model)
            for i, local in enumerate(state.local_models):
                art.save_model(f"local_client_{i}.ckpt", f"client {i} last local model", local)

        if scenario in ("unlearn", "full-compare"):
            stage = "unlearn"
            erasure = erase_client(state, clients, fed.target_client, cfg.unlearn, fed, evaluator)
            records.extend(erasure.records)
            say(f"unlearned client {fed.target_client}: {erasure.outcome.stop_reason} after "
                f"{erasure.outcome.steps} steps, distance {erasure.outcome.distance_to_reference:.4f} "
                f"(ball radius {erasure.outcome.delta:.4f})")
            art.save_model("reference.ckpt", "leave-one-out reference model", erasure.reference)
            art.save_model("unlearned_local.ckpt", "target's unlearned local model",
                           erasure.outcome.model)
            art.save_model("unlearned_global.ckpt", "post-trained unlearned global model",
                           erasure.global_model)

        retrain_state: RoundState | None = None
        retrain_records: list[MetricsRecord] = []
        if scenario in ("retrain", "full-compare"):
            stage = "retrain"
            remaining = [c for c in clients if c.client_id != fed.target_client]
            retrain_initial = ModelParams(
                arch, init_weights(arch, child_seed(cfg.run.seed, PHASE_RETRAIN_INIT))
            )
            art.save_model("retrain_initial.ckpt", "retrain baseline initialization", retrain_initial)
            retrain_state, retrain_records = retrain_baseline(fed, remaining, retrain_initial,
                                                              evaluator)
            records.extend(retrain_records)
            say(f"retrained without client {fed.target_client}: clean "
                f"{retrain_records[-1].clean_accuracy:.4f}, backdoor "
                f"{retrain_records[-1].backdoor_accuracy:.4f}")
            art.save_model("retrained.ckpt", "retrain-from-scratch baseline", retrain_state.global_model)

        stage = "report"
        if not records:
            raise RuntimeError("scenario produced no metrics records")
        for fmt in cfg.run.formats:
            name = "metrics.csv" if fmt == "csv" else "metrics.jsonl"
            export_metrics(records, art.add(name, f"metrics ({fmt})"), fmt)

        summary_lines = [f"scenario: {scenario}", f"seed: {cfg.run.seed}", ""]
        if scenario == "full-compare":
            assert state is not None and erasure is not None and retrain_state is not None
            eval_clean, eval_bd = evaluator(state.global_model)
            ref_clean, ref_bd = evaluator(erasure.reference)
            local_clean, local_bd = evaluator(erasure.outcome.model)
            post = [r for r in erasure.records if r.round_index >= 1]
            if post:
                un_global_clean, un_global_bd = post[0].clean_accuracy, post[0].backdoor_accuracy
            else:
                un_global_clean, un_global_bd = local_clean, local_bd
            summary_lines.append(
                _summary_table(
                    [
                        ("fedavg", eval_clean, eval_bd),
                        ("retrain", retrain_records[-1].clean_accuracy,
                         retrain_records[-1].backdoor_accuracy),
                        ("reference", ref_clean, ref_bd),
                        ("un-local", local_clean, local_bd),
                        ("un-global", un_global_clean, un_global_bd),
                    ]
                )
            )
            comparison = compare_recovery(erasure.records, retrain_records)
            export_recovery(comparison, art.add("recovery.csv", "unlearn vs retrain series"))
            summary_lines += [
                "",
                f"recovery target (retrain final clean - 2 pts): "
                f"{100.0 * comparison.target_accuracy:.2f}",
                f"rounds to target: unlearn+posttrain "
                f"{comparison.unlearn_rounds_to_target}, retrain "
                f"{comparison.retrain_rounds_to_target}",
            ]
        else:
            last = records[-1]
            summary_lines.append(_summary_table([(last.phase, last.clean_accuracy,
                                                  last.backdoor_accuracy)]))
        art.add("summary.txt", "human-readable summary")
        (out_dir / "summary.txt").write_text("\n".join(summary_lines) + "\n")

        _write_manifest(art, cfg, status="completed")
        say(f"artifacts written to {out_dir}")
        return 0
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and fails
        _write_manifest(art, cfg, status="failed", failure_stage=stage)
        log.error("scenario failed during %s: %s", stage, exc)
        print(f"error: scenario failed during {stage}: {exc}", file=sys.stderr)
        return 1

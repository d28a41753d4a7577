"""Experiment configuration: a flat key-value grammar with sections.

The format is INI-like::

    # comment
    [federation]
    clients = 5
    rounds = 20

Every key belongs to a known section and has a typed default; unknown
keys, type errors, and range violations are reported with the offending
key name and line number. `parse_config` -> `serialize_config` ->
`parse_config` round-trips to an identical configuration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .data import SyntheticSpec, TriggerSpec
from .federation import FederationConfig
from .unlearning import UnlearnConfig

DATA_DIR_ENV = "FEDUNLEARN_DATA_DIR"

SCENARIOS = ("train", "retrain", "unlearn", "full-compare")


class ConfigError(ValueError):
    """Malformed configuration text or values."""


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # or "idx"
    data_dir: str | None = None
    train_images: str = "train-images-idx3-ubyte"
    train_labels: str = "train-labels-idx1-ubyte"
    test_images: str = "t10k-images-idx3-ubyte"
    test_labels: str = "t10k-labels-idx1-ubyte"
    subset: int | None = None  # cap on train examples, seeded draw
    val_fraction: float = 0.1
    synthetic_train: int = 10_000
    synthetic_test: int = 2_000
    image_size: int = 8
    num_classes: int = 10
    signal: float = 0.35
    noise: float = 0.25

    def resolved_dir(self) -> Path:
        root = self.data_dir or os.environ.get(DATA_DIR_ENV) or "data"
        return Path(root)

    def synthetic_spec(self, seed: int) -> SyntheticSpec:
        return SyntheticSpec(
            n_train=self.synthetic_train,
            n_test=self.synthetic_test,
            image_size=self.image_size,
            num_classes=self.num_classes,
            signal=self.signal,
            noise=self.noise,
            seed=seed,
        )


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "mlp"  # or "cnn" (the 1,663,370-parameter reference network)
    hidden_units: int = 64


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/latest"
    scenario: str = "train"
    formats: tuple[str, ...] = ("csv", "jsonl")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    trigger: TriggerSpec = field(default_factory=TriggerSpec)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    run: RunConfig = field(default_factory=RunConfig)


# ---------------------------------------------------------------------------
# raw text -> {section: {key: (value, line)}}

def _scan(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    raw: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.startswith(";"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if not section:
                raise ConfigError(f"empty section header (line {lineno})")
            raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value' or '[section]': {stripped!r} (line {lineno})")
        if section is None:
            raise ConfigError(f"key outside any [section] (line {lineno})")
        key, _, value = stripped.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if not key:
            raise ConfigError(f"missing key before '=' (line {lineno})")
        if key in raw[section]:
            raise ConfigError(f"duplicate key '{section}.{key}' (line {lineno})")
        raw[section][key] = (value, lineno)
    return raw


class _Section:
    """Typed, range-checked access to one section's raw keys."""

    def __init__(self, name: str, values: dict[str, tuple[str, int]]):
        self.name = name
        self.values = dict(values)

    def _take(self, key: str) -> tuple[str, int] | None:
        return self.values.pop(key, None)

    def _fail(self, key: str, line: int, message: str):
        raise ConfigError(f"{self.name}.{key}: {message} (line {line})")

    def get_str(self, key: str, default: str, choices: tuple[str, ...] | None = None) -> str:
        entry = self._take(key)
        if entry is None:
            return default
        value, line = entry
        if choices and value not in choices:
            self._fail(key, line, f"{value!r} is not one of {choices}")
        return value

    def get_int(self, key: str, default, minimum=None, maximum=None):
        entry = self._take(key)
        if entry is None:
            return default
        value, line = entry
        if value.lower() == "none":
            return None
        try:
            parsed = int(value)
        except ValueError:
            self._fail(key, line, f"expected an integer, got {value!r}")
        self._check_range(key, line, parsed, minimum, maximum)
        return parsed

    def get_float(self, key: str, default, minimum=None, maximum=None):
        entry = self._take(key)
        if entry is None:
            return default
        value, line = entry
        if value.lower() in ("none", "auto"):
            return None
        try:
            parsed = float(value)
        except ValueError:
            self._fail(key, line, f"expected a number, got {value!r}")
        self._check_range(key, line, parsed, minimum, maximum)
        return parsed

    def get_bool(self, key: str, default: bool) -> bool:
        entry = self._take(key)
        if entry is None:
            return default
        value, line = entry
        lowered = value.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        self._fail(key, line, f"expected a boolean, got {value!r}")

    def get_list(self, key: str, default: tuple[str, ...], choices: tuple[str, ...]) -> tuple[str, ...]:
        entry = self._take(key)
        if entry is None:
            return default
        value, line = entry
        items = tuple(v.strip() for v in value.split(",") if v.strip())
        for item in items:
            if item not in choices:
                self._fail(key, line, f"{item!r} is not one of {choices}")
        if not items:
            self._fail(key, line, "expected a non-empty comma-separated list")
        return items

    def _check_range(self, key, line, value, minimum, maximum):
        if minimum is not None and value < minimum:
            self._fail(key, line, f"{value} is below the minimum {minimum}")
        if maximum is not None and value > maximum:
            self._fail(key, line, f"{value} is above the maximum {maximum}")

    def reject_leftovers(self):
        for key, (_, line) in self.values.items():
            raise ConfigError(f"unknown key '{self.name}.{key}' (line {line})")


KNOWN_SECTIONS = ("data", "model", "federation", "trigger", "unlearn", "run")


def _construct(section: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def _build(raw: dict[str, dict[str, tuple[str, int]]]) -> ExperimentConfig:
    for section in raw:
        if section not in KNOWN_SECTIONS:
            line = min(line for _, line in raw[section].values()) if raw[section] else 0
            raise ConfigError(f"unknown section [{section}] (line {line})")

    sections = {name: _Section(name, raw.get(name, {})) for name in KNOWN_SECTIONS}

    sec = sections["data"]
    data = DataConfig(
        source=sec.get_str("source", "synthetic", choices=("synthetic", "idx")),
        data_dir=sec.get_str("data_dir", None) or None,
        train_images=sec.get_str("train_images", DataConfig.train_images),
        train_labels=sec.get_str("train_labels", DataConfig.train_labels),
        test_images=sec.get_str("test_images", DataConfig.test_images),
        test_labels=sec.get_str("test_labels", DataConfig.test_labels),
        subset=sec.get_int("subset", None, minimum=1),
        val_fraction=sec.get_float("val_fraction", 0.1, minimum=0.0, maximum=1.0),
        synthetic_train=sec.get_int("synthetic_train", 10_000, minimum=10),
        synthetic_test=sec.get_int("synthetic_test", 2_000, minimum=10),
        image_size=sec.get_int("image_size", 8, minimum=4),
        num_classes=sec.get_int("num_classes", 10, minimum=2),
        signal=sec.get_float("signal", 0.35, minimum=0.0, maximum=1.0),
        noise=sec.get_float("noise", 0.25, minimum=0.0),
    )

    sec = sections["model"]
    model = ModelConfig(
        kind=sec.get_str("kind", "mlp", choices=("mlp", "cnn")),
        hidden_units=sec.get_int("hidden_units", 64, minimum=1),
    )

    sec = sections["run"]
    run = RunConfig(
        seed=sec.get_int("seed", 0, minimum=0),
        output_dir=sec.get_str("output_dir", "runs/latest"),
        scenario=sec.get_str("scenario", "train", choices=SCENARIOS),
        formats=sec.get_list("formats", ("csv", "jsonl"), choices=("csv", "jsonl")),
    )

    sec = sections["federation"]
    federation = _construct(
        "federation", FederationConfig,
        n_clients=sec.get_int("clients", 5, minimum=2),
        rounds=sec.get_int("rounds", 20, minimum=1),
        target_client=sec.get_int("target_client", 0, minimum=0),
        local_epochs=sec.get_int("local_epochs", 1, minimum=0),
        batch_size=sec.get_int("batch_size", 128, minimum=1),
        learning_rate=sec.get_float("learning_rate", 0.01, minimum=1e-12),
        momentum=sec.get_float("momentum", 0.9, minimum=0.0, maximum=0.999999),
        weighting=sec.get_str("weighting", "equal", choices=("equal", "proportional")),
        parallel=sec.get_bool("parallel", False),
        posttrain_rounds=sec.get_int("posttrain_rounds", 1, minimum=0),
        posttrain_updates=sec.get_int("posttrain_updates", 25, minimum=1),
        seed=run.seed,
    )

    sec = sections["trigger"]
    trigger = _construct(
        "trigger", TriggerSpec,
        size=sec.get_int("size", 3, minimum=1),
        corner=sec.get_str("corner", "bottom-right",
                           choices=("bottom-right", "bottom-left", "top-right", "top-left")),
        pixel_value=sec.get_float("pixel_value", 1.0, minimum=0.0, maximum=1.0),
        target_label=sec.get_int("target_label", 9, minimum=0),
        poison_fraction=sec.get_float("poison_fraction", 0.66, minimum=0.0, maximum=1.0),
    )

    if trigger.target_label >= data.num_classes:
        raise ConfigError(
            f"trigger.target_label: {trigger.target_label} must be below "
            f"data.num_classes = {data.num_classes}"
        )

    sec = sections["unlearn"]
    unlearn = _construct(
        "unlearn", UnlearnConfig,
        learning_rate=sec.get_float("learning_rate", 0.01, minimum=1e-12),
        batch_size=sec.get_int("batch_size", 1024, minimum=1),
        epochs=sec.get_int("epochs", 5, minimum=1),
        momentum=sec.get_float("momentum", 0.9, minimum=0.0, maximum=0.999999),
        early_stop_threshold=sec.get_float("early_stop_threshold", 0.12, minimum=0.0, maximum=1.0),
        clip_radius=sec.get_float("clip_radius", 5.0, minimum=1e-12),
        delta=sec.get_float("delta", None, minimum=1e-12),
        delta_models=sec.get_int("delta_models", 10, minimum=1),
        validate_clean_only=sec.get_bool("validate_clean_only", False),
        seed=run.seed,
    )

    for section in sections.values():
        section.reject_leftovers()

    return ExperimentConfig(data=data, model=model, federation=federation,
                            trigger=trigger, unlearn=unlearn, run=run)


def parse_config_text(text: str, overrides: list[str] | None = None) -> ExperimentConfig:
    raw = _scan(text)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        dotted, _, value = item.partition("=")
        section, _, key = dotted.strip().lower().partition(".")
        raw.setdefault(section, {})[key.strip()] = (value.strip(), 0)
    return _build(raw)


def parse_config(path=None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse a configuration file (or pure defaults when path is None),
    then apply `section.key=value` overrides."""
    text = Path(path).read_text() if path is not None else ""
    return parse_config_text(text, overrides)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parsing it back yields an equal configuration."""
    d, m, f, t, u, r = cfg.data, cfg.model, cfg.federation, cfg.trigger, cfg.unlearn, cfg.run
    lines = [
        "[data]",
        f"source = {d.source}",
        f"data_dir = {d.data_dir or ''}",
        f"train_images = {d.train_images}",
        f"train_labels = {d.train_labels}",
        f"test_images = {d.test_images}",
        f"test_labels = {d.test_labels}",
        f"subset = {d.subset if d.subset is not None else 'none'}",
        f"val_fraction = {d.val_fraction!r}",
        f"synthetic_train = {d.synthetic_train}",
        f"synthetic_test = {d.synthetic_test}",
        f"image_size = {d.image_size}",
        f"num_classes = {d.num_classes}",
        f"signal = {d.signal!r}",
        f"noise = {d.noise!r}",
        "",
        "[model]",
        f"kind = {m.kind}",
        f"hidden_units = {m.hidden_units}",
        "",
        "[federation]",
        f"clients = {f.n_clients}",
        f"rounds = {f.rounds}",
        f"target_client = {f.target_client}",
        f"local_epochs = {f.local_epochs}",
        f"batch_size = {f.batch_size}",
        f"learning_rate = {f.learning_rate!r}",
        f"momentum = {f.momentum!r}",
        f"weighting = {f.weighting}",
        f"parallel = {str(f.parallel).lower()}",
        f"posttrain_rounds = {f.posttrain_rounds}",
        f"posttrain_updates = {f.posttrain_updates}",
        "",
        "[trigger]",
        f"size = {t.size}",
        f"corner = {t.corner}",
        f"pixel_value = {t.pixel_value!r}",
        f"target_label = {t.target_label}",
        f"poison_fraction = {t.poison_fraction!r}",
        "",
        "[unlearn]",
        f"learning_rate = {u.learning_rate!r}",
        f"batch_size = {u.batch_size}",
        f"epochs = {u.epochs}",
        f"momentum = {u.momentum!r}",
        f"early_stop_threshold = {u.early_stop_threshold!r}",
        f"clip_radius = {u.clip_radius!r}",
        f"delta = {u.delta!r}" if u.delta is not None else "delta = auto",
        f"delta_models = {u.delta_models}",
        f"validate_clean_only = {str(u.validate_clean_only).lower()}",
        "",
        "[run]",
        f"seed = {r.seed}",
        f"output_dir = {r.output_dir}",
        f"scenario = {r.scenario}",
        f"formats = {','.join(r.formats)}",
        "",
    ]
    return "\n".join(lines)

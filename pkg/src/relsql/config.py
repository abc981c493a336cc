"""Experiment configuration: one JSON file, with dotted-key overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .relations import ORDERINGS, RelationConfig

OUTPUT_ENV = "RELSQL_OUTPUT_DIR"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 3000
    warmup_steps: int = 200
    peak_lr: float = 1e-3
    batch: int = 16
    grad_accum: int = 1
    seed: int = 0
    eval_every: int = 500
    log_every: int = 100
    constrain_train: bool = True
    constrain_infer: bool = True
    max_decode_steps: int = 80

    def __post_init__(self):
        if self.steps <= 0 or self.batch <= 0 or self.grad_accum <= 0 or self.eval_every <= 0:
            raise ConfigError("steps, batch, grad_accum and eval_every must be positive")
        if not 0 <= self.warmup_steps <= self.steps:
            raise ConfigError(f"warmup_steps={self.warmup_steps} must be within [0, steps={self.steps}]")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be positive")


# model dimensions that may be set from a config file
MODEL_KEYS = (
    "d_enc", "enc_heads", "stage1_layers", "stage2_layers", "enc_ff", "d_action", "d_field", "d_type",
    "dec_heads", "dec_layers", "dec_ff", "pointer_dim", "dropout", "max_input_len", "max_decode_len",
)

# full-scale values, for reference; the defaults are the desk-scale ones
FULL_SCALE_MODEL = {"d_action": 64, "d_field": 64, "d_type": 64, "dec_heads": 8, "pointer_dim": 50,
                    "stage2_layers": 8, "max_input_len": 512}


@dataclass(frozen=True)
class ExperimentConfig:
    data_dir: str = "toy_data"
    tables: str = "tables.json"
    content_dir: str | None = "content"
    train_file: str = "train.jsonl"
    dev_file: str = "dev.jsonl"
    test_file: str = "test.jsonl"
    grammar: str = "spider_sql"
    vocab_min_count: int = 5
    token_min_count: int = 2
    ordering: str = "column-table"
    shuffle_seed: int | None = None
    output_dir: str = "runs/default"
    train: TrainConfig = field(default_factory=TrainConfig)
    relations: RelationConfig = field(default_factory=RelationConfig)
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ConfigError(f"ordering must be one of {ORDERINGS}, got {self.ordering!r}")
        unknown = set(self.model) - set(MODEL_KEYS)
        if unknown:
            raise ConfigError(f"unknown model keys {sorted(unknown)}; valid: {list(MODEL_KEYS)}")

    def path(self, name: str | None) -> Path | None:
        if name is None:
            return None
        p = Path(name)
        return p if p.is_absolute() else Path(self.data_dir) / p

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def check_paths(self) -> None:
        for name in (self.tables, self.train_file, self.dev_file, self.test_file):
            p = self.path(name)
            if not p.exists():
                raise ConfigError(f"missing file {p}")


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}; valid: {sorted(names)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def experiment_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    train = _build(TrainConfig, data.pop("train", {}), "train")
    rel = _build(RelationConfig, data.pop("relations", {}), "relations")
    data["train"], data["relations"] = train, rel
    return _build(ExperimentConfig, data, "config")


def load_config(path: str | os.PathLike | None, overrides: list[str] = ()) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            with open(path) as f:
                data = json.load(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from None
    for item in overrides:
        apply_override(data, item)
    return experiment_from_dict(data)


def apply_override(data: dict, item: str) -> None:
    """Set ``a.b=value`` in ``data``; the value is parsed as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = data
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = value

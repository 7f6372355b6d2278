"""Run configuration: one JSON file plus ``--set key=value`` overrides."""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .losses import LossWeights
from .model import MODES, ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid config:\n  " + "\n  ".join(errors))


@dataclass
class Paths:
    dataset: str | None = None
    val_dataset: str | None = None
    checkpoint: str = "checkpoint.json"
    metrics_log: str = "metrics.jsonl"
    outputs: str = "outputs"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    paths: Paths = field(default_factory=Paths)
    mode: str = "prior"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, section: str, raw: Any, errors: list[str], skip: tuple[str, ...] = ()):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append(f"{section}: expected an object")
        return None
    names = _field_names(cls) - set(skip)
    for key in sorted(set(raw) - names):
        errors.append(f"{section}.{key}: unknown key")
    kwargs = {k: v for k, v in raw.items() if k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{section}: {exc}")
        return None


def config_from_dict(raw: dict) -> RunConfig:
    """Validate a config tree, collecting every problem before raising."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])
    for key in sorted(set(raw) - _field_names(RunConfig)):
        errors.append(f"{key}: unknown key")
    mode = raw.get("mode", "prior")
    if mode not in MODES:
        errors.append(f"mode: must be one of {list(MODES)}, got {mode!r}")
        mode = "prior"
    model_raw = dict(raw.get("model") or {})
    if "mode" in model_raw and model_raw["mode"] != mode:
        errors.append(f"model.mode: conflicts with mode={mode!r}")
    model_raw["mode"] = mode
    model = _build(ModelConfig, "model", model_raw, errors)
    train_raw = dict(raw.get("training") or {})
    if "mode" in train_raw and train_raw["mode"] != mode:
        errors.append(f"training.mode: conflicts with mode={mode!r}")
    steps = model.steps if model is not None else 2
    if "steps" in train_raw and train_raw["steps"] != steps:
        errors.append(f"training.steps: conflicts with model.steps={steps}")
    train_raw.update(mode=mode, steps=steps)
    if isinstance(train_raw.get("weights"), dict):
        w = train_raw["weights"]
        for key in sorted(set(w) - _field_names(LossWeights)):
            errors.append(f"training.weights.{key}: unknown key")
        train_raw["weights"] = {k: v for k, v in w.items() if k in _field_names(LossWeights)}
    training = _build(TrainConfig, "training", train_raw, errors)
    paths = _build(Paths, "paths", raw.get("paths"), errors)
    if errors:
        raise ConfigError(errors)
    return RunConfig(model, training, paths, mode)


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as JSON when possible."""
    raw = copy.deepcopy(raw)
    errors = []
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            errors.append(f"--set {item!r}: expected key=value")
            continue
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                errors.append(f"--set {item!r}: {p} is not a section")
                break
        else:
            node[parts[-1]] = parse_value(value)
    if errors:
        raise ConfigError(errors)
    return raw


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    raw = {} if path is None else json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = config_from_dict(apply_overrides(raw, overrides or []))
    if path is not None:
        base = Path(path).parent
        p = cfg.paths
        for name in ("dataset", "val_dataset", "checkpoint", "metrics_log", "outputs"):
            value = getattr(p, name)
            if value is not None and not Path(value).is_absolute():
                setattr(p, name, str(base / value))
    return cfg

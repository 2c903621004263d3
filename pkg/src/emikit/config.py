"""Run configuration: TOML parsing, defaults, overrides, hashing.

A config file has optional ``[data]``, ``[model]`` and ``[training]``
sections plus root-level ``seed`` / ``out_dir``; every key has a default
matching the published training recipe, so an empty file (or no file at all)
reproduces it. Command-line flags override file values. The canonical
serialization round-trips and its SHA-256 prefix is stamped into checkpoints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import tomli

from .data import MODALITIES
from .errors import ConfigError


@dataclass(frozen=True)
class DataConfig:
    manifest: str = ""
    modalities: tuple[str, ...] = ("text", "audio", "vision", "motion")
    split_ratio: str = "2:1"  # "4:1" moves validation samples into training
    split_seed: int = 42
    target_train: int = 0  # 0 -> round(0.8 * total) when split_ratio is 4:1


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 384
    motion_hidden_dim: int = 128
    dropout: float = 0.45


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 16
    base_lr: float = 2e-4
    weight_decay: float = 1e-2
    clip_norm: float = 1.0
    alpha: float = 0.7
    loss_epsilon: float = 1e-8
    epochs: int = 50
    motion_epochs: int = 100
    fusion_epochs: int = 100
    patience: int = 10
    scheduler_factor: float = 0.5
    scheduler_patience: int = 5
    min_lr: float = 1e-7
    encoder_lr_multiplier: float = 0.05
    modality_dropout: float = 0.3
    clamp: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    out_dir: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def validate(self) -> "RunConfig":
        d, t, m = self.data, self.training, self.model
        if not d.modalities:
            raise ConfigError("modalities must be a nonempty subset of " + "/".join(MODALITIES))
        bad = [x for x in d.modalities if x not in MODALITIES]
        if bad:
            raise ConfigError(f"unknown modalities: {', '.join(bad)}")
        if len(set(d.modalities)) != len(d.modalities):
            raise ConfigError("modalities must not repeat")
        if d.split_ratio not in ("2:1", "4:1"):
            raise ConfigError(f"split_ratio must be 2:1 or 4:1, got {d.split_ratio!r}")
        if t.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batch-level concordance)")
        if not 0.0 <= t.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {t.alpha}")
        for name, value in [("dropout", m.dropout), ("modality_dropout", t.modality_dropout)]:
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {value}")
        for name, value in [
            ("base_lr", t.base_lr), ("clip_norm", t.clip_norm),
            ("epochs", t.epochs), ("motion_epochs", t.motion_epochs),
            ("fusion_epochs", t.fusion_epochs), ("patience", t.patience),
            ("scheduler_patience", t.scheduler_patience),
            ("hidden_dim", m.hidden_dim), ("motion_hidden_dim", m.motion_hidden_dim),
        ]:
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if t.encoder_lr_multiplier < 0:
            raise ConfigError("encoder_lr_multiplier must be >= 0")
        return self

    def epochs_for(self, stage: str) -> int:
        if stage == "motion":
            return self.training.motion_epochs
        if stage == "fusion":
            return self.training.fusion_epochs
        return self.training.epochs

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_toml().encode("utf-8")).hexdigest()[:16]

    def to_toml(self) -> str:
        lines = [
            f"seed = {self.seed}",
            f"out_dir = {json.dumps(self.out_dir)}",
            "",
        ]
        for section, obj in (("data", self.data), ("model", self.model),
                             ("training", self.training)):
            lines.append(f"[{section}]")
            for f in fields(obj):
                lines.append(f"{f.name} = {_toml_value(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def _apply_section(obj, section: str, values: dict):
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
        current = getattr(obj, key)
        if isinstance(current, bool):
            if not isinstance(raw, bool):
                raise ConfigError(f"[{section}] {key} must be a boolean")
            updates[key] = raw
        elif isinstance(current, int):
            if isinstance(raw, bool) or not isinstance(raw, int):
                raise ConfigError(f"[{section}] {key} must be an integer")
            updates[key] = raw
        elif isinstance(current, float):
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise ConfigError(f"[{section}] {key} must be a number")
            updates[key] = float(raw)
        elif isinstance(current, str):
            if not isinstance(raw, str):
                raise ConfigError(f"[{section}] {key} must be a string")
            updates[key] = raw
        elif isinstance(current, tuple):
            if not isinstance(raw, list) or not all(isinstance(v, str) for v in raw):
                raise ConfigError(f"[{section}] {key} must be a list of strings")
            updates[key] = tuple(raw)
        else:
            raise ConfigError(f"[{section}] {key} has unsupported type")
    return replace(obj, **updates)


def parse_config(text: str) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    cfg = RunConfig()
    root = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    for key, value in root.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("seed must be an integer")
            cfg = replace(cfg, seed=value)
        elif key == "out_dir":
            if not isinstance(value, str):
                raise ConfigError("out_dir must be a string")
            cfg = replace(cfg, out_dir=value)
        else:
            raise ConfigError(f"unknown root-level key {key!r}")
    sections = {k: v for k, v in doc.items() if isinstance(v, dict)}
    for name in sections:
        if name not in ("data", "model", "training"):
            raise ConfigError(f"unknown config section [{name}]")
    if "data" in sections:
        cfg = replace(cfg, data=_apply_section(cfg.data, "data", sections["data"]))
    if "model" in sections:
        cfg = replace(cfg, model=_apply_section(cfg.model, "model", sections["model"]))
    if "training" in sections:
        cfg = replace(cfg, training=_apply_section(cfg.training, "training", sections["training"]))
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text)


def apply_overrides(cfg: RunConfig, *, seed: int | None = None, out_dir: str | None = None,
                    manifest: str | None = None, modalities: list[str] | None = None,
                    clamp: bool | None = None) -> RunConfig:
    """Command-line flags win over file values."""
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    if manifest is not None:
        cfg = replace(cfg, data=replace(cfg.data, manifest=manifest))
    if modalities is not None:
        cfg = replace(cfg, data=replace(cfg.data, modalities=tuple(modalities)))
    if clamp is not None:
        cfg = replace(cfg, training=replace(cfg.training, clamp=clamp))
    return cfg.validate()

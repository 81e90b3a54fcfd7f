"""YAML configuration: sections model/augment/loss/train/metrics/synth.

Every section maps 1:1 onto a config dataclass; unknown sections or keys
are rejected by name. ``--set section.key=value`` overrides parse the
value as YAML (so ``true``, ``0.5``, and ``[1, 2]`` behave as expected).
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import yaml

from .augment import AugmentConfig, SpatialConfig
from .errors import ConfigError
from .losses import LossConfig
from .metrics import MetricsConfig
from .model import ModelConfig
from .synthetic import SynthConfig
from .trainer import TrainConfig

SECTIONS = ("model", "augment", "loss", "train", "metrics", "synth")


def load_config(path=None) -> dict:
    """Read a config file into a raw {section: {key: value}} dict."""
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping of sections")
    for section, body in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"{path}: unknown section {section!r} (expected {SECTIONS})")
        if body is not None and not isinstance(body, dict):
            raise ConfigError(f"{path}: section {section!r} must be a mapping")
    return {k: dict(v or {}) for k, v in raw.items()}


def apply_overrides(raw: dict, overrides: tuple[str, ...]) -> dict:
    """Apply ``section.key=value`` strings on top of a raw config dict."""
    out = {k: dict(v) for k, v in raw.items()}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        target, _, value = item.partition("=")
        if "." not in target:
            raise ConfigError(f"override target {target!r} must look like section.key")
        section, _, key = target.partition(".")
        if section not in SECTIONS:
            raise ConfigError(f"override names unknown section {section!r}")
        try:
            parsed = yaml.safe_load(value)
        except yaml.YAMLError:
            parsed = value
        out.setdefault(section, {})[key] = parsed
    return out


def _build(cls, mapping: dict, section: str, **extra):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"section {section!r}: unknown key(s) {unknown}")
    merged = {**mapping, **extra}
    return cls(**merged)


def build_model_config(raw: dict, input_dim: int | None = None) -> ModelConfig:
    body = dict(raw.get("model", {}))
    declared = body.pop("input_dim", None)
    if input_dim is None:
        if declared is None:
            raise ConfigError("model.input_dim is required when no dataset provides it")
        input_dim = int(declared)
    elif declared is not None and int(declared) != int(input_dim):
        raise ConfigError(
            f"model.input_dim={declared} conflicts with dataset feature_dim={input_dim}"
        )
    cfg = _build(ModelConfig, body, "model", input_dim=int(input_dim))
    cfg.validate()
    return cfg


def build_augment_config(raw: dict) -> AugmentConfig:
    body = dict(raw.get("augment", {}))
    spatial = body.pop("spatial", None)
    if spatial is not None:
        if not isinstance(spatial, dict):
            raise ConfigError("augment.spatial must be a mapping")
        body["spatial"] = _build(SpatialConfig, spatial, "augment.spatial")
    cfg = _build(AugmentConfig, body, "augment")
    cfg.validate()
    return cfg


def build_loss_config(raw: dict) -> LossConfig:
    cfg = _build(LossConfig, raw.get("loss", {}), "loss")
    cfg.validate()
    return cfg


def build_train_config(raw: dict) -> TrainConfig:
    cfg = _build(TrainConfig, raw.get("train", {}), "train")
    cfg.validate()
    return cfg


def build_metrics_config(raw: dict) -> MetricsConfig:
    body = dict(raw.get("metrics", {}))
    for key in ("label_fractions", "retrieval_ks"):
        if key in body:
            body[key] = tuple(body[key])
    cfg = _build(MetricsConfig, body, "metrics")
    cfg.validate()
    return cfg


def build_synth_config(raw: dict) -> SynthConfig:
    cfg = _build(SynthConfig, raw.get("synth", {}), "synth")
    cfg.validate()
    return cfg

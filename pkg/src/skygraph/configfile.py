"""Structured JSON config files shared by training and evaluation.

Three sections, all optional: ``sim`` (SimConfig fields), ``train``
(TrainConfig fields) and ``policy`` ({"kind": "gcn"|"gat"}). Unknown keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

from .simulation import SimConfig
from .training import TrainConfig


class ConfigError(ValueError):
    """Raised for unknown keys or malformed config files."""


@dataclass(frozen=True)
class AppConfig:
    sim: SimConfig
    train: TrainConfig
    kind: str = "gat"


def _build(cls, section: dict, name: str):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - valid
    if unknown:
        raise ConfigError(
            f"unknown {name} config keys: {sorted(unknown)}; valid keys: {sorted(valid)}"
        )
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} config: {exc}") from exc


def config_from_dict(data: dict) -> AppConfig:
    unknown = set(data) - {"sim", "train", "policy"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    policy = data.get("policy", {})
    if set(policy) - {"kind"}:
        raise ConfigError(f"unknown policy config keys: {sorted(set(policy) - {'kind'})}")
    kind = policy.get("kind", "gat")
    if kind not in ("gcn", "gat"):
        raise ConfigError(f"policy.kind must be 'gcn' or 'gat', got {kind!r}")
    return AppConfig(
        sim=_build(SimConfig, data.get("sim", {}), "sim"),
        train=_build(TrainConfig, data.get("train", {}), "train"),
        kind=kind,
    )


def load_config(path: str) -> AppConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path!r}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be an object, got {type(data).__name__}")
    return config_from_dict(data)


def config_to_dict(cfg: AppConfig) -> dict:
    return {
        "policy": {"kind": cfg.kind},
        "sim": dataclasses.asdict(cfg.sim),
        "train": dataclasses.asdict(cfg.train),
    }

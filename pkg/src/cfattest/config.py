"""JSON run configuration. Unknown keys are rejected at every level."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import CfaError, ConfigError
from .gnn.train import TrainConfig
from .workload import WorkloadSpec

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class Paths:
    corpus: str | None = None
    model: str | None = None
    profile: str | None = None
    reports: str | None = None


@dataclass(frozen=True)
class EvalSettings:
    n_val: int = 10
    n_benign: int = 50
    n_attack_bases: int = 50
    reps: int = 1
    rop_lengths: tuple = (5, 10, 15, 30, 40, 50, 75, 100, 150, 200, 250, 350, 500)
    per_length: int = 50
    dop_attacks: int = 50
    dop_total_inserted: int = 2000
    dop_inserts: int = 50
    ablation_n: tuple = (2, 5, 10)
    ablation_rop_length: int = 100
    n_jobs: int = 1


@dataclass(frozen=True)
class Config:
    seed: int | None = None
    log_level: str = "INFO"
    constant_feature: bool = False
    paths: Paths = field(default_factory=Paths)
    train: TrainConfig = field(default_factory=TrainConfig)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    evaluate: EvalSettings = field(default_factory=EvalSettings)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


_SECTIONS = {"paths": Paths, "train": TrainConfig, "workload": WorkloadSpec,
             "evaluate": EvalSettings}


def _build(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be a JSON object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for k, v in raw.items():
        if k in _SECTIONS and cls is Config:
            v = _build(_SECTIONS[k], v, k)
        elif isinstance(v, list):
            v = tuple(v)
        kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError, CfaError) as exc:
        raise ConfigError(f"bad value in {where}: {exc}") from exc


def config_from_dict(raw: dict) -> Config:
    cfg = _build(Config, raw, "config")
    if cfg.log_level not in LOG_LEVELS:
        raise ConfigError(f"log_level must be one of {LOG_LEVELS}")
    return cfg


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"config {path} is not JSON: {exc}") from exc
    return config_from_dict(raw)


def override(cfg: Config, section: str | None, **values) -> Config:
    """Return ``cfg`` with non-None ``values`` applied to ``section`` (or the top level)."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    try:
        if section is None:
            return replace(cfg, **values)
        return replace(cfg, **{section: replace(getattr(cfg, section), **values)})
    except (TypeError, ValueError, CfaError) as exc:
        raise ConfigError(str(exc)) from exc

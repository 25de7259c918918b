"""Strict JSON run configuration.

One document drives every subcommand; unknown keys are errors so that a
mistyped hyperparameter cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .env import RewardConfig
from .orca import OrcaParams
from .sim import ScenarioSpec
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


@dataclass
class PlannerConfig:
    resolution: float = 0.1
    d_sub: float = 2.0
    deviation_threshold: float = 0.5


@dataclass
class PathsConfig:
    map: str | None = None
    checkpoint: str | None = None
    out_dir: str = "out"


@dataclass
class RunConfig:
    seed: int = 0
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    orca: OrcaParams = field(default_factory=OrcaParams)
    training: TrainConfig = field(default_factory=TrainConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    humans_see_robot: bool = False
    gamma_v_norm: float = 1.0  # speed normalization in the discount exponent
    digest: str = ""           # filled at load time, not a config key

    def require_file(self, kind: str) -> Path:
        value = getattr(self.paths, kind)
        if value is None:
            raise ConfigError(f"paths.{kind} is not set")
        return Path(value)


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_digest(raw: dict) -> str:
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    sections = {
        "scenario": ScenarioSpec,
        "rewards": RewardConfig,
        "orca": OrcaParams,
        "training": TrainConfig,
        "planner": PlannerConfig,
        "paths": PathsConfig,
    }
    allowed = set(sections) | {"seed", "humans_see_robot", "gamma_v_norm"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    kwargs = {name: _build(cls, raw.get(name, {}), name) for name, cls in sections.items()}
    cfg = RunConfig(
        seed=int(raw.get("seed", 0)),
        humans_see_robot=bool(raw.get("humans_see_robot", False)),
        gamma_v_norm=float(raw.get("gamma_v_norm", 1.0)),
        digest=config_digest(raw),
        **kwargs,
    )
    # Propagate the top-level seed into sections that did not pin their own.
    if "seed" not in raw.get("scenario", {}):
        cfg.scenario.seed = cfg.seed
    if "seed" not in raw.get("training", {}):
        cfg.training.seed = cfg.seed
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    cfg = parse_config(raw)
    for kind in ("map", "checkpoint"):
        value = getattr(cfg.paths, kind)
        if value is not None and not Path(value).exists():
            raise ConfigError(f"paths.{kind}: file does not exist: {value}")
    return cfg

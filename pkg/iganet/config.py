"""
Run configuration.

Resolution order, later wins: defaults, config file (flat ``section.field=value``
lines), environment (``IGANET_<SECTION>_<FIELD>``, a ``.env`` file is loaded
on import), command-line overrides.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from dotenv import dotenv_values, load_dotenv

from iganet.errors import ConfigError

load_dotenv()

ENV_PREFIX = "IGANET_"


@dataclass(frozen=True)
class PhysicsConfig:
    kappa: float = 2.0
    dipole_position: tuple[float, ...] = (0.2, 0.2, 0.2)
    dipole_moment: tuple[float, ...] = (0.0, 0.1, 0.1)
    permittivity: float = 1.0


@dataclass(frozen=True)
class DiscretizationConfig:
    degree: int = 1
    refinement: int = 1


@dataclass(frozen=True)
class QuadratureConfig:
    regular_order: int = 4
    near_order: int = 8
    near_factor: float = 1.0
    singular_order: int = 8
    rhs_order: int = 8
    field_order: int = 8


@dataclass(frozen=True)
class SolverConfig:
    method: str = "lu"
    tol: float = 1e-10
    restart: int = 50
    max_iter: int = 1000


@dataclass(frozen=True)
class NetworkConfig:
    hidden: tuple[int, ...] = (50, 50)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainingConfig:
    dataset_size: int = 100
    r_min: float = 0.6
    r_max: float = 1.0
    train_fraction: float = 0.25
    stop_epsilon: float = 2e-8
    max_steps: int = 200000
    checkpoint_every: int = 500
    log_every: int = 100
    seed: int = 0


@dataclass(frozen=True)
class EvaluationConfig:
    points: int = 200
    radius: float = 2.0
    seed: int = 0


@dataclass(frozen=True)
class ConvergenceConfig:
    levels: tuple[int, ...] = (1, 2, 3)


@dataclass(frozen=True)
class PathsConfig:
    cache_dir: str = ".iganet_cache"
    output_dir: str = "output"
    database: str = "iganet.db"


@dataclass(frozen=True)
class RuntimeConfig:
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)


@dataclass(frozen=True)
class RunConfig:
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    convergence: ConvergenceConfig = field(default_factory=ConvergenceConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    def to_dict(self) -> dict[str, dict[str, Any]]:
        return {
            f.name: {k: list(v) if isinstance(v, tuple) else v
                     for k, v in dataclasses.asdict(getattr(self, f.name)).items()}
            for f in dataclasses.fields(self)
        }

    def provenance_dict(self) -> dict[str, dict[str, Any]]:
        """``to_dict`` without the sections that do not influence numerical results."""
        data = self.to_dict()
        data.pop("runtime")
        data.pop("paths")
        return data

    def config_hash(self) -> str:
        dump = json.dumps(self.provenance_dict(), sort_keys=True)
        return hashlib.sha256(dump.encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        """Full configuration for output headers; the hash covers only ``provenance_dict``."""
        return {"config_hash": self.config_hash(), "config": self.to_dict()}

    def get(self, key: str) -> Any:
        section, name = _split_key(self, key)
        return getattr(getattr(self, section), name)


def _split_key(config: RunConfig, key: str) -> tuple[str, str]:
    section, _, name = key.strip().partition(".")
    sections = {f.name for f in dataclasses.fields(config)}
    if section not in sections or not name:
        raise ConfigError(f"unknown config key {key!r}")
    names = {f.name for f in dataclasses.fields(getattr(config, section))}
    if name not in names:
        raise ConfigError(f"unknown config key {key!r}")
    return section, name


def _parse_value(key: str, raw: str, default: Any) -> Any:
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            parts = [p for p in text.strip("()[] ").split(",") if p.strip()]
            return tuple(kind(p.strip()) for p in parts)
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key}={raw!r}: {exc}") from exc


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Return a copy with every ``section.field`` override parsed by the type of its default."""
    sections: dict[str, dict[str, Any]] = {}
    for key, raw in overrides.items():
        section, name = _split_key(config, key)
        current = getattr(getattr(config, section), name)
        value = raw if not isinstance(raw, str) else _parse_value(key, raw, current)
        sections.setdefault(section, {})[name] = value
    updates = {
        section: dataclasses.replace(getattr(config, section), **values)
        for section, values in sections.items()
    }
    return dataclasses.replace(config, **updates)


def _environment_overrides(config: RunConfig, environ: Mapping[str, str]) -> dict[str, str]:
    found = {}
    for f in dataclasses.fields(config):
        for leaf in dataclasses.fields(getattr(config, f.name)):
            name = f"{ENV_PREFIX}{f.name}_{leaf.name}".upper()
            if name in environ:
                found[f"{f.name}.{leaf.name}"] = environ[name]
    return found


def parse_assignments(items: Optional[list[str]]) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def load_config(
    path: Optional[str | Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    config = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = {k: v for k, v in dotenv_values(path).items() if v is not None}
        config = apply_overrides(config, values)
    config = apply_overrides(config, _environment_overrides(config, os.environ if environ is None else environ))
    if overrides:
        config = apply_overrides(config, {k: v for k, v in overrides.items() if v is not None})
    _validate(config)
    return config


def _validate(config: RunConfig) -> None:
    if config.solver.method not in ("lu", "gmres"):
        raise ConfigError(f"solver.method must be 'lu' or 'gmres', got {config.solver.method!r}")
    if config.discretization.degree < 1:
        raise ConfigError("discretization.degree must be at least 1")
    if config.discretization.refinement < 0:
        raise ConfigError("discretization.refinement must be non-negative")
    if config.runtime.threads < 1:
        raise ConfigError("runtime.threads must be at least 1")
    if len(config.physics.dipole_position) != 3 or len(config.physics.dipole_moment) != 3:
        raise ConfigError("dipole position and moment need three components")
    if not config.physics.permittivity > 0:
        raise ConfigError("physics.permittivity must be positive")
    if not 0.0 < config.training.train_fraction < 1.0:
        raise ConfigError("training.train_fraction must lie in (0, 1)")

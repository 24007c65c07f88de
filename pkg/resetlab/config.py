"""Experiment configuration: YAML files, dotted overrides and a validated schema.

Files are deep-merged left to right, ``--set`` overrides are applied on top and
the result is validated into frozen dataclasses before anything runs.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import MISSING, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import yaml

from .env import DeploymentConfig, GoalKind, load_grid
from .errors import ConfigError
from .learner import AgentConfig
from .success_critic import CriticConfig
from .switching import ControllerKind, SwitchConfig

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "RESETLAB_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


def _yaml_problem(exc: yaml.YAMLError) -> str:
    return " ".join(str(exc).split())


def load_yaml_files(paths: Iterable[str]) -> Dict[str, Any]:
    merged: Dict[str, Any] = {}
    for p in paths:
        try:
            with open(p, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError([f"{p}: cannot read ({e.strerror or e})"]) from e
        except yaml.YAMLError as e:
            raise ConfigError([f"{p}: invalid YAML: {_yaml_problem(e)}"]) from e
        if not isinstance(data, dict):
            raise ConfigError([f"{p}: top level must be a mapping"])
        merged = deep_merge(merged, data)
    return merged


def deep_merge(a: Dict[str, Any], b: Dict[str, Any]) -> Dict[str, Any]:
    """Deep-merge dict b into a and return the result (new dict)."""
    out = copy.deepcopy(a)
    for k, v in (b or {}).items():
        if k in out and isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(data: Dict[str, Any], path: str, value: Any) -> Dict[str, Any]:
    """Return a copy of ``data`` with the dotted ``path`` set to ``value``."""
    keys = path.split(".")
    if not all(keys):
        raise ConfigError([f"{path}: empty key in dotted path"])
    out = copy.deepcopy(data)
    node = out
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = {}
            node[k] = nxt
        node = nxt
    node[keys[-1]] = value
    return out


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``dotted.path=value`` strings; values are parsed as YAML scalars."""
    out = data
    problems = []
    for item in overrides:
        path, sep, raw = item.partition("=")
        if not sep or not path.strip():
            problems.append(f"{item}: expected dotted.path=value")
            continue
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            problems.append(f"{item}: invalid YAML value: {_yaml_problem(e)}")
            continue
        out = set_path(out, path.strip(), value)
    if problems:
        raise ConfigError(problems, header="Invalid overrides")
    return out


@dataclass(frozen=True)
class EnvSection:
    # builtin layout id or path to a map file
    grid: str = "four_rooms"


@dataclass(frozen=True)
class ControllerSection:
    kind: ControllerKind = ControllerKind.RISC
    rc_threshold: float = 0.2
    rc_competency_goal: GoalKind = GoalKind.RESET

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ControllerKind(self.kind))
        object.__setattr__(
            self, "rc_competency_goal", GoalKind(self.rc_competency_goal)
        )
        if not (0.0 <= self.rc_threshold <= 1.0):
            raise ValueError(f"rc_threshold must be in [0, 1], got {self.rc_threshold}")


@dataclass(frozen=True)
class EvaluationSection:
    every: int = 1_000
    episodes: int = 10
    snapshot_steps: Tuple[int, ...] = ()
    trace_switches: bool = True

    def __post_init__(self) -> None:
        if self.every < 0:
            raise ValueError(f"every must be >= 0, got {self.every}")
        if self.episodes < 1:
            raise ValueError(f"episodes must be >= 1, got {self.episodes}")
        if any(s < 0 for s in self.snapshot_steps):
            raise ValueError(f"snapshot_steps must be >= 0, got {self.snapshot_steps}")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    env: EnvSection = field(default_factory=EnvSection)
    controller: ControllerSection = field(default_factory=ControllerSection)
    agent: AgentConfig = field(default_factory=AgentConfig)
    critic: CriticConfig = field(default_factory=CriticConfig)
    switching: SwitchConfig = field(default_factory=SwitchConfig)
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    evaluation: EvaluationSection = field(default_factory=EvaluationSection)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: Optional[str] = None
    # CSV of transitions loaded into replay before training
    preload: Optional[str] = None

    def run_dir(self, seed: int, root: Optional[str] = None) -> Path:
        return output_root(self, root) / self.name / f"seed_{seed}"


SECTIONS = {
    "env": EnvSection,
    "controller": ControllerSection,
    "agent": AgentConfig,
    "critic": CriticConfig,
    "switching": SwitchConfig,
    "deployment": DeploymentConfig,
    "evaluation": EvaluationSection,
}
TOP_LEVEL = {"schema_version", "name", "seeds", "output_dir", "preload"} | set(SECTIONS)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _coerce(value: Any, default: Any) -> Any:
    """Convert a YAML value to the type of the field's default."""
    if isinstance(default, Enum):
        return type(default)(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"expected true or false, got {value!r}")
        return value
    if _is_int(default):
        if not _is_int(value):
            raise ValueError(f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        # PyYAML reads exponents without a dot (1e-3) as strings
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ValueError(f"expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(_is_int(v) for v in value):
            raise ValueError(f"expected a list of integers, got {value!r}")
        return tuple(value)
    if not isinstance(value, str):
        raise ValueError(f"expected a string, got {value!r}")
    return value


def _field_default(f) -> Any:
    if f.default is not MISSING:
        return f.default
    return f.default_factory()  # type: ignore[misc]


def _build_section(name: str, cls: type, raw: Any, problems: List[str]) -> Any:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{name}: expected a mapping, got {raw!r}")
        return None
    known = {f.name: f for f in fields(cls)}
    for key in sorted(set(raw) - set(known)):
        problems.append(f"{name}.{key}: unknown key")
    kwargs = {}
    for key, f in known.items():
        if key not in raw:
            continue
        try:
            kwargs[key] = _coerce(raw[key], _field_default(f))
        except ValueError as e:
            problems.append(f"{name}.{key}: {e}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        problems.append(f"{name}: {e}")
        return None


def from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """Validate a merged mapping, reporting every offending field at once."""
    problems: List[str] = []
    if not isinstance(data, dict):
        raise ConfigError([f"top level must be a mapping, got {data!r}"])
    for key in sorted(set(data) - TOP_LEVEL):
        problems.append(f"{key}: unknown key")

    version = data.get("schema_version")
    if version is None:
        problems.append(f"schema_version: required (expected {SCHEMA_VERSION})")
    elif version != SCHEMA_VERSION:
        problems.append(
            f"schema_version: unsupported version {version!r}"
            f" (expected {SCHEMA_VERSION})"
        )

    sections = {
        name: _build_section(name, cls, data.get(name), problems)
        for name, cls in SECTIONS.items()
    }

    top: Dict[str, Any] = {}
    defaults = ExperimentConfig()
    name = data.get("name", defaults.name)
    if not isinstance(name, str) or not name or "/" in name:
        problems.append(f"name: expected a non-empty label without '/', got {name!r}")
    else:
        top["name"] = name
    seeds = data.get("seeds", list(defaults.seeds))
    if (
        not isinstance(seeds, (list, tuple))
        or not seeds
        or not all(_is_int(s) and s >= 0 for s in seeds)
    ):
        problems.append(
            f"seeds: expected a non-empty list of integers >= 0, got {seeds!r}"
        )
    elif len(set(seeds)) != len(seeds):
        problems.append(f"seeds: duplicate seeds in {list(seeds)}")
    else:
        top["seeds"] = tuple(seeds)
    for key in ("output_dir", "preload"):
        value = data.get(key)
        if value is not None and not isinstance(value, str):
            problems.append(f"{key}: expected a path string, got {value!r}")
        else:
            top[key] = value

    env = sections["env"]
    if env is not None:
        try:
            load_grid(env.grid)
        except ValueError as e:
            problems.append(f"env.grid: {e}")
    deployment, evaluation = sections["deployment"], sections["evaluation"]
    if deployment is not None and evaluation is not None:
        total = deployment.total_train_steps
        late = [s for s in evaluation.snapshot_steps if s >= total]
        if late:
            problems.append(
                f"evaluation.snapshot_steps: {late} not below "
                f"total_train_steps={deployment.total_train_steps}"
            )

    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(schema_version=SCHEMA_VERSION, **top, **sections)


def load_config(
    paths: Iterable[str], overrides: Iterable[str] = ()
) -> ExperimentConfig:
    return from_dict(apply_overrides(load_yaml_files(paths), overrides))


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in SECTIONS:
            out[f.name] = {
                sf.name: _plain(getattr(value, sf.name)) for sf in fields(value)
            }
        else:
            out[f.name] = _plain(value)
    return out


def dump_yaml(config: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=True, default_flow_style=False)


def canonical_json(config: ExperimentConfig) -> str:
    return json.dumps(to_dict(config), sort_keys=True, separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def output_root(
    config: Optional[ExperimentConfig] = None, root: Optional[str] = None
) -> Path:
    """Explicit root, then the config's ``output_dir``, then the environment."""
    if root:
        return Path(root)
    if config is not None and config.output_dir:
        return Path(config.output_dir)
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT)

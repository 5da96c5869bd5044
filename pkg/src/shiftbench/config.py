"""Experiment configuration and its INI-style file format.

Every section maps onto one config dataclass; keys are the dataclass field
names. Missing keys take the built-in defaults, which reproduce the
published experimental setup.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

from .dynamics import Assign, Dependency, DependencyConfig, Protocol, RegionalConfig
from .errors import ConfigError
from .objectbase import DbParams
from .policies import PolicyConfig, PolicyKind
from .storage import Placement, Replacement, StorageConfig

DEFAULT_H_GRID = (0.0, 1e-4, 6e-4, 1e-2, 1.0)
DEFAULT_POLICIES = (PolicyKind.NONE, PolicyKind.PRP, PolicyKind.GP, PolicyKind.AGGRESSIVE)


@dataclass(frozen=True)
class ExperimentConfig:
    db: DbParams = field(default_factory=DbParams)
    storage: StorageConfig = field(default_factory=StorageConfig)
    regional: RegionalConfig = field(default_factory=RegionalConfig)
    dependency: DependencyConfig = field(default_factory=DependencyConfig)
    integrated: bool = False
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    num_transactions: int = 10_000
    traversal_depth: int = 2
    seed: int = 0
    # sweep settings
    h_sweep: tuple[float, ...] = DEFAULT_H_GRID
    policies: tuple[PolicyKind, ...] = DEFAULT_POLICIES
    seeds: tuple[int, ...] = (0,)

    def validate(self) -> None:
        self.db.validate()
        self.storage.validate()
        self.regional.validate()
        self.dependency.validate()
        self.policy.validate()
        if self.num_transactions < 0:
            raise ConfigError("experiment.num_transactions must be >= 0")
        if self.traversal_depth < 0:
            raise ConfigError("experiment.traversal_depth must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("experiment.seed must be a 64-bit unsigned integer")
        for h in self.h_sweep:
            if not 0 <= h <= 1:
                raise ConfigError(f"sweep.h_sweep value {h} outside [0, 1]")

    def with_h(self, h: float) -> ExperimentConfig:
        return replace(self, regional=replace(self.regional, h=h))

    def with_policy(self, kind: PolicyKind | str) -> ExperimentConfig:
        return replace(self, policy=replace(self.policy, kind=PolicyKind(kind)))

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed)

    def digest(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


# INI section -> ExperimentConfig attribute holding that section's dataclass
_SECTIONS = {
    "database": "db",
    "storage": "storage",
    "regional": "regional",
    "dependency": "dependency",
    "policy": "policy",
}
_EXPERIMENT_KEYS = ("integrated", "num_transactions", "traversal_depth", "seed")
_SWEEP_KEYS = ("h_sweep", "policies", "seeds")


def _fmt(value) -> str:
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if value is None:
        return "none"
    return repr(value) if isinstance(value, float) else str(value)


def dumps(config: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    for section, attr in _SECTIONS.items():
        obj = getattr(config, attr)
        cp[section] = {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj)}
    cp["experiment"] = {k: _fmt(getattr(config, k)) for k in _EXPERIMENT_KEYS}
    cp["sweep"] = {k: _fmt(getattr(config, k)) for k in _SWEEP_KEYS}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


_ENUMS = {
    ("regional", "protocol"): Protocol,
    ("regional", "object_assign_method"): Assign,
    ("dependency", "protocol"): Dependency,
    ("policy", "kind"): PolicyKind,
    ("storage", "replacement"): Replacement,
    ("storage", "placement"): Placement,
}


def _parse(section: str, key: str, raw: str, default):
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if (section, key) in _ENUMS:
            return _ENUMS[section, key](raw.lower())
        if key == "policies":
            return tuple(PolicyKind(v.strip().lower()) for v in raw.split(",") if v.strip())
        if key == "h_sweep":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if key == "seeds":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if isinstance(default, bool):
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if raw.lower() == "none" and key in ("init_prob_w", "cycles_rest_weight"):
            return None
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return float(raw)
        return raw.lower()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def loads(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    config = base or ExperimentConfig()
    known = set(_SECTIONS) | {"experiment", "sweep"}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown config section [{section}]")
    updates = {}
    for section, attr in _SECTIONS.items():
        if section not in cp:
            continue
        obj = getattr(config, attr)
        names = {f.name for f in fields(obj)}
        kw = {}
        for key, raw in cp[section].items():
            if key not in names:
                raise ConfigError(f"unknown key {section}.{key}")
            kw[key] = _parse(section, key, raw, getattr(obj, key))
        updates[attr] = dataclasses.replace(obj, **kw)
    for section, keys in (("experiment", _EXPERIMENT_KEYS), ("sweep", _SWEEP_KEYS)):
        if section not in cp:
            continue
        for key, raw in cp[section].items():
            if key not in keys:
                raise ConfigError(f"unknown key {section}.{key}")
            updates[key] = _parse(section, key, raw, getattr(config, key))
    return replace(config, **updates)


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text)

"""Run configurations: JSON profiles parsed into frozen dataclasses.

Every profile carries ``"schema_version": 1`` and a ``"command"`` key; unknown
keys and missing mandatory keys are schema errors.
"""
from dataclasses import MISSING, asdict, dataclass, fields
import json
import logging
import os

from ddkf.errors import SchemaError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def load_profile(path):
    """Read a JSON profile into a dict."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise SchemaError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"config file {path} must hold a JSON object")
    return data


def from_dict(cls, data):
    """Build config dataclass ``cls`` from a dict, rejecting unknown and missing keys."""
    if not isinstance(data, dict):
        raise SchemaError(f"{cls.__name__} expects a JSON object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise SchemaError(f"unknown keys for {cls.__name__}: {unknown}")
    missing = sorted(name for name, f in known.items()
                     if name not in data and f.default is MISSING and f.default_factory is MISSING)
    if missing:
        raise SchemaError(f"missing mandatory keys for {cls.__name__}: {missing}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    try:
        return cls(**data)
    except TypeError as e:
        raise SchemaError(f"invalid {cls.__name__}: {e}") from e


def canonical_json(config):
    """Sorted-key compact JSON of a config dataclass (the hashable payload)."""
    return json.dumps(asdict(config), sort_keys=True, separators=(',', ':'))


def require_int(name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise SchemaError(f"{name} must be an integer >= {minimum}, got {value!r}")


def require_positive(name, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        raise SchemaError(f"{name} must be a positive number, got {value!r}")


def resolve_path(path, base_dir):
    if path is None or os.path.isabs(path) or base_dir is None:
        return path
    return os.path.join(base_dir, path)


def check_command(config, expected):
    if config.command != expected:
        raise SchemaError(f"profile is for command {config.command!r}, not {expected!r}")
    if config.schema_version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {config.schema_version!r}")


@dataclass(frozen=True)
class EstimateConfig:
    data: str
    L: int = None
    L_candidates: tuple = None
    max_lag: int = 20
    command: str = "estimate-innovations"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        check_command(self, "estimate-innovations")
        if self.L is None and not self.L_candidates:
            raise SchemaError("estimate-innovations needs L or L_candidates")
        if self.L is not None:
            require_int("L", self.L)
        if self.L_candidates is not None:
            object.__setattr__(self, "L_candidates", tuple(self.L_candidates))
            for L in self.L_candidates:
                require_int("L_candidates entry", L)
        require_int("max_lag", self.max_lag)


@dataclass(frozen=True)
class BuildConfig:
    data: str
    T_p: int
    T_f: int
    n_x_bar: int
    L: int
    meas_var: float = None
    dare_tol: float = 1e-10
    dare_max_iter: int = 100000
    command: str = "build"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        check_command(self, "build")
        for name in ("T_p", "T_f", "n_x_bar", "L", "dare_max_iter"):
            require_int(name, getattr(self, name))
        if self.T_p < 2:
            raise SchemaError(f"T_p must be >= 2, got {self.T_p}")
        require_positive("dare_tol", self.dare_tol)
        if self.meas_var is not None:
            require_positive("meas_var", self.meas_var)


@dataclass(frozen=True)
class PredictConfig:
    model: str
    past: str
    future: str
    command: str = "predict"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        check_command(self, "predict")

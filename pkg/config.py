"""
Run configuration: per-problem defaults, TOML files, command-line overrides
"""
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from errors import ConfigError
from optimizer import Schedule, ScheduleKind
from problems import (CoffeeGeometry, ProblemSpec, default_boundary_series, default_property_table,
                      load_boundary_series, load_property_table, make_coffee_problem, make_toy_problem)
from testspace import BasisKind

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "VPINN_DATA_DIR"
PROBLEMS = ("toy", "coffee")


@dataclass
class RunConfig:
    """Every knob of a training, validation or oracle run"""
    problem: str = "toy"
    seed: int = 0
    quadrature_seed: int = 1
    hidden_layers: int = 5
    hidden_width: int = 32
    iterations: int = 20000
    schedule: str = "exponential"
    lr0: float = 1e-2
    lr_decay_rate: float = 0.9
    lr_decay_steps: int = 1000
    n_time: int = 128
    n_test: int = 20
    n_int: int = 128
    basis: str = "h10_sine"
    fixed_quadrature: bool = False
    normalize_loss: bool = False
    lagged_coefficients: bool = False
    boundary_flux: bool = True
    properties: Optional[str] = None
    boundary: Optional[str] = None
    data_dir: Optional[str] = None
    out_dir: str = "runs"
    checkpoint_every: int = 1000
    log_every: int = 100
    residual_dump_every: int = 0
    snapshot_steps: List[int] = field(default_factory=lambda: [1, 32, 64, 128])
    picard_tol: float = 1e-8
    picard_max: int = 50
    oracle_cells: int = 512
    oracle_steps: int = 512
    coffee_length_m: float = 0.3
    coffee_duration_s: float = 86400.0
    initial_temperature_c: float = 20.0
    with_control: bool = False

    @property
    def widths(self) -> List[int]:
        return [1] + [self.hidden_width] * self.hidden_layers + [self.n_time]

    def schedule_spec(self) -> Schedule:
        return Schedule.from_name(self.schedule, lr0=self.lr0, rate=self.lr_decay_rate,
                                  decay_steps=self.lr_decay_steps, total_steps=max(self.iterations, 1))

    def validate(self):
        """Collect every problem and raise once"""
        errors = []
        if self.problem not in PROBLEMS:
            errors.append(f"unknown problem '{self.problem}' (expected one of {PROBLEMS})")
        for name in ('hidden_layers', 'hidden_width', 'iterations', 'n_time', 'n_test', 'n_int',
                     'lr_decay_steps', 'checkpoint_every', 'log_every', 'picard_max',
                     'oracle_cells', 'oracle_steps'):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_int < 2:
            errors.append(f"n_int must be at least 2, got {self.n_int}")
        if self.residual_dump_every < 0:
            errors.append("residual_dump_every must be non-negative")
        if self.lr0 <= 0:
            errors.append(f"lr0 must be positive, got {self.lr0}")
        if not 0 < self.lr_decay_rate <= 1:
            errors.append(f"lr_decay_rate must be in (0, 1], got {self.lr_decay_rate}")
        if self.schedule not in [k.value for k in ScheduleKind]:
            errors.append(f"unknown schedule '{self.schedule}'")
        if self.basis not in [k.value for k in BasisKind]:
            errors.append(f"unknown basis '{self.basis}'")
        if self.picard_tol <= 0:
            errors.append("picard_tol must be positive")
        if self.oracle_cells < 8:
            errors.append(f"oracle_cells must be at least 8, got {self.oracle_cells}")
        if self.oracle_steps % self.n_time != 0:
            errors.append(f"oracle_steps ({self.oracle_steps}) must be a multiple of n_time ({self.n_time})")
        bad_steps = [n for n in self.snapshot_steps if not 1 <= n <= self.n_time]
        if bad_steps:
            errors.append(f"snapshot steps {bad_steps} outside [1, {self.n_time}]")
        if self.coffee_length_m <= 0 or self.coffee_duration_s <= 0:
            errors.append("coffee length and duration must be positive")
        for name in ('properties', 'boundary'):
            value = getattr(self, name)
            if value is not None and not self.resolve_path(value).exists():
                errors.append(f"{name} file not found: {value}")
        if errors:
            raise ConfigError("; ".join(errors))

    def resolve_path(self, value: str) -> Path:
        """Relative data paths are looked up in data_dir, then VPINN_DATA_DIR"""
        path = Path(value)
        if path.is_absolute() or path.exists():
            return path
        base = self.data_dir or os.environ.get(DATA_DIR_ENV)
        return Path(base) / path if base else path

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        """Short digest of everything except the output location"""
        payload = {k: v for k, v in self.to_dict().items() if k != 'out_dir'}
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:12]


class ProblemDefaults:
    """Default hyperparameters per problem"""

    DEFAULTS = {
        "toy": {
            "iterations": 20000,
            "schedule": "exponential",
            "lr0": 1e-2,
            "n_time": 128,
            "n_test": 20,
            "n_int": 128,
            "basis": "h10_sine",
            "snapshot_steps": [1, 32, 64, 128],
            "oracle_cells": 512,
            "oracle_steps": 512,
        },
        "coffee": {
            "iterations": 100000,
            "schedule": "cosine",
            "lr0": 1e-3,
            "n_time": 128,
            "n_test": 64,
            "n_int": 256,
            "basis": "h1_fourier",
            "fixed_quadrature": True,
            "normalize_loss": True,
            "snapshot_steps": [1, 32, 64, 128],
            "oracle_cells": 256,
            "oracle_steps": 512,
        },
    }

    @classmethod
    def get_default_config(cls, problem: str) -> RunConfig:
        if problem not in cls.DEFAULTS:
            raise ConfigError(f"unknown problem '{problem}' (expected one of {PROBLEMS})")
        return RunConfig(problem=problem, **cls.DEFAULTS[problem])


def load_toml(path) -> Dict[str, Any]:
    path = Path(path)
    try:
        with open(path, 'rb') as handle:
            data = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid TOML: {e}")
    # a [run] table is accepted as well as top-level keys
    return dict(data.get('run', data))


def apply_overrides(config: RunConfig, values: Dict[str, Any], source: str) -> RunConfig:
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"Unknown settings in {source}: {', '.join(unknown)}")
    for key, value in values.items():
        if value is None:
            continue
        setattr(config, key, list(value) if isinstance(value, tuple) else value)
    return config


def build_config(problem: Optional[str] = None, config_path: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Defaults for the problem, then the TOML file, then explicit overrides"""
    file_values = load_toml(config_path) if config_path else {}
    chosen = problem or file_values.get('problem') or "toy"
    config = ProblemDefaults.get_default_config(chosen)
    apply_overrides(config, {k: v for k, v in file_values.items() if k != 'problem'}, str(config_path))
    apply_overrides(config, overrides or {}, "command line")
    config.problem = chosen

    explicit = {k for k, v in {**file_values, **(overrides or {})}.items() if v is not None}
    if 'snapshot_steps' not in explicit:
        config.snapshot_steps = [n for n in config.snapshot_steps if n <= config.n_time] or [config.n_time]
    if 'oracle_steps' not in explicit and config.oracle_steps % config.n_time:
        config.oracle_steps = config.n_time * max(1, config.oracle_steps // config.n_time)
    config.validate()
    logger.debug(f"Resolved config {config.config_hash()}: {config.to_dict()}")
    return config


def build_problem(config: RunConfig) -> ProblemSpec:
    if config.problem == "toy":
        problem = make_toy_problem(n_time=config.n_time, n_test=config.n_test, n_int=config.n_int)
    else:
        table = (load_property_table(config.resolve_path(config.properties))
                 if config.properties else default_property_table())
        geometry = CoffeeGeometry(length_m=config.coffee_length_m, duration_s=config.coffee_duration_s,
                                  initial_temperature_c=config.initial_temperature_c)
        series = (load_boundary_series(config.resolve_path(config.boundary))
                  if config.boundary else
                  default_boundary_series(duration_s=config.coffee_duration_s,
                                          start_c=config.initial_temperature_c))
        problem = make_coffee_problem(table, series, geometry, n_time=config.n_time,
                                      n_test=config.n_test, n_int=config.n_int)
    basis = BasisKind(config.basis)
    if basis is not problem.basis_kind:
        problem = problem.with_overrides(basis_kind=basis)
    return problem

from __future__ import annotations

import hashlib
import json
import os
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ValidationError, validator

from .exceptions import ConfigError, GridError
from .grid import Grid, PotentialParams, build_grid, half_points
from .kernel import Kernel

MAX_WORKERS_ENV = "NLSTOOLS_MAX_WORKERS"


class Symmetry(str, Enum):
    symmetric = "symmetric"
    antisymmetric = "antisymmetric"
    asymmetric = "asymmetric"


class _Section(BaseModel):
    class Config:
        extra = "forbid"


def _positive(cls, v: float, values: dict, **kwargs):
    if v <= 0:
        raise ValueError("must be positive")
    return v


class GridConfig(_Section):
    half_width: float = 20.0
    spacing: float = 0.1

    _check_positive = validator("half_width", "spacing", allow_reuse=True)(_positive)

    @validator("spacing", always=True)
    def whole_number_of_points(cls, v: float, values: dict, **kwargs):
        if "half_width" in values:
            try:
                half_points(values["half_width"], v)
            except GridError as e:
                raise ValueError(e.msg)
        return v


class ContinuationConfig(_Section):
    """
    Branch tracing in the chemical potential mu
    """

    method: str = "arclength"
    mu_min: float = -0.5
    mu_max: float = 0.5
    mu_step: float = 1e-3
    ds0: float = 1e-2
    ds_min: float = 1e-3
    ds_max: float = 5e-2
    n_max: float = 10.0
    max_steps: int = 4000
    detect_pitchforks: bool = True
    follow_daughters: bool = True
    bisection_tol: float = 1e-4
    kick: float = 1e-3
    merge_tol: float = 1e-3

    _check_positive = validator(
        "mu_step", "ds0", "ds_min", "ds_max", "n_max", "max_steps", "bisection_tol", "kick", "merge_tol", allow_reuse=True
    )(_positive)

    @validator("method")
    def known_method(cls, v: str, values: dict, **kwargs):
        if v not in ("arclength", "natural"):
            raise ValueError(f"unknown continuation method {v}, expected 'arclength' or 'natural'")
        return v

    @validator("mu_max", always=True)
    def mu_range_nonempty(cls, v: float, values: dict, **kwargs):
        if "mu_min" in values and v <= values["mu_min"]:
            raise ValueError(f"mu range is empty: mu_max={v} <= mu_min={values['mu_min']}")
        return v

    @validator("ds_max", always=True)
    def step_bounds_ordered(cls, v: float, values: dict, **kwargs):
        ds_min, ds0 = values.get("ds_min"), values.get("ds0")
        if ds_min is not None and ds0 is not None and not ds_min <= ds0 <= v:
            raise ValueError(f"expected ds_min <= ds0 <= ds_max, got {ds_min}, {ds0}, {v}")
        return v


class NewtonConfig(_Section):
    tol: float = 1e-11
    max_iter: int = 30
    trivial_norm: float = 1e-8

    _check_positive = validator("tol", "max_iter", "trivial_norm", allow_reuse=True)(_positive)


class StabilityConfig(_Section):
    threshold: float = 1e-6
    track: bool = True

    _check_positive = validator("threshold", allow_reuse=True)(_positive)


class DynamicsConfig(_Section):
    mu: float = 0.19
    t_end: float = 300.0
    dt: float = 5e-3
    perturbation: str = "random"
    amplitude: float = 1e-3
    snapshot_every: float = 1.0
    phase_every: float = 0.2
    norm_tol: float = 1e-8
    onset_level: float = 0.5

    _check_positive = validator(
        "t_end", "dt", "snapshot_every", "phase_every", "norm_tol", "onset_level", allow_reuse=True
    )(_positive)

    @validator("perturbation")
    def known_perturbation(cls, v: str, values: dict, **kwargs):
        if v not in ("none", "random", "eigenvector"):
            raise ValueError(f"unknown perturbation {v}, expected 'none', 'random' or 'eigenvector'")
        return v

    @validator("amplitude")
    def non_negative_amplitude(cls, v: float, values: dict, **kwargs):
        if v < 0:
            raise ValueError("perturbation amplitude must be non-negative")
        return v


class OverlapsConfig(_Section):
    sigma_min: float = 0.1
    sigma_max: float = 12.0
    n_sigma: int = 120
    level: float = 0.01

    _check_positive = validator("sigma_min", "sigma_max", "n_sigma", "level", allow_reuse=True)(_positive)

    @property
    def sigmas(self) -> List[float]:
        return list(np.linspace(self.sigma_min, self.sigma_max, self.n_sigma))


class TwoModeConfig(_Section):
    norms: List[float] = [0.5, 1.0, 2.0, 5.0]
    n_min: float = 1e-3
    n_max: float = 8.0
    n_samples: int = 400
    portrait_norm: float = 5.0
    portrait_orbits: int = 12
    t_end: float = 2000.0
    dt: float = 0.5

    _check_positive = validator("n_min", "n_max", "n_samples", "portrait_norm", "portrait_orbits", "t_end", "dt", allow_reuse=True)(
        _positive
    )

    @validator("n_samples", always=True)
    def sweep_nonempty(cls, v: int, values: dict, **kwargs):
        if v < 2:
            raise ValueError("a norm sweep needs at least two samples")
        if "n_min" in values and "n_max" in values and values["n_max"] <= values["n_min"]:
            raise ValueError(f"n_max {values['n_max']} must exceed n_min {values['n_min']}")
        return v


class ThermalConfig(_Section):
    d: float = 1.0
    sigma0: float = 1.0
    beam_amplitude: float = 0.8
    beam_width: float = 2.0

    _check_positive = validator("d", "beam_width", allow_reuse=True)(_positive)


class RunConfig(_Section):
    """
    Complete description of a run; every default mirrors the reference double-well setup
    """

    grid: GridConfig = GridConfig()
    potential: PotentialParams = PotentialParams()
    kernel: Kernel = Kernel()
    kernel2: Optional[Kernel] = None
    s: int = 1
    delta: int = -1
    family: Symmetry = Symmetry.antisymmetric
    continuation: ContinuationConfig = ContinuationConfig()
    newton: NewtonConfig = NewtonConfig()
    stability: StabilityConfig = StabilityConfig()
    dynamics: DynamicsConfig = DynamicsConfig()
    overlaps: OverlapsConfig = OverlapsConfig()
    twomode: TwoModeConfig = TwoModeConfig()
    thermal: ThermalConfig = ThermalConfig()
    seed: int = 0

    @validator("s", "delta")
    def must_be_sign(cls, v: int, values: dict, **kwargs):
        if v not in (-1, 1):
            raise ValueError(f"must be +1 or -1, got {v}")
        return v

    @validator("family")
    def asymmetric_branches_are_not_seeded(cls, v: Symmetry, values: dict, **kwargs):
        if v == Symmetry.asymmetric:
            raise ValueError("asymmetric branches are reached through pitchforks, seed 'symmetric' or 'antisymmetric'")
        return v

    @property
    def kernels(self) -> Tuple[Kernel, Kernel]:
        return self.kernel, self.kernel2 if self.kernel2 is not None else self.kernel

    def build_grid(self) -> Grid:
        return build_grid(self.grid.half_width, self.grid.spacing)

    def copy_with(self, **updates) -> RunConfig:
        """Return a validated copy with top-level sections replaced"""
        data = self.dict()
        data.update(updates)
        return RunConfig.parse_obj(data)


def field_errors(e: ValidationError) -> List[dict]:
    return [{"field": ".".join(str(loc) for loc in err["loc"]), "message": err["msg"]} for err in e.errors()]


def parse_config(data: dict, path: Optional[str] = None) -> RunConfig:
    try:
        return RunConfig.parse_obj(data)
    except ValidationError as e:
        errors = field_errors(e)
        raise ConfigError(f"{len(errors)} invalid field(s)", errors=errors, path=path)


def load_config(path: Optional[str]) -> RunConfig:
    """
    Load a run configuration from a JSON file; `None` gives the default configuration
    """
    if path is None:
        return RunConfig()

    if not os.path.exists(path):
        raise ConfigError(f"config file {path} not found", path=path)

    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}", path=path)

    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object", path=path)

    config = parse_config(data, path=path)
    logger.debug(f"Loaded config from {path}")
    return config


def config_json(config: RunConfig) -> str:
    """Canonical JSON form, used for hashing and for the run manifest"""
    return json.dumps(config.dict(), sort_keys=True, separators=(",", ":"))


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(config_json(config).encode()).hexdigest()


def max_workers() -> int:
    value = os.environ.get(MAX_WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        logger.warning(f"Ignoring {MAX_WORKERS_ENV}={value}, expected an integer")
        return 1

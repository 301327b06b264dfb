"""Run configuration: defaulted, strictly validated, JSON round-trippable."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ._engine import SolverConfig
from .errors import ConfigError
from .kernels import BandwidthPolicy, KernelSpec
from .ratios import RatioGridPlan
from .simulation import DEFAULT_ESTIMATORS, SimConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a command-line run needs, with every field defaulted.

    ``simulation`` settings are only consulted by the simulate command; the
    shared numerics (bandwidths, kernel, ratio grid, solver, ridge) drive
    every command.
    """

    seed: int = 20240801
    estimand: str = "mean"
    custom_moment: str | None = None
    estimators: tuple = DEFAULT_ESTIMATORS
    ci_level: float = 0.95
    clip_floor: float = 1e-3
    ridge_scale: float | None = None
    grid_points: int = 100
    discrete: bool = False
    bandwidths: BandwidthPolicy = BandwidthPolicy()
    kernel: KernelSpec = KernelSpec()
    ratio_grid: RatioGridPlan = RatioGridPlan()
    solver: SolverConfig = SolverConfig()
    simulation: SimConfig = field(default_factory=SimConfig)
    rho_star: str | None = None
    workers: int | None = None

    def __post_init__(self):
        if self.estimand not in ("mean", "variance", "custom"):
            raise ConfigError("estimand must be mean, variance or custom")
        if self.estimand == "custom" and not self.custom_moment:
            raise ConfigError("custom estimand needs a custom_moment expression")
        if not 0.0 < self.ci_level < 1.0:
            raise ConfigError("ci_level must lie in (0, 1)")

    def sim_config(self) -> SimConfig:
        """Simulation settings with the shared numerics folded in."""
        return dataclasses.replace(
            self.simulation,
            seed=self.seed,
            estimand=self.estimand if self.estimand != "custom" else "mean",
            estimators=tuple(self.estimators),
            bandwidths=self.bandwidths,
            kernel=self.kernel,
            ratio_grid=self.ratio_grid,
            solver=self.solver,
            ridge_scale=self.ridge_scale,
            grid_points=self.grid_points,
            ci_level=self.ci_level,
            workers=self.workers,
        )


_NESTED = {
    "bandwidths": BandwidthPolicy,
    "kernel": KernelSpec,
    "ratio_grid": RatioGridPlan,
    "solver": SolverConfig,
    "simulation": SimConfig,
}

# SimConfig fields owned by the top level; rejected inside "simulation".
_SIM_SHADOWED = {
    "seed", "estimand", "estimators", "bandwidths", "kernel", "ratio_grid",
    "solver", "ridge_scale", "grid_points", "ci_level", "workers",
}


def _build(cls, payload: dict, path: str):
    if not isinstance(payload, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in payload.items():
        where = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown configuration key: {where}")
        if cls is SimConfig and key in _SIM_SHADOWED:
            raise ConfigError(
                f"{where} is owned by the top-level configuration; set it there"
            )
        if key in _NESTED and cls is RunConfig:
            kwargs[key] = _build(_NESTED[key], value, where)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration at {path or 'top level'}: {exc}") from exc


def config_from_dict(payload: dict) -> RunConfig:
    """Strict construction: unknown keys are rejected with their path."""
    payload = dict(payload)
    version = payload.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported configuration schema version {version}")
    return _build(RunConfig, payload, "")


def load_config(path: str | Path) -> RunConfig:
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration file is not valid JSON: {exc}") from exc
    return config_from_dict(payload)


def _plain(value, skip=()):
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {
            f.name: _plain(getattr(value, f.name))
            for f in fields(value)
            if f.name not in skip
        }
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config: RunConfig) -> dict:
    out = _plain(config)
    # simulation fields owned by the top level are echoed there only
    out["simulation"] = _plain(config.simulation, skip=_SIM_SHADOWED)
    out["schema_version"] = SCHEMA_VERSION
    return out


def resolved_config_json(config: RunConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, sort_keys=True)

"""Run configuration: one JSON document covering every stage of a run.

Precedence is flags over file over defaults. :meth:`RunConfig.to_dict`
emits every field, defaults included, and feeding that output back through
:meth:`RunConfig.from_dict` reproduces the run exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigurationError, InputError, SchemaError
from .evaluation import FULL_BIAS_LEVELS, FULL_SD_LEVELS, SweepGrid
from .filtering import FilterSettings
from .solver import SolverSettings
from .swarm import SwarmConfig
from .synthesis import ErrorModel

# reduced grid for CI runs: every acceptance cell plus a few in between
CI_BIAS_LEVELS = (0.0, 0.005, 0.02)
CI_SD_LEVELS = (0.0, 0.01, 0.05, 0.12)


@dataclass(frozen=True)
class SimulationSettings:
    duration: float = 300.0
    mocap_rate: float = 100.0
    motion_seed: int = 0
    max_speed: float = 2.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigurationError(f"duration must be positive, got {self.duration}")
        if not self.mocap_rate > 0 or not self.max_speed > 0:
            raise ConfigurationError("mocap_rate and max_speed must be positive")


@dataclass(frozen=True)
class SolveSettings:
    init_offset: float = 0.10  # per-axis offset from truth when truth is available


@dataclass(frozen=True)
class IOSettings:
    out: str = "out"
    rangings: str | None = None
    truth: str | None = None
    sweep_json: str | None = None
    estimates: tuple[str, ...] = ()


@dataclass(frozen=True)
class RunConfig:
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    filter: FilterSettings = field(default_factory=FilterSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    error_model: ErrorModel = field(default_factory=ErrorModel)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    solve: SolveSettings = field(default_factory=SolveSettings)
    sweep: SweepGrid = field(default_factory=SweepGrid)
    io: IOSettings = field(default_factory=IOSettings)

    def __post_init__(self):
        if self.filter.sample_rate != self.swarm.update_rate:
            raise ConfigurationError(
                f"filter.sample_rate {self.filter.sample_rate} differs from swarm.update_rate {self.swarm.update_rate}"
            )

    def to_dict(self) -> dict:
        return {
            "swarm": self.swarm.to_dict(),
            "filter": {"window_seconds": self.filter.window_seconds, "sample_rate": self.filter.sample_rate},
            "solver": self.solver.to_dict(),
            "error_model": self.error_model.to_dict(),
            "simulation": _plain(self.simulation),
            "solve": _plain(self.solve),
            "sweep": self.sweep.to_dict(),
            "io": {**_plain(self.io), "estimates": list(self.io.estimates)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        defaults = cls().to_dict()
        merged = {}
        for name in _SECTIONS:
            sec = d.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigurationError(f"config section {name!r} must be an object")
            extra = set(sec) - set(defaults[name])
            if extra:
                raise ConfigurationError(f"unknown key(s) in {name!r}: {', '.join(sorted(extra))}")
            merged[name] = {**defaults[name], **sec}
        try:
            io = merged["io"]
            return cls(
                swarm=SwarmConfig.from_dict(merged["swarm"]),
                filter=FilterSettings(**merged["filter"]),
                solver=SolverSettings.from_dict(merged["solver"]),
                error_model=ErrorModel(**merged["error_model"]),
                simulation=SimulationSettings(**merged["simulation"]),
                solve=SolveSettings(**merged["solve"]),
                sweep=SweepGrid.from_dict(merged["sweep"]),
                io=IOSettings(**{**io, "estimates": tuple(io.get("estimates") or ())}),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigurationError(f"invalid configuration: {exc}") from None

    def with_rate(self, rate: float) -> "RunConfig":
        return replace(
            self,
            swarm=replace(self.swarm, update_rate=float(rate)),
            filter=replace(self.filter, sample_rate=float(rate)),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        """Set every seed (noise, motion, restarts, sweep base) to ``seed``."""
        seed = int(seed)
        return replace(
            self,
            error_model=replace(self.error_model, rng_seed=seed),
            solver=replace(self.solver, rng_seed=seed),
            simulation=replace(self.simulation, motion_seed=seed),
            sweep=replace(self.sweep, base_seed=seed),
        )


_SECTIONS = ("swarm", "filter", "solver", "error_model", "simulation", "solve", "sweep", "io")


def _plain(obj) -> dict:
    return {k: getattr(obj, k) for k in obj.__dataclass_fields__}


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: top level must be an object")
    return RunConfig.from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def preset_grid(name: str, base: SweepGrid) -> SweepGrid:
    """Replace the level lists of ``base`` by a named preset."""
    if name == "full":
        return replace(base, bias_levels=FULL_BIAS_LEVELS, random_sd_levels=FULL_SD_LEVELS)
    if name == "ci":
        return replace(base, bias_levels=CI_BIAS_LEVELS, random_sd_levels=CI_SD_LEVELS)
    raise InputError(f"unknown grid preset {name!r} (expected full, ci or 1x1)")

"""Declarative run configuration (YAML) with command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .active import RunConfig
from .assignment import GAConfig
from .gp import GPFitConfig

MODES = ("simulate", "aci", "rta", "compare")


class ConfigError(ValueError):
    pass


@dataclass
class PopulationSection:
    Q: int = 100
    n: int = 100
    edge_prob: float = 0.08
    beta: str | dict = "random"  # "random" or {"beta_own": 2x3, "beta_neighbor": 2x3}
    beta_range: list = field(default_factory=lambda: [-5.0, 5.0])
    noise_sd: float = 1.0
    path: str | None = None  # defaults to <out>/population


@dataclass
class RunSection:
    M: int = 20
    T: int = 5
    alpha: float = 0.1
    grid: int = 101
    min_separation: float = 0.05
    metric: str = "euclidean"
    standardize: bool = True
    variance_threshold: float | None = None
    workers: int = 1


@dataclass
class GASection:
    population_size: int = 40
    epochs: int = 200
    early_stop_patience: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float | None = None


@dataclass
class GPSection:
    restarts: int = 8
    maxiter: int = 200


@dataclass
class RTASection:
    levels: int | None = None
    budget: int | None = None
    match_trace: str | None = None  # defaults to <out>/aci/trace.json when present


@dataclass
class SeedSection:
    population: int = 0
    ga: int = 0
    run: int = 0


@dataclass
class CompareSection:
    aci_trace: str | None = None
    rta_trace: str | None = None


@dataclass
class CliConfig:
    mode: str = "simulate"
    out: str = "runs"
    population: PopulationSection = field(default_factory=PopulationSection)
    run: RunSection = field(default_factory=RunSection)
    ga: GASection = field(default_factory=GASection)
    gp: GPSection = field(default_factory=GPSection)
    rta: RTASection = field(default_factory=RTASection)
    seeds: SeedSection = field(default_factory=SeedSection)
    compare: CompareSection = field(default_factory=CompareSection)

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.population.Q < 1 or self.population.n < 2:
            raise ConfigError("population needs Q >= 1 and n >= 2")
        if not 0 < self.population.edge_prob <= 1:
            raise ConfigError("edge_prob must be in (0, 1]")
        if isinstance(self.population.beta, str) and self.population.beta != "random":
            raise ConfigError("population.beta must be 'random' or a coefficient mapping")
        try:
            self.run_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def run_config(self) -> RunConfig:
        r = self.run
        return RunConfig(
            M=r.M,
            T=r.T,
            alpha=r.alpha,
            grid_size=r.grid,
            min_separation=r.min_separation,
            metric=r.metric,
            standardize=r.standardize,
            seed=self.seeds.run,
            ga=GAConfig(**dataclasses.asdict(self.ga), seed=self.seeds.ga),
            gp=GPFitConfig(restarts=self.gp.restarts, maxiter=self.gp.maxiter),
            variance_threshold=r.variance_threshold,
            workers=r.workers,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def population_dir(self) -> Path:
        return Path(self.population.path) if self.population.path else Path(self.out) / "population"


def _merge(obj, data: dict, where: str):
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown config key {where}{key!r}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be a mapping")
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)


def from_mapping(data: dict | None) -> CliConfig:
    cfg = CliConfig()
    _merge(cfg, data or {}, "")
    return cfg


def load_config(path) -> CliConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_mapping(data)


def dump_config(cfg: CliConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)

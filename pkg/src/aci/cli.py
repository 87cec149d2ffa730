"""Command-line entry point: ``aci --mode {simulate|aci|rta|compare}``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from ._kernels import backend
from .active import RunTrace, rta_budget_from, run_aci, run_rta
from .config import ConfigError, CliConfig, dump_config, from_mapping, load_config
from .simulation import OutcomeModelParams, generate_population, simulation_oracle, true_effect_curves

log = logging.getLogger("aci")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TRUNCATED = 4

# flag -> (section, key)
OVERRIDES = {
    "seed_population": ("seeds", "population"),
    "seed_run": ("seeds", "run"),
    "seed_ga": ("seeds", "ga"),
    "networks": ("population", "Q"),
    "nodes": ("population", "n"),
    "levels": ("run", "T"),
    "min_window": ("run", "M"),
    "alpha": ("run", "alpha"),
    "grid": ("run", "grid"),
    "population": ("population", "path"),
    "aci_trace": ("compare", "aci_trace"),
    "rta_trace": ("compare", "rta_trace"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aci", description=__doc__)
    p.add_argument("--config", type=Path, help="YAML config file; flags override its values")
    p.add_argument("--mode", choices=["simulate", "aci", "rta", "compare"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed-population", type=int)
    p.add_argument("--seed-run", type=int)
    p.add_argument("--seed-ga", type=int)
    p.add_argument("--networks", type=int, help="number of networks Q")
    p.add_argument("--nodes", type=int, help="nodes per network n")
    p.add_argument("--levels", type=int, help="selected levels T")
    p.add_argument("--min-window", type=int, help="minimum in-window count M")
    p.add_argument("--alpha", type=float, help="target window width")
    p.add_argument("--grid", type=int, help="grid points on [0, 1]")
    p.add_argument("--population", help="population directory (default <out>/population)")
    p.add_argument("--aci-trace", help="ACI trace for compare mode")
    p.add_argument("--rta-trace", help="RTA trace for compare mode")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> CliConfig:
    cfg = load_config(args.config) if args.config else from_mapping({})
    if args.mode:
        cfg.mode = args.mode
    if args.out:
        cfg.out = args.out
    for flag, (section, key) in OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(getattr(cfg, section), key, value)
    return cfg.validate()


def _run_manifest(cfg: CliConfig, extra: dict) -> dict:
    return {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "backend": backend(),
        "argv": sys.argv,
        "seeds": {"population": cfg.seeds.population, "ga": cfg.seeds.ga, "run": cfg.seeds.run},
        "config": cfg.to_dict(),
        **extra,
    }


def cmd_simulate(cfg: CliConfig) -> int:
    pc = cfg.population
    model = None
    if isinstance(pc.beta, dict):
        model = OutcomeModelParams(pc.beta["beta_own"], pc.beta["beta_neighbor"], pc.noise_sd)
    pop = generate_population(
        Q=pc.Q,
        n=pc.n,
        edge_prob=pc.edge_prob,
        seed=cfg.seeds.population,
        model=model,
        noise_sd=pc.noise_sd,
        beta_range=tuple(pc.beta_range),
    )
    pop.meta["beta_policy"] = "fixed" if model is not None else "random"
    out = cfg.population_dir()
    io.save_population(pop, out, extra={"config": cfg.to_dict()})
    log.info("wrote %d networks of %d nodes to %s", pc.Q, pc.n, out)
    return EXIT_OK


def _load_sim(cfg: CliConfig):
    pop = io.load_population(cfg.population_dir())
    if pop.model is None:
        raise ConfigError("population has no model.json; a synthetic population is required to run experiments")
    return pop


def _write_run(cfg: CliConfig, trace: RunTrace, method: str, truth) -> Path:
    d = Path(cfg.out) / method
    d.mkdir(parents=True, exist_ok=True)
    io.write_trace(d / "trace.json", trace)
    io.write_stage_curves(d / "curves", trace)
    io.write_eise_report(d / "eise.csv", trace)
    io.write_curve_csv(d / "truth.csv", list(truth))
    (d / "config.yaml").write_text(dump_config(cfg))
    manifest = _run_manifest(cfg, {"method": method, "population": trace.meta["population"]})
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return d


def cmd_run(cfg: CliConfig, method: str) -> int:
    pop = _load_sim(cfg)
    rc = cfg.run_config()
    truth = true_effect_curves(pop, rc.grid)
    oracle = simulation_oracle(pop, cfg.seeds.run)
    fp = io.fingerprint(pop.networks, pop.model)
    if method == "aci":
        trace = run_aci(pop.networks, oracle, rc, truth)
    else:
        n_u, N_u = cfg.rta.levels, cfg.rta.budget
        match = cfg.rta.match_trace or Path(cfg.out) / "aci" / "trace.json"
        if (n_u is None or N_u is None) and Path(match).exists():
            m_levels, m_budget = rta_budget_from(io.read_trace(match))
            n_u = m_levels if n_u is None else n_u
            N_u = m_budget if N_u is None else N_u
        n_u = rc.T + 2 if n_u is None else n_u
        N_u = n_u if N_u is None else N_u
        trace = run_rta(pop.networks, oracle, rc, n_u, N_u, truth)
    trace.meta["population"] = fp
    d = _write_run(cfg, trace, method, truth)
    log.info("%s: %d stages, %d networks, written to %s", method, len(trace.stages), len(trace.consumed), d)
    if trace.truncated:
        log.warning("%s run truncated: %s", method, trace.stop_reason)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_compare(cfg: CliConfig) -> int:
    a = cfg.compare.aci_trace or Path(cfg.out) / "aci" / "trace.json"
    r = cfg.compare.rta_trace or Path(cfg.out) / "rta" / "trace.json"
    try:
        rows = io.compare_table(io.read_trace(a), io.read_trace(r))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    io.write_compare_csv(Path(cfg.out) / "compare.csv", rows)
    for row in rows:
        print(
            f"{row['networks']:>4}  {row['effect']:<5} "
            f"ACI={row['ACI'] if row['ACI'] is not None else io.MISSING!s:<24} "
            f"RTA={row['RTA'] if row['RTA'] is not None else io.MISSING!s}"
        )
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.mode == "simulate":
            return cmd_simulate(cfg)
        if cfg.mode in ("aci", "rta"):
            return cmd_run(cfg, cfg.mode)
        return cmd_compare(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

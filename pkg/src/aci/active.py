"""Sequential experiment drivers: the active-learning loop and the random baseline."""

from __future__ import annotations

import dataclasses
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import GAConfig, OptimizationResult, TargetWindow, optimize_assignment
from .effects import EffectCurve, SelectionError, default_grid, effect_curves, select_target
from .gp import GPFitConfig, GPModel, KernelParams, TrainingSet
from .network import Dataset, Network, integrate_arrays
from .simulation import OutcomeOracle, eise

log = logging.getLogger(__name__)

WARMUP_TARGETS = ((0, 0.5), (1, 0.5))


@dataclass(frozen=True)
class RunConfig:
    M: int = 20
    T: int = 5
    alpha: float = 0.1
    grid_size: int = 101
    min_separation: float = 0.05
    metric: str = "euclidean"
    standardize: bool = True
    seed: int = 0
    ga: GAConfig = field(default_factory=GAConfig)
    gp: GPFitConfig = field(default_factory=GPFitConfig)
    variance_threshold: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")

    @property
    def grid(self) -> np.ndarray:
        return default_grid(self.grid_size)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        ga = GAConfig(**d.pop("ga", {}))
        gp = d.pop("gp", {})
        gp = GPFitConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in gp.items()})
        return cls(ga=ga, gp=gp, **d)


@dataclass
class Stage:
    index: int
    kind: str
    target: tuple[int, float]
    networks: list[str]
    assignments: list[list[int]]
    in_window_counts: list[int]
    fitness: list[float]
    deficit: int | None
    dataset_size: int
    networks_used: int
    window: tuple[float, float] | None = None
    partial: bool = False
    curves: dict[str, EffectCurve] | None = None
    eise: dict[str, float] | None = None
    hyperparameters: dict | None = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["target"] = list(self.target)
        d["curves"] = None if self.curves is None else {k: c.to_dict() for k, c in self.curves.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Stage":
        d = dict(d)
        d["target"] = (int(d["target"][0]), float(d["target"][1]))
        if d.get("window") is not None:
            d["window"] = tuple(d["window"])
        if d.get("curves") is not None:
            d["curves"] = {k: EffectCurve.from_dict(c) for k, c in d["curves"].items()}
        return cls(**d)


@dataclass
class RunTrace:
    method: str
    config: dict
    stages: list[Stage] = field(default_factory=list)
    remaining: list[str] = field(default_factory=list)
    supplied: int = 0
    truncated: bool = False
    stop_reason: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def visited(self) -> list[tuple[int, float]]:
        return [s.target for s in self.stages]

    @property
    def consumed(self) -> list[str]:
        return [nid for s in self.stages for nid in s.networks]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "config": self.config,
            "supplied": self.supplied,
            "truncated": self.truncated,
            "stop_reason": self.stop_reason,
            "remaining": list(self.remaining),
            "meta": self.meta,
            "stages": [s.to_dict() for s in self.stages],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "RunTrace":
        return cls(
            method=d["method"],
            config=d["config"],
            stages=[Stage.from_dict(s) for s in d["stages"]],
            remaining=list(d.get("remaining", [])),
            supplied=d.get("supplied", 0),
            truncated=d.get("truncated", False),
            stop_reason=d.get("stop_reason", ""),
            meta=d.get("meta", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunTrace":
        return cls.from_dict(json.loads(text))


def distribute_evenly(N_u: int, n_u: int) -> list[int]:
    """Split ``N_u`` into ``n_u`` near-equal parts, remainder to the front."""
    if n_u < 1:
        raise ValueError("n_u must be at least 1")
    if N_u < 0:
        raise ValueError("N_u must be non-negative")
    base, remainder = divmod(N_u, n_u)
    out = [base] * n_u
    for i in range(remainder):
        out[i] += 1
    return out


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def _net_key(net: Network) -> int:
    return zlib.crc32(net.id.encode())


class _Session:
    """Mutable state shared by both drivers."""

    def __init__(self, networks: Sequence[Network], oracle: OutcomeOracle, config: RunConfig, truth, method: str):
        ids = [net.id for net in networks]
        if len(set(ids)) != len(ids):
            raise ValueError("network ids must be unique")
        self.config = config
        self.oracle = oracle
        self.remaining = list(networks)
        self.X_pop = np.vstack([net.X[~net.isolated] for net in networks])
        self.grid = config.grid
        self.truth = truth
        if truth is not None and not np.array_equal(truth[0].grid, self.grid):
            raise ValueError("ground-truth curves must use the run grid")
        self.D = Dataset()
        self.params: dict[int, KernelParams | None] = {0: None, 1: None}
        self.curves: dict[str, EffectCurve] | None = None
        self.trace = RunTrace(method, config.to_dict(), supplied=len(networks))
        self.used = 0

    def take(self, net: Network):
        self.remaining = [m for m in self.remaining if m.id != net.id]

    def acquire(self, net: Network, assign):
        assign = np.asarray(assign, dtype=np.int8)
        y = self.oracle(net, assign)
        _, A, G, X, Y = integrate_arrays(net, assign, y)
        self.D.extend(A, G, X, Y)
        self.take(net)
        self.used += 1

    def refit(self, stage_index: int):
        cfg = self.config
        if self.D.X is None or any(not np.any(self.D.A == a) for a in (0, 1)):
            self.curves = None
            return None
        models = {}
        for a in (0, 1):
            X, g, y = self.D.arm(a)
            gp_cfg = dataclasses.replace(cfg.gp, seed=_derived_seed(cfg.seed, stage_index, a, 17))
            models[a] = GPModel.fit(TrainingSet(X, g, y, arm=a), gp_cfg, init=self.params[a])
            self.params[a] = models[a].params
        tau1, tau0, tau10 = effect_curves(models[0], models[1], self.X_pop, self.grid)
        self.curves = {"tau1": tau1, "tau0": tau0, "tau10": tau10}
        return {
            str(a): {**models[a].params.to_dict(), "lml": models[a].lml, "y_mean": models[a].y_mean}
            for a in (0, 1)
        }

    def record(self, kind, target, nets, assigns, results, deficit, window=None, partial=False):
        idx = len(self.trace.stages)
        hyper = self.refit(idx)
        scores = None
        if self.curves is not None and self.truth is not None:
            scores = {
                "tau1": eise(self.curves["tau1"], self.truth[0]),
                "tau0": eise(self.curves["tau0"], self.truth[1]),
            }
        stage = Stage(
            index=idx,
            kind=kind,
            target=(int(target[0]), float(target[1])),
            networks=[n.id for n in nets],
            assignments=[np.asarray(a).astype(int).tolist() for a in assigns],
            in_window_counts=[r.in_window_count for r in results] if results else [],
            fitness=[r.fitness for r in results] if results else [],
            deficit=deficit,
            dataset_size=len(self.D),
            networks_used=self.used,
            window=window,
            partial=partial,
            curves=self.curves,
            eise=scores,
            hyperparameters=hyper,
        )
        self.trace.stages.append(stage)
        log.info(
            "stage %d %s target=%s networks=%s n=%d eise=%s", idx, kind, stage.target, stage.networks,
            stage.dataset_size, scores,
        )
        return stage

    def boundaries(self):
        for a in (1, 0):
            net = self.remaining[0]
            assign = np.full(net.n, a, dtype=np.int8)
            self.acquire(net, assign)
            self.record("boundary", (a, float(a)), [net], [assign], None, None)

    def finish(self, truncated=False, reason=""):
        self.trace.remaining = [n.id for n in self.remaining]
        self.trace.truncated = truncated
        self.trace.stop_reason = reason
        return self.trace


def _optimize_all(session: _Session, window: TargetWindow, stage_index: int) -> list[OptimizationResult]:
    cfg = session.config

    def run(net):
        rng = np.random.default_rng([cfg.ga.seed, stage_index, _net_key(net)])
        return optimize_assignment(net, window, cfg.ga, cfg.metric, cfg.standardize, rng=rng)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            return list(ex.map(run, session.remaining))
    return [run(net) for net in session.remaining]


def _target_stage(session: _Session, kind: str, target: tuple[int, float]) -> bool:
    """Run one targeted stage; returns False when the network supply ran out."""
    cfg = session.config
    a, g = target
    window = TargetWindow(a, g, cfg.alpha)
    deficit = cfg.M - session.D.count_in_window(a, window.lo, window.hi)
    idx = len(session.trace.stages)
    if not session.remaining:
        return False
    results = _optimize_all(session, window, idx)
    nets = session.remaining
    counts = np.array([r.in_window_count for r in results])
    fits = np.array([r.fitness for r in results])

    qualifying = np.flatnonzero(counts >= deficit)
    partial = False
    if qualifying.size:
        chosen = [int(qualifying[np.argmax(fits[qualifying])])]
    else:
        order = np.argsort(-fits, kind="stable")
        cum = np.cumsum(counts[order])
        hit = np.flatnonzero(cum >= deficit)
        if hit.size:
            chosen = order[: hit[0] + 1].tolist()
        else:
            chosen = order.tolist()
            partial = True

    picked = [nets[i] for i in chosen]
    for i in chosen:
        session.acquire(nets[i], results[i].assignment)
    session.record(
        kind,
        target,
        picked,
        [results[i].assignment for i in chosen],
        [results[i] for i in chosen],
        int(deficit),
        window=(window.lo, window.hi),
        partial=partial,
    )
    return not partial


def run_aci(
    networks: Sequence[Network],
    oracle: OutcomeOracle,
    config: RunConfig | None = None,
    truth: tuple[EffectCurve, EffectCurve] | None = None,
) -> RunTrace:
    """Active-learning loop over a pool of networks.

    Two boundary stages (all treated, all control) and two warm-up targets
    ``(0, 0.5)`` and ``(1, 0.5)`` are followed by up to ``config.T`` targets
    chosen at the maximum posterior variance of the effect curves.  When
    ``truth`` curves are supplied every stage is scored by EISE.
    """
    config = config or RunConfig()
    if len(networks) < 4:
        raise ValueError("need at least 4 networks (two boundary and two warm-up stages)")
    s = _Session(networks, oracle, config, truth, "aci")
    s.boundaries()
    for target in WARMUP_TARGETS:
        if not _target_stage(s, "warmup", target):
            return s.finish(True, "network supply exhausted")
    for _ in range(config.T):
        if not s.remaining:
            return s.finish(True, "network supply exhausted")
        c = s.curves
        if config.variance_threshold is not None:
            if max(c["tau1"].variance.max(), c["tau0"].variance.max()) < config.variance_threshold:
                return s.finish(False, "variance threshold reached")
        try:
            target = select_target(c["tau1"], c["tau0"], s.trace.visited, config.min_separation)
        except SelectionError:
            return s.finish(False, "no admissible levels left")
        if not _target_stage(s, "selected", target):
            return s.finish(True, "network supply exhausted")
    return s.finish(False, "level budget reached")


def run_rta(
    networks: Sequence[Network],
    oracle: OutcomeOracle,
    config: RunConfig | None = None,
    n_u: int = 4,
    N_u: int = 4,
    truth: tuple[EffectCurve, EffectCurve] | None = None,
) -> RunTrace:
    """Random-allocation baseline with the same boundary stages as :func:`run_aci`.

    ``n_u`` levels ``g* ~ U(0, 1)`` are drawn with the nominal arm
    alternating 0, 1, 0, ...; level ``k`` consumes ``distribute_evenly(N_u,
    n_u)[k]`` randomly chosen networks, each receiving treatment on
    ``round(g* n)`` uniformly chosen nodes.
    """
    config = config or RunConfig()
    if n_u < 1 or N_u < n_u:
        raise ValueError("need N_u >= n_u >= 1")
    if len(networks) < 2:
        raise ValueError("need at least 2 networks for the boundary stages")
    s = _Session(networks, oracle, config, truth, "rta")
    budgets = distribute_evenly(N_u, n_u)
    s.trace.meta["budgets"] = budgets
    s.boundaries()
    rng = np.random.default_rng([config.seed, 0x57A])
    for k, budget in enumerate(budgets):
        g_star = float(rng.uniform(0.0, 1.0))
        arm = k % 2
        if budget > len(s.remaining):
            return s.finish(True, "network supply exhausted")
        pick = rng.choice(len(s.remaining), size=budget, replace=False)
        nets = [s.remaining[i] for i in pick]
        assigns = []
        for net in nets:
            ones = int(np.floor(g_star * net.n + 0.5))
            assign = np.zeros(net.n, dtype=np.int8)
            assign[rng.permutation(net.n)[:ones]] = 1
            assigns.append(assign)
            s.acquire(net, assign)
        s.record("random", (arm, g_star), nets, assigns, None, None)
    return s.finish(False, "level budget reached")


def rta_budget_from(trace: RunTrace) -> tuple[int, int]:
    """``(n_u, N_u)`` matching the non-boundary stages of an ACI trace."""
    stages = [st for st in trace.stages if st.kind != "boundary"]
    return len(stages), sum(len(st.networks) for st in stages)

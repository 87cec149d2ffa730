"""Target-window assignment search with a genetic algorithm.

Given a target ``(a*, g*)`` and window width ``alpha``, an assignment is
scored by the summed squared pairwise distance between the integrated
covariates of the individuals that land in ``A = a*, G in [g* - alpha/2,
g* + alpha/2]``.  The score rewards both the in-window count and the spread
of their covariates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .network import Network, check_assignment

ROULETTE_EPS = 1e-9


@dataclass(frozen=True)
class TargetWindow:
    a_star: int
    g_star: float
    alpha: float

    def __post_init__(self):
        if self.a_star not in (0, 1):
            raise ValueError("a_star must be 0 or 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.hi < self.lo:
            raise ValueError(f"window around g*={self.g_star} does not intersect [0, 1]")

    @property
    def lo(self) -> float:
        return max(0.0, self.g_star - self.alpha / 2)

    @property
    def hi(self) -> float:
        return min(1.0, self.g_star + self.alpha / 2)

    def contains(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=np.float64)
        return (g >= self.lo - _kernels.WINDOW_TOL) & (g <= self.hi + _kernels.WINDOW_TOL)


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 40
    epochs: int = 200
    early_stop_patience: int = 30
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None -> 1/n
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover_rate must be in [0, 1]")
        if self.mutation_rate is not None and not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must be in [0, 1]")


@dataclass
class OptimizationResult:
    assignment: np.ndarray
    fitness: float
    in_window_count: int
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def history_json(self) -> str:
        return json.dumps(
            {
                "fitness": self.fitness,
                "in_window_count": self.in_window_count,
                "history": np.asarray(self.history).tolist(),
            }
        )


def standardized_covariates(net: Network) -> np.ndarray:
    """Integrated covariates scaled to unit variance per column over the network."""
    X = net.X
    sd = np.nanstd(X, axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Xs = (X - np.nanmean(X, axis=0)) / sd
    return np.nan_to_num(Xs)


def in_window_set(net: Network, assign, window: TargetWindow) -> np.ndarray:
    """Indices with own treatment ``a*`` and exposure inside the window."""
    a = check_assignment(net, assign)
    g = net.exposures(a)
    ok = (a == window.a_star) & ~net.isolated
    ok &= window.contains(np.where(net.isolated, -1.0, g))
    return np.flatnonzero(ok)


def _metric_code(metric: str) -> int:
    try:
        return _kernels.METRICS[metric]
    except KeyError:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(_kernels.METRICS)}") from None


def fitness(
    net: Network,
    assign,
    window: TargetWindow,
    metric: str = "euclidean",
    standardize: bool = True,
) -> float:
    """Sum of squared distances over ordered pairs of in-window individuals."""
    a = check_assignment(net, assign).astype(np.int8)
    f, _ = _Scorer(net, window, metric, standardize)(a[None, :])
    return float(f[0])


class _Scorer:
    def __init__(self, net: Network, window: TargetWindow, metric: str, standardize: bool):
        self.W = net.W
        # isolated rows get a dummy divisor; they are masked out below
        self.row_sum = np.where(net.isolated, 1.0, net.row_sum)
        self.Xs = standardized_covariates(net) if standardize else np.nan_to_num(net.X)
        self.window = window
        self.metric = _metric_code(metric)
        self.isolated = net.isolated

    def __call__(self, pop):
        if self.isolated.any():
            # an isolated node has undefined exposure; keep it out of the window
            lo, hi = self.window.lo, self.window.hi
            f, c = _kernels.window_fitness(
                np.where(self.isolated, 1 - self.window.a_star, pop),
                self.W, self.row_sum, self.Xs, self.window.a_star, lo, hi, self.metric,
            )
            return f, c
        return _kernels.window_fitness(
            pop, self.W, self.row_sum, self.Xs, self.window.a_star, self.window.lo, self.window.hi, self.metric
        )


def _survivors(pop, fit, K: int) -> np.ndarray:
    """Indices of the ``K`` fittest rows, distinct chromosomes first.

    Duplicates only fill the tail when fewer than ``K`` distinct rows exist,
    which keeps the population from collapsing onto one local optimum.
    """
    order = np.argsort(-fit, kind="stable")
    _, first = np.unique(pop[order], axis=0, return_index=True)
    distinct = np.zeros(order.size, dtype=bool)
    distinct[first] = True
    ranked = np.concatenate([order[distinct], order[~distinct]])
    return ranked[:K]


def optimize_assignment(
    net: Network,
    window: TargetWindow,
    config: GAConfig | None = None,
    metric: str = "euclidean",
    standardize: bool = True,
    rng: np.random.Generator | None = None,
) -> OptimizationResult:
    """Search for the assignment with maximal window fitness.

    Each generation draws ``K`` parent pairs by roulette wheel, produces two
    children per pair by single-point crossover plus bit-flip mutation,
    keeps the fitter child, and then retains the ``K`` fittest of parents
    and children.  Stops after ``epochs`` generations or when the best
    fitness has not improved for ``early_stop_patience`` generations.
    """
    config = config or GAConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n, K = net.n, config.population_size
    mut = config.mutation_rate if config.mutation_rate is not None else 1.0 / n
    score = _Scorer(net, window, metric, standardize)

    pop = np.empty((K, n), dtype=np.int8)
    pop[0] = 0
    pop[1] = 1
    if K > 2:
        pop[2:] = rng.random((K - 2, n)) < window.g_star
    fit, cnt = score(pop)
    order = np.argsort(-fit, kind="stable")
    pop, fit, cnt = pop[order], fit[order], cnt[order]

    history = [fit[0]]
    stale = 0
    cols = np.arange(n)
    for _ in range(config.epochs):
        w = fit + ROULETTE_EPS
        parents = rng.choice(K, size=(K, 2), p=w / w.sum())
        p1, p2 = pop[parents[:, 0]], pop[parents[:, 1]]
        if n > 1:
            cut = rng.integers(1, n, size=K)
        else:
            cut = np.ones(K, dtype=np.int64)
        cross = rng.random(K) < config.crossover_rate
        left = (cols[None, :] < cut[:, None]) | ~cross[:, None]
        c1 = np.where(left, p1, p2)
        c2 = np.where(left, p2, p1)
        flips = rng.random((2, K, n)) < mut
        c1 = (c1 ^ flips[0]).astype(np.int8)
        c2 = (c2 ^ flips[1]).astype(np.int8)
        f_c, n_c = score(np.concatenate([c1, c2]))
        take2 = f_c[K:] > f_c[:K]
        kids = np.where(take2[:, None], c2, c1)
        f_k = np.where(take2, f_c[K:], f_c[:K])
        n_k = np.where(take2, n_c[K:], n_c[:K])

        allpop = np.concatenate([pop, kids])
        allfit = np.concatenate([fit, f_k])
        allcnt = np.concatenate([cnt, n_k])
        keep = _survivors(allpop, allfit, K)
        pop, fit, cnt = allpop[keep], allfit[keep], allcnt[keep]

        if fit[0] > history[-1]:
            stale = 0
        else:
            stale += 1
        history.append(fit[0])
        if stale >= config.early_stop_patience:
            break

    return OptimizationResult(
        assignment=pop[0].astype(np.int8).copy(),
        fitness=float(fit[0]),
        in_window_count=int(cnt[0]),
        history=np.asarray(history),
    )

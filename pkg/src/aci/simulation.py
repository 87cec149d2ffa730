"""Synthetic benchmark: random networks, the ground-truth outcome model, EISE."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .effects import EffectCurve
from .network import IsolatedNodeError, Network, check_assignment

OutcomeOracle = Callable[[Network, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OutcomeModelParams:
    """Coefficients of the outcome model.

    ``beta_own[a]`` multiplies ``(C1^2, C2, 1/(C3 + 1))`` for own treatment
    ``a``; ``beta_neighbor[a]`` multiplies ``((CN1)^2, 1/(1 + CN2), CN3)``
    and is mixed by ``g`` (row 1) and ``1 - g`` (row 0).
    """

    beta_own: np.ndarray
    beta_neighbor: np.ndarray
    noise_sd: float = 1.0

    def __post_init__(self):
        bo = np.asarray(self.beta_own, dtype=np.float64)
        bn = np.asarray(self.beta_neighbor, dtype=np.float64)
        if bo.shape != (2, 3) or bn.shape != (2, 3):
            raise ValueError("beta_own and beta_neighbor must be 2x3")
        if not (np.all(np.isfinite(bo)) and np.all(np.isfinite(bn))):
            raise ValueError("coefficients must be finite")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be non-negative")
        object.__setattr__(self, "beta_own", bo)
        object.__setattr__(self, "beta_neighbor", bn)

    @classmethod
    def random(cls, rng: np.random.Generator, low=-5.0, high=5.0, noise_sd=1.0) -> "OutcomeModelParams":
        return cls(rng.uniform(low, high, (2, 3)), rng.uniform(low, high, (2, 3)), noise_sd)

    @classmethod
    def zero(cls) -> "OutcomeModelParams":
        return cls(np.zeros((2, 3)), np.zeros((2, 3)), 0.0)

    def to_dict(self) -> dict:
        return {
            "beta_own": self.beta_own.tolist(),
            "beta_neighbor": self.beta_neighbor.tolist(),
            "noise_sd": self.noise_sd,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeModelParams":
        return cls(d["beta_own"], d["beta_neighbor"], d.get("noise_sd", 1.0))


@dataclass
class SimPopulation:
    networks: list[Network]
    model: OutcomeModelParams
    seed: int | None = None
    edge_prob: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def X(self) -> np.ndarray:
        """Integrated covariates of every individual, stacked across networks."""
        return np.vstack([net.X[~net.isolated] for net in self.networks])

    @property
    def size(self) -> int:
        return sum(int((~net.isolated).sum()) for net in self.networks)


def erdos_renyi(n: int, edge_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Binary symmetric adjacency; isolated nodes have their row redrawn."""
    if n < 2:
        raise ValueError("need at least 2 nodes for a connected individual")
    if not 0 < edge_prob <= 1:
        raise ValueError(f"edge probability must be in (0, 1], got {edge_prob}")
    upper = np.triu(rng.random((n, n)) < edge_prob, k=1)
    W = (upper | upper.T).astype(np.float64)
    for i in np.flatnonzero(W.sum(axis=1) == 0):
        while W[i].sum() == 0:
            row = rng.random(n) < edge_prob
            row[i] = False
            W[i, row] = W[row, i] = 1.0
    return W


def generate_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    """One binary and two Uniform(0, 1) covariates per individual."""
    C = np.empty((n, 3))
    C[:, 0] = rng.random(n) < 0.5
    C[:, 1:] = rng.random((n, 2))
    return C


def generate_population(
    Q: int = 100,
    n: int = 100,
    edge_prob: float = 0.08,
    seed: int = 0,
    model: OutcomeModelParams | None = None,
    noise_sd: float = 1.0,
    beta_range: tuple[float, float] = (-5.0, 5.0),
) -> SimPopulation:
    """Draw ``Q`` independent Erdos-Renyi networks with covariates.

    Coefficients are drawn from ``Uniform(beta_range)`` with the population
    seed unless ``model`` is supplied.  Network ``q`` depends only on
    ``(seed, q)``, not on ``Q``.
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if model is None:
        model = OutcomeModelParams.random(np.random.default_rng([seed, 0]), *beta_range, noise_sd=noise_sd)
    nets = []
    for q in range(Q):
        rng = np.random.default_rng([seed, 1, q])
        W = erdos_renyi(n, edge_prob, rng)
        C = generate_covariates(n, rng)
        nets.append(Network(f"net_{q:03d}", W, C))
    return SimPopulation(nets, model, seed, edge_prob)


# ---------------------------------------------------------------------------
# outcome model
# ---------------------------------------------------------------------------


def _own_terms(C):
    return np.stack([C[:, 0] ** 2, C[:, 1], 1.0 / (C[:, 2] + 1.0)], axis=1)


def _neighbor_terms(CN):
    return np.stack([CN[:, 0] ** 2, 1.0 / (1.0 + CN[:, 1]), CN[:, 2]], axis=1)


def _check_p(net: Network):
    if net.p != 3:
        raise ValueError(f"outcome model needs 3 covariates, network has {net.p}")


def potential_outcomes(net: Network, model: OutcomeModelParams, a, g, noise=None) -> np.ndarray:
    """``Y_i(a_i, g_i)`` for every node; ``a`` and ``g`` broadcast over nodes."""
    _check_p(net)
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (net.n,))
    g = np.broadcast_to(np.asarray(g, dtype=np.float64), (net.n,))
    own = _own_terms(net.C)
    nb = _neighbor_terms(net.neighbor_covariates)
    y = (own @ model.beta_own[1]) * a + (own @ model.beta_own[0]) * (1.0 - a)
    y = y + ((nb @ model.beta_neighbor[1]) * g + (nb @ model.beta_neighbor[0]) * (1.0 - g)) * (g - 0.5)
    if noise is not None:
        y = y + noise
    return y


def true_outcome(net: Network, i: int, a: int, g: float, model: OutcomeModelParams, noise: float = 0.0) -> float:
    """Outcome of individual ``i`` under own treatment ``a`` and exposure ``g``."""
    if net.isolated[i]:
        raise IsolatedNodeError(f"node {i} has no neighbors")
    return float(potential_outcomes(net, model, a, g)[i] + noise)


def true_effect_curves(pop: SimPopulation, grid) -> tuple[EffectCurve, EffectCurve]:
    """Noiseless overall and spillover curves averaged over all individuals."""
    grid = np.asarray(grid, dtype=np.float64)
    own1, own0, nb1, nb0 = [], [], [], []
    for net in pop.networks:
        _check_p(net)
        keep = ~net.isolated
        own = _own_terms(net.C[keep])
        nb = _neighbor_terms(net.neighbor_covariates[keep])
        own1.append(own @ pop.model.beta_own[1])
        own0.append(own @ pop.model.beta_own[0])
        nb1.append(nb @ pop.model.beta_neighbor[1])
        nb0.append(nb @ pop.model.beta_neighbor[0])
    o1, o0 = np.concatenate(own1).mean(), np.concatenate(own0).mean()
    b1, b0 = np.concatenate(nb1).mean(), np.concatenate(nb0).mean()

    def m(o, g):
        return o + (b1 * g + b0 * (1.0 - g)) * (g - 0.5)

    base = m(o0, 0.0)
    zeros = np.zeros_like(grid)
    tau1 = EffectCurve(1, grid, m(o1, grid) - base, zeros.copy(), base)
    tau0 = EffectCurve(0, grid, m(o0, grid) - base, zeros.copy(), base)
    tau0.mean[grid == 0.0] = 0.0
    return tau1, tau0


EISE_RULES = ("linear", "trapezoid")


def eise(estimated: EffectCurve, truth: EffectCurve, rule: str = "linear") -> float:
    """Integrated squared error of the mean curves over the grid.

    Parameters
    ----------
    rule : {"linear", "trapezoid"}
        ``"linear"`` integrates the square of the piecewise-linear
        interpolant of the gap exactly, ``h/3 (d_k^2 + d_k d_{k+1} +
        d_{k+1}^2)`` per interval, so gaps that are linear between grid
        nodes score without discretization error.  ``"trapezoid"`` applies
        the trapezoidal rule to the squared gap, which overstates the
        linear form by ``h/6 (d_{k+1} - d_k)^2`` per interval.
    """
    if not np.array_equal(estimated.grid, truth.grid):
        raise ValueError("curves are on different grids")
    d = estimated.mean - truth.mean
    if rule == "trapezoid":
        return float(np.trapezoid(d * d, estimated.grid))
    if rule != "linear":
        raise ValueError(f"unknown rule {rule!r}; choose from {EISE_RULES}")
    h = np.diff(estimated.grid)
    return float(np.sum(h * (d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2)) / 3.0)


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def _stable_key(text: str) -> int:
    return zlib.crc32(text.encode())


def simulation_oracle(pop: SimPopulation, seed: int = 0) -> OutcomeOracle:
    """Outcome oracle that plays the role of running an experiment.

    Noise for a ``(network, assignment)`` pair is drawn from a stream keyed
    by ``(seed, network id, assignment bits)``, so repeating the same call
    reproduces the same outcomes regardless of call order.
    """
    model = pop.model

    def oracle(net: Network, assign) -> np.ndarray:
        a = check_assignment(net, assign)
        g = net.exposures(a)
        bits = zlib.crc32(np.packbits(a.astype(np.uint8)).tobytes())
        rng = np.random.default_rng([seed, _stable_key(net.id), bits, net.n])
        noise = rng.normal(0.0, model.noise_sd, net.n) if model.noise_sd > 0 else None
        y = potential_outcomes(net, model, a, np.nan_to_num(g), noise)
        y[net.isolated] = np.nan
        return y

    return oracle

"""Population-average effect curves and maximum-variance target selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import linalg

from . import _kernels
from .gp import GPModel, Posterior


class SelectionError(RuntimeError):
    """Every candidate level is excluded."""


@dataclass
class EffectCurve:
    """Mean and pointwise variance of an average-effect function on a grid.

    ``arm`` is 1 for the overall effect, 0 for the spillover effect and
    ``None`` for the derived direct effect.
    """

    arm: int | None
    grid: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    baseline: float = 0.0
    label: str = ""

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if not (self.grid.shape == self.mean.shape == self.variance.shape):
            raise ValueError("grid, mean and variance must have equal lengths")
        if not self.label:
            self.label = {1: "tau1", 0: "tau0", None: "tau10"}[self.arm]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "arm": self.arm,
            "baseline": self.baseline,
            "grid": self.grid.tolist(),
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectCurve":
        return cls(d["arm"], d["grid"], d["mean"], d["variance"], d.get("baseline", 0.0), d.get("label", ""))


def default_grid(size: int = 101) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


def mean_potential_outcome(post: Posterior) -> tuple[float, float]:
    """Average of a joint posterior and the variance of that average."""
    n = post.mean.shape[0]
    e = np.ones(n)
    return float(post.mean.mean()), float(e @ post.covariance @ e) / n**2


class PopulationAverage:
    """Average potential outcome of one arm over a fixed population, any ``g``.

    Because every query shares the same ``g``, the exposure block of the
    population covariance is constant and the covariate block does not
    depend on ``g``.  That reduces ``e^T Cov e`` to one population pair sum
    plus an ``n_t``-vector solve per grid point, which matches the full
    posterior quadratic form without materializing an ``n x n`` matrix.
    """

    def __init__(self, model: GPModel, X_pop):
        self.model = model
        p = model.params
        X_pop = np.atleast_2d(np.asarray(X_pop, dtype=np.float64))
        self.n = X_pop.shape[0]
        s = np.sqrt(p.q_diag)
        Zp = X_pop * s
        self.pair_sum = p.sigma_x2 * _kernels.rbf_pair_sum(Zp)
        if model.train.n:
            self.kx = p.sigma_x2 * _kernels.rbf_cross(model.train.X * s, Zp).sum(axis=1)
        else:
            self.kx = np.zeros(0)

    def __call__(self, grid) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of the population average at each ``g`` in ``grid``."""
        grid = np.atleast_1d(np.asarray(grid, dtype=np.float64))
        m, p, n = self.model, self.model.params, self.n
        prior = self.pair_sum + n * n * p.sigma_g2
        if m.train.n == 0:
            return np.full(grid.shape, m.y_mean), np.full(grid.shape, max(prior, 0.0) / n**2)
        dg = m.train.g[:, None] - grid[None, :]
        kt = self.kx[:, None] + n * p.sigma_g2 * np.exp(-0.5 * dg * dg / p.lambda_g**2)
        mean = m.y_mean + (kt.T @ m.alpha) / n
        V = linalg.solve_triangular(m.L, kt, lower=True)
        var = (prior - np.einsum("ij,ij->j", V, V)) / n**2
        return mean, np.maximum(var, 0.0)


def effect_curves(model0: GPModel, model1: GPModel, X_pop, grid) -> tuple[EffectCurve, EffectCurve, EffectCurve]:
    """Overall, spillover and direct average-effect curves.

    The spillover baseline ``m0(0)`` is subtracted as a fixed constant, so
    the variance of each curve is that of its own arm average.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty grid")
    zero = np.flatnonzero(grid == 0.0)
    g0 = grid if zero.size else np.append(grid, 0.0)
    i0 = zero[0] if zero.size else grid.size
    m0_mean, m0_var = PopulationAverage(model0, X_pop)(g0)
    baseline = float(m0_mean[i0])
    m0_mean, m0_var = m0_mean[: grid.size], m0_var[: grid.size]
    m1_mean, m1_var = PopulationAverage(model1, X_pop)(grid)

    tau1 = EffectCurve(1, grid, m1_mean - baseline, m1_var, baseline)
    tau0 = EffectCurve(0, grid, m0_mean - baseline, m0_var, baseline)
    tau10 = EffectCurve(None, grid, tau1.mean - tau0.mean, m1_var + m0_var, baseline)
    return tau1, tau0, tau10


def select_target(
    curve1: EffectCurve,
    curve0: EffectCurve,
    exclusions: Iterable[tuple[int, float]] = (),
    min_separation: float = 0.05,
) -> tuple[int, float]:
    """Grid point of maximal effect variance not near an already-visited level.

    A candidate ``(a, g)`` is excluded when some visited ``(a, g_e)`` on the
    same arm has ``|g - g_e| < min_separation``.  Ties go to the smaller arm,
    then the smaller ``g``.
    """
    if not np.array_equal(curve0.grid, curve1.grid):
        raise ValueError("curves must share a grid")
    grid = curve0.grid
    visited = {0: [], 1: []}
    for a, g in exclusions:
        visited[int(a)].append(float(g))
    best = None
    best_var = -np.inf
    for a, curve in ((0, curve0), (1, curve1)):
        ex = np.asarray(visited[a])
        if ex.size:
            blocked = np.any(np.abs(grid[:, None] - ex[None, :]) < min_separation - 1e-12, axis=1)
        else:
            blocked = np.zeros(grid.shape, dtype=bool)
        for k in np.flatnonzero(~blocked):
            if curve.variance[k] > best_var:
                best_var = curve.variance[k]
                best = (a, float(grid[k]))
    if best is None:
        raise SelectionError("all grid points are excluded")
    return best

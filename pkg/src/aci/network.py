"""Weighted networks and the neighbor-integration transforms.

An individual ``i`` in a network is summarized by its own treatment ``A_i``,
the weighted treated fraction of its neighbors ``G_i`` and the integrated
covariates ``X_i = (C_i, mean of neighbor C weighted by W_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from ._kernels import WINDOW_TOL


class NetworkError(ValueError):
    """Invalid network construction or an undefined neighbor quantity."""


class IsolatedNodeError(NetworkError):
    """An individual without neighbors where exposure is required."""


@dataclass(frozen=True, eq=False)
class Network:
    """A symmetric weighted relationship matrix with per-individual covariates."""

    id: str
    W: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        C = np.asarray(self.C, dtype=np.float64)
        if C.ndim == 1:
            C = C[:, None]
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise NetworkError(f"W must be square, got shape {W.shape}")
        if C.shape[0] != W.shape[0]:
            raise NetworkError(f"covariates have {C.shape[0]} rows for {W.shape[0]} nodes")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise NetworkError("weights must be finite and non-negative")
        if np.any(np.diag(W) != 0):
            raise NetworkError("self-edges are not allowed")
        if not np.array_equal(W, W.T):
            raise NetworkError("W must be symmetric")
        W.setflags(write=False)
        C.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[1]

    @cached_property
    def row_sum(self) -> np.ndarray:
        return self.W.sum(axis=1)

    @cached_property
    def degree(self) -> np.ndarray:
        """Neighbor counts ``m_i``."""
        return (self.W > 0).sum(axis=1)

    @cached_property
    def isolated(self) -> np.ndarray:
        return self.row_sum <= 0

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.W[i] > 0)

    @cached_property
    def neighbor_covariates(self) -> np.ndarray:
        """Weight-normalized neighbor covariate averages, one row per node.

        Rows of isolated nodes are NaN.
        """
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (self.W @ self.C) / self.row_sum[:, None]
        out[self.isolated] = np.nan
        return out

    @cached_property
    def X(self) -> np.ndarray:
        """Integrated covariates ``(C_i, C~_i)``, shape ``(n, 2p)``."""
        return np.hstack([self.C, self.neighbor_covariates])

    def exposures(self, assign) -> np.ndarray:
        """Neighbor exposure for every node (NaN for isolated nodes)."""
        a = check_assignment(self, assign)
        treated = self.W @ a
        # treated / (treated + untreated) rather than / row_sum, so that the
        # all-ones and all-zeros assignments give exactly 1 and 0
        with np.errstate(invalid="ignore", divide="ignore"):
            g = treated / (treated + self.W @ (1.0 - a))
        g[self.isolated] = np.nan
        return g


@dataclass(frozen=True)
class Observation:
    """One experimented individual: own treatment, exposure, covariates, outcome."""

    a: int
    g: float
    x: np.ndarray
    y: float | None = None
    node: int = -1
    network: str = ""


@dataclass
class Dataset:
    """Columnar store of integrated observations (the training pool)."""

    A: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))
    G: np.ndarray = field(default_factory=lambda: np.zeros(0))
    X: np.ndarray | None = None
    Y: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return self.A.shape[0]

    def extend(self, A, G, X, Y):
        self.A = np.concatenate([self.A, np.asarray(A, dtype=np.int8)])
        self.G = np.concatenate([self.G, np.asarray(G, dtype=np.float64)])
        self.Y = np.concatenate([self.Y, np.asarray(Y, dtype=np.float64)])
        X = np.asarray(X, dtype=np.float64)
        self.X = X.copy() if self.X is None else np.vstack([self.X, X])

    def arm(self, a: int):
        """``(X, g, y)`` for rows with own treatment ``a``."""
        sel = self.A == a
        d = 0 if self.X is None else self.X.shape[1]
        X = np.zeros((0, d)) if self.X is None else self.X[sel]
        return X, self.G[sel], self.Y[sel]

    def count_in_window(self, a: int, lo: float, hi: float) -> int:
        sel = (self.A == a) & (self.G >= lo - WINDOW_TOL) & (self.G <= hi + WINDOW_TOL)
        return int(sel.sum())


def check_assignment(net: Network, assign) -> np.ndarray:
    a = np.asarray(assign)
    if a.shape != (net.n,):
        raise NetworkError(f"assignment length {a.shape} does not match n={net.n}")
    if not np.all((a == 0) | (a == 1)):
        raise NetworkError("assignment entries must be 0 or 1")
    return a.astype(np.float64)


def build_network(
    edges: Iterable[Sequence],
    covariates,
    *,
    net_id: str = "net",
    n: int | None = None,
    isolated: str = "reject",
) -> Network:
    """Build a symmetric network from an edge list.

    Parameters
    ----------
    edges : iterable of (i, j, weight)
        Undirected edges with 0-based indices and positive weights.  An
        edge may be listed in both directions only with the same weight.
    covariates : (n, p) array_like
    n : int, optional
        Node count; defaults to the covariate row count.
    isolated : {"reject", "drop", "keep"}
        Handling of nodes without neighbors.  ``"drop"`` removes them and
        re-indexes the remaining nodes in order.
    """
    C = np.asarray(covariates, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    n = C.shape[0] if n is None else int(n)
    if C.shape[0] != n:
        raise NetworkError(f"covariate table has {C.shape[0]} rows, expected {n}")
    W = np.zeros((n, n))
    for e in edges:
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        if not (0 <= i < n and 0 <= j < n):
            raise NetworkError(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise NetworkError(f"self-edge at node {i}")
        if not (w > 0 and np.isfinite(w)):
            raise NetworkError(f"edge ({i}, {j}) has non-positive weight {w}")
        if W[i, j] != 0 and W[i, j] != w:
            raise NetworkError(f"conflicting weights for edge ({i}, {j}): {W[i, j]} vs {w}")
        W[i, j] = W[j, i] = w

    iso = W.sum(axis=1) <= 0
    if iso.any():
        if isolated == "reject":
            raise IsolatedNodeError(f"isolated nodes: {np.flatnonzero(iso).tolist()}")
        if isolated == "drop":
            keep = ~iso
            W = W[np.ix_(keep, keep)]
            C = C[keep]
        elif isolated != "keep":
            raise ValueError(f"unknown isolated policy {isolated!r}")
    return Network(net_id, W, C)


def _check_node(net: Network, i: int):
    if not 0 <= i < net.n:
        raise IndexError(f"node {i} out of range for n={net.n}")
    if net.isolated[i]:
        raise IsolatedNodeError(f"node {i} has no neighbors")


def neighbor_exposure(net: Network, assign, i: int) -> float:
    """Weighted fraction of ``i``'s neighbors that are treated."""
    _check_node(net, i)
    a = check_assignment(net, assign)
    return float(net.exposures(a)[i])


def aggregate_neighbor_covariates(net: Network, i: int) -> np.ndarray:
    """Weighted mean of the neighbors' covariate rows."""
    _check_node(net, i)
    return net.W[i] @ net.C / net.row_sum[i]


def integrate_arrays(net: Network, assign, outcomes=None):
    """Columnar form of :func:`integrate`: ``(nodes, A, G, X, Y)``.

    Isolated nodes are skipped.  ``Y`` is None when no outcomes are given.
    """
    a = check_assignment(net, assign)
    keep = np.flatnonzero(~net.isolated)
    G = net.exposures(a)[keep]
    Y = None
    if outcomes is not None:
        y = np.asarray(outcomes, dtype=np.float64)
        if y.shape != (net.n,):
            raise NetworkError(f"outcomes length {y.shape} does not match n={net.n}")
        Y = y[keep]
    return keep, a[keep].astype(np.int8), G, net.X[keep], Y


def integrate(net: Network, assign, outcomes=None) -> list[Observation]:
    """One :class:`Observation` per non-isolated individual."""
    nodes, A, G, X, Y = integrate_arrays(net, assign, outcomes)
    return [
        Observation(
            a=int(A[k]),
            g=float(G[k]),
            x=X[k].copy(),
            y=None if Y is None else float(Y[k]),
            node=int(nodes[k]),
            network=net.id,
        )
        for k in range(len(nodes))
    ]


def permute(net: Network, perm) -> Network:
    """Relabel nodes so that new node ``k`` is old node ``perm[k]``."""
    perm = np.asarray(perm)
    return Network(net.id, net.W[np.ix_(perm, perm)], net.C[perm])

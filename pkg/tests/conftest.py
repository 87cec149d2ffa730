from __future__ import annotations

import numpy as np
import pytest

from aci.network import build_network
from aci.simulation import generate_population

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def path_network(n: int = 3, p: int = 2, net_id: str = "path"):
    C = np.arange(n * p, dtype=float).reshape(n, p)
    return build_network([(i, i + 1, 1.0) for i in range(n - 1)], C, net_id=net_id)


def random_network(rng, n: int, edge_prob: float = 0.35, p: int = 3, net_id: str = "rand"):
    while True:
        A = np.triu(rng.random((n, n)) < edge_prob, 1)
        A = A | A.T
        if A.sum(axis=1).min() > 0:
            break
    edges = [(i, j, 1.0) for i in range(n) for j in range(i + 1, n) if A[i, j]]
    C = np.column_stack([rng.integers(0, 2, n), rng.random((n, p - 1))]).astype(float)
    return build_network(edges, C, net_id=net_id)


@pytest.fixture
def toy_population():
    return generate_population(Q=10, n=20, edge_prob=0.2, seed=7)

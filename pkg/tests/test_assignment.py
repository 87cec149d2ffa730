from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aci.assignment import (
    GAConfig,
    TargetWindow,
    fitness,
    in_window_set,
    optimize_assignment,
    standardized_covariates,
)
from aci.network import build_network

from conftest import random_network


def pair_sum(Z, metric="euclidean"):
    """Double sum over ordered pairs, written as an explicit loop."""
    total = 0.0
    for i in range(len(Z)):
        for j in range(len(Z)):
            d = Z[i] - Z[j]
            total += float(d @ d) if metric == "euclidean" else float(np.abs(d).sum()) ** 2
    return total


def exhaustive(net, window, standardize=False, metric="euclidean"):
    X = standardized_covariates(net) if standardize else net.X
    best, arg = 0.0, None
    for bits in itertools.product((0, 1), repeat=net.n):
        a = np.array(bits, dtype=float)
        g = (net.W @ a) / net.row_sum
        m = (a == window.a_star) & (g >= window.lo - 1e-12) & (g <= window.hi + 1e-12)
        f = pair_sum(X[m], metric)
        if f > best or arg is None:
            best, arg = f, a
    return best, arg


class TestWindow:
    def test_bounds_clipped(self):
        w = TargetWindow(1, 0.98, 0.1)
        assert (w.lo, w.hi) == (pytest.approx(0.93), 1.0)
        assert TargetWindow(0, 0.0, 0.1).lo == 0.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            TargetWindow(2, 0.5, 0.1)
        with pytest.raises(ValueError):
            TargetWindow(1, 0.5, 0.0)


class TestInWindowSet:
    def test_membership(self):
        # node exposures (0.45, 0.7, 0.55) from a weighted star around a hub
        edges = [(0, 3, 0.45), (0, 4, 0.55), (1, 3, 0.7), (1, 4, 0.3), (2, 3, 0.55), (2, 4, 0.45)]
        net = build_network(edges, np.zeros((5, 1)))
        a = np.array([1, 1, 0, 1, 0])
        np.testing.assert_allclose(net.exposures(a)[:3], [0.45, 0.7, 0.55])
        assert in_window_set(net, a, TargetWindow(1, 0.5, 0.2)).tolist() == [0]

    def test_all_ones(self):
        net = random_network(np.random.default_rng(0), 8)
        assert in_window_set(net, np.ones(8, int), TargetWindow(1, 1.0, 0.1)).tolist() == list(range(8))

    def test_empty(self):
        net = random_network(np.random.default_rng(0), 8)
        assert in_window_set(net, np.ones(8, int), TargetWindow(1, 0.2, 0.1)).size == 0


class TestFitness:
    def test_small_sets(self):
        net = random_network(np.random.default_rng(1), 6)
        w = TargetWindow(1, 1.0, 0.1)
        assert fitness(net, np.zeros(6, int), w) == 0.0
        # exactly one in-window node: no pairs
        star = build_network([(0, 1, 1.0), (0, 2, 1.0)], np.eye(3))
        assert fitness(star, [0, 1, 0], TargetWindow(1, 0.0, 0.1)) == 0.0

    def test_two_points(self):
        # nodes 0 and 1 have integrated covariates (0, 0) and (1, 1): 2 per ordered pair, 4 in total
        C = np.array([[0.0], [1.0], [0.0], [1.0]])
        net = build_network([(0, 2, 1.0), (1, 3, 1.0)], C)
        np.testing.assert_array_equal(net.X[:2], [[0.0, 0.0], [1.0, 1.0]])
        assert fitness(net, [1, 1, 0, 0], TargetWindow(1, 0.0, 0.1), standardize=False) == pytest.approx(4.0)
        f = fitness(net, [1, 1, 1, 1], TargetWindow(1, 1.0, 0.1), standardize=False)
        assert f == pytest.approx(pair_sum(net.X), abs=1e-12)

    def test_duplicate_increases(self):
        rng = np.random.default_rng(2)
        Z = rng.random((3, 2))
        assert pair_sum(np.vstack([Z, Z[:1]])) > pair_sum(Z)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["euclidean", "manhattan"]), st.booleans())
    def test_matches_loop_oracle(self, seed, metric, standardize):
        rng = np.random.default_rng(seed)
        net = random_network(rng, int(rng.integers(3, 15)))
        a = rng.integers(0, 2, net.n)
        w = TargetWindow(int(rng.integers(0, 2)), float(rng.random()), 0.3)
        X = standardized_covariates(net) if standardize else net.X
        ref = pair_sum(X[in_window_set(net, a, w)], metric)
        assert fitness(net, a, w, metric, standardize) == pytest.approx(ref, rel=1e-10, abs=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.random((int(rng.integers(0, 8)), 3))
        assert pair_sum(Z[rng.permutation(len(Z))]) == pytest.approx(pair_sum(Z))

    def test_standardized_columns(self):
        net = random_network(np.random.default_rng(3), 30)
        Xs = standardized_covariates(net)
        np.testing.assert_allclose(Xs.mean(axis=0), 0.0, atol=1e-12)
        sd = Xs.std(axis=0)
        assert np.all(np.isclose(sd, 1.0) | np.isclose(sd, 0.0))


class TestOptimize:
    def test_triangle_all_ones(self):
        net = build_network([(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], np.array([[0.0], [1.0], [3.0]]))
        w = TargetWindow(1, 1.0, 0.1)
        best, arg = exhaustive(net, w)
        res = optimize_assignment(net, w, GAConfig(seed=0), standardize=False)
        np.testing.assert_array_equal(arg, [1, 1, 1])
        np.testing.assert_array_equal(res.assignment, [1, 1, 1])
        assert res.fitness == pytest.approx(best)

    def test_flat_landscape(self):
        # a 2-node network can never put two nodes at a*=1 and g=0.5
        net = build_network([(0, 1, 1.0)], np.eye(2))
        res = optimize_assignment(net, TargetWindow(1, 0.5, 0.1), GAConfig(seed=0, epochs=10))
        assert res.fitness == 0.0

    def test_deterministic_under_seed(self):
        net = random_network(np.random.default_rng(4), 20, edge_prob=0.2)
        w = TargetWindow(0, 0.3, 0.1)
        a = optimize_assignment(net, w, GAConfig(seed=9))
        b = optimize_assignment(net, w, GAConfig(seed=9))
        np.testing.assert_array_equal(a.assignment, b.assignment)
        np.testing.assert_array_equal(a.history, b.history)

    def test_result_consistent(self):
        net = random_network(np.random.default_rng(5), 25, edge_prob=0.15)
        w = TargetWindow(1, 0.4, 0.1)
        res = optimize_assignment(net, w, GAConfig(seed=1))
        assert res.fitness == pytest.approx(fitness(net, res.assignment, w))
        assert res.in_window_count == in_window_set(net, res.assignment, w).size
        assert np.all(np.diff(res.history) >= 0)
        assert json.loads(res.history_json())["in_window_count"] == res.in_window_count

    def test_early_stop(self):
        net = build_network([(0, 1, 1.0)], np.eye(2))
        res = optimize_assignment(net, TargetWindow(1, 0.5, 0.1), GAConfig(seed=0, early_stop_patience=5))
        assert len(res.history) == 6

    @pytest.mark.parametrize("seed", range(12))
    def test_exhaustive_optimum(self, seed):
        rng = np.random.default_rng(100 + seed)
        net = random_network(rng, int(rng.integers(5, 11)))
        w = TargetWindow(int(rng.integers(0, 2)), float(rng.random()), 0.1)
        best, _ = exhaustive(net, w)
        res = optimize_assignment(net, w, GAConfig(seed=seed), standardize=False)
        assert res.fitness <= best + 1e-9
        assert res.fitness >= 0.95 * best

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GAConfig(population_size=1)
        with pytest.raises(ValueError):
            GAConfig(mutation_rate=2.0)

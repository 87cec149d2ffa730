from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aci.active import RunConfig, RunTrace, distribute_evenly, rta_budget_from, run_aci, run_rta
from aci.assignment import GAConfig
from aci.gp import GPFitConfig
from aci.network import Dataset
from aci.simulation import generate_population, simulation_oracle, true_effect_curves

FAST = dict(gp=GPFitConfig(restarts=2, maxiter=100), ga=GAConfig(epochs=60, early_stop_patience=15))


def literal_even_split(N_u, n_u):
    """Line-by-line transcription with 1-based indexing."""
    base = N_u // n_u
    remainder = N_u % n_u
    N_r = [None] + [base] * n_u
    for i in range(1, remainder + 1):
        N_r[i] = N_r[i] + 1
    return N_r[1:]


class TestDistributeEvenly:
    @pytest.mark.parametrize(
        "N_u, n_u, expected", [(9, 4, [3, 2, 2, 2]), (4, 4, [1, 1, 1, 1]), (0, 3, [0, 0, 0])]
    )
    def test_examples(self, N_u, n_u, expected):
        assert distribute_evenly(N_u, n_u) == expected

    def test_zero_parts(self):
        with pytest.raises(ValueError):
            distribute_evenly(5, 0)
        with pytest.raises(ValueError):
            distribute_evenly(-1, 2)

    @given(st.integers(0, 200), st.integers(1, 20))
    def test_properties(self, N_u, n_u):
        v = distribute_evenly(N_u, n_u)
        assert len(v) == n_u and sum(v) == N_u
        assert max(v) - min(v) <= 1
        assert v == sorted(v, reverse=True)
        assert v == literal_even_split(N_u, n_u)


def _setup(seed=7, Q=10, n=20, **kw):
    pop = generate_population(Q=Q, n=n, edge_prob=0.2, seed=seed)
    cfg = RunConfig(**{**dict(M=8, T=2, alpha=0.1, grid_size=51, seed=seed), **FAST, **kw})
    truth = true_effect_curves(pop, cfg.grid)
    return pop, cfg, truth


@pytest.fixture(scope="module")
def aci_run():
    pop, cfg, truth = _setup()
    return pop, cfg, truth, run_aci(pop.networks, simulation_oracle(pop, 1), cfg, truth)


class TestRunAci:
    def test_stage_layout(self, aci_run):
        _, cfg, _, tr = aci_run
        kinds = [s.kind for s in tr.stages]
        assert kinds[:4] == ["boundary", "boundary", "warmup", "warmup"]
        assert tr.stages[0].target == (1, 1.0) and tr.stages[1].target == (0, 0.0)
        assert tr.stages[2].target == (0, 0.5) and tr.stages[3].target == (1, 0.5)
        assert len(tr.stages) <= 4 + cfg.T
        assert all(k == "selected" for k in kinds[4:])

    def test_no_network_reuse_and_conservation(self, aci_run):
        pop, _, _, tr = aci_run
        used = tr.consumed
        assert len(used) == len(set(used))
        assert sorted(used + tr.remaining) == sorted(n.id for n in pop.networks)
        assert tr.stages[-1].networks_used == len(used)
        running = 0
        for st_ in tr.stages:
            running += len(st_.networks)
            assert st_.networks_used == running

    def test_boundary_assignments(self, aci_run):
        _, _, _, tr = aci_run
        assert set(tr.stages[0].assignments[0]) == {1}
        assert set(tr.stages[1].assignments[0]) == {0}
        assert tr.stages[0].curves is None and tr.stages[1].curves is not None

    def test_window_requirement(self, aci_run):
        pop, cfg, _, tr = aci_run
        nets = {n.id: n for n in pop.networks}
        D = Dataset()
        for st_ in tr.stages:
            for nid, a in zip(st_.networks, st_.assignments):
                net = nets[nid]
                D.extend(np.asarray(a), net.exposures(a), net.X, np.zeros(net.n))
            if st_.kind != "boundary" and not st_.partial:
                lo, hi = st_.window
                assert D.count_in_window(st_.target[0], lo, hi) >= cfg.M
            assert len(D) == st_.dataset_size

    def test_levels_distinct(self, aci_run):
        _, cfg, _, tr = aci_run
        sel = [s.target for s in tr.stages if s.kind in ("warmup", "selected")]
        for i, (a, g) in enumerate(sel):
            for b, h in sel[:i]:
                assert a != b or abs(g - h) >= cfg.min_separation - 1e-12

    def test_tau0_baseline(self, aci_run):
        _, _, _, tr = aci_run
        for st_ in tr.stages[1:]:
            assert st_.curves["tau0"].mean[0] == 0.0
            np.testing.assert_array_equal(
                st_.curves["tau10"].mean, st_.curves["tau1"].mean - st_.curves["tau0"].mean
            )

    def test_reproducible(self, aci_run):
        pop, cfg, truth, tr = aci_run
        again = run_aci(pop.networks, simulation_oracle(pop, 1), cfg, truth)
        assert again.to_json() == tr.to_json()

    def test_json_roundtrip(self, aci_run):
        tr = aci_run[3]
        back = RunTrace.from_json(tr.to_json())
        assert back.to_json() == tr.to_json()
        assert back.visited == tr.visited

    def test_zero_levels(self):
        pop, cfg, truth = _setup(seed=3, T=0)
        tr = run_aci(pop.networks, simulation_oracle(pop, 0), cfg, truth)
        assert [s.kind for s in tr.stages] == ["boundary", "boundary", "warmup", "warmup"]
        assert tr.stop_reason == "level budget reached" and not tr.truncated

    def test_exhaustion_truncates(self):
        pop, cfg, truth = _setup(seed=4, Q=5, M=60, T=3)
        tr = run_aci(pop.networks, simulation_oracle(pop, 0), cfg, truth)
        assert tr.truncated
        assert not tr.remaining
        assert tr.stages[-1].partial

    def test_too_few_networks(self):
        pop, cfg, _ = _setup(Q=3)
        with pytest.raises(ValueError):
            run_aci(pop.networks, simulation_oracle(pop, 0), cfg)

    def test_variance_threshold_stops(self):
        pop, cfg, truth = _setup(seed=5, T=3, variance_threshold=1e12)
        tr = run_aci(pop.networks, simulation_oracle(pop, 0), cfg, truth)
        assert len(tr.stages) == 4 and tr.stop_reason == "variance threshold reached"

    def test_workers_match_serial(self):
        pop, cfg, truth = _setup(seed=6, T=1)
        a = run_aci(pop.networks, simulation_oracle(pop, 0), cfg, truth)
        cfg2 = RunConfig(**{**cfg.to_dict(), "ga": cfg.ga, "gp": cfg.gp, "workers": 3})
        b = run_aci(pop.networks, simulation_oracle(pop, 0), cfg2, truth)
        assert [s.networks for s in a.stages] == [s.networks for s in b.stages]
        assert [s.assignments for s in a.stages] == [s.assignments for s in b.stages]


class TestRunRta:
    def test_budgets_and_proportions(self):
        pop, cfg, truth = _setup(seed=8, Q=12)
        tr = run_rta(pop.networks, simulation_oracle(pop, 0), cfg, n_u=4, N_u=9, truth=truth)
        assert tr.meta["budgets"] == [3, 2, 2, 2]
        rand = [s for s in tr.stages if s.kind == "random"]
        assert [len(s.networks) for s in rand] == [3, 2, 2, 2]
        assert [s.target[0] for s in rand] == [0, 1, 0, 1]
        for s in rand:
            g = s.target[1]
            for a in s.assignments:
                assert sum(a) == int(np.floor(g * len(a) + 0.5))
        assert len(set(tr.consumed)) == len(tr.consumed) == 11

    def test_proportion_rule_n100(self):
        pop = generate_population(Q=6, n=100, seed=1)
        cfg = RunConfig(seed=2, grid_size=21, **FAST)
        tr = run_rta(pop.networks, simulation_oracle(pop, 0), cfg, n_u=2, N_u=2)
        for s in tr.stages[2:]:
            assert sum(s.assignments[0]) == int(np.floor(s.target[1] * 100 + 0.5))

    def test_reproducible_levels(self):
        pop, cfg, truth = _setup(seed=9)
        a = run_rta(pop.networks, simulation_oracle(pop, 0), cfg, 3, 5, truth)
        b = run_rta(pop.networks, simulation_oracle(pop, 0), cfg, 3, 5, truth)
        assert a.visited == b.visited and a.to_json() == b.to_json()

    def test_budget_from_aci(self, aci_run):
        tr = aci_run[3]
        n_u, N_u = rta_budget_from(tr)
        assert n_u == len(tr.stages) - 2
        assert N_u == len(tr.consumed) - 2

    def test_invalid_budget(self):
        pop, cfg, _ = _setup()
        with pytest.raises(ValueError):
            run_rta(pop.networks, simulation_oracle(pop, 0), cfg, n_u=4, N_u=3)

    def test_supply_exhausted(self):
        pop, cfg, _ = _setup(Q=5)
        tr = run_rta(pop.networks, simulation_oracle(pop, 0), cfg, n_u=2, N_u=6)
        assert tr.truncated


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(M=0)
    with pytest.raises(ValueError):
        RunConfig(alpha=0.0)
    cfg = RunConfig(M=3, ga=GAConfig(epochs=5))
    assert RunConfig.from_dict(cfg.to_dict()) == cfg

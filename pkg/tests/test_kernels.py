from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aci import _kernels as K

needs_numba = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


def _cov_inputs(rng, n, d):
    X, g = rng.random((n, d)), rng.random(n)
    q = np.exp(rng.uniform(-1, 1, d))
    return X, g, q, *np.exp(rng.uniform(-1, 1, 3)), 0.1


@needs_numba
class TestBackendsAgree:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 20), st.sampled_from([0, 1]))
    def test_window_fitness(self, seed, n, metric):
        rng = np.random.default_rng(seed)
        W = np.triu(rng.random((n, n)) < 0.4, 1).astype(float)
        W = W + W.T
        rs = np.where(W.sum(1) > 0, W.sum(1), 1.0)
        pop = rng.integers(0, 2, (7, n)).astype(np.int8)
        Xs = rng.normal(size=(n, 4))
        a = int(rng.integers(0, 2))
        lo = float(rng.random() * 0.8)
        f1, c1 = K.window_fitness_numpy(pop, W, rs, Xs, a, lo, lo + 0.3, metric)
        f2, c2 = K.window_fitness_numba(pop, W, rs, Xs, a, lo, lo + 0.3, metric)
        np.testing.assert_array_equal(c1, c2)
        np.testing.assert_allclose(f1, f2, rtol=1e-10, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 30), st.integers(1, 6))
    def test_rbf(self, seed, n, d):
        rng = np.random.default_rng(seed)
        A, B = rng.normal(size=(n, d)), rng.normal(size=(n + 2, d))
        np.testing.assert_allclose(K.rbf_cross_numpy(A, B), K.rbf_cross_numba(A, B), rtol=1e-12, atol=1e-15)
        assert K.rbf_pair_sum_numpy(A) == pytest.approx(K.rbf_pair_sum_numba(A), rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 15), st.integers(1, 5))
    def test_train_cov_and_gradient(self, seed, n, d):
        rng = np.random.default_rng(seed)
        args = _cov_inputs(rng, n, d)
        out_np = K.train_cov_numpy(*args)
        out_nb = K.train_cov_numba(*args)
        for a, b in zip(out_np, out_nb):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
        Kfull, Kx, Kg = out_np
        Kinv = np.linalg.inv(Kfull)
        alpha = Kinv @ rng.normal(size=n)
        low = np.tril(Kinv)
        r_np = K.grad_contract_numpy(alpha, low, Kx, Kg, args[0], args[1])
        r_nb = K.grad_contract_numba(alpha, low, Kx, Kg, args[0], args[1])
        for a, b in zip(r_np, r_nb):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


def test_pair_sum_matches_matrix():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(1100, 3))  # spans more than one chunk
    ref = K.rbf_cross_numpy(Z, Z).sum()
    assert K.rbf_pair_sum_numpy(Z) == pytest.approx(ref, rel=1e-12)


def test_train_cov_shapes():
    rng = np.random.default_rng(1)
    X, g, q, sx2, sg2, lam, st2 = _cov_inputs(rng, 6, 2)
    Kfull, Kx, Kg = K.train_cov(X, g, q, sx2, sg2, lam, st2)
    np.testing.assert_allclose(Kfull, Kx + Kg + st2 * np.eye(6), atol=1e-15)
    np.testing.assert_allclose(np.diag(Kx), sx2)
    np.testing.assert_allclose(np.diag(Kg), sg2)


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", None)])
def test_env_flag_selects_backend(flag, expected):
    env = {**os.environ, "ACI_DISABLE_NUMBA": flag}
    out = subprocess.run(
        [sys.executable, "-c", "import aci; print(aci.backend())"], env=env, capture_output=True, text=True, check=True
    ).stdout.strip()
    assert out == (expected or ("numba" if K.HAVE_NUMBA else "numpy"))

"""Time the numba kernels against the pure-numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py            # kernels only
    python3 benchmarks/bench_kernels.py --e2e      # plus a small ACI run per backend

The end-to-end timing launches a fresh interpreter per backend with
``ACI_DISABLE_NUMBA`` set accordingly, since the backend is fixed at import.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from aci import _kernels as K

E2E = """
import time, numpy as np
from aci import backend
from aci.active import RunConfig, run_aci
from aci.gp import GPFitConfig
from aci.simulation import generate_population, simulation_oracle, true_effect_curves
pop = generate_population(Q=20, n=50, seed=1000)
cfg = RunConfig(M=20, T=3, seed=0, gp=GPFitConfig(restarts=2))
truth = true_effect_curves(pop, cfg.grid)
t = time.perf_counter()
run_aci(pop.networks, simulation_oracle(pop, 0), cfg, truth)
print(backend(), time.perf_counter() - t)
"""


def cases(rng):
    n = 100
    W = np.triu(rng.random((n, n)) < 0.08, 1).astype(float)
    W = W + W.T
    rs = np.maximum(W.sum(1), 1.0)
    pop = rng.integers(0, 2, (40, n)).astype(np.int8)
    Xs = rng.normal(size=(n, 6))
    Z = rng.normal(size=(2000, 7))
    m = 400
    X, g, q = rng.random((m, 6)), rng.random(m), np.exp(rng.uniform(-1, 1, 6))
    Kfull, Kx, Kg = K.train_cov_numpy(X, g, q, 1.0, 0.5, 0.3, 0.1)
    low = np.tril(np.linalg.inv(Kfull))
    alpha = rng.normal(size=m)
    return {
        "window_fitness (K=40, n=100)": ("window_fitness", (pop, W, rs, Xs, 1, 0.3, 0.4, 0)),
        "rbf_pair_sum (2000 x 7)": ("rbf_pair_sum", (Z,)),
        "train_cov (400 x 6)": ("train_cov", (X, g, q, 1.0, 0.5, 0.3, 0.1)),
        "grad_contract (400 x 6)": ("grad_contract", (alpha, low, Kx, Kg, X, g)),
    }


def best_of(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up, includes numba compilation
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--e2e", action="store_true", help="also time a small ACI run per backend")
    args = ap.parse_args(argv)

    print(f"{'kernel':<30} {'numpy':>11} {'numba':>11} {'speedup':>8}")
    for label, (name, call) in cases(np.random.default_rng(0)).items():
        t_np = best_of(getattr(K, f"{name}_numpy"), call, args.repeat)
        if K.HAVE_NUMBA:
            t_nb = best_of(getattr(K, f"{name}_numba"), call, args.repeat)
            print(f"{label:<30} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms {t_np / t_nb:7.1f}x")
        else:
            print(f"{label:<30} {t_np * 1e3:9.3f}ms {'n/a':>11}")

    if args.e2e:
        for flag in ("1", "0"):
            env = {**os.environ, "ACI_DISABLE_NUMBA": flag}
            out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
            name, secs = out.stdout.split()
            print(f"ACI run, Q=20 n=50 T=3, backend {name}: {float(secs):.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``ACI_DISABLE_NUMBA`` is unset (or set to ``0``/``false``).  Both
paths are always importable as ``*_numpy`` / ``*_numba`` so they can be
compared directly; the unsuffixed names dispatch to the active backend.
"""

from __future__ import annotations

import os

import numpy as np

METRICS = {"euclidean": 0, "manhattan": 1}

# bounds are inclusive; exposures like 1/3 land on window edges often
WINDOW_TOL = 1e-12

_PAIR_CHUNK = 512


def _env_disabled() -> bool:
    return os.environ.get("ACI_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def backend() -> str:
    """Name of the active kernel backend."""
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def window_fitness_numpy(pop, W, row_sum, Xs, a_star, lo, hi, metric=0):
    """Dispersion fitness for a batch of assignments.

    Parameters
    ----------
    pop : (K, n) array of 0/1
        Candidate treatment vectors.
    W : (n, n) array
        Relationship weights.
    row_sum : (n,) array
        Row sums of ``W`` (all positive).
    Xs : (n, d) array
        Integrated covariates, already scaled for the distance.
    a_star : int
        Target own treatment.
    lo, hi : float
        Exposure window bounds.
    metric : int
        0 for squared Euclidean, 1 for squared Manhattan.

    Returns
    -------
    fitness : (K,) float array
    counts : (K,) int array
        Number of in-window individuals per assignment.
    """
    pop = np.asarray(pop, dtype=np.float64)
    treated = pop @ W.T
    total = treated + (1.0 - pop) @ W.T
    # dividing by treated + untreated weight makes all-ones exactly 1
    expo = treated / np.where(total > 0, total, row_sum)
    mask = (pop == a_star) & (expo >= lo - WINDOW_TOL) & (expo <= hi + WINDOW_TOL)
    counts = mask.sum(axis=1)
    if metric == 0:
        # sum_ij |xi - xj|^2 = 2 m sum_i |xi|^2 - 2 |sum_i xi|^2
        m = mask.astype(np.float64)
        sq = m @ np.einsum("ij,ij->i", Xs, Xs)
        tot = m @ Xs
        fit = 2.0 * counts * sq - 2.0 * np.einsum("ij,ij->i", tot, tot)
        fit = np.maximum(fit, 0.0)
    else:
        fit = np.zeros(pop.shape[0])
        for k in range(pop.shape[0]):
            sub = Xs[mask[k]]
            if sub.shape[0] > 1:
                d = np.abs(sub[:, None, :] - sub[None, :, :]).sum(axis=2)
                fit[k] = np.sum(d * d)
    return fit, counts.astype(np.int64)


def rbf_cross_numpy(Za, Zb):
    """``exp(-0.5 * |za - zb|^2)`` for every row pair of pre-scaled inputs."""
    out = np.empty((Za.shape[0], Zb.shape[0]))
    for s in range(0, Za.shape[0], _PAIR_CHUNK):
        diff = Za[s : s + _PAIR_CHUNK, None, :] - Zb[None, :, :]
        out[s : s + _PAIR_CHUNK] = np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff))
    return out


def rbf_pair_sum_numpy(Z):
    """Sum of ``exp(-0.5 * |zi - zj|^2)`` over all ordered row pairs."""
    total = 0.0
    for s in range(0, Z.shape[0], _PAIR_CHUNK):
        diff = Z[s : s + _PAIR_CHUNK, None, :] - Z[None, :, :]
        total += np.exp(-0.5 * np.einsum("ijk,ijk->ij", diff, diff)).sum()
    return float(total)


def train_cov_numpy(X, g, q, sx2, sg2, lam, st2):
    """Training covariance ``K + st2 I`` and its two signal blocks."""
    s = np.sqrt(q)
    Kx = sx2 * rbf_cross_numpy(X * s, X * s)
    dg = g[:, None] - g[None, :]
    Kg = sg2 * np.exp(-0.5 * dg * dg / lam**2)
    K = Kx + Kg
    K[np.diag_indices_from(K)] += st2
    return K, Kx, Kg


def grad_contract_numpy(alpha, Kinv_lower, Kx, Kg, X, g):
    """Trace contractions needed by the log-likelihood gradient.

    With ``A = alpha alpha^T - K^{-1}`` (only the lower triangle of
    ``K^{-1}`` is read) returns ``sum(A*Kx)``, per-dimension
    ``sum(A*Kx*(x_ik - x_jk)^2)``, ``sum(A*Kg)``,
    ``sum(A*Kg*(g_i - g_j)^2)`` and ``trace(A)``.
    """
    Kinv = np.tril(Kinv_lower)
    Kinv = Kinv + np.tril(Kinv, -1).T
    A = np.outer(alpha, alpha) - Kinv
    AKx = A * Kx
    AKg = A * Kg
    per_dim = np.empty(X.shape[1])
    for k in range(X.shape[1]):
        diff = X[:, k, None] - X[None, :, k]
        per_dim[k] = np.sum(AKx * diff * diff)
    dg = g[:, None] - g[None, :]
    return float(AKx.sum()), per_dim, float(AKg.sum()), float(np.sum(AKg * dg * dg)), float(np.trace(A))


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _window_fitness_nb(pop, W, row_sum, Xs, a_star, lo, hi, metric):
        K, n = pop.shape
        d = Xs.shape[1]
        fit = np.zeros(K)
        counts = np.zeros(K, dtype=np.int64)
        idx = np.empty(n, dtype=np.int64)
        tot = np.empty(d)
        # neighbor lists, built once; skipping zero weights leaves sums unchanged
        ptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            c = 0
            for j in range(n):
                if W[i, j] != 0.0:
                    c += 1
            ptr[i + 1] = ptr[i] + c
        nbr = np.empty(ptr[n], dtype=np.int64)
        wt = np.empty(ptr[n])
        for i in range(n):
            c = ptr[i]
            for j in range(n):
                if W[i, j] != 0.0:
                    nbr[c] = j
                    wt[c] = W[i, j]
                    c += 1
        for k in range(K):
            m = 0
            for i in range(n):
                if pop[k, i] != a_star:
                    continue
                s = 0.0
                u = 0.0
                for c in range(ptr[i], ptr[i + 1]):
                    if pop[k, nbr[c]] != 0:
                        s += wt[c]
                    else:
                        u += wt[c]
                e = s / (s + u) if s + u > 0 else s / row_sum[i]
                if e >= lo - 1e-12 and e <= hi + 1e-12:
                    idx[m] = i
                    m += 1
            counts[k] = m
            if m < 2:
                continue
            if metric == 0:
                sq = 0.0
                for c in range(d):
                    tot[c] = 0.0
                for r in range(m):
                    i = idx[r]
                    for c in range(d):
                        v = Xs[i, c]
                        sq += v * v
                        tot[c] += v
                t2 = 0.0
                for c in range(d):
                    t2 += tot[c] * tot[c]
                f = 2.0 * m * sq - 2.0 * t2
                fit[k] = f if f > 0.0 else 0.0
            else:
                f = 0.0
                for r in range(m):
                    i = idx[r]
                    for q in range(r + 1, m):
                        j = idx[q]
                        dist = 0.0
                        for c in range(d):
                            dist += abs(Xs[i, c] - Xs[j, c])
                        f += 2.0 * dist * dist
                fit[k] = f
        return fit, counts

    @numba.njit(cache=True, nogil=True)
    def _rbf_cross_nb(Za, Zb):
        na, nb_ = Za.shape[0], Zb.shape[0]
        d = Za.shape[1]
        out = np.empty((na, nb_))
        for i in range(na):
            for j in range(nb_):
                s = 0.0
                for c in range(d):
                    t = Za[i, c] - Zb[j, c]
                    s += t * t
                out[i, j] = np.exp(-0.5 * s)
        return out

    @numba.njit(cache=True, nogil=True)
    def _rbf_pair_sum_nb(Z):
        n, d = Z.shape
        total = float(n)
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for c in range(d):
                    t = Z[i, c] - Z[j, c]
                    s += t * t
                total += 2.0 * np.exp(-0.5 * s)
        return total


    @numba.njit(cache=True, nogil=True)
    def _train_cov_nb(X, g, q, sx2, sg2, lam, st2):
        n, d = X.shape
        K = np.empty((n, n))
        Kx = np.empty((n, n))
        Kg = np.empty((n, n))
        inv2l = 0.5 / (lam * lam)
        for i in range(n):
            Kx[i, i] = sx2
            Kg[i, i] = sg2
            K[i, i] = sx2 + sg2 + st2
            for j in range(i):
                s = 0.0
                for c in range(d):
                    u = X[i, c] - X[j, c]
                    s += q[c] * u * u
                kx = sx2 * np.exp(-0.5 * s)
                t = g[i] - g[j]
                kg = sg2 * np.exp(-inv2l * t * t)
                Kx[i, j] = kx
                Kx[j, i] = kx
                Kg[i, j] = kg
                Kg[j, i] = kg
                K[i, j] = kx + kg
                K[j, i] = kx + kg
        return K, Kx, Kg

    @numba.njit(cache=True, nogil=True)
    def _grad_contract_nb(alpha, Kinv, Kx, Kg, X, g):
        n, d = X.shape
        sx = 0.0
        sg = 0.0
        sgl = 0.0
        tr = 0.0
        per_dim = np.zeros(d)
        for i in range(n):
            a_ii = alpha[i] * alpha[i] - Kinv[i, i]
            tr += a_ii
            sx += a_ii * Kx[i, i]
            sg += a_ii * Kg[i, i]
            for j in range(i):
                # symmetric: count (i, j) and (j, i) together
                a_ij = alpha[i] * alpha[j] - Kinv[i, j]
                ax = 2.0 * a_ij * Kx[i, j]
                ag = 2.0 * a_ij * Kg[i, j]
                sx += ax
                sg += ag
                t = g[i] - g[j]
                sgl += ag * t * t
                for c in range(d):
                    u = X[i, c] - X[j, c]
                    per_dim[c] += ax * u * u
        return sx, per_dim, sg, sgl, tr


def train_cov_numba(X, g, q, sx2, sg2, lam, st2):
    return _train_cov_nb(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(q, dtype=np.float64), float(sx2), float(sg2), float(lam), float(st2),
    )


def grad_contract_numba(alpha, Kinv_lower, Kx, Kg, X, g):
    sx, per_dim, sg, sgl, tr = _grad_contract_nb(
        np.ascontiguousarray(alpha), np.ascontiguousarray(Kinv_lower), np.ascontiguousarray(Kx),
        np.ascontiguousarray(Kg), np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
    )
    return float(sx), per_dim, float(sg), float(sgl), float(tr)


def window_fitness_numba(pop, W, row_sum, Xs, a_star, lo, hi, metric=0):
    return _window_fitness_nb(
        np.ascontiguousarray(pop, dtype=np.int8),
        np.ascontiguousarray(W, dtype=np.float64),
        np.ascontiguousarray(row_sum, dtype=np.float64),
        np.ascontiguousarray(Xs, dtype=np.float64),
        int(a_star),
        float(lo),
        float(hi),
        int(metric),
    )


def rbf_cross_numba(Za, Zb):
    return _rbf_cross_nb(
        np.ascontiguousarray(Za, dtype=np.float64), np.ascontiguousarray(Zb, dtype=np.float64)
    )


def rbf_pair_sum_numba(Z):
    return float(_rbf_pair_sum_nb(np.ascontiguousarray(Z, dtype=np.float64)))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    window_fitness = window_fitness_numba
    rbf_cross = rbf_cross_numba
    rbf_pair_sum = rbf_pair_sum_numba
    grad_contract = grad_contract_numba
    train_cov = train_cov_numba
else:
    window_fitness = window_fitness_numpy
    rbf_cross = rbf_cross_numpy
    rbf_pair_sum = rbf_pair_sum_numpy
    grad_contract = grad_contract_numpy
    train_cov = train_cov_numpy

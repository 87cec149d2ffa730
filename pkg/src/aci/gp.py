"""Gaussian-process regression over (integrated covariates, exposure) inputs.

The covariance is the sum of an anisotropic squared-exponential term on the
covariates and a squared-exponential term on the exposure::

    k((x, g), (x', g')) = sx2 * exp(-0.5 (x - x')^T diag(q) (x - x'))
                        + sg2 * exp(-(g - g')^2 / (2 lg^2))

Hyperparameters are optimized in log space by maximizing the log marginal
likelihood with analytic gradients.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import _kernels

log = logging.getLogger(__name__)

LOG2PI = np.log(2.0 * np.pi)
JITTER_LADDER = (0.0,) + tuple(10.0**k for k in range(-10, -3))


class DecompositionError(np.linalg.LinAlgError):
    """Cholesky factorization failed even after the full jitter ladder."""


# ---------------------------------------------------------------------------
# hyperparameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelParams:
    sigma_x2: float
    q_diag: np.ndarray
    sigma_g2: float
    lambda_g: float
    sigma_t2: float = 1e-2

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q_diag, dtype=np.float64)).copy()
        q.setflags(write=False)
        object.__setattr__(self, "q_diag", q)
        if not (self.sigma_x2 > 0 and self.sigma_g2 > 0 and self.lambda_g > 0):
            raise ValueError("signal variances and length-scale must be positive")
        if np.any(q <= 0):
            raise ValueError("q_diag entries must be positive")
        if not self.sigma_t2 >= 0:
            raise ValueError("noise variance must be non-negative")

    @property
    def dim(self) -> int:
        return self.q_diag.shape[0]

    @property
    def n_params(self) -> int:
        return self.dim + 4

    def to_log(self) -> np.ndarray:
        """Log-space vector ``[sx2, q_1..q_d, sg2, lg, st2]``.

        A zero noise variance maps to ``-inf``.
        """
        with np.errstate(divide="ignore"):
            return np.log(
                np.concatenate(
                    [[self.sigma_x2], self.q_diag, [self.sigma_g2, self.lambda_g, self.sigma_t2]]
                )
            )

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        v = np.exp(np.asarray(theta, dtype=np.float64))
        return cls(
            sigma_x2=float(v[0]),
            q_diag=v[1:-3],
            sigma_g2=float(v[-3]),
            lambda_g=float(v[-2]),
            sigma_t2=float(v[-1]),
        )

    @classmethod
    def default(cls, dim: int) -> "KernelParams":
        return cls(1.0, np.ones(dim), 1.0, 1.0, 1e-2)

    def to_dict(self) -> dict:
        return {
            "log_sigma_x2": float(np.log(self.sigma_x2)),
            "log_q_diag": np.log(self.q_diag).tolist(),
            "log_sigma_g2": float(np.log(self.sigma_g2)),
            "log_lambda_g": float(np.log(self.lambda_g)),
            "log_sigma_t2": float(np.log(self.sigma_t2)) if self.sigma_t2 > 0 else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        st = d.get("log_sigma_t2")
        return cls(
            sigma_x2=float(np.exp(d["log_sigma_x2"])),
            q_diag=np.exp(np.asarray(d["log_q_diag"], dtype=np.float64)),
            sigma_g2=float(np.exp(d["log_sigma_g2"])),
            lambda_g=float(np.exp(d["log_lambda_g"])),
            sigma_t2=0.0 if st is None else float(np.exp(st)),
        )


def params_to_json(params: KernelParams, lml: float | None = None) -> str:
    d = params.to_dict()
    d["lml"] = lml
    return json.dumps(d, indent=2)


def params_from_json(text: str) -> tuple[KernelParams, float | None]:
    d = json.loads(text)
    return KernelParams.from_dict(d), d.get("lml")


# ---------------------------------------------------------------------------
# training data and posterior containers
# ---------------------------------------------------------------------------


@dataclass
class TrainingSet:
    """Rows of one treatment arm: covariates ``X``, exposures ``g``, targets ``y``."""

    X: np.ndarray
    g: np.ndarray
    y: np.ndarray
    arm: int | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.g = np.asarray(self.g, dtype=np.float64).reshape(-1)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.X.shape[0] == 1 and self.g.shape[0] == 0:
            self.X = self.X[:0]
        if not (self.X.shape[0] == self.g.shape[0] == self.y.shape[0]):
            raise ValueError(
                f"inconsistent training sizes X={self.X.shape} g={self.g.shape} y={self.y.shape}"
            )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @classmethod
    def from_observations(cls, rows, arm: int | None = None) -> "TrainingSet":
        rows = list(rows)
        if arm is not None:
            rows = [r for r in rows if r.a == arm]
        if arm is None and len({r.a for r in rows}) > 1:
            raise ValueError("training rows mix treatment arms")
        if not rows:
            raise ValueError("no rows for the requested arm")
        return cls(
            np.vstack([r.x for r in rows]),
            [r.g for r in rows],
            [r.y for r in rows],
            arm=rows[0].a,
        )


@dataclass
class Posterior:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


def _check_dim(X, params: KernelParams):
    if X.shape[1] != params.dim:
        raise ValueError(f"covariate dimension {X.shape[1]} does not match q_diag ({params.dim})")


def kernel_parts(Xa, ga, Xb, gb, params: KernelParams):
    """Unscaled covariate and exposure correlation matrices."""
    Xa = np.atleast_2d(np.asarray(Xa, dtype=np.float64))
    Xb = np.atleast_2d(np.asarray(Xb, dtype=np.float64))
    _check_dim(Xa, params)
    _check_dim(Xb, params)
    s = np.sqrt(params.q_diag)
    Rx = _kernels.rbf_cross(Xa * s, Xb * s)
    dg = np.asarray(ga, dtype=np.float64).reshape(-1, 1) - np.asarray(gb, dtype=np.float64).reshape(1, -1)
    Rg = np.exp(-0.5 * dg * dg / params.lambda_g**2)
    return Rx, Rg


def kernel_matrix(rows_a, rows_b, params: KernelParams) -> np.ndarray:
    """Covariance matrix between two point sets given as ``(X, g)`` pairs."""
    Rx, Rg = kernel_parts(rows_a[0], rows_a[1], rows_b[0], rows_b[1], params)
    return params.sigma_x2 * Rx + params.sigma_g2 * Rg


def kernel_eval(p1, p2, params: KernelParams) -> float:
    """Covariance between single points ``(x, g)`` and ``(x', g')``."""
    x1 = np.atleast_1d(np.asarray(p1[0], dtype=np.float64))
    x2 = np.atleast_1d(np.asarray(p2[0], dtype=np.float64))
    if x1.shape != (params.dim,) or x2.shape != (params.dim,):
        raise ValueError(f"points must have covariate dimension {params.dim}")
    d = x1 - x2
    dg = float(p1[1]) - float(p2[1])
    return float(
        params.sigma_x2 * np.exp(-0.5 * np.sum(params.q_diag * d * d))
        + params.sigma_g2 * np.exp(-0.5 * dg * dg / params.lambda_g**2)
    )


# ---------------------------------------------------------------------------
# likelihood
# ---------------------------------------------------------------------------


def cholesky_jitter(K: np.ndarray):
    """Lower Cholesky factor of ``K``, walking up the jitter ladder on failure.

    Returns ``(L, jitter)``.
    """
    n = K.shape[0]
    for jit in JITTER_LADDER:
        try:
            L = linalg.cholesky(K + jit * np.eye(n), lower=True, check_finite=True)
            return L, jit
        except (linalg.LinAlgError, ValueError):
            continue
    raise DecompositionError(f"Cholesky failed for {n}x{n} matrix up to jitter {JITTER_LADDER[-1]:g}")


def _train_cov(train: TrainingSet, params: KernelParams):
    """``(K + st2 I, sx2 Rx, sg2 Rg)`` on the training inputs."""
    _check_dim(train.X, params)
    return _kernels.train_cov(
        train.X, train.g, params.q_diag, params.sigma_x2, params.sigma_g2, params.lambda_g, params.sigma_t2
    )


def log_marginal_likelihood(train: TrainingSet, params: KernelParams) -> float:
    """Log evidence of ``train.y`` under a zero-mean GP with these parameters."""
    K, _, _ = _train_cov(train, params)
    L, _ = cholesky_jitter(K)
    alpha = linalg.cho_solve((L, True), train.y)
    return float(
        -0.5 * train.y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * train.n * LOG2PI
    )


def _lml_and_grad(train: TrainingSet, params: KernelParams):
    K, Kx, Kg = _train_cov(train, params)
    L, _ = cholesky_jitter(K)
    alpha = linalg.cho_solve((L, True), train.y)
    lml = -0.5 * train.y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * train.n * LOG2PI
    # lower triangle of (K + st2 I)^-1 straight from the factor
    Kinv, info = linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        raise DecompositionError(f"dpotri failed with info={info}")
    sx, per_dim, sg, sgl, tr = _kernels.grad_contract(alpha, Kinv, Kx, Kg, train.X, train.g)
    grad = np.empty(params.n_params)
    grad[0] = 0.5 * sx
    # d/dlog q_k of exp(-0.5 sum q d^2) is -0.5 q_k d_k^2 times the kernel
    grad[1:-3] = -0.25 * params.q_diag * per_dim
    grad[-3] = 0.5 * sg
    grad[-2] = 0.5 * sgl / params.lambda_g**2
    grad[-1] = 0.5 * params.sigma_t2 * tr
    return float(lml), grad


def lml_gradient(train: TrainingSet, params: KernelParams) -> np.ndarray:
    """Gradient of the log marginal likelihood with respect to log-parameters.

    Ordered as :meth:`KernelParams.to_log`.
    """
    return _lml_and_grad(train, params)[1]


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GPFitConfig:
    restarts: int = 8
    maxiter: int = 200
    seed: int = 0
    init_low: float = 1e-2
    init_high: float = 1e2
    variance_bounds: tuple = (1e-6, 1e6)
    precision_bounds: tuple = (1e-6, 1e6)
    lengthscale_bounds: tuple = (1e-3, 1e3)
    noise_bounds: tuple = (1e-8, 1e6)

    def log_bounds(self, dim: int):
        b = (
            [self.variance_bounds]
            + [self.precision_bounds] * dim
            + [self.variance_bounds, self.lengthscale_bounds, self.noise_bounds]
        )
        return [(np.log(lo), np.log(hi)) for lo, hi in b]


def _initial_points(dim: int, scale: float, config: GPFitConfig, rng):
    lo, hi = np.log(config.init_low), np.log(config.init_high)
    pts = rng.uniform(lo, hi, size=(config.restarts, dim + 4))
    shift = np.log(scale)
    pts[:, 0] += shift
    pts[:, -3] += shift
    pts[:, -1] += shift
    return pts


def fit_hyperparameters(
    train: TrainingSet,
    config: GPFitConfig | None = None,
    init: KernelParams | None = None,
) -> KernelParams:
    """Maximize the log marginal likelihood with multi-start L-BFGS-B.

    Starting points are ``init`` (if given) plus ``config.restarts`` draws
    that are log-uniform in ``[init_low, init_high]``; the variance draws
    are scaled by the empirical variance of ``y``.  The best result over
    all starts, including the unoptimized starting points themselves, is
    returned, so the achieved likelihood dominates every initial point.
    """
    config = config or GPFitConfig()
    if train.n < 1:
        raise ValueError("cannot fit hyperparameters on an empty training set")
    dim = train.X.shape[1]
    bounds = config.log_bounds(dim)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    scale = float(np.var(train.y)) if train.n > 1 and np.var(train.y) > 0 else 1.0
    rng = np.random.default_rng(config.seed)
    starts = list(_initial_points(dim, scale, config, rng))
    if init is not None:
        starts.insert(0, init.to_log())
    starts = [np.clip(s, lo, hi) for s in starts]

    def objective(theta):
        try:
            lml, g = _lml_and_grad(train, KernelParams.from_log(theta))
        except DecompositionError:
            return 1e25, np.zeros_like(theta)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(theta)
        return -lml, -g

    best_theta, best_val = None, np.inf
    failures = []
    for x0 in starts:
        f0, _ = objective(x0)
        if f0 < best_val:
            best_theta, best_val = x0, f0
        try:
            res = optimize.minimize(
                objective,
                x0,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": config.maxiter},
            )
        except (ValueError, FloatingPointError) as exc:  # pragma: no cover
            failures.append(str(exc))
            continue
        if res.fun < best_val:
            best_theta, best_val = res.x, res.fun
    if best_theta is None or best_val >= 1e25:
        raise DecompositionError(
            f"all {len(starts)} restarts failed to factorize (n_t={train.n}); {failures[:3]}"
        )
    return KernelParams.from_log(best_theta)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------


def _finish_cov(cov):
    cov = 0.5 * (cov + cov.T)
    d = np.diag(cov).copy()
    np.fill_diagonal(cov, np.maximum(d, 0.0))
    return cov


def posterior(train: TrainingSet, params: KernelParams, queries) -> Posterior:
    """Zero-mean GP posterior at query points ``(X, g)``."""
    Xq = np.atleast_2d(np.asarray(queries[0], dtype=np.float64))
    gq = np.asarray(queries[1], dtype=np.float64).reshape(-1)
    Ks = kernel_matrix((Xq, gq), (Xq, gq), params)
    if train.n == 0:
        return Posterior(np.zeros(gq.shape[0]), _finish_cov(Ks))
    K, _, _ = _train_cov(train, params)
    L, _ = cholesky_jitter(K)
    Kts = kernel_matrix((train.X, train.g), (Xq, gq), params)
    alpha = linalg.cho_solve((L, True), train.y)
    V = linalg.solve_triangular(L, Kts, lower=True)
    return Posterior(Kts.T @ alpha, _finish_cov(Ks - V.T @ V))


@dataclass
class GPModel:
    """A fitted single-arm GP with outcomes centered on the training mean."""

    train: TrainingSet
    params: KernelParams
    y_mean: float = 0.0
    L: np.ndarray | None = field(default=None, repr=False)
    alpha: np.ndarray | None = field(default=None, repr=False)
    lml: float | None = None

    @classmethod
    def from_params(cls, train: TrainingSet, params: KernelParams, center: bool = True) -> "GPModel":
        y_mean = float(np.mean(train.y)) if (center and train.n) else 0.0
        if train.n == 0:
            return cls(train, params, 0.0, np.zeros((0, 0)), np.zeros(0), None)
        yc = train.y - y_mean
        K, _, _ = _train_cov(train, params)
        L, _ = cholesky_jitter(K)
        alpha = linalg.cho_solve((L, True), yc)
        lml = float(-0.5 * yc @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * train.n * LOG2PI)
        return cls(train, params, y_mean, L, alpha, lml)

    @classmethod
    def fit(
        cls,
        train: TrainingSet,
        config: GPFitConfig | None = None,
        init: KernelParams | None = None,
    ) -> "GPModel":
        centered = TrainingSet(train.X, train.g, train.y - np.mean(train.y), arm=train.arm)
        params = fit_hyperparameters(centered, config, init)
        return cls.from_params(train, params)

    def predict(self, Xq, gq) -> Posterior:
        Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
        gq = np.broadcast_to(np.asarray(gq, dtype=np.float64), (Xq.shape[0],))
        Ks = kernel_matrix((Xq, gq), (Xq, gq), self.params)
        if self.train.n == 0:
            return Posterior(np.zeros(Xq.shape[0]), _finish_cov(Ks))
        Kts = kernel_matrix((self.train.X, self.train.g), (Xq, gq), self.params)
        V = linalg.solve_triangular(self.L, Kts, lower=True)
        return Posterior(self.y_mean + Kts.T @ self.alpha, _finish_cov(Ks - V.T @ V))

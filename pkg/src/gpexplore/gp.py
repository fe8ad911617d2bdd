"""Exact Gaussian-process regression with Matern kernels.

Zero prior mean.  Hyperparameters are handled in log space:
``(log length_scale, log signal_variance, log noise_variance)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

FAMILIES = ("matern32", "matern52")
VARIANCE_FLOOR = 1e-6
MAX_TRAINING_POINTS = 2000


class GPFactorizationError(RuntimeError):
    def __init__(self, jitter: float):
        super().__init__(f"covariance not positive definite even with jitter {jitter:.3e}")
        self.jitter = jitter


@dataclass(frozen=True)
class KernelConfig:
    family: str = "matern32"
    length_scale: float = 1.0
    signal_variance: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.length_scale > 0 and self.signal_variance > 0):
            raise ValueError("length_scale and signal_variance must be positive")

    @property
    def nu(self) -> float:
        return 1.5 if self.family == "matern32" else 2.5


@dataclass(frozen=True)
class Hyperparameters:
    kernel: KernelConfig = KernelConfig()
    noise_variance: float = 0.1

    def __post_init__(self):
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")

    def to_log(self) -> np.ndarray:
        return np.log([self.kernel.length_scale, self.kernel.signal_variance, self.noise_variance])

    @classmethod
    def from_log(cls, theta, family: str) -> "Hyperparameters":
        ls, sv, nv = np.exp(np.asarray(theta, dtype=float))
        return cls(KernelConfig(family, float(ls), float(sv)), float(nv))


def _matern(r: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    if cfg.family == "matern32":
        a = math.sqrt(3.0) * r / cfg.length_scale
        return cfg.signal_variance * (1.0 + a) * np.exp(-a)
    a = math.sqrt(5.0) * r / cfg.length_scale
    return cfg.signal_variance * (1.0 + a + a * a / 3.0) * np.exp(-a)


def _matern_dlogscale(r: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Derivative of the kernel with respect to log(length_scale)."""
    if cfg.family == "matern32":
        a = math.sqrt(3.0) * r / cfg.length_scale
        return cfg.signal_variance * a * a * np.exp(-a)
    a = math.sqrt(5.0) * r / cfg.length_scale
    return cfg.signal_variance * (a * a / 3.0) * (1.0 + a) * np.exp(-a)


def kernel_eval(a, b, cfg: KernelConfig) -> float:
    r = math.dist(tuple(np.ravel(a)), tuple(np.ravel(b)))
    return float(_matern(np.asarray(r), cfg))


def kernel_matrix(A, B, cfg: KernelConfig) -> np.ndarray:
    return _matern(cdist(np.atleast_2d(A), np.atleast_2d(B)), cfg)


def _factor(K: np.ndarray) -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor with an adaptive diagonal jitter ladder."""
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    scale = float(np.trace(K)) / K.shape[0]
    jitter = 1e-10 * scale
    eye = np.eye(K.shape[0])
    while jitter <= 1e-4 * scale * (1 + 1e-9):
        try:
            return cholesky(K + jitter * eye, lower=True, check_finite=False), jitter
        except LinAlgError:
            jitter *= 10.0
    raise GPFactorizationError(jitter / 10.0)


@dataclass(frozen=True)
class GPModel:
    kernel: KernelConfig
    noise_variance: float
    X: np.ndarray
    y: np.ndarray
    L: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return int(self.X.shape[0])


class Prediction(NamedTuple):
    mean: np.ndarray
    variance: np.ndarray


def fit(X, y, kernel: KernelConfig, noise_variance: float,
        max_points: int = MAX_TRAINING_POINTS) -> GPModel:
    """Factor ``K(X, X) + noise_variance * I`` and cache ``alpha = K^-1 y``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n < 1:
        raise ValueError("cannot fit a GP to an empty training set")
    if n != y.size:
        raise ValueError("X and y differ in length")
    if n > max_points:
        raise ValueError(f"{n} training points exceed the exact-GP cap of {max_points}")
    K = kernel_matrix(X, X, kernel)
    K[np.diag_indices_from(K)] += noise_variance
    L, jitter = _factor(K)
    alpha = cho_solve((L, True), y, check_finite=False)
    return GPModel(kernel, float(noise_variance), X, y, L, alpha, jitter)


def predict(model: GPModel, Xs, variance_floor: float = VARIANCE_FLOOR,
            chunk: int = 4096) -> Prediction:
    """Predictive mean and variance of the latent function at ``Xs``."""
    Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
    mean = np.empty(Xs.shape[0])
    var = np.empty(Xs.shape[0])
    prior = model.kernel.signal_variance
    for lo in range(0, Xs.shape[0], chunk):
        Ks = kernel_matrix(model.X, Xs[lo:lo + chunk], model.kernel)
        mean[lo:lo + chunk] = Ks.T @ model.alpha
        v = solve_triangular(model.L, Ks, lower=True, check_finite=False)
        var[lo:lo + chunk] = prior - np.einsum("ij,ij->j", v, v)
    return Prediction(mean, np.maximum(var, variance_floor))


def nlml(params: Hyperparameters, X, y) -> Tuple[float, np.ndarray]:
    """Negative log marginal likelihood and its gradient in log-parameter space."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = y.size
    cfg = params.kernel
    R = cdist(X, X)
    K = _matern(R, cfg)
    K[np.diag_indices_from(K)] += params.noise_variance
    L, jitter = _factor(K)
    alpha = cho_solve((L, True), y, check_finite=False)
    value = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * math.log(2.0 * math.pi)

    # d nlml / d theta = -0.5 tr((alpha alpha^T - K^-1) dK/dtheta)
    W = cho_solve((L, True), np.eye(n), check_finite=False) - np.outer(alpha, alpha)
    dK_scale = _matern_dlogscale(R, cfg)
    dK_signal = _matern(R, cfg)
    grad = 0.5 * np.array([
        np.sum(W * dK_scale),
        np.sum(W * dK_signal),
        params.noise_variance * np.trace(W),
    ])
    return float(value), grad


def optimize_hyperparameters(X, y, init: Hyperparameters,
                             bounds: Optional[Sequence[Tuple[float, float]]] = None,
                             restarts: int = 0, max_iter: int = 200) -> Hyperparameters:
    """Minimize the NLML from ``init`` with L-BFGS-B in log space.

    ``bounds`` are given on the natural scale for (length_scale,
    signal_variance, noise_variance).  Restarts use deterministic offsets
    of the initial point.  Never returns parameters worse than ``init``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] > MAX_TRAINING_POINTS:
        raise ValueError("dataset too large for exact hyperparameter fitting")
    family = init.kernel.family
    log_bounds = None
    if bounds is not None:
        log_bounds = [(math.log(lo), math.log(hi)) for lo, hi in bounds]

    def objective(theta):
        try:
            return nlml(Hyperparameters.from_log(theta, family), X, y)
        except GPFactorizationError:
            return 1e25, np.zeros(3)

    theta0 = init.to_log()
    if log_bounds is not None:
        theta0 = np.clip(theta0, [b[0] for b in log_bounds], [b[1] for b in log_bounds])
    starts = [theta0]
    offsets = [np.array([1.0, 0.0, 0.0]), np.array([-1.0, 0.0, 0.5]), np.array([0.0, 1.0, -1.0])]
    for k in range(restarts):
        starts.append(theta0 + offsets[k % len(offsets)] * (1 + k // len(offsets)))

    best_theta, best_val = None, math.inf
    try:
        init_val = nlml(init, X, y)[0]
        best_theta, best_val = init.to_log(), init_val
    except GPFactorizationError:
        pass
    failures = 0
    for start in starts:
        val0, _ = objective(start)
        if val0 >= 1e25:
            failures += 1
            continue
        res = minimize(objective, start, jac=True, method="L-BFGS-B", bounds=log_bounds,
                       options={"maxiter": max_iter})
        if res.fun < best_val:
            best_theta, best_val = res.x, float(res.fun)
    if best_theta is None:
        raise GPFactorizationError(float("nan")) if failures else RuntimeError("optimization failed")
    log.debug("hyperparameters %s nlml %.6f", np.exp(best_theta), best_val)
    if np.array_equal(best_theta, init.to_log()):
        return init
    return Hyperparameters.from_log(best_theta, family)


def write_hyperparameters(path, params: Hyperparameters) -> None:
    """Flat key=value file: family, kappa, signal_variance, noise_variance."""
    lines = [
        f"family={params.kernel.family}",
        f"kappa={params.kernel.length_scale!r}",
        f"signal_variance={params.kernel.signal_variance!r}",
        f"noise_variance={params.noise_variance!r}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_hyperparameters(path) -> Hyperparameters:
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    expected = {"family", "kappa", "signal_variance", "noise_variance"}
    if set(values) != expected:
        raise ValueError(f"hyperparameter file keys {sorted(values)} != {sorted(expected)}")
    return Hyperparameters(
        KernelConfig(values["family"], float(values["kappa"]), float(values["signal_variance"])),
        float(values["noise_variance"]),
    )

"""Standard homoscedastic GP regression on DI data.

Hyperparameters (output variance, ARD length scales, noise variance) are
optimized in log space by minimizing the negative log marginal likelihood

    nlml = 0.5 y^T (K + sn2 I)^-1 y + 0.5 log|K + sn2 I| + n/2 log 2pi

with its analytic gradient, using L-BFGS-B restarted from perturbed
initializations. The prior mean is fixed at zero; an optional target offset
(subtract mean(y) before training, add it back at prediction) is available
for data that is far from zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .errors import (
    DimensionMismatchError,
    GwquantError,
    InvalidArgumentError,
    OptimizerFailureError,
)
from .kernels import KernelParams, kernel_matrix, kernel_matrix_grads, _as_2d
from .linalg import chol_logdet, chol_solve, robust_cholesky

_LOG_2PI = math.log(2.0 * math.pi)

# Objective value used when a trial point cannot be factorized; large enough
# that the line search backs off, finite so L-BFGS-B keeps going.
_BAD_OBJECTIVE = 1e25


@dataclass
class OptimizerConfig:
    """Quasi-Newton training contract shared by both model kinds.

    Converges when the gradient infinity norm drops to grad_tol or the
    relative objective change drops to rel_obj_tol, up to max_iter
    iterations. n_restarts counts optimization runs: the first starts from
    the data-derived initialization, the rest from log-normal perturbations
    of it (std init_jitter_std) drawn from a generator seeded with seed.
    """

    n_restarts: int = 5
    seed: int = 0
    max_iter: int = 500
    grad_tol: float = 1e-6
    rel_obj_tol: float = 1e-10
    init_jitter_std: float = 0.5


@dataclass
class PredictiveMoments:
    """Per-query mean and variance of the predictive distribution."""

    mean: np.ndarray
    variance: np.ndarray
    query_inputs: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.variance = np.asarray(self.variance, dtype=float).ravel()
        self.query_inputs = _as_2d(self.query_inputs)
        if not (self.mean.size == self.variance.size == self.query_inputs.shape[0]):
            raise DimensionMismatchError("moment lengths disagree with queries")
        if np.any(self.variance < 0):
            raise InvalidArgumentError("predictive variance must be nonnegative")


@dataclass
class FitMetrics:
    nmse: float
    rss_sss_percent: float


@dataclass
class SgprModel:
    """Trained homoscedastic model with cached factorization."""

    kernel: KernelParams
    log_noise_variance: float
    train_inputs: np.ndarray
    train_targets: np.ndarray
    chol_factor: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)
    target_offset: float = 0.0

    @property
    def ndim(self) -> int:
        return self.train_inputs.shape[1]

    @property
    def noise_variance(self) -> float:
        return float(np.exp(self.log_noise_variance))

    @classmethod
    def from_hyperparams(
        cls,
        kernel: KernelParams,
        log_noise_variance: float,
        x,
        y,
        target_offset: float = 0.0,
    ) -> "SgprModel":
        """Build the cached factorization for fixed hyperparameters.

        train_targets keeps the raw targets; alpha solves against the
        offset-corrected ones.
        """
        x = _as_2d(x)
        y = np.asarray(y, dtype=float).ravel()
        k = kernel_matrix(x, x, kernel)
        ky = k + np.exp(log_noise_variance) * np.eye(x.shape[0])
        l, _ = robust_cholesky(ky)
        alpha = chol_solve(l, y - target_offset)
        return cls(kernel, float(log_noise_variance), x, y, l, alpha, target_offset)

    def predict(self, xq) -> PredictiveMoments:
        return sgpr_predict(self, xq)


def sgpr_nlml(params: KernelParams, log_noise_variance: float, x, y):
    """Negative log marginal likelihood and its analytic gradient.

    The gradient is with respect to the packed log parameters
    [log_output_variance, log_length_scales (D), log_noise_variance] via
    d(nlml)/dtheta = -0.5 tr((alpha alpha^T - Ky^-1) dKy/dtheta).
    """
    x = _as_2d(x)
    y = np.asarray(y, dtype=float).ravel()
    n = x.shape[0]
    if n < 1 or y.size != n:
        raise InvalidArgumentError("need n >= 1 training rows with matching targets")
    noise = float(np.exp(log_noise_variance))
    k, k_grads = kernel_matrix_grads(x, params)
    ky = k + noise * np.eye(n)
    l, _ = robust_cholesky(ky)
    alpha = chol_solve(l, y)
    value = 0.5 * float(y @ alpha) + 0.5 * chol_logdet(l) + 0.5 * n * _LOG_2PI

    ky_inv = chol_solve(l, np.eye(n))
    m = np.outer(alpha, alpha) - ky_inv
    grad = np.empty(params.ndim + 2)
    for j, dk in enumerate(k_grads):
        grad[j] = -0.5 * float(np.sum(m * dk))
    grad[-1] = -0.5 * float(np.trace(m)) * noise
    return value, grad


def _unpack(theta: np.ndarray):
    return KernelParams.unpack(theta[:-1]), float(theta[-1])


def _initial_point(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    var_y = float(np.var(y))
    if var_y <= 0 or not math.isfinite(var_y):
        var_y = max(1e-4, 1e-4 * float(np.mean(y) ** 2))
    ranges = x.max(axis=0) - x.min(axis=0)
    ranges[ranges <= 0] = 1.0
    return np.concatenate(
        ([math.log(var_y)], np.log(ranges), [math.log(0.1 * var_y)])
    )


def minimize_with_restarts(objective, theta0, config: OptimizerConfig):
    """Best of n_restarts L-BFGS-B runs; restarts jitter theta0 in log space.

    objective(theta) -> (value, gradient). Returns (theta, value). Raises
    OptimizerFailureError if every restart ends at a non-finite value.
    """

    def safe_objective(theta):
        # exploratory iterates can overflow exp() or break factorizations;
        # report a huge value so the line search backs off
        try:
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                value, grad = objective(theta)
        except (FloatingPointError, OverflowError, np.linalg.LinAlgError, GwquantError):
            return _BAD_OBJECTIVE, np.zeros_like(theta)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            return _BAD_OBJECTIVE, np.zeros_like(theta)
        return value, grad

    rng = np.random.default_rng(config.seed)
    best_theta, best_value = None, np.inf
    for restart in range(max(1, config.n_restarts)):
        start = np.array(theta0, dtype=float)
        if restart > 0:
            start = start + rng.normal(0.0, config.init_jitter_std, start.size)
        f0, _ = safe_objective(start)
        result = minimize(
            safe_objective,
            start,
            jac=True,
            method="L-BFGS-B",
            options={
                "maxiter": config.max_iter,
                "ftol": config.rel_obj_tol,
                "gtol": config.grad_tol,
                "maxcor": 20,
            },
        )
        # The line search guarantees decrease, but keep the start defensively.
        candidates = [(f0, start)]
        if np.isfinite(result.fun):
            candidates.append((float(result.fun), result.x))
        for value, theta in candidates:
            if value < best_value and value < _BAD_OBJECTIVE:
                best_value, best_theta = value, theta
    if best_theta is None:
        raise OptimizerFailureError("no restart produced a finite objective")
    return best_theta, best_value


def train_sgpr(x, y, optimizer: OptimizerConfig | None = None, center_targets: bool = False) -> SgprModel:
    """Type-II maximum-likelihood training with restarts.

    Warns (and proceeds) when the targets are constant.
    """
    x = _as_2d(x)
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] < 2:
        raise InvalidArgumentError("training needs n >= 2 rows")
    if y.size != x.shape[0]:
        raise DimensionMismatchError("inputs and targets row counts differ")
    if np.ptp(y) == 0:
        warnings.warn("training targets are constant", UserWarning, stacklevel=2)
    optimizer = optimizer or OptimizerConfig()

    offset = float(np.mean(y)) if center_targets else 0.0
    yc = y - offset

    def objective(theta):
        params, log_noise = _unpack(theta)
        return sgpr_nlml(params, log_noise, x, yc)

    theta0 = _initial_point(x, yc)
    theta, _ = minimize_with_restarts(objective, theta0, optimizer)
    params, log_noise = _unpack(theta)
    return SgprModel.from_hyperparams(params, log_noise, x, y, target_offset=offset)


def sgpr_predict(model: SgprModel, xq) -> PredictiveMoments:
    """Predictive mean and variance at query inputs (noise variance included)."""
    xq = _as_2d(xq)
    if xq.shape[1] != model.ndim:
        raise DimensionMismatchError(
            f"query has {xq.shape[1]} columns, model expects {model.ndim}"
        )
    k_star = kernel_matrix(xq, model.train_inputs, model.kernel)
    mean = k_star @ model.alpha + model.target_offset
    v = solve_triangular(model.chol_factor, k_star.T, lower=True)
    latent = model.kernel.output_variance - np.sum(v**2, axis=0)
    variance = np.maximum(latent, 0.0) + model.noise_variance
    return PredictiveMoments(mean, variance, xq)


def evaluate_fit(moments: PredictiveMoments, y_true, y_train) -> FitMetrics:
    """Held-out NMSE and RSS/SSS (percent).

    nmse normalizes the squared error by that of the constant train-mean
    predictor; rss_sss divides by the raw sum of squares of the targets.
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_train = np.asarray(y_train, dtype=float).ravel()
    if y_true.size != moments.mean.size:
        raise DimensionMismatchError("y_true length disagrees with predictions")
    resid = y_true - moments.mean
    base = y_true - float(np.mean(y_train))
    denom_nmse = float(np.mean(base**2))
    denom_sss = float(np.sum(y_true**2))
    if denom_nmse <= 0 or denom_sss <= 0:
        raise InvalidArgumentError("degenerate denominator in fit metrics")
    return FitMetrics(
        nmse=float(np.mean(resid**2)) / denom_nmse,
        rss_sss_percent=100.0 * float(np.sum(resid**2)) / denom_sss,
    )

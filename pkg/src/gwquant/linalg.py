"""Numerically robust Gaussian linear algebra helpers."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import InvalidArgumentError, NotPositiveDefiniteError

# Jitter escalation relative to mean(diag A): 1e-10 up to 1e-4, factors of 10.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


def robust_cholesky(a: np.ndarray):
    """Lower-triangular factor L with L @ L.T = A + jitter * I.

    Jitter starts at zero and escalates tenfold from 1e-10 * mean(diag A)
    to 1e-4 * mean(diag A) until the factorization succeeds.

    Returns:
        (L, jitter_used)

    Raises:
        NotPositiveDefiniteError: if the maximum jitter is insufficient.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("matrix contains non-finite entries")

    scale = float(np.mean(np.diag(a)))
    jitters = [0.0]
    if scale > 0.0:
        level = _JITTER_START
        while level <= _JITTER_MAX * (1.0 + 1e-12):
            jitters.append(level * scale)
            level *= 10.0

    n = a.shape[0]
    for jitter in jitters:
        try:
            l = cholesky(a + jitter * np.eye(n), lower=True)
            return l, jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefiniteError(
        f"matrix is not positive definite even with jitter {jitters[-1]:.3e}"
    )


def chol_solve(l: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve (L L^T) x = b given the lower Cholesky factor."""
    y = solve_triangular(l, b, lower=True)
    return solve_triangular(l, y, lower=True, trans=1)


def chol_logdet(l: np.ndarray) -> float:
    """log det(L L^T) from the lower Cholesky factor."""
    return 2.0 * float(np.sum(np.log(np.diag(l))))

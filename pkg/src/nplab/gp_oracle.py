"""Exact Gaussian process posterior quantities.

These are the ground-truth targets every architecture in the lab is measured
against.  Solves go through the shared GramSpectrum eigendecomposition so the
condition number used in bounds is always the one actually factored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigurationError, NumericError
from .kernels import KernelSpec, cross_vector, gram_spectrum, kernel_matrix

MIN_LAMBDA = 1e-8


@dataclass(frozen=True)
class PosteriorWeights:
    """Weight vector w with posterior mean w^T y for any observed values."""

    weights: np.ndarray
    target: np.ndarray

    def mean(self, y: np.ndarray) -> float:
        return float(self.weights @ np.asarray(y, dtype=float))


def posterior_weights(spec: KernelSpec, X_C, x_t) -> PosteriorWeights:
    """Posterior-mean weights k(x_t, X_C) K^{-1} at a single target."""
    Xa = np.atleast_2d(np.asarray(X_C, dtype=float))
    S = gram_spectrum(spec, Xa)
    if S.lambda_min <= MIN_LAMBDA:
        raise NumericError(
            "Gram matrix is numerically singular", lambda_min=S.lambda_min)
    k = cross_vector(spec, Xa, x_t)
    w = S.solve(k)
    resid = np.linalg.norm(S.matrix @ w - k)
    if resid > 1e-8 * max(np.linalg.norm(k), 1e-300):
        raise NumericError("posterior solve residual too large",
                           residual=float(resid))
    return PosteriorWeights(weights=w,
                            target=np.atleast_1d(np.asarray(x_t, dtype=float)))


def posterior_mean(spec: KernelSpec, X_C, y_C, x_t) -> float:
    return posterior_weights(spec, X_C, x_t).mean(y_C)


def _check_distinct(points: np.ndarray, what: str):
    n = points.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if np.allclose(points[i], points[j], atol=1e-12):
                raise DegenerateConfigurationError(
                    f"duplicated {what} at indices {i}, {j}")


def posterior_cov(spec: KernelSpec, X_C, X_T, sigma2: float = 0.0) -> np.ndarray:
    """Posterior covariance K_TT - K_TC K^{-1} K_CT + sigma2 I."""
    Xt = np.atleast_2d(np.asarray(X_T, dtype=float))
    m = Xt.shape[0]
    if m == 0:
        return np.zeros((0, 0))
    Xc = np.atleast_2d(np.asarray(X_C, dtype=float))
    if Xc.size == 0:
        prior = kernel_matrix(spec, Xt)
        return prior + sigma2 * np.eye(m)
    allpts = np.vstack([Xc, Xt])
    _check_distinct(allpts, "point")
    K_TT = kernel_matrix(spec, Xt)
    K_TC = kernel_matrix(spec, Xt, Xc)
    S = gram_spectrum(spec, Xc)
    cov = K_TT - K_TC @ S.solve(K_TC.T) + sigma2 * np.eye(m)
    return 0.5 * (cov + cov.T)


def two_point_weight(spec: KernelSpec, x1, x2, x_t):
    """Closed-form posterior weights for a two-point context.

    With a = k(x_t,x1), b = k(x_t,x2), c = k(x1,x2) and unit-variance
    diagonal v = k(x,x):

        w1 = (a v - b c) / (v^2 - c^2),  w2 = (b v - a c) / (v^2 - c^2)
    """
    p1 = np.atleast_1d(np.asarray(x1, dtype=float))
    p2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if np.allclose(p1, p2, atol=1e-12):
        raise DegenerateConfigurationError("two-point context must be distinct")
    from .kernels import eval_kernel
    a = eval_kernel(spec, x_t, p1)
    b = eval_kernel(spec, x_t, p2)
    c = eval_kernel(spec, p1, p2)
    v = eval_kernel(spec, p1, p1)
    det = v * v - c * c
    if abs(det) < 1e-300:
        raise NumericError("two-point Gram is singular", lambda_min=det)
    return (a * v - b * c) / det, (b * v - a * c) / det

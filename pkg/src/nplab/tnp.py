"""Polynomial self-attention layers and the depth lower-bound experiment.

A depth-L stack of layers H <- (I + alpha_l A) H applies a degree-L
polynomial in the attention matrix A to its input.  On the rank-one
eigenvalue family K_t the quadratic form v1^T p(K_t) v1 collapses to a
univariate polynomial in the moving eigenvalue mu1(t), so the best any
depth-L stack can do against the inverse target is bounded by the degree-2L
minimax error on [1/kappa, 1], which the discrete exchange oracle computes
outright.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cnp import ContextSet
from .errors import InputError
from .gp_oracle import posterior_mean
from .kernels import GramSpectrum, KernelSpec, cross_vector, gram_spectrum, spectrum_of
from .polyapprox import (CHEBYSHEV, PRODUCT, PolySchedule, chebyshev_barrier,
                         chebyshev_error_bound, chebyshev_rho,
                         chebyshev_schedule, minimax_oracle)
from .rng import stream


@dataclass(frozen=True)
class AttentionMatrix:
    """Row-normalized attention D^{-1} K with its conditioning bracket."""

    K_tilde: np.ndarray
    D: np.ndarray          # row sums of the source Gram
    gamma: float           # d_max / d_min
    kappa_source: float
    kappa_tilde: float

    @property
    def bracket(self):
        return (self.kappa_source / self.gamma, self.gamma * self.kappa_source)


def normalize_attention(K: GramSpectrum) -> AttentionMatrix:
    """K_tilde = D^{-1} K with D = diag(K 1); rows sum to one.

    The spectrum of K_tilde is computed through the symmetric similar
    matrix D^{-1/2} K D^{-1/2} and its condition number is attached along
    with the gamma-bracket it must satisfy.
    """
    d = K.matrix @ np.ones(K.n)
    if np.any(d <= 0):
        raise InputError("attention normalization needs positive row sums")
    gamma = float(d.max() / d.min())
    K_tilde = K.matrix / d[:, None]
    sym = K.matrix / np.sqrt(np.outer(d, d))
    sym_spec = spectrum_of(sym)
    kappa_tilde = sym_spec.kappa
    return AttentionMatrix(K_tilde=K_tilde, D=d, gamma=gamma,
                           kappa_source=K.kappa, kappa_tilde=kappa_tilde)


@dataclass(frozen=True)
class EigFamilyMember:
    """I plus a rank-one bump along a fixed unit vector orthogonal to 1.

    All row sums are exactly 1; the spectrum is {mu1(t) = 1/kappa + t}
    along v1 and 1 everywhere else, so the attention normalization is the
    identity on this family.
    """

    t: float
    kappa: float
    n: int
    matrix: np.ndarray
    v1: np.ndarray
    mu1: float


def family_vector(n: int) -> np.ndarray:
    """Alternating-sign unit vector orthogonal to the all-ones vector."""
    if n < 2:
        raise InputError("family needs n >= 2")
    v = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    if n % 2 == 1:
        ones = np.ones(n)
        v = v - (v @ ones) / n * ones
    return v / np.linalg.norm(v)


def eig_family(kappa: float, n: int, t: float) -> EigFamilyMember:
    if kappa <= 1:
        raise InputError("kappa must exceed 1")
    if not (0.0 <= t <= 1.0 - 1.0 / kappa + 1e-15):
        raise InputError(f"t={t} outside [0, 1 - 1/kappa]")
    v1 = family_vector(n)
    mu1 = 1.0 / kappa + t
    K_t = np.eye(n) + (mu1 - 1.0) * np.outer(v1, v1)
    return EigFamilyMember(t=t, kappa=kappa, n=n, matrix=K_t, v1=v1, mu1=mu1)


def tnp_forward(A: np.ndarray, schedule: PolySchedule, H0: np.ndarray) -> np.ndarray:
    """Apply the schedule's polynomial in A to H0, layer by layer.

    PRODUCT runs H <- (I + alpha_l A) H; CHEBYSHEV runs the affine inverse
    iteration H <- H + (1/x_l)(H0 - A H) columnwise, producing q_L(A) H0.
    """
    A = np.asarray(A, dtype=float)
    H = np.asarray(H0, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[1] != H.shape[0]:
        raise InputError("attention/input dimension mismatch")
    if schedule.form == PRODUCT:
        for alpha in schedule.coefficients:
            H = H + alpha * (A @ H)
        return H
    if schedule.form == CHEBYSHEV:
        X = np.zeros_like(H)
        for c in schedule.coefficients:
            X = X + c * (H - A @ X)
        return X
    raise InputError(f"unsupported schedule form {schedule.form!r} for layers")


def tnp_gp_pipeline(spec: KernelSpec, C: ContextSet, x_t, L: int) -> dict:
    """Chebyshev-iteration solve of K z = y through attention layers, read
    out with kernel cross-weights, compared against the exact posterior."""
    S = gram_spectrum(spec, C.locations)
    if S.lambda_min <= 1e-8:
        raise InputError("Gram matrix too ill-conditioned for the pipeline")
    schedule = chebyshev_schedule(S.lambda_min, S.lambda_max, L)
    y = C.values[:, 0]
    z = tnp_forward(S.matrix, schedule, y.reshape(-1, 1))[:, 0]
    k_t = cross_vector(spec, C.locations, x_t)
    prediction = float(k_t @ z)
    oracle = posterior_mean(spec, C.locations, y, x_t)
    bound = (np.linalg.norm(k_t) * np.linalg.norm(y)
             * chebyshev_error_bound(S.lambda_min, S.lambda_max, L))
    return {
        "prediction": prediction,
        "oracle": oracle,
        "error_vs_oracle": abs(prediction - oracle),
        "bound": float(bound),
        "kappa": S.kappa,
        "rho": schedule.rho,
        "depth": L,
    }


def gp_weight_row(spec: KernelSpec, X_C, x_t, L: int) -> np.ndarray:
    """Analytic Jacobian row of the pipeline at y = 0: k(x_t, X)^T q_L(K)."""
    S = gram_spectrum(spec, np.atleast_2d(np.asarray(X_C, dtype=float)))
    schedule = chebyshev_schedule(S.lambda_min, S.lambda_max, L)
    from .polyapprox import apply_inverse_schedule
    Q = apply_inverse_schedule(S, schedule)
    return cross_vector(spec, X_C, x_t) @ Q


def pipeline_as_map(spec: KernelSpec, X_C, x_t, L: int) -> Callable:
    """The pipeline's prediction as a function of the observed values."""
    Xa = np.atleast_2d(np.asarray(X_C, dtype=float))

    def F(y: np.ndarray) -> float:
        C = ContextSet(Xa, np.asarray(y, dtype=float).reshape(-1, 1))
        return tnp_gp_pipeline(spec, C, x_t, L)["prediction"]

    return F


def fd_jacobian(F: Callable, y0: np.ndarray, step: float = None) -> np.ndarray:
    """Central-difference Jacobian, column by column.

    Default step 1e-5 * (1 + ||y0||_inf) balances truncation and rounding
    in double precision.  Exact up to rounding for linear maps.
    """
    y0 = np.asarray(y0, dtype=float)
    if step is None:
        step = 1e-5 * (1.0 + float(np.max(np.abs(y0))) if y0.size else 1.0)
    elif step <= 0:
        raise InputError("step must be positive")
    f0 = np.atleast_1d(np.asarray(F(y0), dtype=float))
    J = np.empty((f0.size, y0.size))
    for j in range(y0.size):
        e = np.zeros_like(y0)
        e[j] = step
        fp = np.atleast_1d(np.asarray(F(y0 + e), dtype=float))
        fm = np.atleast_1d(np.asarray(F(y0 - e), dtype=float))
        J[:, j] = (fp - fm) / (2.0 * step)
    return J


def quadratic_form_sweep(kappa: float, n: int, alphas, t_grid: int):
    """v1^T p(K_t) v1 over a uniform t grid for a fixed product-form layer
    stack; returns (mu1 values, quadratic-form values)."""
    ts = np.linspace(0.0, 1.0 - 1.0 / kappa, t_grid)
    mus = np.empty(t_grid)
    vals = np.empty(t_grid)
    from .polyapprox import product_schedule
    schedule = product_schedule(alphas, 1.0 / kappa, 1.0)
    for i, t in enumerate(ts):
        member = eig_family(kappa, n, t)
        H = tnp_forward(member.matrix, schedule, member.v1.reshape(-1, 1))
        mus[i] = member.mu1
        vals[i] = float(member.v1 @ H[:, 0])
    return mus, vals


def depth_barrier_experiment(kappa: float, n: int, L: int, t_grid: int,
                             seed: int = 0, eps: float = 1e-2,
                             slope_degrees=(6, 8, 10, 12, 14, 16)) -> dict:
    """Three-part depth lower-bound check on the eigenvalue family.

    (i) the quadratic form of a random depth-L product stack is fit exactly
    by a univariate polynomial of degree <= L in mu1(t); (ii) the degree-2L
    discrete minimax oracle on [1/kappa, 1] bounds what any depth-L stack
    can achieve against 1/mu1; (iii) the classical barrier gives the implied
    minimum depth for accuracy eps, and the oracle's decay slope is fit for
    comparison against log rho.
    """
    if kappa <= 1 or L < 1:
        raise InputError("need kappa > 1 and L >= 1")
    if t_grid < 4 * L + 4:
        raise InputError("t_grid must be at least 4L + 4")
    rng = stream(seed, "tnp", "depth_barrier")
    alphas = rng.uniform(-2.0, 2.0, size=L)
    mus, vals = quadratic_form_sweep(kappa, n, alphas, t_grid)
    coeffs = np.polynomial.polynomial.polyfit(mus, vals, L)
    fit = np.polynomial.polynomial.polyval(mus, coeffs)
    residual = float(np.max(np.abs(fit - vals)))

    oracle = minimax_oracle(1.0 / kappa, 1.0, 2 * L)
    barrier = chebyshev_barrier(1.0 / kappa, 1.0, 2 * L)
    rho = chebyshev_rho(kappa)

    implied_min_depth = 1
    while chebyshev_barrier(1.0 / kappa, 1.0, 2 * implied_min_depth) > eps:
        implied_min_depth += 1

    degs = list(slope_degrees)
    errs = [minimax_oracle(1.0 / kappa, 1.0, D).error for D in degs]
    slope = float(np.polyfit(degs, np.log(errs), 1)[0])

    return {
        "kappa": kappa,
        "depth": L,
        "fitted_poly_degree": L,
        "fit_residual": residual,
        "structural_ok": residual <= 1e-6,
        "oracle_error": oracle.error,
        "barrier": barrier,
        "rho": rho,
        "decay_slope": slope,
        "log_rho": float(np.log(rho)),
        "eps": eps,
        "implied_min_depth": implied_min_depth,
    }

"""Polynomial approximation of matrix inverses.

Three schedule forms are supported:

* Neumann truncation (1/lam_max) sum_m (I - K/lam_max)^m, factor 1 - 1/kappa.
* Chebyshev iteration with nodes at shifted Chebyshev points, factor
  (sqrt(kappa) - 1)/(sqrt(kappa) + 1).
* Literal product form prod(I + alpha_l K) with free real coefficients.

A discrete Remez exchange provides the brute-force minimax oracle that all
depth lower-bound experiments compare against, and `chebyshev_barrier` is the
classical lower bound (2/(a+b)) rho^L it is checked against.

Numerical notes.  The Chebyshev affine recurrence is applied with the node
sequence interleaved (first, last, second, second-to-last, ...); the natural
ascending order is catastrophically unstable in double precision once L is
a few dozen.  The interleaving changes nothing in exact arithmetic.  The true
iteration error sits within a factor 1 + rho^(2L) of the (2/lam_min) rho^L
bound, which is far below double-precision resolution at large L, so exact
verification of the bound at depth 40 uses `schedule_spectral_error_exact`
(mpmath, order-independent) rather than the float64 matrix recurrence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import mpmath as mp
import numpy as np

from .errors import ContractError, InputError, NumericError
from .kernels import GramSpectrum
from .linalg import spectral_norm_sym

NEUMANN = "neumann"
CHEBYSHEV = "chebyshev"
PRODUCT = "product"

DEFAULT_GRID = 2000
REMEZ_MAX_ITER = 100


@dataclass(frozen=True)
class PolySchedule:
    """Coefficient schedule for a depth-L inverse approximation.

    For CHEBYSHEV the coefficients are the node reciprocals 1/x_l in
    application order (interleaved for roundoff stability); for NEUMANN the
    single coefficient 1/lam_max; for PRODUCT the alpha_l of
    prod(I + alpha_l K).
    """

    form: str
    coefficients: Tuple[float, ...]
    interval: Tuple[float, float]
    depth: int
    rho: float

    @property
    def nodes(self) -> np.ndarray:
        if self.form != CHEBYSHEV:
            raise InputError("nodes are defined for Chebyshev schedules only")
        return 1.0 / np.asarray(self.coefficients)


def _interleave(values: np.ndarray) -> np.ndarray:
    """Reorder as first, last, second, second-to-last, ..."""
    out = np.empty_like(values)
    half = (len(values) + 1) // 2
    out[0::2] = values[:half]
    out[1::2] = values[len(values) - 1:half - 1:-1]
    return out


def chebyshev_rho(kappa: float) -> float:
    s = np.sqrt(kappa)
    return (s - 1.0) / (s + 1.0)


def chebyshev_schedule(lambda_min: float, lambda_max: float, L: int) -> PolySchedule:
    """Depth-L Chebyshev iteration schedule on [lambda_min, lambda_max].

    Nodes are x_l = mid + rad * cos((2l-1)pi/(2L)), returned as reciprocals
    in interleaved application order.
    """
    if not (0 < lambda_min <= lambda_max):
        raise InputError("need 0 < lambda_min <= lambda_max")
    if L < 1:
        raise InputError("schedule depth must be at least 1")
    mid = 0.5 * (lambda_max + lambda_min)
    rad = 0.5 * (lambda_max - lambda_min)
    ell = np.arange(1, L + 1)
    theta = (2 * ell - 1) * np.pi / (2 * L)
    nodes = _interleave(mid + rad * np.cos(theta))
    return PolySchedule(
        form=CHEBYSHEV,
        coefficients=tuple(1.0 / nodes),
        interval=(lambda_min, lambda_max),
        depth=L,
        rho=chebyshev_rho(lambda_max / lambda_min))


def neumann_schedule(lambda_min: float, lambda_max: float, L: int) -> PolySchedule:
    if not (0 < lambda_min <= lambda_max):
        raise InputError("need 0 < lambda_min <= lambda_max")
    if L < 1:
        raise InputError("schedule depth must be at least 1")
    kappa = lambda_max / lambda_min
    return PolySchedule(
        form=NEUMANN,
        coefficients=(1.0 / lambda_max,),
        interval=(lambda_min, lambda_max),
        depth=L,
        rho=1.0 - 1.0 / kappa)


def product_schedule(alphas, lambda_min: float = None,
                     lambda_max: float = None) -> PolySchedule:
    """Literal product-form schedule prod(I + alpha_l K); p(0) = 1 always.

    The interval is optional; without it the convergence factor is not
    defined and is reported as nan.
    """
    alphas = tuple(float(a) for a in alphas)
    if lambda_min is None or lambda_max is None:
        return PolySchedule(form=PRODUCT, coefficients=alphas,
                            interval=(float("nan"), float("nan")),
                            depth=len(alphas), rho=float("nan"))
    if not (0 < lambda_min <= lambda_max):
        raise InputError("need 0 < lambda_min <= lambda_max")
    grid = np.linspace(lambda_min, lambda_max, 512)
    p = eval_schedule_poly_vals(PRODUCT, alphas, lambda_max, grid, len(alphas))
    resid = np.abs(1.0 - grid * p)
    L = max(len(alphas), 1)
    return PolySchedule(
        form=PRODUCT,
        coefficients=alphas,
        interval=(lambda_min, lambda_max),
        depth=len(alphas),
        rho=float(np.max(resid) ** (1.0 / L)))


def eval_schedule_poly_vals(form: str, coefficients, lambda_max: float,
                            lam: np.ndarray, depth: int) -> np.ndarray:
    """Scalar value of the schedule's polynomial at each lambda.

    NEUMANN and CHEBYSHEV return the inverse approximation q(lambda);
    PRODUCT returns p(lambda) = prod(1 + alpha_l lambda) itself.
    """
    lam = np.asarray(lam, dtype=float)
    if form == PRODUCT:
        out = np.ones_like(lam)
        for a in coefficients:
            out *= 1.0 + a * lam
        return out
    if form == NEUMANN:
        r = (1.0 - lam / lambda_max) ** depth
        return (1.0 - r) / lam
    if form == CHEBYSHEV:
        r = np.ones_like(lam)
        for c in coefficients:
            r *= 1.0 - c * lam
        return (1.0 - r) / lam
    raise InputError(f"unknown schedule form {form!r}")


def schedule_inverse_values(schedule: PolySchedule, lam: np.ndarray) -> np.ndarray:
    return eval_schedule_poly_vals(schedule.form, schedule.coefficients,
                                   schedule.interval[1], lam, schedule.depth)


def apply_inverse_schedule(K: GramSpectrum, schedule: PolySchedule) -> np.ndarray:
    """Materialize the schedule's inverse approximation of K as a matrix.

    Neumann uses the Horner affine recurrence; Chebyshev runs the affine
    iteration x <- x + (1/x_l)(b - K x) columnwise on b = e_i; the product
    form multiplies the factors layer by layer.
    """
    a, b = schedule.interval
    slack = 1e-9 * max(abs(b), 1.0)
    if K.lambda_min < a - slack or K.lambda_max > b + slack:
        raise ContractError(
            f"spectrum [{K.lambda_min:g}, {K.lambda_max:g}] escapes the "
            f"schedule interval [{a:g}, {b:g}]")
    M = K.matrix
    n = K.n
    if schedule.form == NEUMANN:
        inv_lmax = schedule.coefficients[0]
        A = np.eye(n) - inv_lmax * M
        X = inv_lmax * np.eye(n)
        for _ in range(schedule.depth - 1):
            X = inv_lmax * np.eye(n) + A @ X
        return X
    if schedule.form == CHEBYSHEV:
        X = np.zeros((n, n))
        B = np.eye(n)
        for c in schedule.coefficients:
            X = X + c * (B - M @ X)
        return X
    if schedule.form == PRODUCT:
        X = np.eye(n)
        for alpha in schedule.coefficients:
            X = X + alpha * (M @ X)
        return X
    raise InputError(f"unknown schedule form {schedule.form!r}")


def inverse_error(K: GramSpectrum, approx: np.ndarray) -> float:
    """Spectral-norm error of an inverse approximation, ||approx - K^{-1}||."""
    approx = np.asarray(approx, dtype=float)
    if approx.shape != K.matrix.shape:
        raise InputError("shape mismatch between approximation and matrix")
    return spectral_norm_sym(approx - K.inverse())


def chebyshev_error_bound(lambda_min: float, lambda_max: float, L: int) -> float:
    return (2.0 / lambda_min) * chebyshev_rho(lambda_max / lambda_min) ** L


def neumann_error_bound(lambda_min: float, lambda_max: float, L: int) -> float:
    return (1.0 - lambda_min / lambda_max) ** L / lambda_min


def schedule_spectral_error_exact(eigenvalues, schedule: PolySchedule,
                                  dps: int = 60) -> float:
    """max_i |q(lambda_i) - 1/lambda_i| evaluated in high precision.

    Order-independent, so it certifies the bound the affine recurrence
    satisfies in exact arithmetic even when the float64 error is within
    rounding distance of the bound itself.
    """
    with mp.workdps(dps):
        worst = mp.mpf(0)
        if schedule.form == CHEBYSHEV:
            nodes = [mp.mpf(1) / mp.mpf(c) for c in schedule.coefficients]
        for lam_f in np.asarray(eigenvalues, dtype=float):
            lam = mp.mpf(lam_f)
            if schedule.form == CHEBYSHEV:
                r = mp.mpf(1)
                for x in nodes:
                    r *= 1 - lam / x
            elif schedule.form == NEUMANN:
                r = (1 - lam * mp.mpf(schedule.coefficients[0])) ** schedule.depth
            elif schedule.form == PRODUCT:
                p = mp.mpf(1)
                for a in schedule.coefficients:
                    p *= 1 + mp.mpf(a) * lam
                r = 1 - lam * p
            else:
                raise InputError(f"unknown schedule form {schedule.form!r}")
            worst = max(worst, abs(r) / lam)
        return float(worst)


def chebyshev_exact_check(eigenvalues, L: int, dps: int = 80):
    """Exact-arithmetic check of the depth-L iteration bound on a spectrum.

    Builds the interval, nodes and bound in working precision dps from the
    given eigenvalues and evaluates the residual through the closed form
    r(lambda) = T_L(u(lambda)) / T_L(u0), which equals the node product
    identically.  Returns (error, bound, margin); margin is positive in
    exact arithmetic for every spectrum, but only by a factor rho^(2L),
    far below float64 resolution at large depth.
    """
    if L < 1:
        raise InputError("depth must be at least 1")
    with mp.workdps(dps):
        lams = [mp.mpf(float(v)) for v in np.asarray(eigenvalues, dtype=float)]
        a, b = min(lams), max(lams)
        if a <= 0:
            raise InputError("spectrum must be positive")
        if a == b:
            return 0.0, float(2 / a), float(2 / a)
        u0 = (b + a) / (b - a)
        TL0 = mp.cosh(L * mp.acosh(u0))
        err = mp.mpf(0)
        for lam in lams:
            u = (b + a - 2 * lam) / (b - a)
            u = max(mp.mpf(-1), min(mp.mpf(1), u))
            err = max(err, abs(mp.cos(L * mp.acos(u))) / (lam * TL0))
        rho = (mp.sqrt(b / a) - 1) / (mp.sqrt(b / a) + 1)
        bound = 2 / a * rho ** L
        return float(err), float(bound), float(bound - err)


def neumann_exact_check(eigenvalues, L: int, dps: int = 80):
    """Exact-arithmetic counterpart for the truncated geometric series."""
    if L < 1:
        raise InputError("depth must be at least 1")
    with mp.workdps(dps):
        lams = [mp.mpf(float(v)) for v in np.asarray(eigenvalues, dtype=float)]
        a, b = min(lams), max(lams)
        if a <= 0:
            raise InputError("spectrum must be positive")
        err = max(abs(1 - lam / b) ** L / lam for lam in lams)
        bound = (1 - a / b) ** L / a
        return float(err), float(bound), float(bound - err)


def depth_to_target(form: str, lambda_min: float, lambda_max: float,
                    eps: float, max_depth: int = 5000,
                    grid_size: int = 1024) -> int:
    """Smallest depth whose measured sup inverse error on the interval
    is at most eps; scalar evaluation on a dense spectrum grid."""
    if eps <= 0:
        raise InputError("eps must be positive")
    lam = np.linspace(lambda_min, lambda_max, grid_size)
    if form == NEUMANN:
        r = np.ones_like(lam)
        step = 1.0 - lam / lambda_max
        for L in range(1, max_depth + 1):
            r *= step
            if np.max(np.abs(r) / lam) <= eps:
                return L
    elif form == CHEBYSHEV:
        for L in range(1, max_depth + 1):
            sched = chebyshev_schedule(lambda_min, lambda_max, L)
            q = schedule_inverse_values(sched, lam)
            if np.max(np.abs(q - 1.0 / lam)) <= eps:
                return L
    else:
        raise InputError("depth search supports neumann and chebyshev forms")
    raise NumericError(f"no depth up to {max_depth} reaches eps={eps}",
                       bracket=(max_depth, eps))


# ---------------------------------------------------------------------------
# minimax oracle (discrete Remez exchange)

@dataclass(frozen=True)
class MinimaxResult:
    """Best sup-norm polynomial approximation on a discrete grid."""

    degree: int
    interval: Tuple[float, float]
    error: float
    witness_coefficients: Tuple[float, ...]  # Chebyshev basis on the interval
    grid_size: int

    def evaluate(self, x) -> np.ndarray:
        a, b = self.interval
        t = (2.0 * np.asarray(x, dtype=float) - (a + b)) / (b - a)
        return np.polynomial.chebyshev.chebval(t, self.witness_coefficients)


def _cheb_design(t: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones_like(t), t]
    for _ in range(2, degree + 1):
        cols.append(2.0 * t * cols[-1] - cols[-2])
    return np.column_stack(cols[:degree + 1])


def remez_discrete(xs: np.ndarray, fs: np.ndarray, degree: int):
    """Best degree-`degree` polynomial fit to fs over the discrete set xs
    in the sup norm, by multi-point exchange.

    Returns (chebyshev coefficients on [xs.min(), xs.max()], error).
    Ties in extremum selection resolve to the leftmost grid point.
    """
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    m = degree + 2
    if len(xs) < m:
        raise InputError("grid too small for the requested degree")
    a, b = float(xs[0]), float(xs[-1])
    t = (2.0 * xs - (a + b)) / (b - a) if b > a else np.zeros_like(xs)
    design = _cheb_design(t, degree)

    # initial reference: Chebyshev points snapped to the grid
    init = 0.5 * (a + b) - 0.5 * (b - a) * np.cos(np.pi * np.arange(m) / (m - 1))
    ref = np.unique(np.searchsorted(xs, init).clip(0, len(xs) - 1))
    while len(ref) < m:
        missing = np.setdiff1d(np.arange(len(xs)), ref)
        ref = np.sort(np.append(ref, missing[0]))

    coeffs = np.zeros(degree + 1)
    level = 0.0
    scale = max(1.0, float(np.max(np.abs(fs))))
    for _ in range(REMEZ_MAX_ITER):
        signs = (-1.0) ** np.arange(m)
        A = np.column_stack([design[ref], signs])
        try:
            sol = np.linalg.solve(A, fs[ref])
        except np.linalg.LinAlgError as err:
            raise NumericError("exchange system singular",
                               bracket=(level, None)) from err
        coeffs, level = sol[:-1], abs(sol[-1])
        resid = fs - design @ coeffs
        worst = float(np.max(np.abs(resid)))
        # the absolute floor absorbs roundoff when fs is (nearly) exactly
        # representable at this degree and the true level is zero
        if worst <= abs(level) * (1.0 + 1e-12) + 1e-13 * scale:
            return tuple(coeffs), worst

        # candidate extrema: peak of each maximal same-sign run of resid
        sgn = np.where(resid >= 0, 1, -1)
        cands = []
        start = 0
        for i in range(1, len(xs) + 1):
            if i == len(xs) or sgn[i] != sgn[start]:
                seg = np.abs(resid[start:i])
                cands.append(start + int(np.argmax(seg)))
                start = i
        cands = np.asarray(cands)
        if len(cands) < m:
            # too few sign runs; merge with the previous reference, which
            # alternates at the solved level, then re-collapse same-sign runs
            union = np.unique(np.concatenate([ref, cands]))
            merged = []
            for idx in union:
                s = 1 if resid[idx] >= 0 else -1
                if merged and merged[-1][1] == s:
                    if abs(resid[idx]) > abs(resid[merged[-1][0]]):
                        merged[-1] = (idx, s)
                else:
                    merged.append((idx, s))
            cands = np.array([idx for idx, _ in merged])
        if len(cands) < m:
            # degenerate level (e.g. an even target on a symmetric reference):
            # pad with well-separated points of largest residual so the next
            # solve re-levels on a nondegenerate reference
            sep = max(1, len(xs) // (4 * m))
            order = np.argsort(-np.abs(resid), kind="stable")
            chosen = list(cands)
            for idx in order:
                if len(chosen) >= m:
                    break
                if all(abs(int(idx) - int(c)) >= sep for c in chosen):
                    chosen.append(int(idx))
            cands = np.sort(np.asarray(chosen))
        # trim to m points, always keeping the global maximum
        while len(cands) > m:
            mags = np.abs(resid[cands])
            if len(cands) == m + 1:
                # pair deletion would undershoot; drop the weaker endpoint
                cands = cands[1:] if mags[0] <= mags[-1] else cands[:-1]
                continue
            j = int(np.argmin(mags))
            if j == 0:
                cands = cands[1:]
            elif j == len(cands) - 1:
                cands = cands[:-1]
            else:
                # drop this one and the weaker same-sign neighbor pair member
                drop = j - 1 if mags[j - 1] <= mags[j + 1] else j + 1
                cands = np.delete(cands, [min(j, drop), max(j, drop)])
        if len(cands) < m:
            raise NumericError("exchange lost alternation",
                               bracket=(level, worst))
        if np.array_equal(cands, ref):
            return tuple(coeffs), worst
        ref = cands
    raise NumericError(
        f"exchange did not converge in {REMEZ_MAX_ITER} iterations",
        bracket=(float(level), float(np.max(np.abs(fs - design @ coeffs)))))


def minimax_oracle(a: float, b: float, degree: int,
                   grid_size: int = DEFAULT_GRID) -> MinimaxResult:
    """Best sup-norm polynomial approximation to 1/mu on a uniform grid."""
    if not (0 < a < b):
        raise InputError("need 0 < a < b")
    if degree < 0:
        raise InputError("degree must be nonnegative")
    if grid_size < 10 * (degree + 2):
        raise InputError("grid_size must be at least 10*(degree+2)")
    xs = np.linspace(a, b, grid_size)
    coeffs, error = remez_discrete(xs, 1.0 / xs, degree)
    return MinimaxResult(degree=degree, interval=(a, b), error=float(error),
                         witness_coefficients=coeffs, grid_size=grid_size)


def chebyshev_barrier(a: float, b: float, L: int) -> float:
    """Classical lower bound (2/(a+b)) rho^L on the degree-L minimax error
    of 1/mu over [a, b]."""
    if not (0 < a < b):
        raise InputError("need 0 < a < b")
    return (2.0 / (a + b)) * chebyshev_rho(b / a) ** L


def equioscillation_count(result: MinimaxResult, grid_size: int = None) -> int:
    """Number of sign alternations of the witness residual at its extrema."""
    gs = grid_size or result.grid_size
    a, b = result.interval
    xs = np.linspace(a, b, gs)
    resid = 1.0 / xs - result.evaluate(xs)
    near = np.abs(resid) >= result.error * (1.0 - 1e-6)
    signs = np.sign(resid[near])
    return 1 + int(np.count_nonzero(np.diff(signs) != 0)) if signs.size else 0


def product_form_best_error(a: float, b: float, L: int,
                            grid_size: int = 512) -> dict:
    """Measure how well the literal product prod(1 + alpha_l lambda) can
    approximate 1/lambda on [a, b] under numerically optimized alpha.

    Also reports the error of the root-based choice alpha_l = -1/x_l (the
    residual-polynomial coefficients), which is near-maximally bad as an
    inverse approximation: its product is small rather than close to
    1/lambda.
    """
    from scipy.optimize import minimize

    lam = np.linspace(a, b, grid_size)
    target = 1.0 / lam

    def sup_err(alpha):
        p = np.ones_like(lam)
        for av in alpha:
            p = p * (1.0 + av * lam)
        return float(np.max(np.abs(p - target)))

    nodes = chebyshev_schedule(a, b, L).nodes
    starts = [-1.0 / nodes, -0.5 / nodes,
              np.full(L, (target.mean() ** (1.0 / L) - 1.0) / lam.mean())]
    best = None
    for x0 in starts:
        res = minimize(sup_err, x0, method="Nelder-Mead",
                       options={"maxiter": 4000, "fatol": 1e-14, "xatol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    return {
        "optimized_alpha": tuple(float(v) for v in best.x),
        "optimized_error": float(best.fun),
        "root_based_error": sup_err(-1.0 / nodes),
        "minimax_degree_L_error": minimax_oracle(a, b, L).error,
    }

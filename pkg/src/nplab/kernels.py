"""Kernel evaluation, Gram assembly and spectral decomposition.

Every experiment in the lab starts from a positive definite kernel.  The
supported families are RBF, half-integer Matern, polynomial, and a
non-stationary amplitude-scaled wrapper ``sigma(x) sigma(x') k_base(x, x')``
used by the equivariance-violation experiments.

Gram matrices carry their full symmetric eigendecomposition (`GramSpectrum`)
so that downstream solves, condition numbers and polynomial-in-K evaluations
all share one factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InputError, NumericError
from .linalg import jacobi_eigh

# default jitter as a fraction of the kernel variance; experiments that
# study condition numbers directly pin jitter to 0 instead
DEFAULT_JITTER_SCALE = 1e-10

_MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family with its hyperparameters.

    family is one of ``"rbf"``, ``"matern"``, ``"polynomial"``,
    ``"scaled"``.  Matern requires ``nu`` in {1/2, 3/2, 5/2}; polynomial
    requires ``degree``; scaled requires ``base`` and ``amplitude`` (a map
    from a point to a positive real).
    """

    family: str = "rbf"
    lengthscale: float = 1.0
    variance: float = 1.0
    jitter: Optional[float] = None  # None -> DEFAULT_JITTER_SCALE * variance
    nu: float = 0.5
    degree: int = 2
    base: Optional["KernelSpec"] = None
    amplitude: Optional[Callable[[np.ndarray], float]] = field(
        default=None, compare=False)

    def __post_init__(self):
        if self.lengthscale <= 0:
            raise InputError("lengthscale must be positive")
        if self.variance <= 0:
            raise InputError("variance must be positive")
        if self.jitter is not None and self.jitter < 0:
            raise InputError("jitter must be nonnegative")
        if self.family == "matern" and self.nu not in _MATERN_NUS:
            raise InputError(f"matern nu must be one of {_MATERN_NUS}")
        if self.family == "polynomial" and self.degree < 0:
            raise InputError("polynomial degree must be nonnegative")
        if self.family == "scaled" and (self.base is None or self.amplitude is None):
            raise InputError("scaled kernel needs base spec and amplitude map")
        if self.family not in ("rbf", "matern", "polynomial", "scaled"):
            raise InputError(f"unknown kernel family {self.family!r}")

    @property
    def effective_jitter(self) -> float:
        if self.jitter is None:
            return DEFAULT_JITTER_SCALE * self.variance
        return self.jitter

    @property
    def stationary(self) -> bool:
        return self.family in ("rbf", "matern")


@dataclass(frozen=True)
class GramSpectrum:
    """Gram matrix together with its full symmetric eigendecomposition."""

    matrix: np.ndarray
    eigenvalues: np.ndarray   # ascending
    eigenvectors: np.ndarray  # orthonormal columns, aligned with eigenvalues

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def kappa(self) -> float:
        return self.lambda_max / self.lambda_min

    def apply_function(self, f) -> np.ndarray:
        """Evaluate a scalar function of the matrix through the spectrum."""
        vals = f(self.eigenvalues)
        return (self.eigenvectors * vals) @ self.eigenvectors.T

    def inverse(self) -> np.ndarray:
        return self.apply_function(lambda lam: 1.0 / lam)

    def inv_sqrt(self) -> np.ndarray:
        return self.apply_function(lambda lam: 1.0 / np.sqrt(lam))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        V = self.eigenvectors
        return V @ ((V.T @ rhs).T / self.eigenvalues).T


def _as_point(x) -> np.ndarray:
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1:
        raise InputError(f"a point must be a 1-d coordinate vector, got shape {p.shape}")
    return p


def eval_kernel(spec: KernelSpec, x, x2) -> float:
    """Evaluate k(x, x') for a single pair of points."""
    p, q = _as_point(x), _as_point(x2)
    if p.shape != q.shape:
        raise InputError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if spec.family == "scaled":
        return (spec.amplitude(p) * spec.amplitude(q)
                * eval_kernel(spec.base, p, q))
    if spec.family == "polynomial":
        return spec.variance * (1.0 + float(p @ q) / spec.lengthscale**2) ** spec.degree
    r = float(np.linalg.norm(p - q)) / spec.lengthscale
    if spec.family == "rbf":
        return spec.variance * np.exp(-0.5 * r * r)
    # half-integer Matern closed forms
    if spec.nu == 0.5:
        return spec.variance * np.exp(-r)
    if spec.nu == 1.5:
        a = np.sqrt(3.0) * r
        return spec.variance * (1.0 + a) * np.exp(-a)
    a = np.sqrt(5.0) * r
    return spec.variance * (1.0 + a + a * a / 3.0) * np.exp(-a)


def kernel_matrix(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """Cross-kernel matrix k(X, Y); no jitter is applied here."""
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    Ya = Xa if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if Xa.shape[1] != Ya.shape[1]:
        raise InputError("dimension mismatch between point sets")
    out = np.empty((Xa.shape[0], Ya.shape[0]))
    for i, xi in enumerate(Xa):
        for j, yj in enumerate(Ya):
            out[i, j] = eval_kernel(spec, xi, yj)
    return out


def cross_vector(spec: KernelSpec, X, x_t) -> np.ndarray:
    """Vector of k(x_i, x_t) over rows of X."""
    return kernel_matrix(spec, X, np.atleast_2d(_as_point(x_t)))[:, 0]


def gram_spectrum(spec: KernelSpec, X) -> GramSpectrum:
    """Gram matrix of X (jitter on the diagonal) with its spectrum."""
    Xa = np.atleast_2d(np.asarray(X, dtype=float))
    if Xa.shape[0] < 1:
        raise InputError("need at least one location")
    if not np.all(np.isfinite(Xa)):
        raise InputError("locations must be finite")
    K = kernel_matrix(spec, Xa)
    K = K + spec.effective_jitter * np.eye(Xa.shape[0])
    try:
        vals, vecs = jacobi_eigh(K)
    except NumericError as err:
        raise NumericError(
            "eigensolver failed on Gram matrix",
            residual=getattr(err, "residual", None)) from err
    return GramSpectrum(matrix=K, eigenvalues=vals, eigenvectors=vecs)


def spectrum_of(matrix: np.ndarray) -> GramSpectrum:
    """Wrap an externally assembled symmetric matrix as a GramSpectrum."""
    vals, vecs = jacobi_eigh(np.asarray(matrix, dtype=float))
    return GramSpectrum(matrix=np.asarray(matrix, dtype=float),
                        eigenvalues=vals, eigenvectors=vecs)

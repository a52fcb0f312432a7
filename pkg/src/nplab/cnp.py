"""Mean-aggregation conditional predictor, encoding collisions, and the
optimal-linear-encoder lower bound.

The predictor here is the idealized mean-pooling architecture: encode each
(location, value) pair, average, decode at the query.  Because the context
enters only through the average encoding, any two context sets with equal
mean encodings are indistinguishable to every decoder; `find_collision`
searches for such pairs and `collision_separation` measures how far apart
the exact GP posterior means are on them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment, minimize

from .errors import InputError, NumericError
from .gp_oracle import posterior_mean
from .kernels import KernelSpec
from .rng import stream


@dataclass(frozen=True)
class ContextSet:
    """Multiset of (location, value) pairs."""

    locations: np.ndarray  # n x d_x
    values: np.ndarray     # n x d_y

    def __post_init__(self):
        loc = np.atleast_2d(np.asarray(self.locations, dtype=float))
        val = np.atleast_2d(np.asarray(self.values, dtype=float))
        if val.shape[0] != loc.shape[0]:
            val = val.reshape(loc.shape[0], -1)
        if loc.shape[0] < 1:
            raise InputError("context set must be nonempty")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "values", val)

    @property
    def n(self) -> int:
        return self.locations.shape[0]

    def points(self) -> np.ndarray:
        """Stacked (location, value) rows."""
        return np.hstack([self.locations, self.values])

    def permuted(self, perm) -> "ContextSet":
        perm = np.asarray(perm)
        return ContextSet(self.locations[perm], self.values[perm])


def context_from_pairs(pairs) -> ContextSet:
    """Build a context set from [(x, y), ...] with scalar or vector entries."""
    pairs = list(pairs)
    if not pairs:
        raise InputError("context set must be nonempty")
    locs = [np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in pairs]
    vals = [np.atleast_1d(np.asarray(y, dtype=float)) for _, y in pairs]
    return ContextSet(np.vstack(locs), np.vstack(vals))


def matching_distance(C: ContextSet, C2: ContextSet) -> float:
    """Minimum-cost perfect matching between the two point multisets,
    cost = sum of Euclidean distances of matched (x, y) pairs."""
    if C.n != C2.n:
        raise InputError("matching distance needs equal-size contexts")
    P, Q = C.points(), C2.points()
    cost = np.linalg.norm(P[:, None, :] - Q[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def same_multiset(C: ContextSet, C2: ContextSet, tol: float = 1e-9) -> bool:
    return C.n == C2.n and matching_distance(C, C2) <= tol


# ---------------------------------------------------------------------------
# encoders

IDENTITY = "identity"
LINEAR = "linear"
SMOOTH = "smooth"


@dataclass(frozen=True)
class Encoder:
    """Deterministic per-pair encoder h(x, y) -> R^d.

    identity: h(x, y) = (x, y).
    linear:   h(x, y) = W (x, y) + b.
    smooth:   linear plus a fixed small sinusoidal perturbation, used to
              exercise the collision search on a non-affine map.
    """

    kind: str = IDENTITY
    W: Optional[np.ndarray] = field(default=None)
    b: Optional[np.ndarray] = field(default=None)
    smooth_freqs: Optional[np.ndarray] = field(default=None)
    smooth_amp: float = 0.05

    def __post_init__(self):
        if self.kind not in (IDENTITY, LINEAR, SMOOTH):
            raise InputError(f"unknown encoder kind {self.kind!r}")
        if self.kind in (LINEAR, SMOOTH) and self.W is None:
            raise InputError(f"{self.kind} encoder needs a weight matrix")

    @property
    def output_dim(self) -> Optional[int]:
        if self.kind == IDENTITY:
            return None  # d_x + d_y, fixed by the inputs
        return self.W.shape[0]

    def encode(self, x, y) -> np.ndarray:
        z = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)),
                            np.atleast_1d(np.asarray(y, dtype=float))])
        if self.kind == IDENTITY:
            return z
        out = self.W @ z
        if self.b is not None:
            out = out + self.b
        if self.kind == SMOOTH:
            freqs = (self.smooth_freqs if self.smooth_freqs is not None
                     else 1.0 + np.arange(len(out), dtype=float))
            out = out + self.smooth_amp * np.sin(freqs * out)
        return out

    def mean_encoding(self, C: ContextSet) -> np.ndarray:
        return np.mean(
            [self.encode(x, y) for x, y in zip(C.locations, C.values)], axis=0)


def linear_encoder(W, b=None) -> Encoder:
    return Encoder(kind=LINEAR, W=np.atleast_2d(np.asarray(W, dtype=float)),
                   b=None if b is None else np.asarray(b, dtype=float))


def smooth_test_encoder(input_dim: int, output_dim: int) -> Encoder:
    """Fixed analytic non-affine encoder: rotation-like affine map plus a
    low-amplitude sinusoid with frequencies 1..d."""
    i, j = np.meshgrid(np.arange(output_dim), np.arange(input_dim),
                       indexing="ij")
    W = np.cos(0.7 * (i + 1) + 1.3 * j) / np.sqrt(input_dim)
    b = 0.1 * np.sin(1.0 + np.arange(output_dim, dtype=float))
    return Encoder(kind=SMOOTH, W=W, b=b,
                   smooth_freqs=1.0 + np.arange(output_dim, dtype=float))


# ---------------------------------------------------------------------------
# predictor

def cnp_predict(encoder: Encoder, decoder: Callable, C: ContextSet,
                x_t) -> float:
    """decoder(mean encoding, query).  Permutation invariant by construction
    since the context enters only through the mean."""
    if C.n < 1:
        raise InputError("context set must be nonempty")
    r = encoder.mean_encoding(C)
    return float(decoder(r, np.atleast_1d(np.asarray(x_t, dtype=float))))


# ---------------------------------------------------------------------------
# collisions

@dataclass(frozen=True)
class CollisionResult:
    success: bool
    C: ContextSet
    C2: Optional[ContextSet]
    encoding_gap: float
    separation: float  # matching distance between the multisets
    restarts_used: int
    message: str = ""


def example_collision_pair() -> CollisionResult:
    """The stored two-point identity-encoder collision: both contexts
    mean-encode to (1, 1) while being far apart as multisets."""
    C = context_from_pairs([(0.0, 1.0), (2.0, 1.0)])
    C2 = context_from_pairs([(0.5, 0.5), (1.5, 1.5)])
    enc = Encoder(kind=IDENTITY)
    gap = float(np.linalg.norm(enc.mean_encoding(C) - enc.mean_encoding(C2)))
    return CollisionResult(success=True, C=C, C2=C2, encoding_gap=gap,
                           separation=matching_distance(C, C2),
                           restarts_used=0)


GAP_TOL = 1e-8
MIN_SEPARATION = 0.1


def find_collision(encoder: Encoder, n: int, seed: int, d_x: int = 1,
                   d_y: int = 1, restarts: int = 10) -> CollisionResult:
    """Search for distinct same-size contexts with equal mean encodings.

    Minimizes the squared encoding gap over the second context from a
    perturbed copy of the first, with a penalty keeping the multisets at
    matching distance >= 0.1.  Failure is reported, not raised: existence
    is generic but a fixed search budget can miss.
    """
    probe = encoder.encode(np.zeros(d_x), np.zeros(d_y))
    d = len(probe)
    if n * (d_x + d_y) <= d:
        raise InputError(
            f"need n*(d_x+d_y) > encoder dimension ({n * (d_x + d_y)} <= {d})")

    rng = stream(seed, "cnp", "find_collision")
    base = ContextSet(rng.normal(size=(n, d_x)), rng.normal(size=(n, d_y)))
    h_base = encoder.mean_encoding(base)

    def unpack(params) -> ContextSet:
        locs = params[:n * d_x].reshape(n, d_x)
        vals = params[n * d_x:].reshape(n, d_y)
        return ContextSet(locs, vals)

    def objective(params):
        cand = unpack(params)
        gap2 = float(np.sum((encoder.mean_encoding(cand) - h_base) ** 2))
        sep = matching_distance(base, cand)
        return gap2 + 4.0 * max(0.0, MIN_SEPARATION + 0.05 - sep) ** 2

    for attempt in range(restarts):
        x0 = np.concatenate([base.locations.ravel(), base.values.ravel()])
        x0 = x0 + rng.normal(scale=0.5 + 0.25 * attempt, size=x0.shape)
        res = minimize(objective, x0, method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-18, "gtol": 1e-14})
        cand = unpack(res.x)
        gap = float(np.linalg.norm(encoder.mean_encoding(cand) - h_base))
        sep = matching_distance(base, cand)
        if gap <= GAP_TOL and sep >= MIN_SEPARATION and not same_multiset(base, cand):
            return CollisionResult(success=True, C=base, C2=cand,
                                   encoding_gap=gap, separation=sep,
                                   restarts_used=attempt + 1)
    return CollisionResult(success=False, C=base, C2=None,
                           encoding_gap=float("nan"), separation=float("nan"),
                           restarts_used=restarts,
                           message=f"no collision found in {restarts} restarts")


def collision_separation(spec: KernelSpec, C: ContextSet, C2: ContextSet,
                         x_t) -> float:
    """Gap between the exact GP posterior means of the two contexts."""
    mu1 = posterior_mean(spec, C.locations, C.values[:, 0], x_t)
    mu2 = posterior_mean(spec, C2.locations, C2.values[:, 0], x_t)
    return abs(mu1 - mu2)


# ---------------------------------------------------------------------------
# optimal linear encoder bound

SYNTHETIC_ISOTROPIC = "SyntheticIsotropic"
MONTE_CARLO_STATIONARY = "MonteCarloStationary"


def _relative_mse_for_projection(W_tilde: np.ndarray, A: np.ndarray) -> float:
    """Best relative MSE of reconstructing W z from the encoding A z with
    isotropic z: project the rows of W onto the row space of A."""
    # row-space projector via economical orthonormal basis of A^T
    Q, _ = np.linalg.qr(A.T)
    resid = W_tilde - (W_tilde @ Q) @ Q.T
    return float(np.sum(resid ** 2) / np.sum(W_tilde ** 2))


def pca_encoder_ratio(W_tilde: np.ndarray, d: int):
    """Optimal d-dimensional linear encoder (top right-singular subspace)
    and its relative MSE, the trailing singular-value mass."""
    _, svals, Vt = np.linalg.svd(W_tilde, full_matrices=False)
    ratio = float(np.sum(svals[d:] ** 2) / np.sum(svals ** 2))
    return ratio, Vt[:d]


def pca_bound_experiment(n: int, d: int, mode: str = SYNTHETIC_ISOTROPIC,
                         spec: Optional[KernelSpec] = None,
                         n_targets: int = 2000, seed: int = 0,
                         n_random_encoders: int = 30) -> dict:
    """Relative MSE of the best d-dimensional linear encoder against the
    1 - d/n floor.

    SyntheticIsotropic builds a whitened weight matrix with exactly equal
    singular values (scaled orthogonal), so the optimal ratio is 1 - d/n
    to rounding.  MonteCarloStationary samples i.i.d. locations, builds the
    whitened GP weight rows K^{1/2} w(x_t), and reports the measured ratio
    next to the same floor.
    """
    if not (1 <= d <= n):
        raise InputError("need 1 <= d <= n")
    if mode == SYNTHETIC_ISOTROPIC:
        rng = stream(seed, "cnp", "pca_bound", "synthetic")
        Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
        W_tilde = 1.7 * Q  # any uniform scale keeps the spectrum flat
    elif mode == MONTE_CARLO_STATIONARY:
        if spec is None:
            raise InputError("MonteCarloStationary needs a kernel spec")
        from .kernels import cross_vector, gram_spectrum
        rng = stream(seed, "cnp", "pca_bound", "montecarlo")
        X_C = rng.uniform(-2.0, 2.0, size=(n, 1))
        S = gram_spectrum(spec, X_C)
        sqrtK = S.apply_function(np.sqrt)
        targets = rng.uniform(-2.0, 2.0, size=(n_targets, 1))
        rows = np.empty((n_targets, n))
        for j, x_t in enumerate(targets):
            rows[j] = sqrtK @ S.solve(cross_vector(spec, X_C, x_t))
        W_tilde = rows
    else:
        raise InputError(f"unknown mode {mode!r}")

    ratio, _ = pca_encoder_ratio(W_tilde, d)
    bound = 1.0 - d / n

    rng_enc = stream(seed, "cnp", "pca_bound", "random_encoders")
    random_ratios = []
    for _ in range(n_random_encoders):
        A = rng_enc.normal(size=(d, n))
        random_ratios.append(_relative_mse_for_projection(W_tilde, A))

    rank = int(np.linalg.matrix_rank(W_tilde))
    return {
        "mode": mode,
        "n": n,
        "d": d,
        "measured_ratio": ratio,
        "bound": bound,
        "deviation_from_bound": ratio - bound,
        "best_random_encoder_ratio": float(min(random_ratios)) if random_ratios else float("nan"),
        "effective_rank": rank,
    }


# ---------------------------------------------------------------------------
# moment encoding for ordinary least squares

def moment_encoding(features, C: ContextSet) -> np.ndarray:
    """Sum-pooled encoding (vech of feature outer products, feature-value
    moments); dimension k(k+3)/2 for k features."""
    k = len(features)
    phi = np.array([[float(f(x)) for f in features] for x in C.locations])
    y = C.values[:, 0]
    M = phi.T @ phi
    v = phi.T @ y
    iu = np.triu_indices(k)
    return np.concatenate([M[iu], v])


def ols_from_encoding(features, encoding: np.ndarray, x_t) -> float:
    """Reconstruct the least-squares prediction at x_t from the moment
    encoding alone."""
    k = len(features)
    iu = np.triu_indices(k)
    M = np.zeros((k, k))
    M[iu] = encoding[:len(iu[0])]
    M = M + M.T - np.diag(np.diag(M))
    v = encoding[len(iu[0]):]
    try:
        beta = np.linalg.solve(M, v)
    except np.linalg.LinAlgError as err:
        raise NumericError("feature Gram is singular") from err
    if np.linalg.cond(M) > 1e12:
        raise NumericError("feature Gram is numerically singular",
                           lambda_min=float(np.linalg.eigvalsh(M)[0]))
    phi_t = np.array([float(f(np.atleast_1d(np.asarray(x_t, dtype=float))))
                      for f in features])
    return float(phi_t @ beta)


def ols_moment_encoder(features, C: ContextSet, x_t) -> float:
    """OLS prediction computed through the k(k+3)/2 moment encoding."""
    return ols_from_encoding(features, moment_encoding(features, C), x_t)


def moment_encoding_dim(k: int) -> int:
    return k * (k + 3) // 2

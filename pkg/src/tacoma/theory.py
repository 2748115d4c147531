"""Separation of two-component Gaussian mixtures with a shared covariance.

For centers differing by ``u`` and covariance ``sigma`` the separation is
``S = u' sigma^-1 u`` and the Bayes error of the 0-1 rule with equal
priors is ``Phi(-sqrt(S) / 2)``. The ratio of separation compares a
feature subset to the full feature set.

Linear algebra is done here with a bandwidth-aware Cholesky so that
structured covariances of a few thousand dimensions stay cheap. Symmetric
matrices that are invertible but not positive definite (e.g. a tridiagonal
matrix with off-diagonal 0.6 beyond a handful of dimensions) are solved
with an unpivoted LDL' factorization instead; such inputs are flagged in
reports because they are not valid covariances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cotrain import thin_split


class CholeskyError(ArithmeticError):
    def __init__(self, pivot: int, value: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot} is {value:.6g}")
        self.pivot = pivot
        self.value = value


# Band storage: Ab[i, k] holds A[i, i - k] for k = 0..bw (lower triangle).


@njit(cache=True)
def _cholesky_band(Ab):
    n, w = Ab.shape
    bw = w - 1
    L = np.zeros((n, w))
    for j in range(n):
        lo = max(0, j - bw)
        s = Ab[j, 0]
        for k in range(lo, j):
            s -= L[j, j - k] * L[j, j - k]
        if not s > 0.0:
            return L, j, s
        d = math.sqrt(s)
        L[j, 0] = d
        for i in range(j + 1, min(n, j + bw + 1)):
            t = Ab[i, i - j]
            for k in range(max(lo, i - bw), j):
                t -= L[i, i - k] * L[j, j - k]
            L[i, i - j] = t / d
    return L, -1, 0.0


@njit(cache=True)
def _ldl_band(Ab, tiny):
    n, w = Ab.shape
    bw = w - 1
    L = np.zeros((n, w))
    D = np.zeros(n)
    for j in range(n):
        lo = max(0, j - bw)
        d = Ab[j, 0]
        for k in range(lo, j):
            d -= L[j, j - k] * L[j, j - k] * D[k]
        if abs(d) <= tiny:
            return L, D, j
        D[j] = d
        L[j, 0] = 1.0
        for i in range(j + 1, min(n, j + bw + 1)):
            t = Ab[i, i - j]
            for k in range(max(lo, i - bw), j):
                t -= L[i, i - k] * L[j, j - k] * D[k]
            L[i, i - j] = t / d
    return L, D, -1


@njit(cache=True)
def _forward(L, b):
    n, w = L.shape
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(max(0, i - w + 1), i):
            s -= L[i, i - k] * y[k]
        y[i] = s / L[i, 0]
    return y


@njit(cache=True)
def _backward_transposed(L, y):
    n, w = L.shape
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, min(n, i + w)):
            s -= L[k, k - i] * x[k]
        x[i] = s / L[i, 0]
    return x


def bandwidth(A: np.ndarray) -> int:
    rows, cols = np.nonzero(A)
    return int(np.max(np.abs(rows - cols))) if rows.size else 0


def _check_square(A) -> np.ndarray:
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError("expected a non-empty square matrix")
    return A


def is_symmetric(A: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(A - A.T)) <= tol * max(1.0, float(np.max(np.abs(A)))))


def to_band(A: np.ndarray, bw: int, index=None) -> np.ndarray:
    """Lower band of ``A`` (or of its principal submatrix on sorted ``index``)."""
    idx = np.arange(A.shape[0]) if index is None else np.asarray(index)
    n = idx.size
    bw = min(bw, n - 1)
    back = np.arange(n)[:, None] - np.arange(bw + 1)[None, :]
    valid = back >= 0
    Ab = A[idx[:, None], idx[np.where(valid, back, 0)]]
    Ab[~valid] = 0.0
    return np.ascontiguousarray(Ab)


def from_band(Lb: np.ndarray) -> np.ndarray:
    n, w = Lb.shape
    L = np.zeros((n, n))
    for k in range(w):
        i = np.arange(k, n)
        L[i, i - k] = Lb[k:, k]
    return L


def _cholesky_banded(Ab: np.ndarray) -> np.ndarray:
    L, pivot, value = _cholesky_band(Ab)
    if pivot >= 0:
        raise CholeskyError(pivot, value)
    return L


def _ldl_banded(Ab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    tiny = 1e-13 * max(1.0, float(np.max(np.abs(Ab))))
    L, D, pivot = _ldl_band(Ab, tiny)
    if pivot >= 0:
        raise ArithmeticError(f"matrix is singular to working precision at pivot {pivot}")
    return L, D


def _prepare(sigma, band) -> np.ndarray:
    A = _check_square(sigma)
    if not is_symmetric(A):
        raise ValueError("matrix is not symmetric")
    return to_band(A, bandwidth(A) if band is None else int(band))


def cholesky(sigma, band: int | None = None) -> np.ndarray:
    """Lower-triangular ``H`` with ``H @ H.T == sigma``.

    ``band`` bounds the number of non-zero sub-diagonals; it is detected
    from the matrix when omitted.
    """
    return from_band(_cholesky_banded(_prepare(sigma, band)))


def ldl(sigma, band: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Unit lower-triangular ``L`` and diagonal ``d`` with ``L diag(d) L' == sigma`` (no pivoting)."""
    L, d = _ldl_banded(_prepare(sigma, band))
    return from_band(L), d


def _solve_banded(Ab: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        L = _cholesky_banded(Ab)
    except CholeskyError:
        L, d = _ldl_banded(Ab)
        return _backward_transposed(L, _forward(L, b) / d), False
    return _backward_transposed(L, _forward(L, b)), True


def solve_symmetric(sigma, b, band: int | None = None) -> tuple[np.ndarray, bool]:
    """Solve ``sigma x = b``; returns (x, positive_definite)."""
    return _solve_banded(_prepare(sigma, band), np.asarray(b, dtype=np.float64))


def _separation_banded(u: np.ndarray, Ab: np.ndarray) -> tuple[float, bool]:
    x, pd = _solve_banded(Ab, u)
    s = float(u @ x)
    if pd:
        return max(s, 0.0), True
    if s < 0:
        raise ArithmeticError(f"indefinite matrix gives negative separation {s:.6g}")
    return s, False


def separation(u, sigma, band: int | None = None) -> float:
    """Squared Mahalanobis distance ``u' sigma^-1 u`` between the two centers."""
    u = np.asarray(u, dtype=np.float64)
    A = _check_square(sigma)
    if u.shape != (A.shape[0],):
        raise ValueError("u and sigma dimensions disagree")
    return _separation_banded(u, _prepare(A, band))[0]


def normal_cdf(x: float) -> float:
    # erfc keeps full relative precision in the lower tail
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def bayes_error(s: float) -> float:
    if s < 0:
        raise ValueError("separation must be non-negative")
    return normal_cdf(-0.5 * math.sqrt(s))


def smallest_eigenvalue_of_inverse(
    sigma, tol: float = 1e-10, max_iter: int = 10_000
) -> tuple[float, int, bool]:
    """lambda_min(sigma^-1) by inverse iteration on sigma^-1, i.e. power iteration on sigma.

    Returns (value, iterations, converged).
    """
    A = _check_square(sigma)
    v = np.random.default_rng(0).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ A @ v)
    for it in range(1, max_iter + 1):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ValueError("matrix is singular")
        v = w / norm
        new = float(v @ A @ v)
        if abs(new - lam) <= tol * abs(new):
            return 1.0 / new, it, True
        lam = new
    return 1.0 / lam, max_iter, False


def make_cov(kind: str, p: int, rho: float = 0.0, require_pd: bool = True) -> np.ndarray:
    """Structured matrix: ``identity``, ``tridiagonal`` (off-diagonal rho) or ``ar1`` (rho^|i-j|).

    Raises if the result is not positive definite; with ``require_pd=False``
    only a singular result is rejected.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if kind == "identity":
        S = np.eye(p)
    elif kind in ("tridiagonal", "tridiag"):
        S = np.eye(p)
        i = np.arange(p - 1)
        S[i, i + 1] = rho
        S[i + 1, i] = rho
    elif kind == "ar1":
        idx = np.arange(p)
        S = float(rho) ** np.abs(idx[:, None] - idx[None, :])
    else:
        raise ValueError(f"unknown covariance kind {kind!r}")
    if require_pd:
        cholesky(S)
    else:
        solve_symmetric(S, np.ones(p))
    return S


def parse_cov(spec: str, p: int, require_pd: bool = True) -> np.ndarray:
    """``identity``, ``tridiag:0.6`` or ``ar1:0.5``."""
    kind, _, arg = spec.partition(":")
    return make_cov(kind, p, float(arg) if arg else 0.0, require_pd)


@dataclass
class MixtureSpec:
    u: np.ndarray
    sigma: np.ndarray
    weight: float = 0.5
    require_pd: bool = False

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.sigma = _check_square(self.sigma)
        if self.u.shape != (self.sigma.shape[0],):
            raise ValueError("u and sigma dimensions disagree")
        if not is_symmetric(self.sigma):
            raise ValueError("sigma must be symmetric")
        if self.weight != 0.5:
            raise NotImplementedError("only equal mixing weights are supported")
        self.band = bandwidth(self.sigma)
        Ab = to_band(self.sigma, self.band)
        try:
            _cholesky_banded(Ab)
            self.positive_definite = True
        except CholeskyError:
            if self.require_pd:
                raise
            _ldl_banded(Ab)
            self.positive_definite = False

    @property
    def p(self) -> int:
        return self.u.shape[0]


@dataclass
class SeparationReport:
    s_full: float
    s_subset: float
    gamma: float
    bayes_full: float
    bayes_subset: float
    lambda_min_inv: float | None
    subset_size: int
    p: int
    positive_definite: bool = True

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _subset_separation(spec: MixtureSpec, subset: np.ndarray) -> float:
    # a principal submatrix on sorted indices keeps the parent's bandwidth bound
    return _separation_banded(spec.u[subset], to_band(spec.sigma, spec.band, subset))[0]


def ratio_of_separation(u, sigma, subset, diagnostics: bool = True) -> SeparationReport:
    spec = u if isinstance(u, MixtureSpec) else MixtureSpec(u, sigma)
    subset = np.unique(np.asarray(subset, dtype=np.intp))
    if subset.size == 0:
        raise ValueError("subset must be non-empty")
    if subset[0] < 0 or subset[-1] >= spec.p:
        raise ValueError("subset indices out of range")
    s_full = _subset_separation(spec, np.arange(spec.p))
    s_sub = _subset_separation(spec, subset)
    lam = None
    if diagnostics:
        # only meaningful for a genuine covariance
        lam = smallest_eigenvalue_of_inverse(spec.sigma)[0] if spec.positive_definite else float("nan")
    return SeparationReport(
        s_full=s_full,
        s_subset=s_sub,
        gamma=s_sub / s_full if s_full > 0 else float("nan"),
        bayes_full=bayes_error(s_full),
        bayes_subset=bayes_error(s_sub),
        lambda_min_inv=lam,
        subset_size=int(subset.size),
        p=spec.p,
        positive_definite=spec.positive_definite,
    )


@dataclass
class GammaSamples:
    samples: np.ndarray
    parts: int
    s_full: float
    epsilon: float = 0.05
    slice_sizes: list = field(default_factory=list)

    @property
    def min(self) -> float:
        return float(self.samples.min())

    @property
    def median(self) -> float:
        return float(np.median(self.samples))

    @property
    def fraction_below(self) -> float:
        """Share of trials with gamma < 1/J - epsilon."""
        return float(np.mean(self.samples < 1.0 / self.parts - self.epsilon))


def mc_gamma(spec: MixtureSpec, parts: int, trials: int, seed: int, epsilon: float = 0.05) -> GammaSamples:
    """Ratio of separation of one thinned slice, over ``trials`` random partitions."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    s_full = _subset_separation(spec, np.arange(spec.p))
    gammas = np.empty(trials)
    sizes = []
    for t in range(trials):
        sub_seed = np.random.SeedSequence([seed, t])
        piece = thin_split(spec.p, parts, sub_seed).subsets[0]
        gammas[t] = _subset_separation(spec, piece) / s_full
        sizes.append(len(piece))
    return GammaSamples(gammas, parts, s_full, epsilon, sizes)

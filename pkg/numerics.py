"""Small-dimension complex linear algebra and special functions"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg
from scipy.special import gammaln, rgamma

import config
from errors import DomainError, NoConvergence, NotPositiveDefinite

ArrayLike = Union[float, np.ndarray]


def as_hermitian(A: np.ndarray) -> np.ndarray:
    """Return the Hermitian part of a square complex matrix (or stack)"""
    A = np.asarray(A, dtype=complex)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    return 0.5 * (A + np.swapaxes(A.conj(), -1, -2))


@dataclass(frozen=True)
class HermitianFactor:
    """Lower Cholesky factor of a diagonally loaded Hermitian matrix"""

    lower: np.ndarray
    loading: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve A x = b for a vector or a D x n block of right-hand sides"""
        b = np.asarray(b, dtype=complex)
        if b.shape[0] != self.dim:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix is {self.dim}x{self.dim}")
        return linalg.cho_solve((self.lower, True), b)

    def quadratic(self, x: np.ndarray) -> np.ndarray:
        """x^H A^-1 x for a vector or for every column of a D x n block"""
        w = linalg.solve_triangular(self.lower, np.asarray(x, dtype=complex), lower=True)
        return np.sum(np.abs(w) ** 2, axis=0)

    def logdet(self) -> float:
        """log |A| of the loaded matrix"""
        return 2.0 * float(np.sum(np.log(np.diag(self.lower).real)))


def hermitian_factor(A: np.ndarray, allow_loading: bool = True) -> HermitianFactor:
    """Cholesky-factor A, diagonally loading it when it is singular or nearly so.

    The unloaded factor is kept when every squared pivot exceeds
    LOADING_START * trace(A)/D. Otherwise the loading starts there and grows by
    LOADING_STEP up to LOADING_MAX * trace(A)/D. With allow_loading=False a
    matrix that needs loading raises NotPositiveDefinite.
    """
    A = as_hermitian(A)
    if A.ndim != 2:
        raise ValueError("hermitian_factor expects a single matrix")
    dim = A.shape[0]
    scale = max(float(np.trace(A).real) / dim, 0.0)
    try:
        lower = linalg.cholesky(A, lower=True)
        if np.min(np.diag(lower).real) ** 2 > config.LOADING_START * scale:
            return HermitianFactor(lower=lower, loading=0.0)
    except linalg.LinAlgError:
        pass
    if not allow_loading:
        raise NotPositiveDefinite(f"{dim}x{dim} matrix is singular or not positive definite")

    eye = np.eye(dim)
    eps = config.LOADING_START
    while eps <= config.LOADING_MAX * (1 + 1e-9):
        loading = eps * scale
        try:
            lower = linalg.cholesky(A + loading * eye, lower=True)
            return HermitianFactor(lower=lower, loading=loading)
        except linalg.LinAlgError:
            eps *= config.LOADING_STEP
    raise NotPositiveDefinite(f"{dim}x{dim} matrix not positive definite after loading {config.LOADING_MAX:g}")


def hermitian_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b for Hermitian positive definite A"""
    return hermitian_factor(A).solve(b)


def _fix_phase(vectors: np.ndarray) -> np.ndarray:
    """Rotate each row so that its first nonzero entry is real-positive"""
    magnitude = np.abs(vectors)
    significant = magnitude > 1e-12 * np.max(magnitude, axis=-1, keepdims=True)
    first = np.argmax(significant, axis=-1)
    rows = np.arange(vectors.shape[0])
    pivot = vectors[rows, first]
    vectors = vectors * (np.conj(pivot) / np.abs(pivot))[:, None]
    vectors[rows, first] = np.abs(pivot)
    return vectors


def _rayleigh(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum('ni,nij,nj->n', v.conj(), A, v).real


def _dominant_vectors(A: np.ndarray, B: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Dominant eigenvectors of PSD stack B (shifted A) by squaring then power iteration"""
    P = B / np.linalg.norm(B, axis=(-2, -1), keepdims=True)
    iterations = 0
    while iterations < max_iter:
        Q = P @ P
        Q /= np.linalg.norm(Q, axis=(-2, -1), keepdims=True)
        iterations += 1
        change = np.linalg.norm(Q - P, axis=(-2, -1))
        P = Q
        if np.all(change < tol):
            break

    rows = np.arange(P.shape[0])
    column = np.argmax(np.linalg.norm(P, axis=-2), axis=-1)
    v = P[rows, :, column]
    v /= np.linalg.norm(v, axis=-1, keepdims=True)

    scale = np.maximum(np.linalg.norm(A, axis=(-2, -1)), np.finfo(float).tiny)
    rho = _rayleigh(A, v)
    while iterations < max_iter:
        w = np.einsum('nij,nj->ni', B, v)
        w /= np.linalg.norm(w, axis=-1, keepdims=True)
        new_rho = _rayleigh(A, w)
        iterations += 1
        settled = np.abs(new_rho - rho) <= tol * scale
        v, rho = w, new_rho
        if np.all(settled):
            return v
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")


def principal_eigenvectors(A: np.ndarray, tol: float = config.POWER_TOL,
                           max_iter: int = config.POWER_MAX_ITER) -> np.ndarray:
    """Unit-norm eigenvectors of the largest eigenvalue for a stack (..., D, D).

    The spectrum is shifted by the Gershgorin lower bound so that the largest
    algebraic eigenvalue dominates. The first nonzero entry of every result is
    real-positive.
    """
    A = as_hermitian(A)
    batch_shape = A.shape[:-2]
    dim = A.shape[-1]
    A = A.reshape(-1, dim, dim)

    diagonal = np.einsum('nii->ni', A).real
    radius = np.sum(np.abs(A), axis=-1) - np.abs(diagonal)
    shift = np.minimum(np.min(diagonal - radius, axis=-1), 0.0)
    B = A - shift[:, None, None] * np.eye(dim)

    vectors = np.zeros((A.shape[0], dim), dtype=complex)
    vectors[:, 0] = 1.0
    active = np.linalg.norm(B, axis=(-2, -1)) > 0
    if np.any(active):
        vectors[active] = _dominant_vectors(A[active], B[active], tol, max_iter)
    return _fix_phase(vectors).reshape(batch_shape + (dim,))


def principal_eigenvector(A: np.ndarray) -> np.ndarray:
    """Unit-norm eigenvector of the largest eigenvalue of a Hermitian matrix"""
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError("principal_eigenvector expects a single matrix")
    return principal_eigenvectors(A[None])[0]


def _check_kummer_args(a: float, b: float, x: np.ndarray) -> None:
    if not (a > 0 and b > 0):
        raise DomainError(f"kummer_m requires a > 0 and b > 0, got a={a}, b={b}")
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise DomainError("kummer_m requires x >= 0")


def _kummer_series(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """Power series of M(a, b, x); all terms are non-negative for a, b > 0, x >= 0"""
    x = np.asarray(x, dtype=float)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for n in range(config.KUMMER_SERIES_TERMS):
        term = term * (a + n) * x / ((b + n) * (n + 1))
        total = total + term
        if np.all(term <= config.KUMMER_TOL * total):
            break
    return total


def _asymptotic_sum(p: float, q: float, z: np.ndarray, max_terms: int = 200) -> np.ndarray:
    """sum_s (p)_s (q)_s / (s! z^s), truncated at its smallest term"""
    term = np.ones_like(z)
    total = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    for s in range(max_terms):
        following = term * (p + s) * (q + s) / ((s + 1) * z)
        active &= np.abs(following) < np.abs(term)
        total = np.where(active, total + following, total)
        term = np.where(active, following, term)
        active &= np.abs(following) > config.KUMMER_TOL * np.abs(total)
        if not active.any():
            break
    return total


def _log_kummer_asymptotic(a: float, b: float, x: np.ndarray) -> np.ndarray:
    """log M(a, b, x) from the large-x expansion, including the recessive term"""
    x = np.asarray(x, dtype=float)
    log_x = np.log(x)
    log_lead = gammaln(b) - gammaln(a) + x + (a - b) * log_x
    dominant = _asymptotic_sum(b - a, 1 - a, x)
    recessive = (np.cos(np.pi * a) * rgamma(b - a)
                 * np.exp(gammaln(a) - x + (b - 2 * a) * log_x)
                 * _asymptotic_sum(a, a - b + 1, -x))
    return log_lead + np.log(dominant + recessive)


def log_kummer_m(a: float, b: float, x: ArrayLike) -> ArrayLike:
    """log of the confluent hypergeometric function M(a, b, x) for x >= 0"""
    values = np.asarray(x, dtype=float)
    _check_kummer_args(a, b, values)
    flat = values.reshape(-1)
    out = np.empty_like(flat)
    small = flat < config.KUMMER_CROSSOVER
    if np.any(small):
        out[small] = np.log(_kummer_series(a, b, flat[small]))
    if np.any(~small):
        out[~small] = _log_kummer_asymptotic(a, b, flat[~small])
    out = out.reshape(values.shape)
    return float(out) if np.ndim(x) == 0 else out


def kummer_m(a: float, b: float, x: ArrayLike) -> ArrayLike:
    """Confluent hypergeometric function M(a, b, x) for a, b > 0 and x >= 0"""
    values = np.asarray(x, dtype=float)
    _check_kummer_args(a, b, values)
    flat = values.reshape(-1)
    out = np.empty_like(flat)
    small = flat < config.KUMMER_CROSSOVER
    if np.any(small):
        out[small] = _kummer_series(a, b, flat[small])
    if np.any(~small):
        with np.errstate(over='ignore'):
            out[~small] = np.exp(_log_kummer_asymptotic(a, b, flat[~small]))
    out = out.reshape(values.shape)
    return float(out) if np.ndim(x) == 0 else out

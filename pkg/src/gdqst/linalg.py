"""Symmetric vectorization, symmetric Kronecker products and the dense
linear-algebra kernels the rest of the package is built from.

Ordering convention: symmetric index pairs ``{mu, nu}`` with ``mu <= nu`` are
ordered lexicographically, ``(0,0), (0,1), ..., (0,n-1), (1,1), ...``. The same
ordering is used for ``svec`` entries, for the basis ``psi_{mu,nu}`` of the
symmetric subspace, and for the columns of every Vandermonde matrix built on
eigenvalue products. Since ``svec`` walks the lower triangle column by column,
``(s11, sqrt2 s21, ..., sqrt2 sn1, s22, ...)``, this is exactly
``numpy.triu_indices`` order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import DecompositionError, MatrixExpOverflow, ValidationError

SQRT2 = np.sqrt(2.0)


def omega(m: int) -> np.ndarray:
    """Symplectic form ``[[0, I], [-I, 0]]`` for ``m`` modes in (q..., p...) order."""
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block([[zero, eye], [-eye, zero]])


def svec_length(n: int) -> int:
    return n * (n + 1) // 2


def svec_dim(length: int) -> int:
    """Inverse of :func:`svec_length`; raises if ``length`` is not triangular."""
    n = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if n < 1 or svec_length(n) != length:
        raise ValidationError(f"length {length} is not a triangular number")
    return n


@lru_cache(maxsize=None)
def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the ordered pairs ``mu <= nu``."""
    rows, cols = np.triu_indices(n)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _svec_weights(n: int) -> np.ndarray:
    rows, cols = pair_indices(n)
    w = np.where(rows == cols, 1.0, SQRT2)
    w.setflags(write=False)
    return w


def symmetrize(S) -> np.ndarray:
    S = np.asarray(S)
    return (S + S.T) / 2


def check_symmetric(S, tol: float = 1e-9, name: str = "matrix") -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {S.shape}")
    scale = max(1.0, np.abs(S).max(initial=0.0))
    asym = np.abs(S - S.T).max(initial=0.0)
    if asym > tol * scale:
        raise ValidationError(f"{name} is not symmetric (max |S - S^T| = {asym:.3g})")
    return symmetrize(S)


def svec(S, tol: float = 1e-9) -> np.ndarray:
    """Symmetric vectorization with sqrt(2)-weighted off-diagonal entries.

    Satisfies ``svec(S) @ svec(T) == trace(S @ T)`` for symmetric S, T.
    Complex symmetric input is accepted (used on the reconstruction path).
    """
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValidationError(f"svec needs a square matrix, got shape {S.shape}")
    n = S.shape[0]
    scale = max(1.0, np.abs(S).max(initial=0.0))
    if np.abs(S - S.T).max(initial=0.0) > tol * scale:
        raise ValidationError("svec input is not symmetric")
    rows, cols = pair_indices(n)
    return S[rows, cols] * _svec_weights(n)


def smat(v) -> np.ndarray:
    """Inverse of :func:`svec`."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise ValidationError("smat needs a 1-d vector")
    n = svec_dim(v.shape[0])
    rows, cols = pair_indices(n)
    vals = v / _svec_weights(n)
    S = np.zeros((n, n), dtype=v.dtype if np.iscomplexobj(v) else float)
    S[rows, cols] = vals
    S[cols, rows] = vals
    return S


@lru_cache(maxsize=None)
def _q_matrix(n: int) -> np.ndarray:
    rows, cols = pair_indices(n)
    Q = np.zeros((svec_length(n), n * n))
    for p, (i, j) in enumerate(zip(rows, cols)):
        # vec is column-major: entry (r, c) sits at r + c * n
        if i == j:
            Q[p, i + i * n] = 1.0
        else:
            Q[p, i + j * n] = 1.0 / SQRT2
            Q[p, j + i * n] = 1.0 / SQRT2
    Q.setflags(write=False)
    return Q


def build_q(m: int) -> np.ndarray:
    """The ``m(2m+1) x (2m)^2`` matrix with ``Q vec(S) = svec(S)`` and ``Q^T svec(S) = vec(S)``."""
    if m < 1:
        raise ValidationError("mode count must be >= 1")
    return _q_matrix(2 * m)


def vec(S) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(S).reshape(-1, order="F")


def sym_kron(A, B) -> np.ndarray:
    """Symmetric Kronecker product ``(1/2) Q (A kron B + B kron A) Q^T``.

    Acts on svec coordinates as ``svec(S) -> svec(A S B^T + B S A^T) / 2``.
    Works for complex A, B (plain transpose, no conjugation).
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
        raise ValidationError(f"sym_kron needs square matrices of equal size, got {A.shape} and {B.shape}")
    Q = _q_matrix(A.shape[0])
    return 0.5 * (Q @ (np.kron(A, B) + np.kron(B, A)) @ Q.T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """``X = P diag(lambdas) Pinv`` in complex arithmetic."""

    P: np.ndarray
    lambdas: np.ndarray
    Pinv: np.ndarray
    distinct: bool
    min_gap: float
    condition: float
    residual: float

    def power(self, i: int) -> np.ndarray:
        return (self.P * self.lambdas**i) @ self.Pinv


def min_pairwise_gap(values) -> float:
    values = np.asarray(values)
    if values.size < 2:
        return np.inf
    diffs = np.abs(values[:, None] - values[None, :])
    return float(diffs[np.triu_indices(values.size, 1)].min())


def spectral(X, degeneracy_tol: float = 1e-8, cond_limit: float = 1e12) -> SpectralDecomposition:
    """Complex eigendecomposition of a square matrix with degeneracy diagnostics.

    ``distinct`` is true when every pair of eigenvalues is separated by more
    than ``degeneracy_tol * ||X||_2``. Raises :class:`DecompositionError` when
    the eigenvector matrix has condition number above ``cond_limit``.
    """
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValidationError(f"spectral needs a square matrix, got shape {X.shape}")
    lambdas, P = np.linalg.eig(X)
    P = P.astype(complex)
    lambdas = lambdas.astype(complex)
    cond = float(np.linalg.cond(P))
    if not np.isfinite(cond) or cond > cond_limit:
        raise DecompositionError(
            f"eigenvector matrix is numerically singular (cond = {cond:.3g})", condition=cond
        )
    Pinv = np.linalg.inv(P)
    norm = np.linalg.norm(X, 2)
    residual = float(np.linalg.norm((P * lambdas) @ Pinv - X, 2) / max(norm, np.finfo(float).tiny))
    gap = min_pairwise_gap(lambdas)
    distinct = bool(gap > degeneracy_tol * max(norm, np.finfo(float).tiny))
    return SpectralDecomposition(P, lambdas, Pinv, distinct, gap, cond, residual)


@dataclass(frozen=True)
class MinimalPolynomialInfo:
    """Monic minimal polynomial ``p(x) = sum(coefficients[i] * x**i)``.

    ``coefficients`` has length ``degree + 1`` in ascending order with a
    trailing 1. ``j0`` is the multiplicity of the root 0 (size of the largest
    nilpotent Jordan block), so ``coefficients[:j0]`` are exactly zero.
    """

    degree: int
    coefficients: np.ndarray
    j0: int
    dimension: int
    residual: float

    def __call__(self, T) -> np.ndarray:
        T = np.asarray(T)
        out = np.zeros_like(T, dtype=np.result_type(T, float))
        for c in self.coefficients[::-1]:
            out = out @ T + c * np.eye(T.shape[0])
        return out


def _nilpotent_index(T: np.ndarray, tol: float) -> int:
    n = T.shape[0]
    norm = np.linalg.norm(T, 2)
    if norm == 0.0:
        return 1
    Ts = T / norm

    def rank(A):
        s = np.linalg.svd(A, compute_uv=False)
        return int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))

    prev = n
    power = np.eye(n)
    for k in range(1, n + 1):
        power = power @ Ts
        r = rank(power)
        if r == prev:
            return k - 1
        prev = r
    return n


def minimal_polynomial(T, tol: float = 1e-9, zero_tol: float = 1e-10) -> MinimalPolynomialInfo:
    """Minimal polynomial via the Krylov sequence ``I, T, T^2, ...`` in matrix space.

    The sequence is orthogonalized as it is built (Arnoldi on the operator
    ``Y -> T Y``); the degree is the first power whose new direction falls
    below ``tol`` relative to the scaled operator. Coefficients come from a
    least-squares fit of the next power onto the previous ones.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValidationError(f"minimal_polynomial needs a square matrix, got {T.shape}")
    n = T.shape[0]
    norm = np.linalg.norm(T, 2)
    if norm == 0.0:
        return MinimalPolynomialInfo(1, np.array([0.0, 1.0]), 1, n, 0.0)
    Ts = T / norm

    basis = [np.eye(n) / np.sqrt(n)]
    powers = [np.eye(n)]
    degree = n
    for k in range(1, n + 1):
        powers.append(Ts @ powers[-1])
        w = Ts @ basis[-1]
        for _ in range(2):
            for q in basis:
                w = w - np.sum(q * w) * q
        h = np.linalg.norm(w)
        if h <= tol:
            degree = k
            break
        basis.append(w / h)
    K = np.column_stack([p.ravel() for p in powers[:degree]])
    target = powers[degree].ravel()
    coef, *_ = np.linalg.lstsq(K, target, rcond=None)

    j0 = _nilpotent_index(T, zero_tol) if np.linalg.svd(Ts, compute_uv=False)[-1] <= zero_tol else 0
    scaled = np.concatenate([-coef, [1.0]])
    scaled[:j0] = 0.0
    residual = float(np.linalg.norm(K @ -scaled[:degree] - target) / np.linalg.norm(target) if np.linalg.norm(target) else 0.0)
    coefficients = scaled * norm ** (degree - np.arange(degree + 1))
    return MinimalPolynomialInfo(degree, coefficients, j0, n, residual)


def matrix_exp(C, t: float = 1.0) -> np.ndarray:
    """``exp(t C)`` by scaling and squaring with a Pade approximant.

    Raises :class:`MatrixExpOverflow` if the result is not finite.
    """
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError(f"matrix_exp needs a square matrix, got {C.shape}")
    if not np.isfinite(t):
        raise ValidationError("time must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        E = scipy.linalg.expm(t * C)
    if not np.all(np.isfinite(E)):
        raise MatrixExpOverflow(f"exp(t C) overflows for t * ||C|| = {abs(t) * np.linalg.norm(C, 1):.3g}")
    return E


def generalized_vandermonde(nodes, times) -> tuple[np.ndarray, float]:
    """``Z[j, k] = exp(nodes[j] * times[k])`` and its 2-norm condition number."""
    nodes = np.asarray(nodes, dtype=complex).ravel()
    times = np.asarray(times, dtype=float).ravel()
    if nodes.size != times.size:
        raise ValidationError(f"{nodes.size} nodes but {times.size} times")
    with np.errstate(over="ignore"):
        Z = np.exp(np.outer(nodes, times))
    if not np.all(np.isfinite(Z)):
        raise MatrixExpOverflow("generalized Vandermonde entries overflow")
    return Z, float(np.linalg.cond(Z))


def power_vandermonde(nodes, powers) -> np.ndarray:
    """``V[i, p] = nodes[p] ** powers[i]`` (rows are time steps)."""
    nodes = np.asarray(nodes, dtype=complex).ravel()
    powers = np.asarray(powers).ravel()
    return nodes[None, :] ** powers[:, None]


def vandermonde_det_factors(nodes) -> tuple[float, float]:
    """Log10 of ``|prod_{p<q} (z_p - z_q)|`` and the smallest normalized factor.

    A factor is normalized by ``max(|z_p|, |z_q|)`` so the second value is
    scale free and reads as "how close to a repeated node".
    """
    nodes = np.asarray(nodes, dtype=complex).ravel()
    if nodes.size < 2:
        return 0.0, np.inf
    iu = np.triu_indices(nodes.size, 1)
    diff = np.abs(nodes[:, None] - nodes[None, :])[iu]
    scale = np.maximum(np.abs(nodes)[:, None], np.abs(nodes)[None, :])[iu]
    scale = np.where(scale > 0, scale, 1.0)
    with np.errstate(divide="ignore"):
        logdet = float(np.sum(np.log10(diff)))
    return logdet, float((diff / scale).min())


def rank(A, tol: float = 1e-9) -> int:
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > tol * s[0]))

"""Gaussian states, channels, semigroup generators and homodyne settings.

Conventions
-----------
* Quadratures are ordered ``(q_1, ..., q_m, p_1, ..., p_m)``.
* Covariances use the anticommutator without a factor 1/2, so vacuum is ``I``.
* A channel ``(X, Y)`` acts as ``(Gamma, d) -> (X Gamma X^T + Y, X d)`` and is
  completely positive iff ``Y + i Omega - i X Omega X^T >= 0``.
* A generator ``(C, B)`` produces ``X_t = exp(t C)`` and
  ``Y_t = 2 int_0^t X_s Omega^T B Omega X_s^T ds``; with that action the
  semigroup is CP for all t iff ``B - i (Omega C + C^T Omega) / 2 >= 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from . import linalg
from .errors import DecompositionError, GdqstError, ValidationError
from .tolerances import DEFAULT, Tolerances

log = logging.getLogger(__name__)

MAX_REROLLS = 100


def _square(M, n: int, name: str) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.shape != (n, n):
        raise ValidationError(f"{name} must have shape ({n}, {n}), got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return M


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _modes_from(M) -> int:
    n = np.asarray(M).shape[0]
    if n % 2 or n == 0:
        raise ValidationError(f"phase-space dimension must be even and positive, got {n}")
    return n // 2


@dataclass(frozen=True)
class GaussianState:
    gamma: np.ndarray
    d: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        m = _modes_from(self.gamma)
        gamma = linalg.check_symmetric(_square(self.gamma, 2 * m, "gamma"), name="gamma")
        d = np.array(self.d, dtype=float).ravel()
        if d.shape != (2 * m,):
            raise ValidationError(f"displacement must have length {2 * m}, got {d.shape[0]}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "gamma", _frozen(gamma))
        object.__setattr__(self, "d", _frozen(d))

    @classmethod
    def vacuum(cls, m: int) -> "GaussianState":
        return cls(np.eye(2 * m), np.zeros(2 * m))


@dataclass(frozen=True)
class GaussianChannel:
    X: np.ndarray
    Y: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        m = _modes_from(self.X)
        X = _square(self.X, 2 * m, "X")
        Y = linalg.check_symmetric(_square(self.Y, 2 * m, "Y"), name="Y")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "Y", _frozen(Y))

    @classmethod
    def identity(cls, m: int) -> "GaussianChannel":
        return cls(np.eye(2 * m), np.zeros((2 * m, 2 * m)))


@dataclass(frozen=True)
class QdsGenerator:
    C: np.ndarray
    B: np.ndarray
    m: int = field(init=False)

    def __post_init__(self):
        m = _modes_from(self.C)
        C = _square(self.C, 2 * m, "C")
        B = linalg.check_symmetric(_square(self.B, 2 * m, "B"), name="B")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "C", _frozen(C))
        object.__setattr__(self, "B", _frozen(B))


@dataclass(frozen=True)
class HomodyneSetting:
    """Measurement of the quadrature combination ``b^T R`` for a unit vector ``b``."""

    b: np.ndarray
    a: np.ndarray = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=float).ravel()
        if b.size == 0 or b.size % 2:
            raise ValidationError(f"b must have even positive length, got {b.size}")
        if not np.all(np.isfinite(b)):
            raise ValidationError("b has non-finite entries")
        if abs(np.linalg.norm(b) - 1.0) > 1e-12:
            raise ValidationError(f"b must be a unit vector (norm {np.linalg.norm(b):.15g})")
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "a", _frozen(linalg.svec(np.outer(b, b))))
        object.__setattr__(self, "m", b.size // 2)

    @classmethod
    def normalized(cls, b) -> "HomodyneSetting":
        b = np.asarray(b, dtype=float)
        return cls(b / np.linalg.norm(b))

    @classmethod
    def quadrature(cls, m: int, mode: int = 0, quadrature: str = "q") -> "HomodyneSetting":
        """Single-mode measurement of ``q`` or ``p`` on mode ``mode`` (0-based)."""
        if not 0 <= mode < m:
            raise ValidationError(f"mode index {mode} out of range for {m} modes")
        if quadrature not in ("q", "p"):
            raise ValidationError("quadrature must be 'q' or 'p'")
        b = np.zeros(2 * m)
        b[mode if quadrature == "q" else mode + m] = 1.0
        return cls(b)


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    min_eigenvalue: float
    symmetry_residual: float = 0.0

    def __bool__(self):
        return self.valid


def _min_hermitian_eig(H: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((H + H.conj().T) / 2)[0])


def validate_state(state: GaussianState, tol: Tolerances = DEFAULT) -> ValidityReport:
    """Uncertainty relation ``Gamma + i Omega >= 0``."""
    G = np.asarray(state.gamma)
    sym = float(np.abs(G - G.T).max())
    lam = _min_hermitian_eig(G + 1j * linalg.omega(state.m))
    return ValidityReport(lam >= -tol.psd and sym <= tol.symmetry, lam, sym)


def channel_cp_matrix(channel: GaussianChannel) -> np.ndarray:
    Om = linalg.omega(channel.m)
    return channel.Y + 1j * Om - 1j * channel.X @ Om @ channel.X.T


def validate_channel(channel: GaussianChannel, tol: Tolerances = DEFAULT) -> ValidityReport:
    """Complete positivity ``Y + i Omega - i X Omega X^T >= 0``."""
    lam = _min_hermitian_eig(channel_cp_matrix(channel))
    return ValidityReport(lam >= -tol.psd, lam)


def generator_cp_matrix(generator: QdsGenerator) -> np.ndarray:
    Om = linalg.omega(generator.m)
    C = generator.C
    return generator.B - 0.5j * (Om @ C + C.T @ Om)


def validate_generator(generator: QdsGenerator, tol: Tolerances = DEFAULT) -> ValidityReport:
    """``B - i (Omega C + C^T Omega) / 2 >= 0``; the Hermitian matrix is exactly
    the rate at which the channel CP matrix grows at ``t = 0``."""
    lam = _min_hermitian_eig(generator_cp_matrix(generator))
    return ValidityReport(lam >= -tol.psd, lam)


def purity_residual(gamma) -> float:
    gamma = np.asarray(gamma)
    m = _modes_from(gamma)
    GO = gamma @ linalg.omega(m)
    return float(np.linalg.norm(GO @ GO + np.eye(2 * m)))


def is_pure(state: GaussianState | np.ndarray, tol: float = DEFAULT.purity) -> tuple[bool, float]:
    """Purity test ``(Gamma Omega)^2 = -I``; returns the flag and the residual norm."""
    gamma = state.gamma if isinstance(state, GaussianState) else state
    r = purity_residual(gamma)
    return r <= tol, r


def pure_from_ab(A, B) -> np.ndarray:
    """Pure covariance ``[[A, AB], [BA, BAB + A^-1]]`` from ``A > 0`` and symmetric ``B``."""
    A = linalg.check_symmetric(np.atleast_2d(np.asarray(A, dtype=float)), name="A")
    B = linalg.check_symmetric(np.atleast_2d(np.asarray(B, dtype=float)), name="B")
    if A.shape != B.shape:
        raise ValidationError(f"A and B shapes differ: {A.shape} vs {B.shape}")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValidationError("A must be positive definite") from None
    AB = A @ B
    D = B @ A @ B + np.linalg.inv(A)
    return linalg.symmetrize(np.block([[A, AB], [AB.T, D]]))


def ab_from_pure(gamma) -> tuple[np.ndarray, np.ndarray]:
    """Blocks ``(A, B)`` of a pure covariance, inverse of :func:`pure_from_ab`."""
    gamma = np.asarray(gamma, dtype=float)
    m = _modes_from(gamma)
    A = gamma[:m, :m]
    B = np.linalg.solve(A, gamma[:m, m:])
    return linalg.symmetrize(A), linalg.symmetrize(B)


def symplectic_check(X, tol: float = DEFAULT.symplectic) -> tuple[bool, float]:
    """``||X^T Omega X - Omega||``; true when below ``tol``."""
    X = np.asarray(X, dtype=float)
    Om = linalg.omega(_modes_from(X))
    r = float(np.linalg.norm(X.T @ Om @ X - Om))
    return r <= tol, r


# ---------------------------------------------------------------------------
# random instances


def seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, None or an existing ``SeedSequence``."""
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    U = np.triu(rng.uniform(-1.0, 1.0, (n, n)))
    return U + np.triu(U, 1).T


def random_symplectic(m: int, seed=None) -> np.ndarray:
    """``exp(Omega H)`` with ``H`` symmetric, entries uniform in [-1, 1]."""
    rng = _rng(seed)
    return linalg.matrix_exp(linalg.omega(m) @ _random_symmetric(rng, 2 * m))


def random_state(m: int, seed=None, pure: bool = False) -> GaussianState:
    """Williamson-form state ``S^T diag(nu, nu) S`` with ``S`` random symplectic.

    Symplectic eigenvalues are uniform in [1, 3] (all 1 when ``pure``),
    displacement entries uniform in [-2, 2].
    """
    if m < 1:
        raise ValidationError("mode count must be >= 1")
    rng = _rng(seed)
    S = random_symplectic(m, rng)
    nu = np.ones(m) if pure else rng.uniform(1.0, 3.0, m)
    gamma = S.T @ np.diag(np.concatenate([nu, nu])) @ S
    d = rng.uniform(-2.0, 2.0, 2 * m)
    return GaussianState(linalg.symmetrize(gamma), d)


def _cp_deficit(X: np.ndarray, m: int) -> float:
    Om = linalg.omega(m)
    return max(0.0, -_min_hermitian_eig(1j * Om - 1j * X @ Om @ X.T))


def _spectrum_ok(X: np.ndarray, tol: Tolerances) -> bool:
    try:
        return linalg.spectral(X, tol.degeneracy, tol.condition).distinct
    except DecompositionError:
        return False


def random_channel(m: int, seed=None, tol: Tolerances = DEFAULT) -> GaussianChannel:
    """Generic channel: ``X`` uniform entries rescaled to spectral radius in
    [0.5, 1.5]; ``Y = s I + W W^T`` with ``s`` the CP deficit of ``X`` plus 0.1."""
    if m < 1:
        raise ValidationError("mode count must be >= 1")
    rng = _rng(seed)
    n = 2 * m
    for attempt in range(MAX_REROLLS):
        X = rng.uniform(-1.0, 1.0, (n, n))
        radius = np.abs(np.linalg.eigvals(X)).max()
        if radius == 0.0:
            continue
        X = X * rng.uniform(0.5, 1.5) / radius
        W = rng.uniform(-1.0, 1.0, (n, n)) / np.sqrt(n)
        if not _spectrum_ok(X, tol):
            log.info("random_channel: degenerate draw %d re-rolled", attempt)
            continue
        Y = (_cp_deficit(X, m) + 0.1) * np.eye(n) + W @ W.T
        return GaussianChannel(X, Y)
    raise GdqstError(f"random_channel: {MAX_REROLLS} degenerate draws in a row")


def random_invertible_channel(m: int, seed=None, sigma_range=(0.5, 1.5),
                              tol: Tolerances = DEFAULT) -> GaussianChannel:
    """Channel with ``X = U diag(sigma) V`` (``U, V`` Haar orthogonal, ``sigma``
    uniform in ``sigma_range``), so every eigenvalue of ``X`` is bounded away
    from zero. ``Y`` as in :func:`random_channel`."""
    if m < 1:
        raise ValidationError("mode count must be >= 1")
    lo, hi = sigma_range
    if not 0 < lo <= hi:
        raise ValidationError("sigma_range must satisfy 0 < low <= high")
    rng = _rng(seed)
    n = 2 * m
    for attempt in range(MAX_REROLLS):
        U = scipy.stats.ortho_group.rvs(n, random_state=rng) if n > 1 else np.array([[1.0]])
        V = scipy.stats.ortho_group.rvs(n, random_state=rng) if n > 1 else np.array([[1.0]])
        X = U @ np.diag(rng.uniform(lo, hi, n)) @ V
        W = rng.uniform(-1.0, 1.0, (n, n)) / np.sqrt(n)
        if not _spectrum_ok(X, tol):
            log.info("random_invertible_channel: degenerate draw %d re-rolled", attempt)
            continue
        Y = (_cp_deficit(X, m) + 0.1) * np.eye(n) + W @ W.T
        return GaussianChannel(X, Y)
    raise GdqstError(f"random_invertible_channel: {MAX_REROLLS} degenerate draws in a row")


def random_unitary_channel(m: int, seed=None) -> GaussianChannel:
    """``(X, 0)`` with ``X`` random symplectic."""
    return GaussianChannel(random_symplectic(m, seed), np.zeros((2 * m, 2 * m)))


def random_generator(m: int, seed=None, tol: Tolerances = DEFAULT) -> QdsGenerator:
    """``C = (A - H) Omega`` with ``A`` antisymmetric, ``H`` symmetric (uniform
    entries); ``B = W W^T + s I`` lifted so the CP matrix is ``>= 0.1 I``.
    Draws where ``C`` or ``2 C (x)_s I`` has a degenerate spectrum are re-rolled."""
    if m < 1:
        raise ValidationError("mode count must be >= 1")
    rng = _rng(seed)
    n = 2 * m
    Om = linalg.omega(m)
    for attempt in range(MAX_REROLLS):
        U = rng.uniform(-1.0, 1.0, (n, n))
        A = np.triu(U, 1) - np.triu(U, 1).T
        H = _random_symmetric(rng, n)
        C = (A - H) @ Om
        W = rng.uniform(-1.0, 1.0, (n, n)) / np.sqrt(n)
        if not (_spectrum_ok(C, tol) and _spectrum_ok(2 * linalg.sym_kron(C, np.eye(n)), tol)):
            log.info("random_generator: degenerate draw %d re-rolled", attempt)
            continue
        rate = -0.5j * (Om @ C + C.T @ Om)
        s = max(0.0, -_min_hermitian_eig(W @ W.T + rate)) + 0.1
        return QdsGenerator(C, W @ W.T + s * np.eye(n))
    raise GdqstError(f"random_generator: {MAX_REROLLS} degenerate draws in a row")


def random_setting(m: int, seed=None) -> HomodyneSetting:
    rng = _rng(seed)
    b = rng.normal(size=2 * m)
    return HomodyneSetting(b / np.linalg.norm(b))


def block_diagonal_channel(blocks: list[GaussianChannel]) -> GaussianChannel:
    """Direct sum of single- or multi-mode channels acting on disjoint modes.

    Block ``k`` keeps its own (q, p) quadratures, which are interleaved into
    the global ``(q_1..q_m, p_1..p_m)`` ordering.
    """
    m = sum(c.m for c in blocks)
    X = np.zeros((2 * m, 2 * m))
    Y = np.zeros((2 * m, 2 * m))
    offset = 0
    for c in blocks:
        idx = np.concatenate([offset + np.arange(c.m), m + offset + np.arange(c.m)])
        X[np.ix_(idx, idx)] = c.X
        Y[np.ix_(idx, idx)] = c.Y
        offset += c.m
    return GaussianChannel(X, Y)

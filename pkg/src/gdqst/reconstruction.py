"""State reconstruction from a single fixed homodyne time series.

Diagonalizing ``X = P diag(lam) P^-1`` turns the variance series into

    alpha_i = sum_p (lam_mu lam_nu)^i  a'_p  gamma'_p,   p = {mu <= nu},

with ``a' = (P (x)_s P)^T a`` and ``gamma' = (P^-1 (x)_s P^-1) gamma``; i.e.
``alpha = M N gamma'`` with ``M`` a Vandermonde matrix in the eigenvalue
products and ``N = diag(a')``. The mean series is the same with ``A``
(Vandermonde in ``lam``) and ``Bdiag = diag(P^T b)``. Both solves run in
complex arithmetic; results are projected back to real.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.sparse.csgraph import connected_components

from . import linalg
from .dynamics import (MeasurementRecord, apply_channel, evolve_discrete, homodyne_statistics,
                       qds_channel_at, strip_additive)
from .errors import (DecompositionError, InsufficientDataError, PureInconsistencyError,
                     ReconstructionFailure, ValidationError)
from .extension import continuous_series_to_grid
from .model import (GaussianChannel, GaussianState, HomodyneSetting, QdsGenerator, ab_from_pure,
                    is_pure, random_state, seed_sequence, symplectic_check, validate_state)
from .tolerances import DEFAULT, Tolerances

log = logging.getLogger(__name__)

FLAG_NAMES = ("symplecticX", "blockDiagonalX", "degenerateSpectrum", "degenerateProducts",
              "orthogonalMeasurement", "illConditioned")
# flags that make a reconstruction refuse; illConditioned is advisory only
REFUSING = ("symplecticX", "blockDiagonalX", "degenerateSpectrum", "degenerateProducts",
            "orthogonalMeasurement")


def full_count(m: int) -> int:
    return m * (2 * m + 1)


def pure_count(m: int) -> int:
    return m * (m + 1)


def pure_pairs(m: int) -> np.ndarray:
    """Positions (in svec order over 2m indices) of ``{mu,nu}`` and ``{mu,nu+m}``, ``mu <= nu < m``."""
    rows, cols = linalg.pair_indices(2 * m)
    lookup = {(int(r), int(c)): p for p, (r, c) in enumerate(zip(rows, cols))}
    idx = [lookup[(mu, nu)] for mu in range(m) for nu in range(mu, m)]
    idx += [lookup[(mu, nu + m)] for mu in range(m) for nu in range(mu, m)]
    return np.array(sorted(idx))


def _rel_min(values) -> float:
    values = np.abs(np.asarray(values))
    top = values.max(initial=0.0)
    return float(values.min() / top) if top > 0 else 0.0


@dataclass(frozen=True)
class ReconstructionSystem:
    """Factorized forward maps for one ``(X, b)`` pair.

    ``columns`` selects the symmetric pairs in play (all of them in full mode,
    the pure-state index set otherwise); ``powers`` are the row exponents.
    """

    mode: str
    m: int
    powers: np.ndarray
    columns: np.ndarray
    lambdas: np.ndarray
    P: np.ndarray
    PP: np.ndarray
    nodes: np.ndarray
    M: np.ndarray
    N_diag: np.ndarray
    A: np.ndarray
    B_diag: np.ndarray
    conditions: dict = field(default_factory=dict)
    determinants: dict = field(default_factory=dict)


def build_system(X, setting: HomodyneSetting, mode: str = "full", powers=None,
                 tol: Tolerances = DEFAULT) -> ReconstructionSystem:
    """Assemble ``M``, ``N``, ``A``, ``Bdiag`` for the series at integer ``powers``
    (default ``0, ..., n-1`` with ``n`` the number of unknowns)."""
    X = np.asarray(X, dtype=float)
    m = setting.m
    if X.shape != (2 * m, 2 * m):
        raise ValidationError(f"X must be {2 * m}x{2 * m} for a {m}-mode setting")
    if mode not in ("full", "pure"):
        raise ValidationError(f"mode must be 'full' or 'pure', got {mode!r}")
    try:
        spec = linalg.spectral(X, tol.degeneracy, tol.condition)
    except DecompositionError as exc:
        raise ReconstructionFailure(
            f"X is (numerically) defective: {exc}", {"degenerateSpectrum": True}
        ) from None
    if not spec.distinct:
        raise ReconstructionFailure(
            f"X has repeated eigenvalues (min gap {spec.min_gap:.3g})", {"degenerateSpectrum": True}
        )
    rows, cols = linalg.pair_indices(2 * m)
    columns = np.arange(rows.size) if mode == "full" else pure_pairs(m)
    if powers is None:
        powers = np.arange(columns.size)
    powers = np.asarray(powers, dtype=int).ravel()

    lam, P = spec.lambdas, spec.P
    PP = linalg.sym_kron(P, P)
    nodes_all = lam[rows] * lam[cols]
    a_prime = (PP.T @ setting.a)
    nodes = nodes_all[columns]
    N_diag = a_prime[columns]
    M = linalg.power_vandermonde(nodes, powers)
    A = linalg.power_vandermonde(lam, powers)
    B_diag = P.T @ setting.b

    logdet_M, minfac_M = linalg.vandermonde_det_factors(nodes)
    logdet_A, minfac_A = linalg.vandermonde_det_factors(lam)
    with np.errstate(divide="ignore"):
        conditions = {
            "M": float(np.linalg.cond(M)),
            "N": float(np.abs(N_diag).max() / np.abs(N_diag).min()) if np.all(N_diag != 0) else np.inf,
            "A": float(np.linalg.cond(A)),
            "Bdiag": float(np.abs(B_diag).max() / np.abs(B_diag).min()) if np.all(B_diag != 0) else np.inf,
            "P": spec.condition,
        }
        determinants = {
            "log10_abs_det_M": logdet_M,
            "min_factor_M": minfac_M,
            "log10_abs_det_N": float(np.sum(np.log10(np.abs(N_diag)))),
            "min_factor_N": _rel_min(N_diag),
            "log10_abs_det_A": logdet_A,
            "min_factor_A": minfac_A,
            "log10_abs_det_Bdiag": float(np.sum(np.log10(np.abs(B_diag)))),
            "min_factor_Bdiag": _rel_min(B_diag),
        }
    return ReconstructionSystem(mode, m, powers, columns, lam, P, PP, nodes, M, N_diag, A, B_diag,
                                conditions, determinants)


def coupling_components(X, tol: float = DEFAULT.coupling) -> list[list[int]]:
    """Connected components of the mode-coupling graph of ``X``.

    Modes ``i`` and ``j`` are coupled when the 2x2 block of ``X`` linking their
    quadratures has an entry above ``tol * max|X|``.
    """
    X = np.asarray(X, dtype=float)
    m = X.shape[0] // 2
    cut = tol * max(np.abs(X).max(), np.finfo(float).tiny)
    adj = np.zeros((m, m), dtype=bool)
    for i in range(m):
        for j in range(m):
            block = X[np.ix_([i, i + m], [j, j + m])]
            adj[i, j] = np.abs(block).max() > cut
    n_comp, labels = connected_components(adj | adj.T, directed=False)
    return [sorted(np.flatnonzero(labels == k).tolist()) for k in range(n_comp)]


def _block_flag(X, b, tol: Tolerances) -> bool:
    """Decoupled blocks and a measurement that misses at least one of them."""
    comps = coupling_components(X, tol.coupling)
    if len(comps) < 2:
        return False
    m = len(b) // 2
    cut = tol.coupling * np.abs(b).max()
    touched = [any(abs(b[i]) > cut or abs(b[i + m]) > cut for i in comp) for comp in comps]
    return not all(touched)


def _cov_flags(system: ReconstructionSystem, X, b, tol: Tolerances) -> dict:
    return {
        "symplecticX": symplectic_check(X, tol.symplectic)[0],
        "blockDiagonalX": _block_flag(X, b, tol),
        "degenerateSpectrum": False,
        "degenerateProducts": system.determinants["min_factor_M"] < tol.determinant,
        "orthogonalMeasurement": system.determinants["min_factor_N"] < tol.determinant,
        "illConditioned": system.conditions["M"] * system.conditions["N"] > tol.condition,
    }


def _disp_flags(system: ReconstructionSystem, X, b, tol: Tolerances) -> dict:
    return {
        "symplecticX": False,
        "blockDiagonalX": _block_flag(X, b, tol),
        "degenerateSpectrum": system.determinants["min_factor_A"] < tol.determinant,
        "degenerateProducts": False,
        "orthogonalMeasurement": system.determinants["min_factor_Bdiag"] < tol.determinant,
        "illConditioned": system.conditions["A"] * system.conditions["Bdiag"] > tol.condition,
    }


def conditioning_factor(cond_product: float) -> float:
    """``max(1, cond / 1e6)``: accuracy claims are ``1e-6`` times this."""
    return max(1.0, cond_product / 1e6)


@dataclass
class PartReport:
    """Diagnostics of one linear reconstruction (covariance or displacement)."""

    residual: float
    imag_residue: float
    conditions: dict
    determinants: dict
    flags: dict
    candidates: list = field(default_factory=list)

    @property
    def refused(self) -> bool:
        return any(self.flags.get(k) for k in REFUSING)


def _solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if matrix.shape[0] == matrix.shape[1]:
        return np.linalg.solve(matrix, rhs)
    return np.linalg.lstsq(matrix, rhs, rcond=None)[0]


def _refuse(what: str, flags: dict, report):
    raised = [k for k in REFUSING if flags.get(k)]
    raise ReconstructionFailure(f"{what} reconstruction refused: {', '.join(raised)}", flags, report)


def _forward_alpha(X, a, gamma, powers) -> np.ndarray:
    g = linalg.svec(gamma)
    out = []
    for i in powers:
        Xi = np.linalg.matrix_power(X, int(i))
        out.append(a @ linalg.sym_kron(Xi, Xi) @ g)
    return np.array(out)


def reconstruct_cov(alpha, X, setting: HomodyneSetting, powers=None,
                    tol: Tolerances = DEFAULT) -> tuple[np.ndarray, PartReport]:
    """Covariance from the stripped variance series ``alpha`` at integer ``powers``.

    Needs at least ``m(2m+1)`` entries; extra entries are used in the
    least-squares sense. Raises :class:`ReconstructionFailure` when the
    instance is (numerically) in the null set where the map is not injective.
    """
    alpha = np.asarray(alpha, dtype=float).ravel()
    m = setting.m
    n = full_count(m)
    if powers is None:
        powers = np.arange(alpha.size)
    powers = np.asarray(powers, dtype=int).ravel()
    if alpha.size < n or powers.size != alpha.size:
        raise InsufficientDataError(
            f"covariance of {m} modes needs {n} series values, got {alpha.size}", required=n, given=alpha.size
        )
    X = np.asarray(X, dtype=float)
    system = build_system(X, setting, "full", powers, tol)
    flags = _cov_flags(system, X, setting.b, tol)
    report = PartReport(np.nan, np.nan, system.conditions, system.determinants, flags)
    if report.refused:
        _refuse("covariance", flags, report)

    gamma_prime = _solve(system.M * system.N_diag[None, :], alpha.astype(complex))
    G = linalg.smat(system.PP @ gamma_prime)
    G_real = linalg.symmetrize(G.real)
    scale = max(np.linalg.norm(G_real), np.finfo(float).tiny)
    report.imag_residue = float(np.abs(G.imag).max() / scale)
    factor = conditioning_factor(system.conditions["M"] * system.conditions["N"])
    if report.imag_residue > tol.imaginary * factor:
        flags["illConditioned"] = True
        raise ReconstructionFailure(
            f"covariance estimate has imaginary residue {report.imag_residue:.3g}", flags, report
        )
    fitted = _forward_alpha(X, setting.a, G_real, powers)
    report.residual = float(np.linalg.norm(fitted - alpha) / max(np.linalg.norm(alpha), np.finfo(float).tiny))
    return G_real, report


def reconstruct_disp(beta, X, setting: HomodyneSetting, powers=None,
                     tol: Tolerances = DEFAULT) -> tuple[np.ndarray, PartReport]:
    """Displacement from the mean series ``beta`` at integer ``powers`` (>= 2m entries)."""
    beta = np.asarray(beta, dtype=float).ravel()
    m = setting.m
    if powers is None:
        powers = np.arange(beta.size)
    powers = np.asarray(powers, dtype=int).ravel()
    if beta.size < 2 * m or powers.size != beta.size:
        raise InsufficientDataError(
            f"displacement of {m} modes needs {2 * m} series values, got {beta.size}",
            required=2 * m, given=beta.size,
        )
    X = np.asarray(X, dtype=float)
    system = build_system(X, setting, "full", powers, tol)
    flags = _disp_flags(system, X, setting.b, tol)
    report = PartReport(np.nan, np.nan, system.conditions, system.determinants, flags)
    if report.refused:
        _refuse("displacement", flags, report)

    d_prime = _solve(system.A * system.B_diag[None, :], beta.astype(complex))
    d = system.P @ d_prime
    scale = max(np.linalg.norm(d.real), 1.0)
    report.imag_residue = float(np.abs(d.imag).max() / scale)
    factor = conditioning_factor(system.conditions["A"] * system.conditions["Bdiag"])
    if report.imag_residue > tol.imaginary * factor:
        flags["illConditioned"] = True
        raise ReconstructionFailure(
            f"displacement estimate has imaginary residue {report.imag_residue:.3g}", flags, report
        )
    d = d.real
    fitted = np.array([setting.b @ np.linalg.matrix_power(X, int(i)) @ d for i in powers])
    report.residual = float(np.linalg.norm(fitted - beta) / max(np.linalg.norm(beta), 1.0))
    return d, report


# ---------------------------------------------------------------------------
# pure states


@lru_cache(maxsize=None)
def _param_layout(m: int):
    return np.tril_indices(m), np.triu_indices(m), np.diag_indices(m)


def _pure_blocks(theta: np.ndarray, m: int):
    tril, triu, diag = _param_layout(m)
    k = tril[0].size
    L = np.zeros((m, m))
    L[tril] = theta[:k]
    L[diag] = np.exp(L[diag])
    B = np.zeros((m, m))
    B[triu] = theta[k:]
    B = B + B.T - np.diag(B[diag])
    return L, B


def _assemble(A, AB, lower) -> np.ndarray:
    m = A.shape[0]
    G = np.empty((2 * m, 2 * m))
    G[:m, :m] = A
    G[:m, m:] = AB
    G[m:, :m] = AB.T
    G[m:, m:] = lower
    return G


def _pure_params_to_gamma(theta: np.ndarray, m: int) -> np.ndarray:
    """Pure covariance from ``theta = (tril(L) with log-diagonal, triu(B))``, ``A = L L^T``."""
    L, B = _pure_blocks(theta, m)
    A = L @ L.T
    AB = A @ B
    Linv = np.linalg.inv(L)
    return _assemble(A, AB, B @ AB + Linv.T @ Linv)


def _pure_gamma_derivatives(theta: np.ndarray, m: int) -> list[np.ndarray]:
    """``dGamma / dtheta_k`` for every parameter, in parameter order."""
    tril, triu, _ = _param_layout(m)
    L, B = _pure_blocks(theta, m)
    A = L @ L.T
    Ainv = np.linalg.inv(A)
    out = []
    for i, j in zip(*tril):
        dL = np.zeros((m, m))
        dL[i, j] = L[i, j] if i == j else 1.0
        dA = dL @ L.T + L @ dL.T
        out.append(_assemble(dA, dA @ B, B @ dA @ B - Ainv @ dA @ Ainv))
    for i, j in zip(*triu):
        dB = np.zeros((m, m))
        dB[i, j] = dB[j, i] = 1.0
        out.append(_assemble(np.zeros((m, m)), A @ dB, dB @ A @ B + B @ A @ dB))
    return out


def _pure_gamma_to_params(gamma: np.ndarray, m: int) -> np.ndarray | None:
    A, B = ab_from_pure(gamma)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    L[np.diag_indices(m)] = np.log(L[np.diag_indices(m)])
    return np.concatenate([L[np.tril_indices(m)], B[np.triu_indices(m)]])


def _jacobian_condition(F_scaled_flat: np.ndarray, gamma: np.ndarray, m: int) -> float:
    """Condition number of the data map restricted to pure states, at ``gamma``."""
    theta = _pure_gamma_to_params(gamma, m)
    if theta is None:
        return np.inf
    J = np.column_stack([F_scaled_flat @ dG.ravel(order="F") for dG in _pure_gamma_derivatives(theta, m)])
    return float(np.linalg.cond(J))


def solve_pure(F: np.ndarray, alpha: np.ndarray, m: int, n_random: int | None = None,
               seed=0, residual_tol: float = 1e-9) -> tuple[list[np.ndarray], list[float]]:
    """All pure covariances with ``F svec(Gamma) = alpha`` found by a multi-start
    solve, sorted by trace, with the condition number of the data map
    restricted to pure states at each.

    The data constraint is linear, so ``svec(Gamma) = g0 + K z`` with ``K`` a
    basis of the null space of ``F``; purity ``(Gamma Omega)^2 = -I`` is then
    quadratic in ``z``. Levenberg-Marquardt from projected random pure states
    finds the solutions; only positive definite ones are kept.
    """
    if n_random is None:
        n_random = 20 + 20 * m * m
    n = 2 * m
    scale = np.where(np.abs(alpha) > 0, np.abs(alpha), 1.0)
    Fs = F / scale[:, None]
    target = alpha / scale
    g0 = np.linalg.lstsq(Fs, target, rcond=None)[0]
    K = scipy.linalg.null_space(Fs, rcond=1e-12)
    Om = linalg.omega(m)
    Q = linalg.build_q(m)
    # smat(g) == (Q^T g).reshape(n, n, order="F")
    G0 = (Q.T @ g0).reshape(n, n, order="F")
    Gk = [(Q.T @ K[:, j]).reshape(n, n, order="F") for j in range(K.shape[1])]
    GkW = [Gj @ Om for Gj in Gk]

    def gamma_of(z):
        return G0 + sum(zj * Gj for zj, Gj in zip(z, Gk)) if Gk else G0

    def resid(z):
        W = gamma_of(z) @ Om
        return (W @ W + np.eye(n)).ravel()

    def jac(z):
        W = gamma_of(z) @ Om
        return np.column_stack([(Wj @ W + W @ Wj).ravel() for Wj in GkW])

    F_flat = Fs @ Q
    starts = [np.zeros(K.shape[1])]
    for ss in seed_sequence(seed).spawn(n_random if K.shape[1] else 0):
        starts.append(K.T @ (linalg.svec(random_state(m, ss, pure=True).gamma) - g0))

    def joint_resid(g):
        G = (Q.T @ g).reshape(n, n, order="F")
        W = G @ Om
        return np.concatenate([Fs @ g - target, (W @ W + np.eye(n)).ravel()])

    def joint_jac(g):
        G = (Q.T @ g).reshape(n, n, order="F")
        W = G @ Om
        cols = []
        for e in np.eye(g.size):
            We = (Q.T @ e).reshape(n, n, order="F") @ Om
            cols.append((We @ W + W @ We).ravel())
        return np.vstack([Fs, np.column_stack(cols)])

    def refine(G):
        # data and purity together; pins down directions the data leave ill-determined
        res = scipy.optimize.least_squares(joint_resid, linalg.svec(G), jac=joint_jac, method="lm",
                                           xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100)
        return linalg.symmetrize(linalg.smat(res.x))

    found, conds = [], []
    for z0 in starts:
        if K.shape[1]:
            try:
                res = scipy.optimize.least_squares(resid, z0, jac=jac, method="lm", xtol=1e-15,
                                                   ftol=1e-15, gtol=1e-15, max_nfev=200)
            except (ValueError, np.linalg.LinAlgError):
                continue
            z = res.x
        else:
            z = z0
        G = gamma_of(z)
        if not np.all(np.isfinite(G)) or np.abs(resid(z)).max() > 1e-3 * max(1.0, np.linalg.norm(G)):
            continue
        try:
            G = refine(G)
        except (ValueError, np.linalg.LinAlgError):
            continue
        W = G @ Om
        if not np.all(np.isfinite(G)) or np.abs(W @ W + np.eye(n)).max() > 1e-8 * max(1.0, np.linalg.norm(G)):
            continue
        if np.abs(Fs @ linalg.svec(G) - target).max() > residual_tol:
            continue
        if np.linalg.eigvalsh(G).min() <= 0:
            continue
        if any(np.linalg.norm(G - H) <= 1e-6 * np.linalg.norm(H) for H in found):
            continue
        found.append(G)
        conds.append(_jacobian_condition(F_flat, G, m))
    order = np.argsort([np.trace(G) for G in found])
    return [found[i] for i in order], [conds[i] for i in order]


def _pure_operator(X_list, a) -> np.ndarray:
    return np.array([linalg.sym_kron(Xk, Xk).T @ a for Xk in X_list])


def reconstruct_pure(alpha, X, setting: HomodyneSetting, powers=None, tol: Tolerances = DEFAULT,
                     seed=0, transfer=None) -> tuple[np.ndarray, PartReport]:
    """Pure-state covariance from ``m(m+1)`` (or more) stripped variance values.

    The data fix ``Gamma`` up to an affine family; purity cuts that family
    down to finitely many points, which need not be a single one. All
    consistent pure states found by :func:`solve_pure` are kept in
    ``report.candidates``, the estimate is the one of least energy (smallest
    trace), and more than one candidate sets ``report.flags["ambiguousPure"]``.

    ``transfer`` optionally supplies the matrices ``X_k`` directly (used for
    continuous-time records); otherwise ``X_k = X^powers[k]``.
    """
    alpha = np.asarray(alpha, dtype=float).ravel()
    m = setting.m
    need = pure_count(m)
    if powers is None:
        powers = np.arange(alpha.size)
    powers = np.asarray(powers, dtype=int).ravel()
    if alpha.size < need:
        raise InsufficientDataError(
            f"pure covariance of {m} modes needs {need} series values, got {alpha.size}",
            required=need, given=alpha.size,
        )
    flags = {k: False for k in FLAG_NAMES}
    conditions, determinants = {}, {}
    if transfer is None:
        X = np.asarray(X, dtype=float)
        system = build_system(X, setting, "pure", powers, tol)
        conditions, determinants = dict(system.conditions), dict(system.determinants)
        flags["symplecticX"] = symplectic_check(X, tol.symplectic)[0]
        flags["blockDiagonalX"] = _block_flag(X, setting.b, tol)
        transfer = [np.linalg.matrix_power(X, int(i)) for i in powers]
    F = _pure_operator(transfer, setting.a)
    conditions["F"] = float(np.linalg.cond(F))

    candidates, jac_conds = solve_pure(F, alpha, m, seed=seed)
    report = PartReport(np.nan, 0.0, conditions, determinants, flags, candidates)
    if not candidates:
        raise PureInconsistencyError("no pure Gaussian state reproduces the series")
    G = candidates[0]
    conditions["jacobian"] = jac_conds[0]
    flags["ambiguousPure"] = len(candidates) > 1
    ok, pres = is_pure(G, tol.purity * max(1.0, np.linalg.norm(G) ** 2))
    if not ok:
        raise PureInconsistencyError(f"reconstructed state is not pure (residual {pres:.3g})")
    try:
        np.linalg.cholesky(G[:m, :m])
    except np.linalg.LinAlgError:
        raise PureInconsistencyError("recovered A block is not positive definite") from None
    fitted = F @ linalg.svec(G)
    report.residual = float(np.linalg.norm(fitted - alpha) / np.linalg.norm(alpha))
    return G, report


# ---------------------------------------------------------------------------
# end to end


@dataclass
class TomographyReport:
    state: GaussianState | None
    kind: str
    mode: str
    residual: float
    imag_residue: float
    conditions: dict
    flags: dict
    verdict: str
    physical: bool | None = None
    details: dict = field(default_factory=dict)
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.state is not None


def _merge_flags(*reports) -> dict:
    out = {k: False for k in FLAG_NAMES}
    for r in reports:
        if r is None:
            continue
        for k, v in r.items():
            out[k] = bool(out.get(k, False) or v)
    return out


def _spread_indices(total: int, take: int) -> np.ndarray:
    return np.unique(np.round(np.linspace(0, total - 1, take)).astype(int))


def entry_residuals(state: GaussianState, record: MeasurementRecord, dynamics) -> np.ndarray:
    """Per-entry mismatch between the record and the statistics predicted for ``state``:
    ``max(|dmean| / max(1, |mean|), |dvar| / var)``."""
    out = []
    for t, mu, var in zip(record.times, record.means, record.variances):
        if isinstance(dynamics, GaussianChannel):
            evolved = evolve_discrete(state, dynamics, int(t))
        else:
            evolved = apply_channel(state, qds_channel_at(dynamics, t))
        mu_hat, var_hat = homodyne_statistics(evolved, record.setting)
        out.append(max(abs(mu_hat - mu) / max(1.0, abs(mu)), abs(var_hat - var) / var))
    return np.array(out)


def default_grid_step(times, n: int) -> float:
    """Step of the equally spaced grid ``0, tau, ..., (n-1) tau`` used for
    continuous records: the grid spans the sampled window."""
    span = float(np.max(times))
    return span / (n - 1) if span > 0 and n > 1 else 1.0


def reconstruct_full(record: MeasurementRecord, dynamics: GaussianChannel | QdsGenerator,
                     setting: HomodyneSetting | None = None, pure: bool = False,
                     grid_step: float | None = None, tol: Tolerances = DEFAULT,
                     seed=0) -> TomographyReport:
    """Strip the known noise, bring the series onto an equally spaced grid when
    the dynamics is continuous, reconstruct covariance and displacement, and
    check the estimate against the raw record.

    A null-set diagnosis raises :class:`ReconstructionFailure`; too short a
    record raises :class:`InsufficientDataError`.
    """
    setting = setting or record.setting
    m = setting.m
    if dynamics.m != m or record.m != m:
        raise ValidationError(f"mode counts disagree: setting {m}, record {record.m}, dynamics {dynamics.m}")
    if setting is not record.setting and not np.allclose(setting.b, record.setting.b):
        raise ValidationError("setting differs from the one stored in the record")
    n_cov = pure_count(m) if pure else full_count(m)
    if len(record) < max(n_cov, 2 * m):
        need = max(n_cov, 2 * m)
        raise InsufficientDataError(
            f"{'pure' if pure else 'full'} reconstruction of {m} modes needs {need} record entries, got {len(record)}",
            required=need, given=len(record),
        )
    series = strip_additive(record, dynamics)
    details: dict = {"entries": len(record)}
    conditions: dict = {}

    if isinstance(dynamics, GaussianChannel):
        X = dynamics.X
        powers = series.times.astype(int)
        if pure:
            G, cov_rep = reconstruct_pure(series.alpha, X, setting, powers, tol, seed)
        else:
            G, cov_rep = reconstruct_cov(series.alpha, X, setting, powers, tol)
        d, disp_rep = reconstruct_disp(series.beta, X, setting, powers, tol)
    else:
        C = dynamics.C
        tau = grid_step if grid_step is not None else default_grid_step(series.times, n_cov)
        details["grid_step"] = tau
        X = linalg.matrix_exp(C, tau)
        if pure:
            transfer = [linalg.matrix_exp(C, t) for t in series.times]
            G, cov_rep = reconstruct_pure(series.alpha, None, setting, tol=tol, seed=seed, transfer=transfer)
            cov_rep.flags["symplecticX"] = symplectic_check(X, tol.symplectic)[0]
        else:
            n = full_count(m)
            idx = _spread_indices(series.times.size, n)
            grid = tau * np.arange(n)
            alpha_grid, interp = continuous_series_to_grid(series.alpha[idx], series.times[idx], C, grid,
                                                           "alpha", tol)
            conditions["Z_alpha"] = interp.condition
            G, cov_rep = reconstruct_cov(alpha_grid, X, setting, np.arange(n), tol)
        idx_b = _spread_indices(series.times.size, 2 * m)
        grid_b = tau * np.arange(2 * m)
        beta_grid, interp_b = continuous_series_to_grid(series.beta[idx_b], series.times[idx_b], C, grid_b,
                                                        "beta", tol)
        conditions["Z_beta"] = interp_b.condition
        d, disp_rep = reconstruct_disp(beta_grid, X, setting, np.arange(2 * m), tol)

    conditions.update({f"cov_{k}": v for k, v in cov_rep.conditions.items()})
    conditions.update({f"disp_{k}": v for k, v in disp_rep.conditions.items()})
    flags = _merge_flags(cov_rep.flags, disp_rep.flags)
    flags["ambiguousPure"] = bool(cov_rep.flags.get("ambiguousPure", False))
    if pure:
        details["pure_candidates"] = len(cov_rep.candidates)
    state = GaussianState(G, d)
    validity = validate_state(state, tol)
    residual = float(entry_residuals(state, record, dynamics).max())
    return TomographyReport(
        state=state, kind=record.kind, mode="pure" if pure else "full", residual=residual,
        imag_residue=max(cov_rep.imag_residue, disp_rep.imag_residue), conditions=conditions,
        flags=flags, verdict="GENERIC", physical=validity.valid,
        details=details | {"cov_residual": cov_rep.residual, "disp_residual": disp_rep.residual,
                           "min_eig_uncertainty": validity.min_eigenvalue},
    )


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class Diagnosis:
    m: int
    verdict: str
    reasons: list
    flags: dict
    symplectic_residual: float
    components: list
    conditions: dict
    determinants: dict

    @property
    def generic(self) -> bool:
        return self.verdict == "GENERIC"


def diagnose(dynamics, setting: HomodyneSetting, tol: Tolerances = DEFAULT, grid_step: float = 1.0) -> Diagnosis:
    """Check a channel (or generator, through ``X = exp(grid_step C)``) and
    setting against the known failure modes of the scheme."""
    if isinstance(dynamics, QdsGenerator):
        X = linalg.matrix_exp(dynamics.C, grid_step)
        extra_degenerate = False
        for G in (dynamics.C, 2 * linalg.sym_kron(dynamics.C, np.eye(dynamics.C.shape[0]))):
            try:
                extra_degenerate |= not linalg.spectral(G, tol.degeneracy, tol.condition).distinct
            except DecompositionError:
                extra_degenerate = True
    elif isinstance(dynamics, GaussianChannel):
        X, extra_degenerate = dynamics.X, False
    else:
        X, extra_degenerate = np.asarray(dynamics, dtype=float), False
    m = setting.m
    sym_ok, sym_res = symplectic_check(X, tol.symplectic)
    components = coupling_components(X, tol.coupling)
    flags = {k: False for k in FLAG_NAMES}
    flags["symplecticX"] = sym_ok
    flags["blockDiagonalX"] = _block_flag(X, setting.b, tol)
    flags["degenerateSpectrum"] = extra_degenerate
    conditions, determinants = {}, {}
    try:
        system = build_system(X, setting, "full", None, tol)
    except ReconstructionFailure as exc:
        flags.update({k: v for k, v in exc.flags.items() if v})
    else:
        conditions, determinants = system.conditions, system.determinants
        for k, v in _cov_flags(system, X, setting.b, tol).items():
            flags[k] |= v
        for k, v in _disp_flags(system, X, setting.b, tol).items():
            flags[k] |= v
    reasons = [k for k in REFUSING if flags[k]]
    return Diagnosis(m, "NULL-SET" if reasons else "GENERIC", reasons, flags, sym_res, components,
                     conditions, determinants)


def setting_completeness(settings, tol: Tolerances = DEFAULT) -> dict:
    """Whether a family of homodyne directions determines every Gaussian state."""
    bs = np.array([np.asarray(s.b if isinstance(s, HomodyneSetting) else s, dtype=float) for s in settings])
    if bs.ndim != 2 or bs.shape[1] % 2:
        raise ValidationError("settings must be vectors of equal even length")
    if not np.allclose(np.linalg.norm(bs, axis=1), 1.0, atol=1e-12):
        raise ValidationError("settings must be unit vectors")
    m = bs.shape[1] // 2
    cov_rows = np.array([linalg.svec(np.outer(b, b)) for b in bs])
    rank_cov = linalg.rank(cov_rows, tol.rank)
    rank_disp = linalg.rank(bs, tol.rank)
    return {
        "complete": rank_cov == full_count(m) and rank_disp == 2 * m,
        "rank_cov": rank_cov, "target_cov": full_count(m),
        "rank_disp": rank_disp, "target_disp": 2 * m,
    }


def explicit_complete_settings(m: int) -> list[HomodyneSetting]:
    """The family ``{(e_j + e_k)/|e_j + e_k| : j <= k}``."""
    n = 2 * m
    out = []
    for j in range(n):
        for k in range(j, n):
            v = np.zeros(n)
            v[j] += 1.0
            v[k] += 1.0
            out.append(HomodyneSetting.normalized(v))
    return out

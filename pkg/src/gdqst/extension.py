"""Extending measured series in time.

Discrete dynamics: the minimal polynomial of ``T`` (``X`` for means,
``X (x)_s X`` for variances) gives a linear recurrence that carries a finite
seed forward indefinitely and backward down to ``j0``.

Continuous dynamics: with distinct eigenvalues ``mu_j`` of the generator, the
value at any time is a fixed linear combination of the values at ``n`` sample
times, with weights solving ``Z w(t) = exp(mu t)`` for the generalized
Vandermonde ``Z[j, k] = exp(mu_j t_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateSpectrumError, IllConditionedError, InsufficientDataError, ValidationError
from .model import QdsGenerator
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True)
class RecurrenceCoefficients:
    """``T^(delta+k) = sum_i forward[i] T^(j0+i+k)`` and
    ``T^n = sum_i backward[i] T^(n+i+1)`` for ``n >= j0``."""

    forward: np.ndarray
    backward: np.ndarray
    delta: int
    j0: int
    dimension: int

    @property
    def order(self) -> int:
        return self.delta - self.j0


def seed_length(delta: int, j0: int, t0: int) -> int:
    """Number of consecutive values, starting at index ``t0``, that pin down the
    whole series from ``min(t0, j0)`` on.

    The forward relation for index ``N`` uses ``N - (delta - j0), ..., N - 1``
    and holds only for ``N >= delta``, so the seed must have at least
    ``delta - j0`` values and reach index ``delta``.
    """
    return delta - min(t0, j0)


def recurrence_from_matrix(T, tol: float = 1e-9) -> RecurrenceCoefficients:
    info = linalg.minimal_polynomial(T, tol=tol)
    p = info.coefficients
    j0, delta = info.j0, info.degree
    forward = -p[j0:delta]
    q = p[j0:]  # p(x) = x^j0 q(x), q(0) != 0
    backward = -q[1:] / q[0]
    return RecurrenceCoefficients(forward, backward, delta, j0, info.dimension)


def extend_series_forward(series, rec: RecurrenceCoefficients, horizon: int, t0: int = 0) -> np.ndarray:
    """Append ``horizon`` values to a series whose first entry is at index ``t0``."""
    series = np.asarray(series, dtype=float).ravel()
    need = seed_length(rec.delta, rec.j0, t0)
    if series.size < need:
        raise InsufficientDataError(
            f"seed starting at t0={t0} needs {need} values (delta={rec.delta}, j0={rec.j0}), got {series.size}",
            required=need, given=series.size,
        )
    if horizon < 0:
        raise ValidationError("horizon must be >= 0")
    out = list(series)
    order = rec.order
    for _ in range(horizon):
        out.append(float(np.dot(rec.forward, out[len(out) - order:])))
    return np.array(out)


def extend_series_backward(series, rec: RecurrenceCoefficients, t0: int, target: int) -> np.ndarray:
    """Prepend values so the returned series starts at index ``target`` (``>= j0``)."""
    series = np.asarray(series, dtype=float).ravel()
    if target < rec.j0:
        raise ValidationError(f"cannot extend below j0={rec.j0} (target {target})")
    if target > t0:
        raise ValidationError(f"target {target} lies after the series start {t0}")
    order = rec.order
    if target < t0 and series.size < order:
        raise InsufficientDataError(
            f"backward extension needs {order} values (delta - j0), got {series.size}",
            required=order, given=series.size,
        )
    out = list(series)
    for _ in range(t0 - target):
        out.insert(0, float(np.dot(rec.backward, out[:order])))
    return np.array(out)


@dataclass(frozen=True)
class InterpolationWeights:
    """Weights expressing ``exp(t G)`` through ``exp(t_k G)`` at fixed sample times."""

    times: np.ndarray
    nodes: np.ndarray
    Z: np.ndarray
    condition: float
    ill_conditioned: bool

    def weights(self, t) -> np.ndarray:
        """Weight matrix of shape ``(len(times), len(t))`` (a vector for scalar ``t``)."""
        scalar = np.ndim(t) == 0
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        rhs = np.exp(np.outer(self.nodes, tq))
        W = np.linalg.solve(self.Z, rhs)
        scale = max(1.0, float(np.abs(W).max()))
        if np.abs(W.imag).max() > 1e-6 * scale * max(1.0, self.condition * 1e-10):
            raise ValidationError("interpolation weights have a large imaginary part")
        W = W.real
        return W[:, 0] if scalar else W


def interpolation_weights(G, times, tol: Tolerances = DEFAULT, strict: bool = False) -> InterpolationWeights:
    """Set up the generalized Vandermonde system for ``exp(t G)``.

    ``G`` must have distinct eigenvalues and ``len(times) == dim(G)``. A
    condition number above ``tol.condition`` sets ``ill_conditioned`` (and
    raises when ``strict``).
    """
    G = np.asarray(G, dtype=float)
    times = np.asarray(times, dtype=float).ravel()
    if times.size != G.shape[0]:
        raise InsufficientDataError(
            f"need exactly {G.shape[0]} sample times, got {times.size}", required=G.shape[0], given=times.size
        )
    if np.unique(times).size != times.size:
        raise ValidationError("sample times must be distinct")
    spec = linalg.spectral(G, tol.degeneracy, tol.condition)
    if not spec.distinct:
        raise DegenerateSpectrumError(
            f"generator has repeated eigenvalues (min gap {spec.min_gap:.3g})", min_gap=spec.min_gap
        )
    Z, cond = linalg.generalized_vandermonde(spec.lambdas, times)
    bad = not np.isfinite(cond) or cond > tol.condition
    if bad and strict:
        raise IllConditionedError(f"generalized Vandermonde has condition {cond:.3g}", condition=cond)
    return InterpolationWeights(times, spec.lambdas, Z, cond, bad)


def lifted_generator(C) -> np.ndarray:
    """``2 C (x)_s I``, the generator of ``2 X_t (x)_s X_t``."""
    C = np.asarray(C, dtype=float)
    return 2.0 * linalg.sym_kron(C, np.eye(C.shape[0]))


def continuous_series_to_grid(samples, times, generator: QdsGenerator | np.ndarray, query_times,
                              which: str = "alpha", tol: Tolerances = DEFAULT) -> tuple[np.ndarray, InterpolationWeights]:
    """Values of a stripped continuous series at ``query_times``.

    ``which="alpha"`` uses ``2 C (x)_s I`` and needs ``m(2m+1)`` samples;
    ``which="beta"`` uses ``C`` and needs ``2m`` samples.
    """
    C = generator.C if isinstance(generator, QdsGenerator) else np.asarray(generator, dtype=float)
    m = C.shape[0] // 2
    if which == "alpha":
        G, need = lifted_generator(C), m * (2 * m + 1)
    elif which == "beta":
        G, need = C, 2 * m
    else:
        raise ValidationError(f"which must be 'alpha' or 'beta', got {which!r}")
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size != need:
        raise InsufficientDataError(
            f"{which} series for {m} modes needs exactly {need} samples, got {samples.size}",
            required=need, given=samples.size,
        )
    interp = interpolation_weights(G, times, tol)
    W = interp.weights(np.atleast_1d(np.asarray(query_times, dtype=float)))
    return samples @ W, interp

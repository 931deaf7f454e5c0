"""Evolution under discrete channels and dynamical semigroups, and the homodyne
measurement records produced along the way."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import ValidationError
from .model import GaussianChannel, GaussianState, HomodyneSetting, QdsGenerator, seed_sequence

CONVENTION = "gamma->X gamma X^T + Y; d->X d"
DEFAULT_DELTA = 0.25


def _check_modes(*objs):
    modes = {o.m for o in objs}
    if len(modes) != 1:
        raise ValidationError(f"mode counts disagree: {sorted(modes)}")


def apply_channel(state: GaussianState, channel: GaussianChannel) -> GaussianState:
    _check_modes(state, channel)
    X = channel.X
    return GaussianState(linalg.symmetrize(X @ state.gamma @ X.T + channel.Y), X @ state.d)


def accumulated_noise(channel: GaussianChannel, steps: int) -> np.ndarray:
    """``sum_{j<steps} X^j Y (X^T)^j``, the additive part after ``steps`` applications."""
    X = channel.X
    acc = np.zeros_like(channel.Y)
    term = np.array(channel.Y)
    for _ in range(steps):
        acc = acc + term
        term = X @ term @ X.T
    return linalg.symmetrize(acc)


def evolve_discrete(state: GaussianState, channel: GaussianChannel, steps: int) -> GaussianState:
    """State after ``steps`` applications of ``channel``, in closed form."""
    if steps < 0:
        raise ValidationError("number of steps must be >= 0")
    _check_modes(state, channel)
    Xi = np.linalg.matrix_power(channel.X, steps)
    gamma = Xi @ state.gamma @ Xi.T + accumulated_noise(channel, steps)
    return GaussianState(linalg.symmetrize(gamma), Xi @ state.d)


def qds_channel_at(generator: QdsGenerator, t: float) -> GaussianChannel:
    """Channel ``(X_t, Y_t)`` of the semigroup generated by ``(C, B)``.

    ``Y_t = int_0^t X_s K X_s^T ds`` with ``K = 2 Omega^T B Omega`` is read off
    the block exponential ``exp(t [[C, K], [0, -C^T]]) = [[E11, E12], [0, E22]]``
    as ``E12 E11^T``.
    """
    if not np.isfinite(t) or t < 0:
        raise ValidationError(f"time must be finite and >= 0, got {t}")
    C = generator.C
    n = C.shape[0]
    if t == 0:
        return GaussianChannel(np.eye(n), np.zeros((n, n)))
    Om = linalg.omega(generator.m)
    K = 2.0 * Om.T @ generator.B @ Om
    block = np.block([[C, K], [np.zeros((n, n)), -C.T]])
    E = linalg.matrix_exp(block, t)
    X_t = E[:n, :n]
    Y_t = E[:n, n:] @ X_t.T
    return GaussianChannel(X_t, linalg.symmetrize(Y_t))


def semigroup_property_check(generator: QdsGenerator, s: float, t: float) -> float:
    """Largest relative mismatch between channel(s+t) and channel(t) after channel(s)."""
    cs = qds_channel_at(generator, s)
    ct = qds_channel_at(generator, t)
    cst = qds_channel_at(generator, s + t)
    X = ct.X @ cs.X
    Y = ct.X @ cs.Y @ ct.X.T + ct.Y
    rx = np.linalg.norm(X - cst.X) / max(1.0, np.linalg.norm(cst.X))
    ry = np.linalg.norm(Y - cst.Y) / max(1.0, np.linalg.norm(cst.Y))
    return float(max(rx, ry))


def homodyne_statistics(state: GaussianState, setting: HomodyneSetting) -> tuple[float, float]:
    """Exact mean ``<b, d>`` and variance ``<svec(bb^T), svec(Gamma)>``."""
    _check_modes(state, setting)
    return float(setting.b @ state.d), float(setting.a @ linalg.svec(state.gamma))


def sample_homodyne(state: GaussianState, setting: HomodyneSetting, shots: int, seed=None) -> tuple[float, float]:
    """Sample mean and unbiased sample variance of ``shots`` homodyne outcomes."""
    if shots < 2:
        raise ValidationError("need at least 2 shots to estimate a variance")
    mean, var = homodyne_statistics(state, setting)
    rng = np.random.default_rng(seed)
    x = rng.normal(mean, np.sqrt(var), size=int(shots))
    return float(x.mean()), float(x.var(ddof=1))


def dynamics_id(dynamics: GaussianChannel | QdsGenerator) -> str:
    h = hashlib.sha256()
    if isinstance(dynamics, GaussianChannel):
        h.update(b"channel")
        parts = (dynamics.X, dynamics.Y)
    else:
        h.update(b"generator")
        parts = (dynamics.C, dynamics.B)
    for p in parts:
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class MeasurementRecord:
    """Homodyne statistics of the evolved state at a sequence of times.

    ``kind`` is ``"discrete"`` (times are integer step counts) or
    ``"continuous"``. ``shots`` is ``None`` for exact statistics.
    """

    setting: HomodyneSetting
    times: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    kind: str
    shots: int | None = None
    dynamics_id: str = ""
    convention: str = CONVENTION
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float).ravel()
        means = np.array(self.means, dtype=float).ravel()
        variances = np.array(self.variances, dtype=float).ravel()
        if not (times.size == means.size == variances.size) or times.size == 0:
            raise ValidationError("record needs equally many (>= 1) times, means and variances")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("record times must be strictly increasing")
        if np.any(variances <= 0):
            raise ValidationError("record variances must be positive")
        if self.kind not in ("discrete", "continuous"):
            raise ValidationError(f"unknown record kind {self.kind!r}")
        if self.kind == "discrete" and np.any(times != np.round(times)):
            raise ValidationError("discrete record times must be integers")
        if self.shots is not None and self.shots < 2:
            raise ValidationError("shots must be >= 2 or exact")
        for name, arr in (("times", times), ("means", means), ("variances", variances)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.setting.m

    def __len__(self):
        return self.times.size

    @property
    def entries(self) -> list[dict]:
        return [
            {"time": float(t), "mean": float(mu), "variance": float(v),
             "shots": "exact" if self.shots is None else int(self.shots)}
            for t, mu, v in zip(self.times, self.means, self.variances)
        ]


def _measure(states, setting, shots, seed):
    if shots is None:
        stats = [homodyne_statistics(s, setting) for s in states]
    else:
        streams = seed_sequence(seed).spawn(len(states))
        stats = [sample_homodyne(s, setting, shots, ss) for s, ss in zip(states, streams)]
    means, variances = zip(*stats)
    return np.array(means), np.array(variances)


def record_discrete(state: GaussianState, channel: GaussianChannel, setting: HomodyneSetting,
                    t0: int = 0, count: int = 1, shots: int | None = None, seed=None) -> MeasurementRecord:
    """Statistics after ``t0, ..., t0 + count - 1`` applications of ``channel``."""
    if count < 1 or t0 < 0:
        raise ValidationError("need count >= 1 and t0 >= 0")
    _check_modes(state, channel, setting)
    states = []
    current = evolve_discrete(state, channel, t0)
    for _ in range(count):
        states.append(current)
        current = apply_channel(current, channel)
    means, variances = _measure(states, setting, shots, seed)
    return MeasurementRecord(
        setting, np.arange(t0, t0 + count), means, variances, "discrete", shots,
        dynamics_id(channel), provenance={"seed": seed, "t0": t0, "count": count},
    )


def default_times(count: int, delta: float = DEFAULT_DELTA) -> np.ndarray:
    return delta * np.arange(count)


def record_continuous(state: GaussianState, generator: QdsGenerator, setting: HomodyneSetting,
                      times=None, shots: int | None = None, seed=None,
                      count: int | None = None, delta: float = DEFAULT_DELTA) -> MeasurementRecord:
    """Statistics of the state evolved for each of ``times`` under the semigroup.

    Without ``times``, uses ``count`` points on the grid ``k * delta``.
    """
    _check_modes(state, generator, setting)
    if times is None:
        if count is None:
            raise ValidationError("give either times or count")
        times = default_times(count, delta)
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValidationError("times must be non-negative and strictly increasing")
    states = [apply_channel(state, qds_channel_at(generator, t)) for t in times]
    means, variances = _measure(states, setting, shots, seed)
    return MeasurementRecord(
        setting, times, means, variances, "continuous", shots,
        dynamics_id(generator), provenance={"seed": seed},
    )


@dataclass(frozen=True)
class StrippedSeries:
    """Measured series with the known additive noise removed.

    ``alpha[k] = <a| X_k (x)_s X_k |gamma>`` and ``beta[k] = <b| X_k |d>``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    times: np.ndarray
    kind: str

    @property
    def t0(self) -> float:
        return float(self.times[0])


def strip_additive(record: MeasurementRecord, dynamics: GaussianChannel | QdsGenerator) -> StrippedSeries:
    """Subtract ``<a, svec(Y_k)>`` from each variance; means pass through unchanged."""
    if dynamics.m != record.m:
        raise ValidationError(f"record has {record.m} modes, dynamics has {dynamics.m}")
    a = record.setting.a
    if isinstance(dynamics, GaussianChannel):
        if record.kind != "discrete":
            raise ValidationError("a discrete channel needs a discrete record")
        noise = [accumulated_noise(dynamics, int(t)) for t in record.times]
    else:
        if record.kind != "continuous":
            raise ValidationError("a generator needs a continuous record")
        noise = [qds_channel_at(dynamics, t).Y for t in record.times]
    offsets = np.array([a @ linalg.svec(Yk) for Yk in noise])
    return StrippedSeries(record.variances - offsets, np.array(record.means), np.array(record.times), record.kind)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gdqst import linalg, model
from gdqst.errors import ValidationError
from gdqst.model import GaussianChannel, GaussianState, HomodyneSetting, QdsGenerator

seeds = st.integers(0, 2**32 - 1)


def test_vacuum_is_valid_and_pure():
    vac = GaussianState.vacuum(2)
    assert model.validate_state(vac)
    ok, res = model.is_pure(vac)
    assert ok and res < 1e-15


def test_half_identity_violates_uncertainty():
    report = model.validate_state(GaussianState(0.5 * np.eye(2), np.zeros(2)))
    assert not report
    assert report.min_eigenvalue == pytest.approx(-0.5)


def test_thermal_state_valid_not_pure():
    st_ = GaussianState(3 * np.eye(2), np.zeros(2))
    assert model.validate_state(st_)
    assert not model.is_pure(st_)[0]


def test_state_shape_checks():
    with pytest.raises(ValidationError):
        GaussianState(np.eye(3), np.zeros(3))
    with pytest.raises(ValidationError):
        GaussianState(np.eye(2), np.zeros(3))
    with pytest.raises(ValidationError):
        GaussianState([[1.0, 0.5], [0.0, 1.0]], np.zeros(2))


def test_state_is_immutable():
    st_ = GaussianState.vacuum(1)
    with pytest.raises(ValueError):
        st_.gamma[0, 0] = 2.0


@pytest.mark.parametrize("Y, valid", [(0.0, False), (3.0, True), (2.9, False)])
def test_amplifier_channel_cp(Y, valid):
    channel = GaussianChannel(2 * np.eye(2), Y * np.eye(2))
    assert bool(model.validate_channel(channel)) is valid


def test_identity_channel_valid():
    assert model.validate_channel(GaussianChannel.identity(2))


def test_unitary_channel_valid(rng):
    assert model.validate_channel(model.random_unitary_channel(2, rng))


def test_hamiltonian_generator_valid():
    # C = Omega generates a phase rotation; zero diffusion is physical.
    assert model.validate_generator(QdsGenerator(linalg.omega(1), np.zeros((2, 2))))


def test_damping_without_noise_invalid():
    # Pure loss C = -I needs B >= I to respect the uncertainty relation.
    assert not model.validate_generator(QdsGenerator(-np.eye(2), np.zeros((2, 2))))
    assert model.validate_generator(QdsGenerator(-np.eye(2), np.eye(2)))


def test_damping_limit_state_is_vacuum():
    # dGamma/dt = C Gamma + Gamma C^T + 2 Omega^T B Omega = 0 at Gamma = I
    from gdqst.dynamics import qds_channel_at

    ch = qds_channel_at(QdsGenerator(-np.eye(2), np.eye(2)), 40.0)
    np.testing.assert_allclose(ch.Y, np.eye(2), atol=1e-12)


@given(seeds)
def test_generator_validity_implies_channel_validity(seed):
    from gdqst.dynamics import qds_channel_at

    gen = model.random_generator(1, seed)
    assert model.validate_generator(gen)
    for t in (0.1, 0.7, 2.0):
        assert model.validate_channel(qds_channel_at(gen, t))


def test_pure_from_ab_squeezed():
    r = 0.3
    gamma = model.pure_from_ab([[np.exp(-2 * r)]], [[0.0]])
    np.testing.assert_allclose(gamma, np.diag([np.exp(-2 * r), np.exp(2 * r)]))
    assert model.is_pure(gamma)[0]


@given(seeds, st.integers(1, 3))
def test_pure_ab_round_trip(seed, m):
    gamma = model.random_state(m, seed, pure=True).gamma
    assert model.is_pure(gamma, 1e-7)[0]
    A, B = model.ab_from_pure(gamma)
    np.testing.assert_allclose(model.pure_from_ab(A, B), gamma, atol=1e-8 * np.abs(gamma).max())


def test_pure_from_ab_requires_positive_a():
    with pytest.raises(ValidationError):
        model.pure_from_ab([[-1.0]], [[0.0]])


def test_symplectic_check():
    assert model.symplectic_check(linalg.omega(2))[0]
    ok, res = model.symplectic_check(2 * np.eye(2))
    assert not ok and res == pytest.approx(3 * np.sqrt(2))


@given(seeds, st.integers(1, 3))
def test_random_state_valid(seed, m):
    state = model.random_state(m, seed)
    assert model.validate_state(state)
    assert state.m == m


@given(seeds, st.integers(1, 3))
def test_random_channel_valid_and_generic(seed, m):
    ch = model.random_channel(m, seed)
    assert model.validate_channel(ch)
    radius = np.abs(np.linalg.eigvals(ch.X)).max()
    assert 0.5 - 1e-12 <= radius <= 1.5 + 1e-12
    assert linalg.spectral(ch.X).distinct


@given(seeds, st.integers(1, 3))
def test_random_invertible_channel_singular_values(seed, m):
    ch = model.random_invertible_channel(m, seed)
    assert model.validate_channel(ch)
    s = np.linalg.svd(ch.X, compute_uv=False)
    assert s.min() >= 0.5 - 1e-12 and s.max() <= 1.5 + 1e-12


@given(seeds, st.integers(1, 2))
def test_random_generator_valid(seed, m):
    assert model.validate_generator(model.random_generator(m, seed))


def test_random_unitary_is_symplectic():
    assert model.symplectic_check(model.random_unitary_channel(3, 7).X)[0]


def test_random_objects_reproducible():
    a = model.random_channel(2, 11)
    b = model.random_channel(2, 11)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.Y, b.Y)


def test_setting_must_be_unit():
    with pytest.raises(ValidationError):
        HomodyneSetting([1.0, 1.0])
    s = HomodyneSetting.normalized([1.0, 1.0])
    np.testing.assert_allclose(s.a, linalg.svec(np.full((2, 2), 0.5)))


def test_quadrature_setting():
    s = HomodyneSetting.quadrature(2, mode=1, quadrature="p")
    np.testing.assert_array_equal(s.b, [0, 0, 0, 1])
    with pytest.raises(ValidationError):
        HomodyneSetting.quadrature(2, mode=2)


def test_block_diagonal_channel_layout():
    c1 = GaussianChannel(np.array([[1.0, 2.0], [3.0, 4.0]]), np.eye(2))
    c2 = GaussianChannel(np.array([[5.0, 6.0], [7.0, 8.0]]), 2 * np.eye(2))
    X = model.block_diagonal_channel([c1, c2]).X
    # ordering (q1, q2, p1, p2)
    expected = np.array([[1, 0, 2, 0], [0, 5, 0, 6], [3, 0, 4, 0], [0, 7, 0, 8]], dtype=float)
    np.testing.assert_array_equal(X, expected)

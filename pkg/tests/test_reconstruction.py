import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import rel_err
from gdqst import dynamics, linalg, model, reconstruction as rc
from gdqst.errors import InsufficientDataError, ReconstructionFailure, ValidationError
from gdqst.model import GaussianState, HomodyneSetting

seeds = st.integers(0, 2**32 - 1)


def similar(eigs, seed=0):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(len(eigs), len(eigs)))
    return S @ np.diag(eigs) @ np.linalg.inv(S)


def exact_alpha(X, setting, gamma, count):
    return np.array([setting.b @ np.linalg.matrix_power(X, k) @ gamma @ np.linalg.matrix_power(X, k).T
                     @ setting.b for k in range(count)])


def exact_beta(X, setting, d, count):
    return np.array([setting.b @ np.linalg.matrix_power(X, k) @ d for k in range(count)])


def test_counts():
    assert [rc.full_count(m) for m in (1, 2, 3)] == [3, 10, 21]
    assert [rc.pure_count(m) for m in (1, 2, 3)] == [2, 6, 12]
    assert rc.pure_pairs(1).tolist() == [0, 1]  # {q,q} and {q,p}


def test_system_by_hand_diag_1_2():
    X = np.diag([1.0, 2.0])
    setting = HomodyneSetting.normalized([1.0, 1.0])
    system = rc.build_system(X, setting)
    pairs = sorted(zip(np.round(system.nodes.real, 12), np.round(np.abs(system.N_diag), 12)))
    assert pairs == [(1.0, 0.5), (2.0, round(1 / np.sqrt(2), 12)), (4.0, 0.5)]
    np.testing.assert_allclose(system.M, linalg.power_vandermonde(system.nodes, [0, 1, 2]))


def test_system_matches_direct_forward_map(rng):
    X = model.random_channel(2, rng).X
    setting = model.random_setting(2, rng)
    system = rc.build_system(X, setting)
    forward = system.M * system.N_diag[None, :]
    # forward @ gamma' must equal the row <a| X^k (x)_s X^k applied to PP gamma'
    direct = np.array([linalg.sym_kron(np.linalg.matrix_power(X, k), np.linalg.matrix_power(X, k)).T @ setting.a
                       for k in range(10)])
    assert rel_err(forward, direct @ system.PP) < 1e-9


def test_cov_and_disp_exact(rng):
    for m in (1, 2):
        ch = model.random_channel(m, rng)
        state = model.random_state(m, rng)
        setting = model.random_setting(m, rng)
        n = rc.full_count(m)
        G, rep = rc.reconstruct_cov(exact_alpha(ch.X, setting, state.gamma, n), ch.X, setting)
        assert rel_err(G, state.gamma) < 1e-6 * rc.conditioning_factor(rep.conditions["M"] * rep.conditions["N"])
        d, rep_d = rc.reconstruct_disp(exact_beta(ch.X, setting, state.d, 2 * m), ch.X, setting)
        assert rel_err(d, state.d) < 1e-8
        assert not rep.refused and not rep_d.refused


@given(seeds)
def test_single_mode_reconstruction_property(seed):
    ch = model.random_invertible_channel(1, seed)
    state = model.random_state(1, seed + 1)
    setting = model.random_setting(1, seed + 2)
    rec = dynamics.record_discrete(state, ch, setting, count=3)
    report = rc.reconstruct_full(rec, ch)
    factor = rc.conditioning_factor(report.conditions["cov_M"] * report.conditions["cov_N"])
    assert rel_err(report.state.gamma, state.gamma) < 1e-6 * factor


def test_overdetermined_least_squares(rng):
    ch = model.random_channel(1, rng)
    state = model.random_state(1, rng)
    setting = model.random_setting(1, rng)
    G, rep = rc.reconstruct_cov(exact_alpha(ch.X, setting, state.gamma, 6), ch.X, setting)
    assert rel_err(G, state.gamma) < 1e-8
    assert rep.residual < 1e-10


def test_cov_too_short():
    with pytest.raises(InsufficientDataError) as info:
        rc.reconstruct_cov([1.0, 2.0], np.diag([1.0, 2.0]), HomodyneSetting.quadrature(1))
    assert info.value.required == 3


def test_symplectic_channel_refused(rng):
    ch = model.random_unitary_channel(1, rng)
    rec = dynamics.record_discrete(model.random_state(1, rng), ch, model.random_setting(1, rng), count=3)
    with pytest.raises(ReconstructionFailure) as info:
        rc.reconstruct_full(rec, ch)
    assert info.value.flags["symplecticX"]


def test_product_collision_refused():
    # eigenvalues 1, 2, 3, 6: 1*6 == 2*3, so two nodes coincide
    X = similar([1.0, 2.0, 3.0, 6.0]) * 0.3
    setting = HomodyneSetting.normalized(np.ones(4))
    with pytest.raises(ReconstructionFailure) as info:
        rc.reconstruct_cov(np.ones(10), X, setting)
    assert info.value.flags["degenerateProducts"]


def test_prime_eigenvalues_accepted(rng):
    # distinct primes have distinct pairwise products
    X = similar([2.0, 3.0, 5.0, 7.0]) / 7
    setting = model.random_setting(2, rng)
    state = model.random_state(2, rng)
    G, rep = rc.reconstruct_cov(exact_alpha(X, setting, state.gamma, 10), X, setting)
    assert not rep.flags["degenerateProducts"]
    assert rel_err(G, state.gamma) < 1e-6 * rc.conditioning_factor(rep.conditions["M"] * rep.conditions["N"])


def test_repeated_eigenvalue_refused():
    with pytest.raises(ReconstructionFailure) as info:
        rc.reconstruct_cov(np.ones(3), np.diag([0.5, 0.5]), HomodyneSetting.quadrature(1))
    assert info.value.flags["degenerateSpectrum"]


def test_orthogonal_measurement_refused():
    S = np.array([[1.0, 1.0], [0.0, 1.0]])
    X = S @ np.diag([0.5, 0.9]) @ np.linalg.inv(S)
    # b orthogonal to the second eigenvector (1, 1)
    setting = HomodyneSetting.normalized([1.0, -1.0])
    with pytest.raises(ReconstructionFailure) as info:
        rc.reconstruct_disp([1.0, 0.5], X, setting)
    assert info.value.flags["orthogonalMeasurement"]


def test_block_diagonal_missed_block_refused(rng):
    ch = model.block_diagonal_channel([model.random_channel(1, rng), model.random_channel(1, rng)])
    assert rc.coupling_components(ch.X) == [[0], [1]]
    setting = HomodyneSetting.normalized([1.0, 0.0, 0.5, 0.0])  # mode 0 only
    rec = dynamics.record_discrete(model.random_state(2, rng), ch, setting, count=10)
    with pytest.raises(ReconstructionFailure) as info:
        rc.reconstruct_full(rec, ch)
    assert info.value.flags["blockDiagonalX"]


def test_block_diagonal_both_blocks_measured(rng):
    ch = model.block_diagonal_channel([model.random_channel(1, rng), model.random_channel(1, rng)])
    setting = HomodyneSetting.normalized([1.0, 0.7, 0.5, -0.3])
    diag = rc.diagnose(ch, setting)
    assert not diag.flags["blockDiagonalX"]


def test_pure_vacuum_recovers_identity(rng):
    ch = model.random_channel(1, rng)
    rec = dynamics.record_discrete(GaussianState.vacuum(1), ch, model.random_setting(1, rng), count=2)
    report = rc.reconstruct_full(rec, ch, pure=True)
    np.testing.assert_allclose(report.state.gamma, np.eye(2), atol=1e-7)


def test_pure_candidates_include_truth(rng):
    hits = 0
    for trial in range(5):
        ch = model.random_channel(1, rng)
        state = model.random_state(1, rng, pure=True)
        setting = model.random_setting(1, rng)
        rec = dynamics.record_discrete(state, ch, setting, count=2)
        alpha = dynamics.strip_additive(rec, ch).alpha
        G, rep = rc.reconstruct_pure(alpha, ch.X, setting, seed=trial)
        assert model.is_pure(G, 1e-6)[0]
        assert rep.residual < 1e-8
        hits += any(rel_err(c, state.gamma) < 1e-6 for c in rep.candidates)
    assert hits == 5


def test_pure_unique_with_full_data(rng):
    ch = model.random_channel(1, rng)
    state = model.random_state(1, rng, pure=True)
    setting = model.random_setting(1, rng)
    rec = dynamics.record_discrete(state, ch, setting, count=3)
    report = rc.reconstruct_full(rec, ch, pure=True)
    assert not report.flags["ambiguousPure"]
    assert rel_err(report.state.gamma, state.gamma) < 1e-6


def test_full_continuous(rng):
    gen = model.random_generator(1, rng)
    state = model.random_state(1, rng)
    setting = model.random_setting(1, rng)
    rec = dynamics.record_continuous(state, gen, setting, times=[0.3, 1.0, 2.2])
    report = rc.reconstruct_full(rec, gen)
    assert rel_err(report.state.gamma, state.gamma) < 1e-6
    assert rel_err(report.state.d, state.d) < 1e-6
    assert report.physical and report.residual < 1e-8


def test_full_discrete_late_start(rng):
    ch = model.random_invertible_channel(1, rng)
    state = model.random_state(1, rng)
    setting = model.random_setting(1, rng)
    rec = dynamics.record_discrete(state, ch, setting, t0=4, count=3)
    report = rc.reconstruct_full(rec, ch)
    assert rel_err(report.state.gamma, state.gamma) < 1e-6


def test_reconstruct_full_rejects_mismatch(rng):
    ch = model.random_channel(2, rng)
    rec = dynamics.record_discrete(GaussianState.vacuum(1), model.random_channel(1, rng),
                                   HomodyneSetting.quadrature(1), count=3)
    with pytest.raises(ValidationError):
        rc.reconstruct_full(rec, ch)


def test_entry_residuals_zero_for_truth(rng):
    ch = model.random_channel(1, rng)
    state = model.random_state(1, rng)
    rec = dynamics.record_discrete(state, ch, model.random_setting(1, rng), count=4)
    assert rc.entry_residuals(state, rec, ch).max() < 1e-12


def test_diagnose_generic_and_unitary(rng):
    setting = model.random_setting(1, rng)
    assert rc.diagnose(model.random_channel(1, rng), setting).generic
    diag = rc.diagnose(model.random_unitary_channel(1, rng), setting)
    assert diag.verdict == "NULL-SET" and "symplecticX" in diag.reasons
    assert rc.diagnose(model.random_generator(1, rng), setting).generic


def test_diagnose_hamiltonian_generator():
    gen = model.QdsGenerator(linalg.omega(1), np.zeros((2, 2)))
    diag = rc.diagnose(gen, HomodyneSetting.quadrature(1))
    assert not diag.generic


def test_setting_completeness():
    for m in (1, 2):
        info = rc.setting_completeness(rc.explicit_complete_settings(m))
        assert info["complete"] and info["rank_cov"] == rc.full_count(m)
    info = rc.setting_completeness([HomodyneSetting.quadrature(1), HomodyneSetting.quadrature(1, 0, "p")])
    assert not info["complete"] and info["rank_cov"] == 2 and info["rank_disp"] == 2


def test_displacement_survives_symplectic_dynamics(rng):
    # only the covariance map degenerates for unitary dynamics
    for m in (1, 2):
        X = model.random_unitary_channel(m, rng).X
        state = model.random_state(m, rng)
        setting = model.random_setting(m, rng)
        d, rep = rc.reconstruct_disp(exact_beta(X, setting, state.d, 2 * m), X, setting)
        assert rel_err(d, state.d) < 1e-8 and not rep.refused


def test_single_mode_symplectic_refused_by_policy(rng):
    X = model.random_unitary_channel(1, rng).X
    setting = model.random_setting(1, rng)
    system = rc.build_system(X, setting)
    assert system.determinants["min_factor_M"] > 1e-6  # M itself is fine at m = 1
    with pytest.raises(ReconstructionFailure) as info:
        rc.reconstruct_cov(np.ones(3), X, setting)
    assert info.value.flags["symplecticX"]

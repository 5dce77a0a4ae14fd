import numpy as np
import pytest

from xdfrelax import givens, qsim
from xdfrelax.hammodel import Hamiltonian, synth_hamiltonian
from xdfrelax.qsim import (
    Statevector,
    apply_locked_rotation,
    apply_orbital_rotation,
    apply_pair_exchange,
    denergy_dtheta_direct,
    denergy_dtheta_shift,
    energy,
    hf_reference,
    measure_omega0,
    measure_omega_leaf,
    measure_rdms_direct,
)
from xdfrelax.xdf import TruncationPolicy, factorize

from _common import eight_fold, random_sector_state, symmetrize, zero_two_body


def test_hf_reference_basic():
    state = hf_reference(2, 1, 1)
    index = 0b0101  # alpha 0 and beta 0 occupied
    assert state.amplitudes[index] == 1.0
    assert np.count_nonzero(state.amplitudes) == 1
    assert abs(state.norm() - 1.0) < 1e-15
    assert state.electron_counts() == (1, 1)


def test_hf_reference_occupations():
    state = hf_reference(2, 1, 1)
    gamma, _ = measure_rdms_direct(state)
    np.testing.assert_allclose(gamma, np.diag([2.0, 0.0]), atol=1e-15)


def test_hf_reference_rejects_overflow():
    with pytest.raises(ValueError):
        hf_reference(2, 3, 0)


def test_identity_fabric_leaves_state_unchanged():
    state = hf_reference(3, 2, 1)
    out = apply_orbital_rotation(state, givens.identity_fabric(3))
    np.testing.assert_array_equal(out.amplitudes, state.amplitudes)


def test_single_particle_transformation_law():
    n = 2
    fabric = givens.identity_fabric(n).with_angles([0.4])
    amps = np.zeros(4 ** n)
    amps[0b01] = 1.0  # one alpha electron in orbital 0
    out = apply_orbital_rotation(Statevector(n, amps), fabric)
    u = givens.reconstruct(fabric)
    np.testing.assert_allclose([out.amplitudes[0b01], out.amplitudes[0b10]],
                               u[:, 0], atol=1e-14)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gates_preserve_norm_and_sector(seed):
    fac = factorize(synth_hamiltonian(3, 2, 1, 3), TruncationPolicy.exact())
    state = random_sector_state(fac, seed)
    assert abs(state.norm() - 1.0) < 1e-12
    assert state.electron_counts() == (2, 1)
    rotated = apply_orbital_rotation(state, fac.fabric0())
    assert abs(rotated.norm() - 1.0) < 1e-12
    assert rotated.electron_counts() == (2, 1)
    exchanged = apply_pair_exchange(state, 0, 0.37)
    assert abs(exchanged.norm() - 1.0) < 1e-12
    assert exchanged.electron_counts() == (2, 1)
    locked = apply_locked_rotation(state, 1, -0.8)
    assert locked.electron_counts() == (2, 1)


def test_omega0_on_hf_reference():
    state = hf_reference(2, 1, 1)
    np.testing.assert_allclose(measure_omega0(state, givens.identity_fabric(2)),
                               [1.0, -1.0], atol=1e-15)


@pytest.mark.parametrize("n,na,nb,seed", [(2, 1, 1, 0), (3, 2, 1, 1), (4, 2, 2, 2)])
def test_omega0_sum_rule(n, na, nb, seed):
    fac = factorize(synth_hamiltonian(n, na, nb, seed), TruncationPolicy.exact())
    state = random_sector_state(fac, seed + 40)
    omega0 = measure_omega0(state, fac.fabric0())
    assert np.all(omega0 <= 1.0 + 1e-12) and np.all(omega0 >= -1.0 - 1e-12)
    assert abs(np.sum(omega0) - (na + nb - n)) < 1e-12


def test_omega0_rotation_then_inverse():
    fac = factorize(synth_hamiltonian(3, 1, 1, 9), TruncationPolicy.exact())
    state = random_sector_state(fac, 5)
    fabric = fac.fabric0()
    rotated = apply_orbital_rotation(apply_orbital_rotation(state, fabric),
                                     fabric, dagger=True)
    np.testing.assert_allclose(
        measure_omega0(rotated, givens.identity_fabric(3)),
        measure_omega0(state, givens.identity_fabric(3)), atol=1e-12)


def test_omega_leaf_hf_closed_shell_combinatorics():
    # determinant in its own basis: omega_kl = (n_k - 1)(n_l - 1)/2 - delta/4
    state = hf_reference(2, 1, 1)
    omega = measure_omega_leaf(state, givens.identity_fabric(2))
    np.testing.assert_allclose(omega, [[0.25, -0.5], [-0.5, 0.25]], atol=1e-15)


@pytest.mark.parametrize("seed", [3, 11])
def test_omega_measurements_are_rdm_projections(seed):
    fac = factorize(synth_hamiltonian(3, 1, 1, seed), TruncationPolicy.exact())
    state = random_sector_state(fac, seed)
    gamma, big = measure_rdms_direct(state)

    omega0 = measure_omega0(state, fac.fabric0())
    np.testing.assert_allclose(omega0, np.diag(fac.U0.T @ gamma @ fac.U0) - 1.0,
                               atol=1e-12)

    for t in range(fac.n_leaves):
        u = fac.leaves[t].U
        omega = measure_omega_leaf(state, fac.leaf_fabric(t))
        np.testing.assert_allclose(omega, omega.T, atol=1e-12)
        g_t = u.T @ gamma @ u
        big_t = np.einsum("pk,ql,rm,so,pqrs->klmo", u, u, u, u, big)
        n = fac.n_orbitals
        expected = np.zeros((n, n))
        for k in range(n):
            for l in range(n):
                expected[k, l] = (big_t[k, k, l, l] + 0.5 * (k == l) * g_t[k, k]
                                  - 0.5 * g_t[k, k] - 0.5 * g_t[l, l]
                                  + 0.5 - 0.25 * (k == l))
        np.testing.assert_allclose(omega, expected, atol=1e-12)


def test_energy_one_body_closed_form():
    diag = [-2.0, -1.0, 0.5]
    ham = zero_two_body(3, 1, 1, diag, core=0.3)
    fac = factorize(ham, TruncationPolicy.exact())
    state = hf_reference(3, 1, 1)
    assert abs(energy(state, fac) - (0.3 + 2.0 * diag[0])) < 1e-12


@pytest.mark.parametrize("n,na,nb,seed", [(2, 1, 1, 7), (3, 2, 1, 3), (4, 2, 2, 13)])
def test_energy_matches_dense_contraction(n, na, nb, seed):
    ham = synth_hamiltonian(n, na, nb, seed)
    fac = factorize(ham, TruncationPolicy.exact())
    state = random_sector_state(fac, seed + 1)
    gamma, big = measure_rdms_direct(state)
    dense = (ham.core_energy + float(np.sum(ham.one_body * gamma))
             + float(np.sum(ham.two_body * big)))
    assert abs(energy(state, fac) - dense) < 1e-10


def test_apply_hamiltonian_matches_energy():
    fac = factorize(synth_hamiltonian(3, 1, 1, 2), TruncationPolicy.exact())
    state = random_sector_state(fac, 8)
    hpsi = qsim.apply_hamiltonian(state, fac)
    assert abs(float(state.amplitudes @ hpsi) - energy(state, fac)) < 1e-10


def test_rdm_trace_identities():
    state = hf_reference(2, 1, 1)
    gamma, _ = measure_rdms_direct(state)
    assert abs(np.trace(gamma) - 2.0) < 1e-14

    fac = factorize(synth_hamiltonian(4, 2, 2, 13), TruncationPolicy.exact())
    rand = random_sector_state(fac, 6)
    gamma, big = measure_rdms_direct(rand)
    n_elec = 4
    assert abs(np.trace(gamma) - n_elec) < 1e-12
    partial = np.einsum("pqrr->pq", big)
    np.testing.assert_allclose(partial, 0.5 * (n_elec - 1) * gamma, atol=1e-12)


def test_shift_rule_zero_for_unsupported_angle():
    # electron frozen in orbital 0; the (1, 2) rotation never touches it
    ham = zero_two_body(3, 1, 1, [-2.0, -1.0, 0.5])
    fac = factorize(ham, TruncationPolicy.exact())
    state = hf_reference(3, 1, 1)
    fabric = fac.fabric0()
    # identity fabric here: angles are zero, pivot 1 is slot index 1
    assert fabric.pivots[1] == (1, 2)
    assert abs(denergy_dtheta_shift(state, fac, None, 1)) < 1e-14


@pytest.mark.parametrize("seed", [0, 4])
def test_shift_rule_every_angle_every_leaf(seed):
    fac = factorize(synth_hamiltonian(3, 2, 1, 4), TruncationPolicy.exact())
    state = random_sector_state(fac, seed + 99)
    for leaf_id in [None] + list(range(fac.retained)):
        fabric = fac.fabric0() if leaf_id is None else fac.leaf_fabric(leaf_id)
        for g in range(len(fabric.pivots)):
            shift = denergy_dtheta_shift(state, fac, leaf_id, g)
            direct = denergy_dtheta_direct(state, fac, leaf_id, g)
            assert abs(shift - direct) < 1e-10

            step = 1e-5
            plus = fabric.angles.copy()
            plus[g] += step
            minus = fabric.angles.copy()
            minus[g] -= step
            fd = (qsim._leaf_objective(state, fac, leaf_id, plus, plus)
                  - qsim._leaf_objective(state, fac, leaf_id, minus, minus)) / (2 * step)
            assert abs(shift - fd) < 1e-7


def test_shift_rule_rejects_bad_indices():
    fac = factorize(synth_hamiltonian(3, 1, 1, 2), TruncationPolicy.by_count(2))
    state = hf_reference(3, 1, 1)
    with pytest.raises(ValueError):
        denergy_dtheta_shift(state, fac, 5, 0)
    with pytest.raises(ValueError):
        denergy_dtheta_shift(state, fac, None, 99)


def test_statevector_guards():
    with pytest.raises(ValueError):
        Statevector(2, np.zeros(7))
    mixed = np.zeros(16)
    mixed[0b0001] = mixed[0b0011] = 1.0 / np.sqrt(2.0)
    with pytest.raises(ValueError):
        Statevector(2, mixed).electron_counts()

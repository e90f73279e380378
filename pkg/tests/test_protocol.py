import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scramble_swap.ensembles import Seed, haar_state, haar_state_vector, haar_unitary_matrix
from scramble_swap.experiments import batch_means_se, haar_draws, haar_exact
from scramble_swap.protocol import (a_to_c_recovery, decoder_map, encoder_map, hermitian_basis,
                                    isometry_diagnostics, orthogonal_leakage, reverse_decoder_map, run_protocol,
                                    run_protocol_reference, swap_fidelity, teleport_diagnostics,
                                    teleport_purity_check, teleported_state, uhlmann_fidelity)
from scramble_swap.qcore import CompositeSpace, QCoreError, QOperator, QState, swap_operator


def state(v, label="S"):
    v = np.asarray(v, complex)
    return QState(CompositeSpace.of((label, v.size)), v)


def dens(m, label="S"):
    m = np.asarray(m, complex)
    return QOperator(CompositeSpace.of((label, m.shape[0])), m, "density")


def unitary(m, da, db):
    return QOperator(CompositeSpace.of(("A", da), ("B", db)), m, "unitary")


def rand_density(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = g @ g.conj().T
    return m / np.trace(m).real


def rand_op(d, rng):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


AC = CompositeSpace.of(("A", 2), ("C", 2))


# ---------------------------------------------------------------- run_protocol

def test_identity_scrambler_does_not_swap():
    u = unitary(np.eye(6), 2, 3)
    phi = state(haar_state_vector(3, 1), "B")
    psi, chi = state([1, 0], "A"), state([0, 1], "C")
    out = run_protocol(u, phi, psi, chi)
    assert out.p == pytest.approx(1, abs=1e-12)
    assert np.allclose(out.rho_out_AC.matrix, np.kron(psi.density().matrix, chi.density().matrix))
    assert out.f_swap == pytest.approx(0, abs=1e-12)


def test_swap_scrambler_moves_reference_into_a():
    rng = np.random.default_rng(1)
    s = swap_operator(3)
    phi, psi, chi = (haar_state_vector(3, rng) for _ in range(3))
    out = run_protocol(unitary(s, 3, 3), state(phi, "B"), state(psi, "A"), state(chi, "C"))
    assert out.p == pytest.approx(abs(np.vdot(phi, chi)) ** 2, abs=1e-12)
    target = np.kron(phi, psi)
    assert np.allclose(out.rho_out_AC.matrix, np.outer(target, target.conj()), atol=1e-12)


def test_postselection_failure_reported():
    s = swap_operator(2)
    out = run_protocol(unitary(s, 2, 2), state([1, 0], "B"), state([1, 0], "A"), state([0, 1], "C"))
    assert out.failed and out.rho_out_AC is None and math.isnan(out.f_swap)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), da=st.integers(1, 3), db=st.integers(1, 4), pure=st.booleans())
def test_matches_three_system_reference(seed, da, db, pure):
    rng = np.random.default_rng(seed)
    u = unitary(haar_unitary_matrix(da * db, rng), da, db)
    phi = state(haar_state_vector(db, rng), "B")
    if pure:
        a, c = state(haar_state_vector(da, rng), "A"), state(haar_state_vector(da, rng), "C")
        ra, rc = a.density(), c.density()
    else:
        a = ra = dens(rand_density(da, rng), "A")
        c = rc = dens(rand_density(da, rng), "C")
    out = run_protocol(u, phi, a, c)
    ref, p_ref = run_protocol_reference(u, phi, ra, rc)
    assert abs(out.p - p_ref) <= 1e-12
    if not out.failed:
        assert np.allclose(out.rho_out_AC.matrix, ref / p_ref, atol=1e-10)
        assert -1e-12 <= out.p <= 1 + 1e-10 and out.f_swap <= 1 + 1e-9


def test_haar_average_against_exact_moments():
    # exact second-moment oracle; the leading-order formulas are compared in the acceptance module
    f, p = haar_draws(2, 64, 500, Seed(21))
    p_exact, pf_exact = haar_exact(2, 64)
    assert abs(p.mean() - p_exact) <= 3 * batch_means_se(p)
    w = p * np.nan_to_num(f)
    r = w.sum() / p.sum()
    assert abs(r - pf_exact / p_exact) <= 3 * batch_means_se(w) / p.mean() + 3 * batch_means_se(p)


def test_pure_outcome_fidelities_agree():
    rng = np.random.default_rng(2)
    u = unitary(haar_unitary_matrix(8, rng), 2, 4)
    out = run_protocol(u, state(haar_state_vector(4, rng), "B"), state(haar_state_vector(2, rng), "A"),
                       state(haar_state_vector(2, rng), "C"), uhlmann=True)
    assert out.f_swap == pytest.approx(out.f_uhlmann, abs=1e-10)


# ---------------------------------------------------------------- fidelities

def test_swap_fidelity_examples():
    rng = np.random.default_rng(3)
    rho = QOperator(AC, rand_density(4, rng), "density")
    s = swap_operator(2)
    assert swap_fidelity(QOperator(AC, s @ rho.matrix @ s, "density"), rho) == pytest.approx(1)
    psi, chi, psi2 = np.array([1, 0]), np.array([0, 1]), np.array([1, 0])
    chi2 = np.array([1, 1]) / math.sqrt(2)
    out = np.kron(psi, chi)
    inp = np.kron(psi2, chi2)  # swapped input is chi2 (x) psi2, orthogonal to psi (x) chi
    r_out = QOperator(AC, np.outer(out, out), "density")
    r_in = QOperator(AC, np.outer(inp, inp), "density")
    assert swap_fidelity(r_out, r_in) == pytest.approx(0, abs=1e-12)


def test_swap_fidelity_equals_uhlmann_for_pure():
    rng = np.random.default_rng(4)
    s = swap_operator(2)
    for _ in range(10):
        a, b = haar_state_vector(4, rng), haar_state_vector(4, rng)
        ra, rb = np.outer(a, a.conj()), np.outer(b, b.conj())
        f = swap_fidelity(QOperator(AC, ra, "density"), QOperator(AC, rb, "density"))
        assert f == pytest.approx(uhlmann_fidelity(ra, s @ rb @ s), abs=1e-10)


def test_swap_fidelity_local_unitary_invariance():
    rng = np.random.default_rng(5)
    v = np.kron(*(2 * [haar_unitary_matrix(2, rng)]))
    ro, ri = rand_density(4, rng), rand_density(4, rng)
    f0 = swap_fidelity(QOperator(AC, ro, "density"), QOperator(AC, ri, "density"))
    f1 = swap_fidelity(QOperator(AC, v @ ro @ v.conj().T, "density"), QOperator(AC, v @ ri @ v.conj().T, "density"))
    assert f0 == pytest.approx(f1, abs=1e-12)


def test_uhlmann_examples():
    rng = np.random.default_rng(6)
    r = rand_density(3, rng)
    assert uhlmann_fidelity(r, r) == pytest.approx(1, abs=1e-9)
    a, b = haar_state_vector(3, rng), haar_state_vector(3, rng)
    assert uhlmann_fidelity(np.outer(a, a.conj()), np.outer(b, b.conj())) == pytest.approx(abs(np.vdot(a, b)) ** 2)
    f = uhlmann_fidelity(np.diag([0.7, 0.3]), np.diag([0.4, 0.6]))
    assert f == pytest.approx((math.sqrt(0.28) + math.sqrt(0.18)) ** 2, abs=1e-12)
    with pytest.raises(QCoreError):
        uhlmann_fidelity(np.diag([1.5, -0.5]), np.eye(2) / 2)


# ---------------------------------------------------------------- maps

def test_encoder_examples():
    rng = np.random.default_rng(7)
    phi = haar_state_vector(3, rng)
    o = rand_op(2, rng)
    e = encoder_map(np.eye(6), phi, o).matrix
    assert np.allclose(e, np.trace(o) * np.outer(phi, phi.conj()))
    e = encoder_map(swap_operator(2), np.array([1, 0]), o).matrix
    assert np.allclose(e, o)
    u = haar_unitary_matrix(6, rng)
    assert np.trace(encoder_map(u, phi, rand_density(2, rng)).matrix) == pytest.approx(1, abs=1e-12)


def test_reverse_decoder_examples():
    rng = np.random.default_rng(8)
    u, phi, o = haar_unitary_matrix(6, rng), haar_state_vector(3, rng), rand_op(2, rng)
    assert np.allclose(reverse_decoder_map(u, phi, np.eye(2), o).matrix, encoder_map(u, phi, o).matrix)
    assert np.allclose(reverse_decoder_map(u, phi, np.eye(2) / 2, o).matrix, encoder_map(u, phi, o).matrix / 2)
    g = rand_density(2, rng)
    assert np.allclose(reverse_decoder_map(np.eye(6), phi, g, o).matrix,
                       np.trace(o @ g.conj().T) * np.outer(phi, phi.conj()))
    psi = haar_state_vector(2, rng)
    perp = np.array([-psi[1].conj(), psi[0].conj()])
    z = reverse_decoder_map(np.eye(6), phi, np.outer(psi, psi.conj()), np.outer(perp, perp.conj())).matrix
    assert np.max(np.abs(z)) < 1e-14


@pytest.mark.parametrize("seed", range(100))
def test_pullback_identity(seed):
    rng = np.random.default_rng(1000 + seed)
    da, db = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    u, phi = haar_unitary_matrix(da * db, rng), haar_state_vector(db, rng)
    g, o1, o2 = rand_op(da, rng), rand_op(da, rng), rand_op(db, rng)
    lhs = np.trace(reverse_decoder_map(u, phi, g, o1).matrix @ o2.conj().T)
    rhs = np.trace(o1 @ decoder_map(u, phi, g, o2).matrix.conj().T)
    assert abs(lhs - rhs) <= 1e-10


def test_recovery_with_swap():
    rng = np.random.default_rng(9)
    phi = haar_state_vector(2, rng)
    ra, gc = rand_density(2, rng), rand_density(2, rng)
    rho, p, f = a_to_c_recovery(swap_operator(2), phi, ra, gc)
    # direct algebra: <phi|_B SWAP (gamma (x) rho_A) SWAP |phi>_B = <phi|gamma|phi> rho_A
    w = np.vdot(phi, gc @ phi).real
    assert np.allclose(rho.matrix, w * ra, atol=1e-12)
    assert p == pytest.approx(w) and f == pytest.approx(1, abs=1e-12)


def test_recovery_with_identity():
    rng = np.random.default_rng(10)
    phi = haar_state_vector(3, rng)
    ra, gc = rand_density(2, rng), rand_density(2, rng)
    rho, p, f = a_to_c_recovery(np.eye(6), phi, ra, gc)
    assert np.allclose(rho.matrix, gc, atol=1e-12)
    assert p == pytest.approx(1)
    expected = np.trace(ra @ gc).real / math.sqrt(np.trace(gc @ gc).real * np.trace(ra @ ra).real)
    assert f == pytest.approx(expected)
    assert f < 1


def test_fidelity_probability_bound():
    rng = Seed(11).generator()
    for _ in range(50):
        u, phi = haar_unitary_matrix(128, rng), haar_state_vector(64, rng)
        psi = haar_state_vector(2, rng)
        _, p, f = a_to_c_recovery(u, phi, np.outer(psi, psi.conj()), np.eye(2) / 2)
        assert f * 4 * p >= 1 - 1e-9


# ---------------------------------------------------------------- isometry diagnostics

def test_hermitian_basis_orthonormal():
    for d in (1, 2, 3, 5):
        b = hermitian_basis(d)
        assert len(b) == d * d
        assert np.allclose(np.einsum("iab,jab->ij", b, b.conj()), np.eye(d * d), atol=1e-14)
        assert np.allclose(b, np.conj(np.transpose(b, (0, 2, 1))))


def test_swap_is_exact_isometry():
    phi = np.array([0.6, 0.8])
    diag = isometry_diagnostics(swap_operator(2), phi, np.eye(2) / 2)
    # direct algebra: M^e(O) = O and M^d(O) = O / 2, so p_lambda = 1/2
    assert diag.p_lambda == pytest.approx(0.5, abs=1e-14)
    assert diag.epsilon_residual <= 1e-14


def test_residual_shrinks_with_bath():
    means = []
    for i, db in enumerate((8, 32, 128)):
        rng = Seed(12).child(i).generator()
        vals = [isometry_diagnostics(haar_unitary_matrix(2 * db, rng), haar_state_vector(db, rng),
                                     np.eye(2) / 2).epsilon_tilde for _ in range(100)]
        means.append(np.mean(vals))
    assert means[0] > means[1] > means[2]
    # ratio per factor-4 step consistent with 1/d_B scaling
    assert 2 < means[0] / means[1] < 8 and 2 < means[1] / means[2] < 8


def test_cross_purity_decomposition():
    rng = np.random.default_rng(13)
    for _ in range(20):
        u, phi = haar_unitary_matrix(16, rng), haar_state_vector(8, rng)
        psi, g = haar_state_vector(2, rng), rand_density(2, rng)
        diag = isometry_diagnostics(u, phi, g, psi)
        _, p, _ = a_to_c_recovery(u, phi, np.outer(psi, psi.conj()), g)
        assert abs(p - (diag.cross_purity / 2 + orthogonal_leakage(u, phi, g, psi))) <= 1e-10


def test_cross_purity_identity_with_orthogonal_encoding():
    rng = np.random.default_rng(14)
    psi, g = haar_state_vector(2, rng), rand_density(2, rng)
    phi = haar_state_vector(2, rng)
    diag = isometry_diagnostics(swap_operator(2), phi, g, psi)
    _, p, _ = a_to_c_recovery(swap_operator(2), phi, np.outer(psi, psi.conj()), g)
    assert abs(orthogonal_leakage(swap_operator(2), phi, g, psi)) <= 1e-14
    assert abs(p - diag.cross_purity / 2) <= 1e-10


# ---------------------------------------------------------------- C -> A direction

def _bell_columns_unitary():
    cols = np.array([[1, 0, 0, 1], [0, 1, 1, 0]], complex).T / math.sqrt(2)  # U|a>|0>, a = 0, 1
    q, _ = np.linalg.qr(np.hstack([cols, np.eye(4)]))
    u = np.zeros((4, 4), complex)
    u[:, [0, 2]] = cols  # basis index a * d_B + b with b = 0
    rest = q[:, 2:4]
    rest = rest - cols @ (cols.conj().T @ rest)
    rest, _ = np.linalg.qr(rest)
    u[:, [1, 3]] = rest
    return u


def test_teleport_maximally_entangled():
    u = _bell_columns_unitary()
    assert np.allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    rng = np.random.default_rng(15)
    rc = rand_density(2, rng)
    ens = [(1 / math.sqrt(2), np.array([1, 0])), (1 / math.sqrt(2), np.array([0, 1]))]
    out = teleported_state(ens, u, np.array([1, 0]), rc)
    assert np.allclose(out.matrix, rc / 4, atol=1e-12)
    assert teleport_diagnostics(u, np.array([1, 0]), np.array([1, 0])).mu == pytest.approx(0.25)


def test_teleport_without_entanglement():
    rng = np.random.default_rng(16)
    rc = rand_density(2, rng)
    psi = haar_state_vector(2, rng)
    out = teleported_state([(1.0, psi)], np.eye(6), haar_state_vector(3, rng), rc)
    pm = np.outer(psi, psi.conj())
    assert np.allclose(out.matrix, pm * np.vdot(psi, rc @ psi).real, atol=1e-12)
    with pytest.raises(QCoreError):
        teleported_state([(0.5, psi)], np.eye(6), haar_state_vector(3, rng), rc)


def test_teleport_haar_large_bath():
    rng = Seed(17).generator()
    u, phi = haar_unitary_matrix(512, rng), haar_state_vector(256, rng)
    c = haar_state_vector(2, rng)
    rc = np.outer(c, c.conj())
    ens = [(1 / math.sqrt(2), np.array([1, 0])), (1 / math.sqrt(2), np.array([0, 1]))]
    out = teleported_state(ens, u, phi, rc).matrix
    assert uhlmann_fidelity(out / np.trace(out).real, rc) >= 0.9


def test_purity_check_examples():
    assert teleport_purity_check(np.eye(2) / 2, 0.3)
    assert not teleport_purity_check(np.diag([1.0, 0.0]), 0.1)
    assert teleport_purity_check(np.diag([0.55, 0.45]), 0.02)
    with pytest.raises(ValueError):
        teleport_purity_check(np.eye(2) / 2, 1.0)


def test_teleport_diagnostics_mu():
    rng = np.random.default_rng(18)
    d = teleport_diagnostics(haar_unitary_matrix(12, rng), haar_state_vector(4, rng), haar_state_vector(3, rng))
    assert abs(d.mu - d.purity_A / 3) <= 1e-10
    assert abs(d.purity_A - np.real(np.trace(d.rho_tilde_A.matrix @ d.rho_tilde_A.matrix))) <= 1e-12

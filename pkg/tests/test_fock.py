"""Exact lattice checks: CAR algebra, the particle-hole frame, the
correlation decomposition, quasi-bosonic generators, and variational
energies. Everything here is assertable to near machine precision."""

import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from hyfermi import fock
from hyfermi.cutoffs import CutoffConfig
from hyfermi.potentials import (
    EtaFunction,
    RadialPotential,
    periodize_phi,
    solve_scattering,
)

L = 2.0 * math.pi
POT = RadialPotential(kind="square-well", V0=0.4, R=1.0)


def absmax(matrix):
    return fock._abs_max(matrix.tocoo())


@pytest.fixture(scope="module")
def demo():
    lat = fock.build_lattice(L, 1.01, 0.5, 0.5)
    basis = fock.build_basis(lat)
    vhat = fock.vhat_from_potential(lat, POT)
    h = fock.build_hamiltonian(lat, basis, vhat)
    terms = fock.build_corr_terms(lat, basis, vhat)
    return lat, basis, vhat, h, terms


@pytest.fixture(scope="module")
def asym():
    lat = fock.build_lattice(L, 1.01, 0.5, 1.2)
    basis = fock.build_basis(lat)
    vhat = fock.vhat_from_potential(lat, POT)
    h = fock.build_hamiltonian(lat, basis, vhat)
    terms = fock.build_corr_terms(lat, basis, vhat)
    return lat, basis, vhat, h, terms


@pytest.fixture(scope="module")
def generators(demo):
    lat, basis, _, _, _ = demo
    sol = solve_scattering(POT)
    # place the chi crossover across the first shell so both windows act
    cut = CutoffConfig(rho=0.225 ** 4.5)
    psf = periodize_phi(sol, L, cutoff=cut)
    eta = EtaFunction(a=sol.a, epsilon=cut.epsilon, kF_up=lat.kF_up,
                      kF_down=lat.kF_down)
    b1 = fock.build_generator(lat, basis, "B1", phi=psf)
    b2 = fock.build_generator(lat, basis, "B2", eta=eta, cutoff=cut)
    return b1, b2


# ----------------------------------------------------------------- lattice


def test_lattice_counts_and_symmetry():
    lat = fock.build_lattice(L, 1.01, 0.5, 0.5)
    assert len(lat.momenta) == 7
    assert lat.N_up == 1 and lat.N_down == 1
    for n in lat.momenta:
        assert (-n[0], -n[1], -n[2]) in lat.index


def test_lattice_shell_refusal_names_neighbours():
    with pytest.raises(ValueError) as err:
        fock.build_lattice(L, 1.01, 1.0, 0.5)
    msg = str(err.value)
    assert "0.5" in msg and "1.5" in msg


def test_lattice_tiny_ball():
    lat = fock.build_lattice(L, 0.01, 0.005, 0.005)
    assert len(lat.momenta) == 1 and lat.N_up == 1


def test_basis_mode_lookup(demo):
    _, basis, _, _, _ = demo
    assert basis.dimension == 16384
    with pytest.raises(ValueError):
        basis.mode((9, 9, 9), fock.SPIN_UP)


def test_basis_refuses_oversized_lattice():
    lat = fock.build_lattice(L, 1.5, 0.5, 0.5)
    assert len(lat.momenta) == 19
    with pytest.raises(ValueError):
        fock.build_basis(lat)


# --------------------------------------------------------------------- CAR


def test_car_identities(demo):
    _, basis, _, _, _ = demo
    a = fock.mode_operator(basis, (1, 0, 0), fock.SPIN_UP, "annihilate")
    ad = fock.mode_operator(basis, (1, 0, 0), fock.SPIN_UP, "create")
    b = fock.mode_operator(basis, (0, 1, 0), fock.SPIN_DOWN, "annihilate")
    eye = sp.identity(basis.dimension, format="csr")
    assert absmax(a.matrix @ ad.matrix + ad.matrix @ a.matrix - eye) == 0.0
    assert absmax(a.matrix @ b.matrix + b.matrix @ a.matrix) == 0.0
    assert (ad.matrix @ ad.matrix).nnz == 0


def test_vacuum_action(demo):
    _, basis, _, _, _ = demo
    vac = np.zeros(basis.dimension)
    vac[0] = 1.0
    a = fock.mode_operator(basis, (0, 0, 0), fock.SPIN_UP, "annihilate")
    ad = fock.mode_operator(basis, (0, 0, 0), fock.SPIN_UP, "create")
    assert np.all(a.matrix @ vac == 0.0)
    one = ad.matrix @ vac
    assert np.count_nonzero(one) == 1


def test_flag_claims_are_verified(demo):
    _, basis, _, _, _ = demo
    a = fock.mode_operator(basis, (1, 0, 0), fock.SPIN_UP, "annihilate")
    with pytest.raises(ValueError):
        fock.make_operator(basis, a.matrix, hermitian=True)
    with pytest.raises(ValueError):
        fock.make_operator(basis, a.matrix, number_conserving=True)


# ------------------------------------------------------------- Hamiltonian


def test_hamiltonian_flags_and_commutators(demo):
    _, basis, _, h, _ = demo
    assert h.hermitian and h.number_conserving
    for spin in (fock.SPIN_UP, fock.SPIN_DOWN):
        n_s = fock.number_operator(basis, spin)
        assert absmax(h.matrix @ n_s.matrix - n_s.matrix @ h.matrix) < 1e-12


def test_vhat_must_be_reflection_symmetric(demo):
    lat, basis, vhat, _, _ = demo
    bad = dict(vhat)
    key = next(k for k in bad if k != (0, 0, 0))
    bad[key] = bad[key] + 0.1
    with pytest.raises(ValueError):
        fock.build_hamiltonian(lat, basis, bad)


def test_free_ground_state_is_filled_shell(demo, asym):
    lat, basis, vhat, _, _ = demo
    zero = {k: 0.0 for k in vhat}
    h0 = fock.build_hamiltonian(lat, basis, zero)
    assert fock.ground_energy(lat, basis, h0, 1, 1) == pytest.approx(0.0,
                                                                     abs=1e-14)
    lat2, basis2, vhat2, _, _ = asym
    h2 = fock.build_hamiltonian(lat2, basis2, {k: 0.0 for k in vhat2})
    # filling all seven down modes costs the six unit-shell energies
    assert fock.ground_energy(lat2, basis2, h2, 1, 7) == pytest.approx(6.0)


def test_ground_energy_unknown_block(demo):
    lat, basis, _, h, _ = demo
    with pytest.raises(ValueError):
        fock.ground_energy(lat, basis, h, 8, 0)


# --------------------------------------------- particle-hole frame and FFG


def test_ph_transform_unitary(demo):
    lat, basis, _, _, _ = demo
    r = fock.ph_transform(lat, basis)
    eye = sp.identity(basis.dimension, format="csr")
    assert absmax(r.matrix.T @ r.matrix - eye) < 1e-12


def test_ph_vacuum_is_determinant(demo):
    lat, basis, _, _, _ = demo
    r = fock.ph_transform(lat, basis)
    v_ffg = r.matrix.getcol(0).toarray().ravel()
    n_tot = fock.number_operator(basis)
    assert float(v_ffg @ (n_tot.matrix @ v_ffg)) == pytest.approx(2.0)
    assert float(v_ffg[fock.ffg_index(lat, basis)]) > 0.0


def test_ffg_energy_against_wick(demo, asym):
    for lat, basis, vhat, h, _ in (demo, asym):
        e_matrix = fock.ffg_energy(lat, basis, h)
        e_wick = fock.ffg_energy_wick(lat, vhat)
        assert abs(e_matrix - e_wick) <= 1e-12 * max(1.0, abs(e_wick))


# --------------------------------------------------- correlation structure


def test_correlation_identity(demo, asym):
    """Conjugated Hamiltonian minus the correlation decomposition: zero
    off the diagonal, zero on the balanced diagonal, and exactly the
    kinetic imbalance term elsewhere."""
    for lat, basis, _, h, terms in (demo, asym):
        rep = fock.corr_identity_report(lat, basis, h, terms)
        assert rep["offdiagonal"] <= 1e-10
        assert rep["balanced_diagonal"] <= 1e-10
        assert rep["imbalance_fit"] <= 1e-10


def test_q2_ud_dual_route(demo):
    lat, basis, vhat, _, terms = demo
    alt = fock.q2_ud_from_pairs(lat, basis, vhat)
    assert absmax(alt.matrix - terms["Q2_ud"].matrix) < 1e-12


def test_h0_and_q4_nonnegative(demo):
    _, _, _, _, terms = demo
    for key in ("H0", "Q4"):
        m = terms[key].matrix
        lo = eigsh(m, k=1, which="SA", return_eigenvectors=False)[0]
        assert lo > -1e-12


def test_corr_terms_flags(demo):
    _, _, _, _, terms = demo
    for key in ("H0", "X", "Q1", "Q2_par", "Q2_ud", "Q3", "Q4"):
        assert terms[key].hermitian


# -------------------------------------------------- generators and trials


def test_generators_annihilate_vacuum(demo, generators):
    _, basis, _, _, _ = demo
    b1, b2 = generators
    vac = np.zeros(basis.dimension)
    vac[0] = 1.0
    assert np.all(b1.matrix @ vac == 0.0)
    assert np.all(b2.matrix @ vac == 0.0)
    assert b1.matrix.nnz > 0 and b2.matrix.nnz > 0


def test_generator_number_commutator(demo, generators):
    # [N, B - B*] = -4 (B + B*): each term moves four particles
    _, basis, _, _, _ = demo
    n_tot = fock.number_operator(basis)
    for b in generators:
        k = b.matrix - b.matrix.T
        lhs = n_tot.matrix @ k - k @ n_tot.matrix
        rhs = -4.0 * (b.matrix + b.matrix.T)
        assert absmax(lhs - rhs) < 1e-10


def test_generator_needs_matching_box(demo):
    lat, basis, _, _, _ = demo
    sol = solve_scattering(POT)
    psf = periodize_phi(sol, 2.0 * L)
    with pytest.raises(ValueError):
        fock.build_generator(lat, basis, "B1", phi=psf)


def test_exponential_is_unitary(demo, generators):
    _, basis, _, _, _ = demo
    b1, _ = generators
    rng = np.random.default_rng(42)
    w = rng.standard_normal(basis.dimension)
    w /= np.linalg.norm(w)
    k = ((b1.matrix - b1.matrix.T) * 0.7).tocsr()
    out = fock._expm_action(k, w)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-10


def test_trial_state_sector_support(demo, generators):
    """Each generator moves one up pair and one down pair, so the trial
    state lives on per-spin balanced states with total excitation a
    multiple of four."""
    lat, basis, _, _, _ = demo
    b1, b2 = generators
    vec = fock.trial_state(basis, b1, b2, 0.4, 0.3)
    assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-10)
    pu, hu, pd, hd = fock.excitation_counts(lat, basis)
    support = np.abs(vec) > 1e-14
    assert np.all((pu + hu + pd + hd)[support] % 4 == 0)
    assert np.all((pu == hu)[support])
    assert np.all((pd == hd)[support])


def test_sector_orthogonal_terms_vanish_on_trials(demo, generators):
    _, basis, _, _, terms = demo
    b1, b2 = generators
    vec = fock.trial_state(basis, b1, b2, 0.4, 0.3)
    for key in ("Q2_par", "Q3"):
        val = float(vec @ (terms[key].matrix @ vec))
        assert abs(val) <= 1e-12


def test_trial_energy_zero_at_origin(demo, generators):
    lat, basis, _, _, terms = demo
    b1, b2 = generators
    assert abs(fock.trial_energy(lat, basis, terms, b1, b2, 0.0, 0.0)) \
        < 1e-14


def test_variational_bound_on_grid(demo, generators):
    lat, basis, _, h, terms = demo
    b1, b2 = generators
    e_ffg = fock.ffg_energy(lat, basis, h)
    e_ground = fock.ground_energy(lat, basis, h, lat.N_up, lat.N_down)
    best = math.inf
    for l1 in np.linspace(-0.5, 0.5, 5):
        for l2 in np.linspace(-0.5, 0.5, 5):
            e = e_ffg + fock.trial_energy(lat, basis, terms, b1, b2,
                                          float(l1), float(l2))
            assert e >= e_ground - 1e-10
            best = min(best, e)
    # correlations must beat the bare determinant somewhere on the grid
    assert best < e_ffg


def test_excitation_counts_on_determinant(demo):
    lat, basis, _, _, _ = demo
    counts = fock.excitation_counts(lat, basis)
    for arr in counts:
        assert arr[0] == 0  # vacuum of the correlation frame
    up_zero = basis.mode((0, 0, 0), fock.SPIN_UP)
    hole_state = 1 << up_zero
    pu, hu, pd, hd = (arr[hole_state] for arr in counts)
    assert (pu, hu, pd, hd) == (0, 1, 0, 0)

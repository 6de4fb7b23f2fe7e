import math
import warnings

import numpy as np
import pytest

from kerrkit.fock import ModeLayout, destroy
from kerrkit.model import (SIGMA_Z, SingularityError, SystemParams, cat_amplitude,
                           cat_normalization, cat_vector, cd_coupling, cd_rate, cd_unitary,
                           derived_params, h_cd, h_coupled, h_kcq_matrix, h_projected_interaction,
                           kcq_pauli_matrix, paper_params, projected_number, rabi_rate, well_projectors)

from oracles import cat_mean_photon, cat_mean_photon_first_order, coherent_vector


@pytest.mark.parametrize("a2", [0.25, 1.0, 4.0, 7.0])
def test_cat_photon_numbers(a2):
    alpha = math.sqrt(a2)
    dim = 60
    n = np.arange(dim)
    for variant, sign in (("plus", 1), ("minus", -1)):
        v = cat_vector(dim, alpha, variant)
        assert np.isclose(np.linalg.norm(v), 1)
        assert abs(np.sum(n * np.abs(v) ** 2) - cat_mean_photon(a2, sign)) < 1e-9


def test_projected_number_matches_closed_form():
    pn = projected_number(2.0)
    assert np.isclose(pn.exact_plus, cat_mean_photon(4.0, 1))
    assert np.isclose(pn.exact_minus, cat_mean_photon(4.0, -1))
    assert abs(cat_mean_photon_first_order(4.0, 1) - cat_mean_photon(4.0, 1)) < 2e-6


def test_odd_cat_at_zero_amplitude_is_one_photon():
    v = cat_vector(10, 0.0, "minus")
    assert np.isclose(abs(v[1]), 1)


def test_cat_basis_paulis():
    dim, alpha = 30, 2.0
    cp, cm = cat_vector(dim, alpha, "plus"), cat_vector(dim, alpha, "minus")
    sx = kcq_pauli_matrix(dim, alpha, "x")
    assert np.isclose(np.vdot(cp, sx @ cp), 1)
    assert np.isclose(np.vdot(cm, sx @ cm), -1)
    # +Z = (C+ + C-)/sqrt2 lies in the right well
    plus_z = (cp + cm) / math.sqrt(2)
    assert abs(np.vdot(coherent_vector(dim, alpha), plus_z)) ** 2 > 0.999
    P, M = well_projectors(dim, alpha)
    assert np.isclose(np.vdot(plus_z, P @ plus_z).real, 1)
    assert abs(np.vdot(plus_z, M @ plus_z)) < 1e-12


def test_kcq_hamiltonian_cat_states_are_degenerate_eigenstates():
    K, a2 = 1.0, 4.0
    dim = 40
    h = h_kcq_matrix(dim, K, K * a2)
    for variant in ("plus", "minus"):
        v = cat_vector(dim, 2.0, variant)
        hv = h @ v
        e = np.vdot(v, hv).real
        assert np.linalg.norm(hv - e * v) < 1e-8
        assert np.isclose(e, K * a2 ** 2)


def test_params_reconcile_and_scale():
    p = SystemParams(alpha=2.0)
    assert np.isclose(p.eps2, 0.93 * 4)
    q = SystemParams(eps2=3.72)
    assert np.isclose(q.alpha, 2.0)
    with pytest.raises(ValueError):
        SystemParams(alpha=2.0, eps2=1.0)
    s = paper_params().scaled(50)
    assert np.isclose(s.K, 0.93 * 50)
    assert np.isclose(s.chi_ab, 2.91 * 50)
    assert np.isclose(s.T1b, 204 / 50)
    assert s.alpha == 2.0
    assert s.omega_a == 3.998
    assert np.isclose(p.rad("K"), 2 * math.pi * 0.93)
    assert np.isclose(p.rad("chi_ab"), 2 * math.pi * 2.91e-3)
    assert np.isclose(p.rad("kappa_a"), 1 / 16)


def test_params_config_roundtrip():
    p = paper_params(g_bs=complex(1.0, 0.5))
    cfg = p.to_config()
    assert cfg["K_MHz"] == 0.93
    assert cfg["g_bs_MHz"] == [1.0, 0.5]
    assert SystemParams.from_config(cfg) == p
    with pytest.raises(KeyError):
        SystemParams.from_config({"K": 1.0})


def test_coupled_hamiltonian_terms():
    lay = ModeLayout.of(("snail", 16), ("storage", 3))
    p = paper_params(K_b=100.0)
    h0 = h_coupled(lay, p)
    h1 = h_coupled(lay, p, ["cross_kerr", "beamsplitter", "kerr_b"])
    assert h1.is_hermitian()
    diff = h1.data - h0.data
    assert np.linalg.norm(diff) > 0
    with pytest.raises(ValueError):
        h_coupled(lay, p, ["nonsense"])
    with pytest.raises(ValueError):
        h_coupled(lay, SystemParams(alpha=2.0), ["beamsplitter"])


def test_projected_interaction_against_numerical_projection():
    alpha, chi, g = 2.0, 0.3, 0.4 + 0.2j
    ds, dc = 40, 4
    cp, cm = cat_vector(ds, alpha, "plus"), cat_vector(ds, alpha, "minus")
    V = np.stack([cp, cm], axis=1)
    a = destroy(ds)
    b = destroy(dc)
    full = np.kron(a.conj().T, g * b) + np.kron(a, np.conj(g) * b.conj().T) \
        - chi * np.kron(a.conj().T @ a, b.conj().T @ b)
    P = np.kron(V, np.eye(dc))
    proj = P.conj().T @ full @ P
    h = h_projected_interaction(alpha, chi, g, dc).data
    assert np.linalg.norm(proj - h) / np.linalg.norm(proj) < 1e-4


def test_cd_hamiltonian_and_coupling():
    alpha = 2.0
    g_bs = 0.3 - 0.1j
    g_cd = cd_coupling(g_bs, alpha)
    # leading-order projected beamsplitter equals the CD Hamiltonian
    h_bs = alpha * (np.kron(SIGMA_Z, g_bs * destroy(6) + np.conj(g_bs) * destroy(6).conj().T))
    assert np.allclose(h_cd(g_cd, 6).data, h_bs)
    assert np.isclose(cd_rate(g_bs, alpha), abs(g_cd))
    u = cd_unitary(alpha, 30, 0.8).data
    assert np.allclose(u.conj().T @ u, np.eye(60), atol=1e-8)


def test_rabi_rate_formula():
    assert rabi_rate(0.1, 2.0) == pytest.approx(0.8)
    assert rabi_rate(0.1j, 2.0) == pytest.approx(0.0)


def test_derived_params_guards():
    with pytest.raises(SingularityError):
        derived_params(6.0, 0.1, 50.0, 4000.0, 8000.0, 1.0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        derived_params(6.0, 0.1, 2000.0, 4000.0, 7000.0, 1.0)
    assert any("dispersive" in str(x.message) for x in w)
    d = derived_params(0.0, 0.0, 50.0, 4000.0, 7000.0, 2.0)
    assert d.delta_s == 0.0
    with pytest.raises(SingularityError):
        derived_params(0.0, 0.1, 50.0, 4000.0, 7000.0, 2.0)


def test_cat_amplitude():
    assert np.isclose(cat_amplitude(0.93, 3.72), 2.0)
    assert np.isclose(cat_normalization(2.0, 1) ** -2, 2 * (1 + math.exp(-8)))


def test_cat_paulis_form_an_algebra_on_the_subspace():
    dim, alpha = 40, 2.0
    sx, sy, sz = (kcq_pauli_matrix(dim, alpha, k) for k in "xyz")
    cp, cm = cat_vector(dim, alpha, "plus"), cat_vector(dim, alpha, "minus")
    proj = np.outer(cp, cp.conj()) + np.outer(cm, cm.conj())
    assert np.allclose(sx @ sx + sy @ sy + sz @ sz, 3 * proj, atol=1e-10)
    assert np.allclose(sx @ sy - sy @ sx, 2j * sz, atol=1e-10)


def test_residual_cross_kerr_coefficient_peaks_at_half():
    x = np.linspace(0.01, 3, 300)
    assert abs(x[np.argmax(x * np.exp(-2 * x))] - 0.5) < 0.01

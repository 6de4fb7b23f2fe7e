import math

import numpy as np
import pytest

from kerrkit.fock import (LayoutError, ModeLayout, QuantumState, StateError, TruncationError,
                          check_convergence, check_truncation, coherent_state, default_dim, destroy,
                          displacement_matrix, embed, expectation, fidelity, fock_state, ladder, number,
                          parity, partial_trace, required_dim, tensor_product, thermal_density,
                          thermal_state)

from oracles import coherent_vector


def test_layout_validation_and_lookup():
    lay = ModeLayout.of(("a", 2), ("b", 3))
    assert lay.total_dim == 6
    assert lay.labels == ("a", "b")
    assert lay.dim("b") == 3
    with pytest.raises(LayoutError):
        ModeLayout.of(("a", 2), ("a", 3))
    with pytest.raises(LayoutError):
        ModeLayout.of(("a", 1))
    with pytest.raises(LayoutError):
        lay.index("c")


def test_kron_order_first_mode_leftmost():
    lay = ModeLayout.of(("a", 2), ("b", 3))
    psi = fock_state(lay, "a", 1)
    # |1>_a |0>_b sits at index 1 * 3 + 0
    assert np.argmax(np.abs(psi.data)) == 3
    A = embed(destroy(2), lay, "a").data
    assert np.allclose(A, np.kron(destroy(2), np.eye(3)))


def test_ladder_algebra():
    a = destroy(6)
    comm = a @ a.conj().T - a.conj().T @ a
    # [a, a^dag] = 1 except the truncation corner
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    lay = ModeLayout.of(("m", 6))
    assert np.allclose(np.diag(number(lay, "m").data), np.arange(6))
    assert np.allclose(np.diag(parity(lay, "m").data), [1, -1, 1, -1, 1, -1])
    assert ladder(lay, "m").dag().data.shape == (6, 6)


def test_operator_arithmetic_and_hermiticity():
    lay = ModeLayout.of(("m", 4))
    a = ladder(lay, "m")
    x = a + a.dag()
    assert x.is_hermitian()
    assert not a.is_hermitian()
    assert np.allclose((2 * x / 2).data, x.data)
    assert np.isclose((a.dag() @ a).trace(), 6)
    c = a.commutator(a.dag())
    assert np.isclose(c.data[0, 0], 1)


def test_state_validation():
    lay = ModeLayout.of(("m", 3))
    with pytest.raises(StateError):
        QuantumState(lay, [1.0, 1.0, 0.0])
    with pytest.raises(StateError):
        QuantumState(lay, np.diag([1.2, -0.2, 0.0]))
    ok = QuantumState(lay, np.diag([0.5, 0.5, 0.0]))
    assert ok.kind == "mixed"


def test_truncation_rules():
    assert required_dim(2.0) == 16
    assert default_dim(0) == 16
    assert default_dim(math.sqrt(12)) >= 48
    with pytest.raises(TruncationError) as exc:
        check_truncation(math.sqrt(12), 16)
    assert exc.value.required_dim == 48
    with pytest.raises(TruncationError):
        displacement_matrix(8, 2.0)


def test_coherent_state_matches_closed_form():
    lay = ModeLayout.of(("m", 40))
    psi = coherent_state(lay, "m", 1.5 - 0.5j)
    ref = coherent_vector(40, 1.5 - 0.5j)
    assert abs(abs(np.vdot(ref, psi.data)) - 1) < 1e-10
    assert np.isclose(expectation(number(lay, "m"), psi).real, abs(1.5 - 0.5j) ** 2, atol=1e-9)


def test_displacement_of_vacuum_is_coherent():
    D = displacement_matrix(40, 1.2j)
    vac = np.zeros(40)
    vac[0] = 1
    assert abs(abs(np.vdot(coherent_vector(40, 1.2j), D @ vac)) - 1) < 1e-9


def test_thermal_density_mean():
    rho = thermal_density(60, 0.7)
    assert np.isclose(np.trace(rho), 1)
    assert np.isclose(np.sum(np.arange(60) * np.diag(rho)).real, 0.7, atol=1e-9)
    st = thermal_state(ModeLayout.of(("m", 30)), "m", 0.0)
    assert np.isclose(st.density()[0, 0], 1)


def test_tensor_and_partial_trace_roundtrip():
    la, lb = ModeLayout.of(("a", 3)), ModeLayout.of(("b", 4))
    sa = coherent_state(la, "a", 0.3)
    sb = thermal_state(lb, "b", 0.2)
    joint = tensor_product(sa, sb)
    assert joint.layout.labels == ("a", "b")
    assert np.allclose(partial_trace(joint, ["b"]).density(), sb.density())
    assert np.allclose(partial_trace(joint, ["a"]).density(), sa.density())


def test_fidelity_cases():
    lay = ModeLayout.of(("m", 20))
    p = coherent_state(lay, "m", 1.0)
    assert np.isclose(fidelity(p, p), 1)
    assert np.isclose(fidelity(p, p.to_mixed()), 1)
    m = QuantumState(lay, thermal_density(20, 0.3))
    assert np.isclose(fidelity(m, m), 1, atol=1e-9)
    assert fidelity(fock_state(lay, "m", 0), fock_state(lay, "m", 1)) < 1e-12


def test_convergence_helper():
    chk = check_convergence(lambda d: np.vdot(coherent_vector(d, 1.0), coherent_vector(d, 1.0)), 30)
    assert chk.converged
    assert chk.dim_check == 35

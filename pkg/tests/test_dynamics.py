import math

import numpy as np
import pytest

from kerrkit.dynamics import (CollapseChannel, IntegratorError, PulseSchedule, Segment,
                              TimeDependentHamiltonian, evolve_lindblad, evolve_unitary,
                              fsd_effective_channels, kerr_free_evolution, kerr_loss_evolution,
                              schedule_to_hamiltonian, steady_state, thermal_channels)
from kerrkit.fock import ModeLayout, coherent_state, destroy, fock_state, thermal_density
from kerrkit.model import SystemParams, h_kcq_matrix

from oracles import coherent_vector, kerr_lindblad_oracle


def _single(dim):
    return ModeLayout.of(("m", dim))


def test_rk4_matches_exact_propagation():
    lay = _single(20)
    H = h_kcq_matrix(20, 1.0, 0.5)
    psi0 = coherent_state(lay, "m", 0.8)
    times = np.linspace(0, 2.0, 5)
    a = evolve_unitary(H, psi0, times)
    b = evolve_unitary(H, psi0, times, method="expm")
    for sa, sb in zip(a.states, b.states):
        assert abs(abs(np.vdot(sa.data, sb.data)) - 1) < 1e-9
    assert a.diagnostics["norm_drift"] < 1e-9


def test_time_dependent_cavity_drive_displaces_vacuum():
    lay = ModeLayout.of(("storage", 20))
    sched = PulseSchedule((Segment("cavity_drive", 0.0, 1.0, amplitude=0.1),))
    H = schedule_to_hamiltonian(sched, SystemParams(), lay)
    b = destroy(20)
    tr = evolve_unitary(H, fock_state(lay, "storage", 0), [0.0, 1.0], observables={"b": b})
    assert abs(tr.expectations["b"][-1] - (-1j * 2 * math.pi * 0.1)) < 1e-8


def test_unstable_dt_is_rejected_with_suggestion():
    lay = _single(10)
    H = 50.0 * np.diag(np.arange(10.0))
    with pytest.raises(IntegratorError) as exc:
        evolve_unitary(H, fock_state(lay, "m", 1), [0, 1], dt=0.1)
    assert exc.value.suggested_dt is not None
    assert exc.value.suggested_dt * 450 < 2.5


def test_output_times_validation():
    lay = _single(4)
    with pytest.raises(ValueError):
        evolve_unitary(np.zeros((4, 4)), fock_state(lay, "m", 0), [1.0])
    with pytest.raises(ValueError):
        evolve_unitary(np.zeros((4, 4)), fock_state(lay, "m", 0), [0.0, 1.0, 0.5])


def test_lindblad_amplitude_damping():
    lay = _single(4)
    kappa = 0.7
    ch = [CollapseChannel(destroy(4), kappa, "loss")]
    times = np.linspace(0, 2, 9)
    rho0 = fock_state(lay, "m", 1)
    for method in ("rk4", "expm"):
        tr = evolve_lindblad(np.zeros((4, 4)), ch, rho0, times, method=method)
        p1 = np.array([s.density()[1, 1].real for s in tr.states])
        assert np.allclose(p1, np.exp(-kappa * times), atol=1e-8)
        assert tr.diagnostics["trace_drift"] < 1e-10


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        CollapseChannel(destroy(3), -1.0)
    with pytest.raises(ValueError):
        CollapseChannel(destroy(3), 1.0, "weird")


def test_thermal_steady_state():
    dim = 30
    ch = thermal_channels(destroy(dim), 1.0, 0.3)
    rho = steady_state(np.zeros((dim, dim)), ch)
    assert np.allclose(rho, thermal_density(dim, 0.3), atol=1e-8)


def test_kerr_loss_block_propagator_against_full_master_equation():
    dim = 12
    v = coherent_vector(dim, 0.9)
    rho0 = np.outer(v, v.conj())
    times = np.linspace(0, 1.5, 4)
    ours = kerr_loss_evolution(rho0, 1.3, 0.4, times, delta=0.2)
    ref = kerr_lindblad_oracle(rho0, 1.3, 0.4, times, delta=0.2)
    for a, b in zip(ours, ref):
        assert np.max(np.abs(a - b)) < 1e-8


def test_kerr_free_evolution_revival():
    lay = _single(40)
    psi = coherent_state(lay, "m", 2.0)
    K = 2 * math.pi * 0.93
    out = kerr_free_evolution(psi, K, 0.0, math.pi / K)
    assert abs(np.vdot(psi.data, out.data)) ** 2 > 1 - 1e-12


def test_segment_and_schedule_validation():
    with pytest.raises(ValueError):
        Segment("bogus", 0, 1)
    with pytest.raises(ValueError):
        Segment("squeeze", 0, 0)
    with pytest.raises(ValueError):
        PulseSchedule((Segment("squeeze", 0, 1), Segment("squeeze", 0.5, 1)))
    with pytest.raises(ValueError):
        PulseSchedule((Segment("squeeze", 0, 1), Segment("kerr_free", 0.5, 1)))
    s = PulseSchedule((Segment("squeeze", 0, 1, amplitude=0.5 + 0.1j, envelope="gaussian"),
                       Segment("kerr_free", 1, 0.5)))
    assert s.total_duration == 1.5
    assert PulseSchedule.from_json(s.to_json()) == s


def test_envelopes_are_bounded():
    for env in ("constant", "gaussian", "tanh_ramp", "ramp_up", "ramp_down"):
        seg = Segment("resonant_z", 0.0, 1.0, envelope=env)
        vals = [seg.envelope_value(t) for t in np.linspace(0, 0.999, 50)]
        assert min(vals) >= -1e-12 and max(vals) <= 1 + 1e-12
        assert seg.envelope_value(1.0) == 0.0


def test_time_dependent_norm_bound():
    lay = _single(5)
    H = TimeDependentHamiltonian(lay, np.diag(np.arange(5.0)))
    H.add_term(lambda t: 0.5 * np.cos(t), destroy(5), peak=0.5)
    assert not H.is_static
    assert np.allclose(H(0.3), H(0.3).conj().T)
    assert H.norm_bound() >= np.linalg.norm(H(0.0), 2) - 1e-12


def test_effective_fsd_rates_peak_on_resonance():
    K = 1.0
    h = h_kcq_matrix(20, K, 2.0 * K)
    w = np.sort(np.linalg.eigvalsh(h))[::-1]
    a = destroy(20)
    delta = w[0] - w[2]
    on = fsd_effective_channels(h, a, 0.05, delta, 0.5, n_levels=6)
    off = fsd_effective_channels(h, a, 0.05, delta + 5.0, 0.5, n_levels=6)
    assert max(c.rate for c in on) > 10 * max(c.rate for c in off)


def test_splitting_a_segment_leaves_evolution_unchanged():
    p = SystemParams(alpha=1.0)
    lay = ModeLayout.of(("snail", 12))
    one = PulseSchedule((Segment("squeeze", 0.0, 1.0, amplitude=p.eps2),))
    two = PulseSchedule((Segment("squeeze", 0.0, 0.5, amplitude=p.eps2),
                         Segment("squeeze", 0.5, 0.5, amplitude=p.eps2)))
    a = evolve_unitary(schedule_to_hamiltonian(one, p, lay), fock_state(lay, "snail", 0), [0.0, 1.0])
    b = evolve_unitary(schedule_to_hamiltonian(two, p, lay), fock_state(lay, "snail", 0), [0.0, 1.0])
    assert np.max(np.abs(a.final.data - b.final.data)) < 1e-10

import numpy as np
import pytest

from kerrkit.model import SystemParams, h_kcq_matrix
from kerrkit.spectrum import (SpectrumError, classify_levels, diagonalize, excited_pairs, ground_splitting,
                              kcq_gap, kcq_levels, kcq_spectrum_vs_alpha, stark_shift_per_level,
                              transition_frequencies)

from oracles import FIRST_PAIR_ALPHA_SQ_4, GAP_ALPHA_SQ_4, PAIRS_ALPHA_SQ_7, cat_mean_photon


def test_diagonalize_rejects_non_hermitian():
    with pytest.raises(SpectrumError):
        diagonalize(np.array([[0, 1], [0, 0]]))
    with pytest.raises(SpectrumError):
        diagonalize(np.zeros((2, 3)))


def test_parity_blocks_reproduce_full_spectrum():
    h = h_kcq_matrix(40, 0.93, 0.93 * 3.0)
    full = np.sort(np.linalg.eigvalsh(h))[::-1]
    lv = kcq_levels(0.93, 0.93 * 3.0, 40)
    assert np.allclose(lv.energies, full, atol=1e-10)
    assert lv.excitation[0] == 0


def test_ground_pair_is_cat_pair():
    lv = kcq_levels(0.93, 0.93 * 4.0, 60, n_levels=4)
    assert list(lv.parity[:2]) == [1, -1]
    assert np.isclose(lv.mean_photon[0], cat_mean_photon(4.0, 1), atol=1e-8)
    assert np.isclose(lv.mean_photon[1], cat_mean_photon(4.0, -1), atol=1e-8)


def test_frozen_excitation_energies():
    p = SystemParams()
    assert np.isclose(kcq_gap(p, 4.0), GAP_ALPHA_SQ_4, rtol=1e-9)
    assert np.allclose(excited_pairs(p, 4.0)[0], FIRST_PAIR_ALPHA_SQ_4, rtol=1e-9)
    assert np.allclose(excited_pairs(p, 7.0), PAIRS_ALPHA_SQ_7, rtol=1e-9)


def test_classification_in_and_out_of_wells():
    lv = kcq_levels(1.0, 7.0, 60, n_levels=6)
    cls = classify_levels(lv, np.sqrt(7.0), 1.0)
    assert cls.in_well[:4].all()
    lv0 = kcq_levels(1.0, 0.0, 20, n_levels=4)
    assert not classify_levels(lv0, 0.0, 1.0).in_well[2:].any()


def test_gap_grows_with_cat_size():
    p = SystemParams()
    gaps = [kcq_gap(p, a2, dim=60) for a2 in range(0, 9)]
    assert all(b > a for a, b in zip(gaps, gaps[1:]))


def test_detuning_splits_ground_pair_monotonically():
    K = 0.93
    s = [ground_splitting(K, a2, 0.01 * K, dim=60) for a2 in (0.5, 1.0, 2.0, 3.0)]
    assert all(b < a for a, b in zip(s, s[1:]))
    assert ground_splitting(K, 3.0, 0.0, dim=60) < 1e-3


def test_spectrum_tracking_and_errors():
    p = SystemParams()
    lines = kcq_spectrum_vs_alpha(p, np.linspace(0, 4, 9), n_levels=6, dim=40)
    assert [l.label for l in lines][:3] == ["ground_plus", "ground_minus", "excited(1)"]
    assert np.allclose(lines[0].energies, 0)
    assert (lines[0].parity == 1).all()
    with pytest.raises(SpectrumError):
        kcq_spectrum_vs_alpha(p, [])
    with pytest.raises(SpectrumError):
        kcq_spectrum_vs_alpha(p, [-1.0])


def test_transition_labels():
    rows = transition_frequencies(SystemParams(), [4.0], n_excited=2, dim=60)
    assert {r["from_plus"] for r in rows} == {"parity_preserving", "parity_changing"}


def test_stark_shift_methods_agree():
    p = SystemParams()
    pert = stark_shift_per_level(p, 0, 4.0, dim=60)
    exact = stark_shift_per_level(p, 0, 4.0, method="coupled", dim=60)
    assert np.isclose(pert, -2.91e-3 * cat_mean_photon(4.0, 1), rtol=1e-9)
    assert abs(exact - pert) < 1e-3 * abs(pert)

"""KCQ spectrum versus cat size.

The cat manifold sits at the top of the rotating-frame spectrum of
-K a^dag^2 a^2 + eps2 a^dag^2 + h.c., so levels are reported as excitation
energies E_top - E >= 0 (MHz), the quantity seen in spectroscopy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .fock import Operator, default_dim, displacement_matrix
from .io import write_csv
from .model import SystemParams, h_kcq_matrix

DEGENERACY_TOL = 0.5  # units of |K|
WELL_OVERLAP = 0.5
TIE_TOL = 1e-3  # units of |K|; parity tie-break window for near-degenerate pairs


class SpectrumError(ValueError):
    pass


def diagonalize(H, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix."""
    m = H.data if isinstance(H, Operator) else np.asarray(H, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise SpectrumError("matrix must be square")
    herm = np.max(np.abs(m - m.conj().T), initial=0.0)
    if herm > tol * max(1.0, np.max(np.abs(m), initial=0.0)):
        raise SpectrumError(f"matrix is not Hermitian (max |H - H^dag| = {herm:.3e})")
    return np.linalg.eigh(0.5 * (m + m.conj().T))


@dataclass
class KCQLevels:
    """Parity-resolved KCQ eigenstates, sorted by excitation energy."""

    alpha_sq: float
    excitation: np.ndarray  # same units as K
    energies: np.ndarray
    vectors: np.ndarray  # columns, Fock basis
    parity: np.ndarray
    mean_photon: np.ndarray


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return v * (abs(v[k]) / v[k])


def kcq_levels(K: float, eps2: complex, dim: int | None = None, delta_s: float = 0.0,
               n_levels: int | None = None) -> KCQLevels:
    """Diagonalize the KCQ within each photon-parity sector and merge."""
    alpha_sq = abs(eps2) / abs(K) if K else 0.0
    if dim is None:
        dim = default_dim(math.sqrt(alpha_sq))
    h = h_kcq_matrix(dim, K, complex(eps2)) + delta_s * np.diag(np.arange(dim, dtype=float))
    n = np.arange(dim)
    energies, vectors, parities = [], [], []
    for p, idx in ((1, n[n % 2 == 0]), (-1, n[n % 2 == 1])):
        w, v = np.linalg.eigh(h[np.ix_(idx, idx)])
        for k in range(len(w)):
            full = np.zeros(dim, dtype=complex)
            full[idx] = v[:, k]
            energies.append(w[k])
            vectors.append(_fix_phase(full))
            parities.append(p)
    energies = np.array(energies)
    vectors = np.array(vectors).T
    parities = np.array(parities)
    # top of the spectrum first; exact ties broken by positive parity first
    order = list(np.argsort(-energies, kind="stable"))
    tie = TIE_TOL * max(abs(K), 1e-300)
    for i in range(len(order) - 1):
        a, b = order[i], order[i + 1]
        if abs(energies[a] - energies[b]) <= tie and parities[a] < parities[b]:
            order[i], order[i + 1] = b, a
    order = np.array(order)
    energies, vectors, parities = energies[order], vectors[:, order], parities[order]
    if n_levels is not None:
        energies, vectors, parities = energies[:n_levels], vectors[:, :n_levels], parities[:n_levels]
    excitation = energies.max() - energies
    mean_n = np.real(np.einsum("ik,i,ik->k", vectors.conj(), n.astype(float), vectors))
    return KCQLevels(alpha_sq, excitation, energies, vectors, parities, mean_n)


def well_overlap(levels: KCQLevels, alpha: float, pair_index: int) -> np.ndarray:
    """Weight of each level inside span{D(+-alpha)|m>} for m = pair_index."""
    dim = levels.vectors.shape[0]
    if alpha == 0:
        basis = np.zeros((dim, 1), dtype=complex)
        basis[min(pair_index, dim - 1), 0] = 1.0
    else:
        fock = np.zeros(dim, dtype=complex)
        fock[min(pair_index, dim - 1)] = 1.0
        plus = displacement_matrix(dim, alpha) @ fock
        minus = displacement_matrix(dim, -alpha) @ fock
        basis, _ = np.linalg.qr(np.stack([plus, minus], axis=1))
    proj = basis.conj().T @ levels.vectors
    return np.sum(np.abs(proj) ** 2, axis=0)


@dataclass
class LevelClass:
    in_well: np.ndarray
    parity: np.ndarray
    pair_splitting: np.ndarray
    overlap: np.ndarray


def classify_levels(levels: KCQLevels, alpha: float, K: float, tol: float = DEGENERACY_TOL,
                    overlap_threshold: float = WELL_OVERLAP) -> LevelClass:
    """In-well flags: pair partner degenerate within tol*|K| and localized in the wells."""
    m = len(levels.excitation)
    in_well = np.zeros(m, dtype=bool)
    split = np.full(m, np.nan)
    overlap = np.zeros(m)
    for start in range(0, m - 1, 2):
        pair = slice(start, start + 2)
        s = abs(levels.excitation[start + 1] - levels.excitation[start])
        ov = well_overlap(levels, alpha, start // 2)[pair]
        split[pair] = s
        overlap[pair] = ov
        degenerate = s <= tol * abs(K)
        in_well[pair] = degenerate & (ov > overlap_threshold)
    return LevelClass(in_well, levels.parity.copy(), split, overlap)


@dataclass
class SpectrumLine:
    alpha_sq: np.ndarray
    energies: np.ndarray  # MHz relative to the top of the ground manifold
    label: str
    mean_photon: np.ndarray
    in_well: np.ndarray
    parity: np.ndarray
    ambiguous: np.ndarray = field(default=None)


def _label(k: int) -> str:
    return {0: "ground_plus", 1: "ground_minus"}.get(k, f"excited({k - 1})")


def kcq_spectrum_vs_alpha(params: SystemParams, alpha_sq_grid: Sequence[float], n_levels: int = 6,
                          dim: int | None = None, delta_s: float | None = None,
                          tol: float = DEGENERACY_TOL) -> list[SpectrumLine]:
    """Lowest `n_levels` excitation energies (MHz) tracked across the alpha^2 grid."""
    grid = np.asarray(alpha_sq_grid, dtype=float)
    if grid.size == 0:
        raise SpectrumError("alpha_sq grid is empty")
    if np.any(grid < 0):
        raise SpectrumError("alpha_sq must be non-negative")
    K = params.K
    if dim is None:
        dim = default_dim(math.sqrt(grid.max()))
    ds = params.delta_s if delta_s is None else delta_s
    per_point = []
    for a2 in grid:
        lv = kcq_levels(K, K * a2, dim, ds, n_levels)
        cls = classify_levels(lv, math.sqrt(a2), K, tol)
        per_point.append((lv, cls))

    npts = len(grid)
    m = min(n_levels, per_point[0][0].vectors.shape[1])
    assign = np.zeros((npts, m), dtype=int)
    assign[0] = np.arange(m)
    ambiguous = np.zeros((npts, m), dtype=bool)
    for i in range(1, npts):
        prev = per_point[i - 1][0].vectors[:, assign[i - 1]]
        cur = per_point[i][0].vectors[:, :m]
        ov = np.abs(prev.conj().T @ cur) ** 2
        same = per_point[i - 1][0].parity[assign[i - 1]][:, None] == per_point[i][0].parity[None, :m]
        cost = -np.where(same, ov, -1.0)
        rows, cols = linear_sum_assignment(cost)
        assign[i, rows] = cols
        ambiguous[i, rows] = ov[rows, cols] < 0.5

    lines = []
    for k in range(m):
        idx = assign[:, k]
        lines.append(SpectrumLine(
            alpha_sq=grid.copy(),
            energies=np.array([per_point[i][0].excitation[idx[i]] for i in range(npts)]),
            label=_label(k),
            mean_photon=np.array([per_point[i][0].mean_photon[idx[i]] for i in range(npts)]),
            in_well=np.array([per_point[i][1].in_well[idx[i]] for i in range(npts)]),
            parity=np.array([per_point[i][0].parity[idx[i]] for i in range(npts)]),
            ambiguous=ambiguous[:, k].copy(),
        ))
    return lines


def ground_splitting(K: float, alpha_sq: float, delta_s: float = 0.0, dim: int | None = None) -> float:
    lv = kcq_levels(K, K * alpha_sq, dim, delta_s, 2)
    return float(abs(lv.energies[0] - lv.energies[1]))


def transition_frequencies(params: SystemParams, alpha_sq_grid: Sequence[float], n_excited: int = 4,
                           dim: int | None = None) -> list[dict]:
    """Ground-to-excited detunings (MHz below omega_s/2) with parity-selection labels.

    A transition from |C+> into an even level is parity preserving; from |C+>
    into an odd level it is parity changing. The ground pair is degenerate, so
    both ground states share these detunings with swapped labels.
    """
    grid = np.asarray(alpha_sq_grid, dtype=float)
    if grid.size == 0:
        raise SpectrumError("alpha_sq grid is empty")
    if dim is None:
        dim = default_dim(math.sqrt(grid.max()))
    rows = []
    for a2 in grid:
        lv = kcq_levels(params.K, params.K * a2, dim, params.delta_s, 2 + n_excited)
        for k in range(2, len(lv.excitation)):
            rows.append({
                "alpha_sq": float(a2),
                "level": k,
                "detuning_MHz": float(lv.excitation[k]),
                "parity": int(lv.parity[k]),
                "from_plus": "parity_preserving" if lv.parity[k] > 0 else "parity_changing",
            })
    return rows


def excited_pairs(params: SystemParams, alpha_sq: float, dim: int | None = None) -> list[tuple[float, float]]:
    lv = kcq_levels(params.K, params.K * alpha_sq, dim, params.delta_s, 6)
    return [(float(lv.excitation[k]), float(lv.excitation[k + 1])) for k in (2, 4)]


def kcq_gap(params: SystemParams, alpha_sq: float | None = None, dim: int | None = None) -> float:
    """Gap (MHz) from the ground manifold to the centre of the first excited pair."""
    a2 = params.alpha_sq if alpha_sq is None else alpha_sq
    first = excited_pairs(params, a2, dim)[0]
    return 0.5 * (first[0] + first[1])


def stark_shift_per_level(params: SystemParams, level: int, alpha_sq: float | None = None,
                          method: str = "perturbative", dim: int | None = None,
                          storage_dim: int = 3) -> float:
    """Storage frequency shift (MHz) while the KCQ occupies `level`."""
    a2 = params.alpha_sq if alpha_sq is None else alpha_sq
    chi = params.chi_ab * 1e-3  # MHz
    if dim is None:
        dim = default_dim(math.sqrt(a2))
    lv = kcq_levels(params.K, params.K * a2, dim, params.delta_s, level + 1)
    if method == "perturbative":
        return float(-chi * lv.mean_photon[level])
    if method != "coupled":
        raise ValueError(f"unknown method {method!r}")
    # the cross-Kerr conserves b^dag b: compare the n_b = 1 and n_b = 0 sectors
    h0 = h_kcq_matrix(dim, params.K, params.K * a2) + params.delta_s * np.diag(np.arange(dim, dtype=float))
    na = np.diag(np.arange(dim, dtype=float))
    ref = lv.vectors[:, level]
    sector = []
    for nb in (0, 1):
        w, v = np.linalg.eigh(h0 - chi * nb * na)
        k = int(np.argmax(np.abs(v.conj().T @ ref)))
        sector.append(w[k])
    return float(sector[1] - sector[0])


def spectrum_rows(lines: Sequence[SpectrumLine]) -> list[tuple]:
    rows = []
    for k, line in enumerate(lines):
        for i, a2 in enumerate(line.alpha_sq):
            rows.append((float(a2), k, float(line.energies[i]), float(line.mean_photon[i]),
                         bool(line.in_well[i]), int(line.parity[i])))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


SPECTRUM_HEADER = ("alpha_sq", "level_index", "energy_MHz", "mean_photon", "in_well", "parity")


def write_spectrum_csv(path, lines: Sequence[SpectrumLine]):
    return write_csv(path, SPECTRUM_HEADER, spectrum_rows(lines))

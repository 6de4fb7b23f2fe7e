"""Kerr-cat qubit model: cat states, logical operators and Hamiltonians.

Hamiltonian builders that take explicit rates are unit-agnostic: the result is
in whatever units the rates were given in. Builders that read a
:class:`SystemParams` return angular frequencies in rad/us.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields, replace
from typing import Iterable, NamedTuple

import numpy as np
from scipy.special import gammaln

from .fock import (
    ModeLayout,
    Operator,
    QuantumState,
    _as_layout,
    _single_mode_state,
    check_truncation,
    coherent_amplitudes,
    destroy,
    displacement_matrix,
    embed,
)

TWO_PI = 2.0 * math.pi
ALPHA_ZERO_LIMIT = 1e-4

CAT_VARIANTS = ("plus", "minus", "plus_i", "minus_i", "coh_plus", "coh_minus")


# --- cat states --------------------------------------------------------------


def cat_vector(dim: int, alpha: complex, variant: str = "plus") -> np.ndarray:
    """Single-mode cat-state amplitudes in a `dim`-level Fock space."""
    if variant not in CAT_VARIANTS:
        raise ValueError(f"unknown cat variant {variant!r}; choose from {CAT_VARIANTS}")
    check_truncation(alpha, dim, "cat amplitude")
    alpha = complex(alpha)
    if variant == "coh_plus":
        return coherent_amplitudes(dim, alpha)
    if variant == "coh_minus":
        return coherent_amplitudes(dim, -alpha)
    if variant == "minus" and abs(alpha) < ALPHA_ZERO_LIMIT:
        # odd cat tends to the single-photon state as alpha -> 0
        vec = np.zeros(dim, dtype=complex)
        vec[1] = np.exp(1j * np.angle(alpha)) if alpha != 0 else 1.0
        return vec
    # unnormalized coherent amplitudes keep the relative weights exact
    n = np.arange(dim)
    if alpha == 0:
        plus = np.zeros(dim, dtype=complex)
        plus[0] = 1.0
    else:
        plus = np.exp(n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)) * np.exp(1j * n * np.angle(alpha))
    minus = plus * (-1.0) ** n
    coeff = {"plus": 1.0, "minus": -1.0, "plus_i": 1j, "minus_i": -1j}[variant]
    vec = plus + coeff * minus
    return vec / np.linalg.norm(vec)


def cat_state(layout: ModeLayout, mode: str, alpha: complex, variant: str = "plus") -> QuantumState:
    layout = _as_layout(layout)
    return _single_mode_state(layout, mode, cat_vector(layout.dim(mode), alpha, variant))


def cat_normalization(alpha: float, sign: int) -> float:
    """N_pm = 1/sqrt(2(1 pm exp(-2|alpha|^2)))."""
    return 1.0 / math.sqrt(2.0 * (1.0 + sign * math.exp(-2.0 * abs(alpha) ** 2)))


def _cat_pair(dim: int, alpha: complex) -> tuple[np.ndarray, np.ndarray]:
    return cat_vector(dim, alpha, "plus"), cat_vector(dim, alpha, "minus")


def kcq_pauli_matrix(dim: int, alpha: complex, which: str) -> np.ndarray:
    cp, cm = _cat_pair(dim, alpha)
    pp = np.outer(cp, cp.conj())
    mm = np.outer(cm, cm.conj())
    pm = np.outer(cp, cm.conj())
    mp = np.outer(cm, cp.conj())
    if which == "x":
        return pp - mm
    if which == "y":
        return 1j * pm - 1j * mp
    if which == "z":
        return pm + mp
    raise ValueError(f"which must be 'x', 'y' or 'z', got {which!r}")


def kcq_pauli(layout: ModeLayout, mode: str, alpha: complex, which: str) -> Operator:
    layout = _as_layout(layout)
    return embed(kcq_pauli_matrix(layout.dim(mode), alpha, which), layout, mode)


def cat_projector(layout: ModeLayout, mode: str, alpha: complex) -> Operator:
    layout = _as_layout(layout)
    cp, cm = _cat_pair(layout.dim(mode), alpha)
    proj = np.outer(cp, cp.conj()) + np.outer(cm, cm.conj())
    return embed(proj, layout, mode)


def well_projectors(dim: int, alpha: complex) -> tuple[np.ndarray, np.ndarray]:
    """Projectors onto |+Z> = (C+ + C-)/sqrt2 and |-Z> = (C+ - C-)/sqrt2."""
    cp, cm = _cat_pair(dim, alpha)
    zp = (cp + cm) / math.sqrt(2)
    zm = (cp - cm) / math.sqrt(2)
    return np.outer(zp, zp.conj()), np.outer(zm, zm.conj())


class ProjectedNumber(NamedTuple):
    coeff_identity: float
    coeff_sigma_x: float
    exact_plus: float
    exact_minus: float


def projected_number(alpha: float) -> ProjectedNumber:
    """Exact <C+-|a^dag a|C+-> together with the first-order projected form."""
    if alpha < 0:
        raise ValueError("alpha must be real and non-negative")
    a2 = alpha * alpha
    e = math.exp(-2.0 * a2)
    exact_plus = a2 * math.tanh(a2)
    exact_minus = 1.0 if a2 == 0 else a2 / math.tanh(a2)
    return ProjectedNumber(a2, -2.0 * a2 * e, exact_plus, exact_minus)


# --- Hamiltonians ------------------------------------------------------------


def cat_amplitude(K: float, eps2: complex) -> complex:
    """alpha = sqrt(eps2/K), real and non-negative for real positive eps2/K."""
    if K == 0:
        raise ValueError("cat amplitude undefined for K = 0")
    return complex(np.sqrt(complex(eps2) / K))


def h_kcq_matrix(dim: int, K: float, eps2: complex) -> np.ndarray:
    if eps2 != 0 and K != 0:
        check_truncation(math.sqrt(abs(eps2) / abs(K)), dim, "cat amplitude")
    a = destroy(dim)
    ad = a.conj().T
    a2 = a @ a
    ad2 = ad @ ad
    h = -K * (ad2 @ a2) + eps2 * ad2 + np.conj(eps2) * a2
    return 0.5 * (h + h.conj().T)


def h_kcq(layout: ModeLayout, mode: str, K: float, eps2: complex) -> Operator:
    layout = _as_layout(layout)
    return embed(h_kcq_matrix(layout.dim(mode), K, complex(eps2)), layout, mode)


# --- parameters --------------------------------------------------------------


def _real_if_possible(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else z


# attribute -> (config key, factor taking the stored unit to rad/us or 1/us)
_UNITS = {
    "K": ("K_MHz", TWO_PI),
    "eps2": ("eps2_MHz", TWO_PI),
    "alpha": ("alpha", None),
    "chi_ab": ("chi_ab_kHz", TWO_PI * 1e-3),
    "chi_ar": ("chi_ar_kHz", TWO_PI * 1e-3),
    "g_bs": ("g_bs_MHz", TWO_PI),
    "g_cqr": ("g_cqr_MHz", TWO_PI),
    "g_fsd": ("g_fsd_MHz", TWO_PI),
    "delta_fsd": ("delta_fsd_MHz", TWO_PI),
    "omega_gap": ("omega_gap_MHz", TWO_PI),
    "omega_a": ("omega_a_GHz", TWO_PI * 1e3),
    "omega_b": ("omega_b_GHz", TWO_PI * 1e3),
    "omega_r": ("omega_r_GHz", TWO_PI * 1e3),
    "omega_s": ("omega_s_GHz", TWO_PI * 1e3),
    "g3": ("g3_MHz", TWO_PI),
    "g4": ("g4_MHz", TWO_PI),
    "g": ("g_MHz", TWO_PI),
    "T1a": ("T1a_us", None),
    "T1b": ("T1b_us", None),
    "n_th": ("n_th", None),
    "kappa_r": ("kappa_r_MHz", TWO_PI),
    "K_b": ("K_b_Hz", TWO_PI * 1e-6),
    "delta_s": ("delta_s_MHz", TWO_PI),
    "eps_z": ("eps_z_MHz", TWO_PI),
}

# fields that are rates of the rotating-frame dynamics and scale together
_SCALED = ("K", "eps2", "chi_ab", "chi_ar", "g_bs", "g_cqr", "g_fsd", "delta_fsd",
           "omega_gap", "kappa_r", "K_b", "delta_s", "eps_z")

CONFIG_KEYS = {attr: key for attr, (key, _) in _UNITS.items()}


@dataclass(frozen=True)
class SystemParams:
    """Device and drive parameters, stored as nu = omega/2pi in labeled units."""

    K: float = 0.93  # MHz
    eps2: complex | None = None  # MHz
    alpha: complex | None = None
    chi_ab: float = 2.91  # kHz
    chi_ar: float = 1.51  # kHz
    g_bs: complex | None = None  # MHz
    g_cqr: float | None = None  # MHz
    g_fsd: float | None = None  # MHz
    delta_fsd: float | None = None  # MHz
    omega_gap: float | None = None  # MHz
    omega_a: float = 3.998  # GHz
    omega_b: float = 7.025  # GHz
    omega_r: float = 9.362  # GHz
    omega_s: float = 7.996  # GHz
    g3: float | None = None  # MHz
    g4: float | None = None  # MHz
    g: float | None = None  # MHz
    T1a: float = 16.0  # us
    T1b: float = 204.0  # us
    n_th: float = 0.028
    kappa_r: float = 0.396  # MHz
    K_b: float = 0.0  # Hz
    delta_s: float = 0.0  # MHz
    eps_z: float | None = None  # MHz

    def __post_init__(self):
        if self.T1a <= 0 or self.T1b <= 0:
            raise ValueError("lifetimes must be positive")
        if self.n_th < 0:
            raise ValueError("n_th must be non-negative")
        eps2, alpha = self.eps2, self.alpha
        if eps2 is not None and alpha is None:
            if self.K == 0:
                raise ValueError("K must be non-zero to derive alpha from eps2")
            object.__setattr__(self, "alpha", _real_if_possible(cat_amplitude(self.K, eps2)))
        elif alpha is not None and eps2 is None:
            object.__setattr__(self, "eps2", _real_if_possible(self.K * complex(alpha) ** 2))
        elif alpha is not None and eps2 is not None:
            if self.K == 0:
                raise ValueError("K must be non-zero when alpha is set")
            if not math.isclose(abs(alpha) ** 2, abs(eps2) / abs(self.K), rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(f"alpha^2 = {abs(alpha) ** 2} inconsistent with |eps2|/K = {abs(eps2) / abs(self.K)}")

    @property
    def alpha_sq(self) -> float:
        return 0.0 if self.alpha is None else abs(self.alpha) ** 2

    @property
    def delta_snail_cavity(self) -> float:
        """omega_a - omega_b in GHz."""
        return self.omega_a - self.omega_b

    def with_alpha(self, alpha: float) -> "SystemParams":
        return replace(self, alpha=alpha, eps2=None)

    def rad(self, name: str) -> complex | float | None:
        """Value of `name` converted to rad/us (or 1/us, or unchanged if unitless)."""
        if name == "kappa_a":
            return 1.0 / self.T1a
        if name == "kappa_b":
            return 1.0 / self.T1b
        value = getattr(self, name)
        factor = _UNITS[name][1]
        if value is None or factor is None:
            return value
        return value * factor

    def scaled(self, factor: float) -> "SystemParams":
        """All rotating-frame rates multiplied by `factor`, lifetimes divided.

        Absolute mode frequencies and the bare nonlinearities g3, g4, g only
        enter the static formulas and are left untouched. Since every rate in
        the dynamics scales together, the scaled system is the original one
        with time compressed by `factor`.
        """
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        changes = {}
        for name in _SCALED:
            v = getattr(self, name)
            if v is not None:
                changes[name] = v * factor
        changes["T1a"] = self.T1a / factor
        changes["T1b"] = self.T1b / factor
        changes["alpha"] = self.alpha
        return replace(self, **changes)

    def to_config(self) -> dict:
        out = {}
        for f in fields(self):
            key = CONFIG_KEYS[f.name]
            v = getattr(self, f.name)
            if isinstance(v, complex) or (isinstance(v, np.complexfloating)):
                v = [float(v.real), float(v.imag)] if v.imag != 0 else float(v.real)
            out[key] = v
        return out

    @classmethod
    def from_config(cls, cfg: dict) -> "SystemParams":
        lookup = {key: attr for attr, key in CONFIG_KEYS.items()}
        kwargs = {}
        for key, value in cfg.items():
            if key not in lookup:
                raise KeyError(key)
            if isinstance(value, (list, tuple)):
                value = complex(value[0], value[1])
            kwargs[lookup[key]] = value
        return cls(**kwargs)


def paper_params(**overrides) -> SystemParams:
    """Device values from the characterization table, alpha = 2 operating point."""
    base = dict(alpha=2.0, g_bs=1.8, eps_z=0.4, omega_gap=12.5, delta_fsd=12.5, g3=6.0)
    base.update(overrides)
    return SystemParams(**base)


# --- coupled and projected Hamiltonians -------------------------------------

COUPLED_TERMS = ("delta_s", "kerr_b", "cross_kerr", "beamsplitter")


def _require(params: SystemParams, name: str, term: str):
    v = params.rad(name)
    if v is None:
        raise ValueError(f"term {term!r} needs parameter {name!r}")
    return v


def h_coupled(layout: ModeLayout, params: SystemParams, include: Iterable[str] = (),
              snail: str = "snail", storage: str = "storage") -> Operator:
    """SNAIL + storage Hamiltonian in rad/us with independently toggled terms."""
    layout = _as_layout(layout)
    include = set(include)
    unknown = include - set(COUPLED_TERMS)
    if unknown:
        raise ValueError(f"unknown terms {sorted(unknown)}; choose from {COUPLED_TERMS}")
    K = params.rad("K")
    eps2 = params.rad("eps2") or 0.0
    h = embed(h_kcq_matrix(layout.dim(snail), K, complex(eps2)), layout, snail).data
    a = embed(destroy(layout.dim(snail)), layout, snail).data
    b = embed(destroy(layout.dim(storage)), layout, storage).data
    na = a.conj().T @ a
    nb = b.conj().T @ b
    if "delta_s" in include:
        h = h + _require(params, "delta_s", "delta_s") * na
    if "kerr_b" in include:
        bd = b.conj().T
        h = h - _require(params, "K_b", "kerr_b") * (bd @ bd @ b @ b)
    if "cross_kerr" in include:
        h = h - _require(params, "chi_ab", "cross_kerr") * (na @ nb)
    if "beamsplitter" in include:
        g = complex(_require(params, "g_bs", "beamsplitter"))
        h = h + g * (a.conj().T @ b) + np.conj(g) * (a @ b.conj().T)
    return Operator(layout, 0.5 * (h + h.conj().T))


def _qubit_cavity_layout(cavity_dim: int) -> ModeLayout:
    return ModeLayout((("kcq", 2), ("cavity", cavity_dim)))


SIGMA_X = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_Y = np.array([[0, 1j], [-1j, 0]], dtype=complex)
SIGMA_Z = np.array([[0, 1], [1, 0]], dtype=complex)


def h_projected_interaction(alpha: float, chi_ab: float, g_bs: complex, cavity_dim: int) -> Operator:
    """Beamsplitter and cross-Kerr projected onto the {C+, C-} qubit, first order in e^{-2 alpha^2}."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    layout = _qubit_cavity_layout(cavity_dim)
    e = math.exp(-2.0 * alpha * alpha)
    b = destroy(cavity_dim)
    bd = b.conj().T
    g = complex(g_bs)
    h = alpha * (np.kron(SIGMA_Z, g * b + np.conj(g) * bd)
                 + 1j * e * np.kron(SIGMA_Y, g * b - np.conj(g) * bd))
    h = h - chi_ab * alpha * alpha * np.kron(np.eye(2) - 2 * e * SIGMA_X, bd @ b)
    return Operator(layout, 0.5 * (h + h.conj().T))


def h_cd(g_cd: complex, cavity_dim: int, stark: float = 0.0) -> Operator:
    """i(g b^dag - g* b) sigma_z - stark b^dag b; generates CD(2 g t)."""
    layout = _qubit_cavity_layout(cavity_dim)
    b = destroy(cavity_dim)
    bd = b.conj().T
    g = complex(g_cd)
    h = np.kron(SIGMA_Z, 1j * (g * bd - np.conj(g) * b)) - stark * np.kron(np.eye(2), bd @ b)
    return Operator(layout, 0.5 * (h + h.conj().T))


def cd_coupling(g_bs: complex, alpha: float) -> complex:
    """Complex g_CD for which the projected beamsplitter equals h_cd(g_CD)."""
    return -1j * alpha * np.conj(complex(g_bs))


def cd_unitary(alpha: float, cavity_dim: int, beta: complex) -> Operator:
    """|+Z><+Z| x D(beta/2) + |-Z><-Z| x D(-beta/2) in the {C+, C-} basis."""
    layout = _qubit_cavity_layout(cavity_dim)
    half = complex(beta) / 2
    dp = displacement_matrix(cavity_dim, half)
    dm = displacement_matrix(cavity_dim, -half)
    zp = np.array([1, 1], dtype=complex) / math.sqrt(2)
    zm = np.array([1, -1], dtype=complex) / math.sqrt(2)
    u = np.kron(np.outer(zp, zp), dp) + np.kron(np.outer(zm, zm), dm)
    return Operator(layout, u)


def rabi_rate(eps_z: complex, alpha: float) -> float:
    return float(np.real(4.0 * complex(eps_z) * alpha))


def cd_rate(g_bs: complex, alpha: float) -> float:
    return float(alpha * abs(g_bs))


# --- static formulas ---------------------------------------------------------


class SingularityError(ValueError):
    pass


class DerivedParams(NamedTuple):
    delta_s: float
    K: float
    K_b: float
    chi_ab: float


def derived_params(g3: float, g4: float, g: float, omega_a: float, omega_b: float,
                   eps2: complex, delta_s_override: float | None = None) -> DerivedParams:
    """Fourth-order SNAIL formulas for the static shifts; all inputs in one frequency unit."""
    delta = omega_a - omega_b
    for name, den in (("omega_a - omega_b", delta), ("2 omega_a - omega_b", 2 * omega_a - omega_b),
                      ("2 omega_a + omega_b", 2 * omega_a + omega_b), ("omega_a", omega_a),
                      ("omega_b", omega_b)):
        if den == 0:
            raise SingularityError(f"resonant denominator: {name} = 0")
    ratio2 = (g / delta) ** 2
    if ratio2 > 0.05:
        warnings.warn(f"(g/Delta)^2 = {ratio2:.3g} exceeds 0.05; dispersive expansion unreliable",
                      stacklevel=2)
    K = -6 * g4 + 30 * g3 ** 2 / omega_a
    K_b = -6 * g4 * ratio2 ** 2 + 9 * g3 ** 2 * ratio2 * (
        1 / (2 * omega_a - omega_b) - 1 / (2 * omega_a + omega_b) - 4 / omega_b)
    chi = -24 * g4 * ratio2 + 36 * g3 ** 2 * ratio2 * (
        1 / (2 * omega_a - omega_b) + 1 / (2 * omega_a + omega_b) + 2 / omega_a)
    if delta_s_override is not None:
        delta_s = delta_s_override
    else:
        if g4 == 0:
            first = 0.0
        elif g3 == 0:
            raise SingularityError("delta_s first term divides by g3^2 = 0")
        else:
            first = 24 * g4 / (9 * g3 ** 2)
        delta_s = (first - 9 / omega_a) * eps2 ** 2 if eps2 != 0 else 0.0
        if g3 == 0 and g4 == 0:
            delta_s = 0.0
    return DerivedParams(delta_s, K, K_b, chi)

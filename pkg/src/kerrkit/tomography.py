"""Characteristic-function tomography and Fock-qubit coherence analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fitting import FitResult, fit_exponential, fit_rotating_decay
from .fock import QuantumState, displacement_matrix, partial_trace

SQRT2 = math.sqrt(2.0)
# the four displacements used for Fock-qubit Pauli reconstruction
PAULI_BETAS = (0.0, SQRT2 * 1j, -SQRT2 * 1j, SQRT2 + 0j)

FOCK_PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _mode_density(rho: QuantumState, mode: str | None) -> np.ndarray:
    if len(rho.layout.modes) == 1:
        return rho.density()
    if mode is None:
        raise ValueError("mode must be given for multi-mode states")
    return partial_trace(rho, [mode]).density()


def char_function(rho: QuantumState, mode: str | None, beta: complex) -> complex:
    """C(beta) = Tr(rho D(beta)) on `mode`."""
    r = _mode_density(rho, mode)
    D = displacement_matrix(r.shape[0], complex(beta))
    return complex(np.sum(r * D.T))


def char_function_grid(rho: QuantumState, mode: str | None, betas) -> np.ndarray:
    r = _mode_density(rho, mode)
    betas = np.asarray(betas, dtype=complex)
    out = np.empty(betas.shape, dtype=complex)
    for idx, b in np.ndenumerate(betas):
        out[idx] = np.sum(r * displacement_matrix(r.shape[0], complex(b)).T)
    return out


@dataclass(frozen=True)
class CFSample:
    beta: complex
    value: complex
    shots: int | None = None
    stderr_re: float | None = None
    stderr_im: float | None = None

    @property
    def sampled(self) -> bool:
        return self.shots is not None


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_quadratures(value: complex, shots: int, contrast: float, rng) -> CFSample:
    """Binomial +-1 readout of contrast * value, `shots` shots per quadrature."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if not 0 < contrast <= 1:
        raise ValueError("contrast must lie in (0, 1]")
    rng = rng_from(rng)
    est = []
    err = []
    for m in (contrast * value.real, contrast * value.imag):
        m = min(1.0, max(-1.0, m))
        k = rng.binomial(shots, 0.5 * (1.0 + m))
        mean = (2.0 * k - shots) / shots
        est.append(mean)
        err.append(math.sqrt(max(1.0 - mean * mean, 0.0) / shots))
    return est, err


def sample_cf(rho: QuantumState, mode: str | None, beta: complex, shots: int, contrast: float = 1.0,
              rng_seed=None) -> CFSample:
    """Simulated two-axis readout of C(beta) with shot noise and reduced contrast.

    Each quadrature gets its own budget of `shots` single-shot +-1 outcomes.
    The estimate is unbiased for contrast * C(beta).
    """
    exact = char_function(rho, mode, beta)
    (re, im), (sre, sim) = sample_quadratures(exact, shots, contrast, rng_seed)
    return CFSample(complex(beta), complex(re, im), shots, sre, sim)


# --- Fock-qubit Pauli reconstruction ---------------------------------------

_E = math.e


def pauli_coefficients() -> dict[str, np.ndarray]:
    """Weights w_k so that sum_k w_k C(beta_k) = <sigma> on the {|0>, |1>} span."""
    return {
        "I": np.array([1, 0, 0, 0], dtype=complex),
        "X": np.array([0, _E / (2 * SQRT2 * 1j), -_E / (2 * SQRT2 * 1j), 0], dtype=complex),
        "Y": np.array([0, -0.5j * _E / SQRT2, -0.5j * _E / SQRT2, 1j * _E / SQRT2], dtype=complex),
        "Z": np.array([0, _E / 2, _E / 2, 0], dtype=complex),
    }


def derive_pauli_coefficients(dim: int = 40) -> dict[str, np.ndarray]:
    """Solve sum_k w_k P D(beta_k) P = sigma with numerically projected displacements."""
    M = []
    for b in PAULI_BETAS:
        D = displacement_matrix(dim, b)
        M.append(D[:2, :2].reshape(-1))
    A = np.stack(M, axis=1)
    return {k: np.linalg.solve(A, s.reshape(-1)) for k, s in FOCK_PAULIS.items()}


def pauli_from_cf(c0: complex, c_plus_i: complex, c_minus_i: complex, c_real: complex) -> tuple[float, float, float, float]:
    """(I, X, Y, Z) from C at 0, i sqrt2, -i sqrt2 and sqrt2."""
    c = np.array([c0, c_plus_i, c_minus_i, c_real], dtype=complex)
    w = pauli_coefficients()
    return tuple(float(np.real(w[k] @ c)) for k in ("I", "X", "Y", "Z"))


def pauli_from_state(rho: QuantumState, mode: str | None = None) -> tuple[float, float, float, float]:
    return pauli_from_cf(*(char_function(rho, mode, b) for b in PAULI_BETAS))


@dataclass
class PauliSeries:
    t: np.ndarray
    I: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray

    def __len__(self):
        return len(self.t)

    def rows(self):
        return zip(self.t, self.I, self.X, self.Y, self.Z)


def identity_normalize(series: PauliSeries, threshold: float = 0.1) -> PauliSeries:
    I = np.asarray(series.I, dtype=float)
    if np.any(I < threshold):
        bad = int(np.argmin(I))
        raise ValueError(f"<I> = {I[bad]:.3g} at index {bad} is below {threshold}")
    return PauliSeries(np.asarray(series.t), np.ones_like(I), series.X / I, series.Y / I, series.Z / I)


# --- thermal population and dephasing ---------------------------------------


def thermal_pop_from_width(sigma: float, eps: float = 1e-9) -> float:
    """n_th from the Gaussian width 1/sqrt(2 n_th + 1) of a thermal CF."""
    if not 0 < sigma <= 1 + eps:
        raise ValueError(f"width {sigma} outside (0, 1]")
    return max(0.0, (1.0 / (sigma * sigma) - 1.0) / 2.0)


def thermal_cf_width(n_th: float) -> float:
    return 1.0 / math.sqrt(2.0 * n_th + 1.0)


def thermal_dephasing_rate(n_th: float, kappa_1a: float, chi: float) -> float:
    """Leading-order storage dephasing from thermal SNAIL jumps (n_th << 1)."""
    if n_th < 0:
        raise ValueError("n_th must be non-negative")
    if kappa_1a <= 0:
        raise ValueError("kappa must be positive")
    return n_th * kappa_1a * chi * chi / (kappa_1a * kappa_1a + chi * chi)


def thermal_dephasing_rate_exact(n_th: float, kappa_1a: float, chi: float) -> float:
    """Long-time storage dephasing rate for arbitrary n_th (thermal shot-noise result)."""
    k = kappa_1a
    root = np.sqrt((1 + 1j * chi / k) ** 2 + 4j * chi * n_th / k)
    return float(k / 2 * np.real(root - 1))


def telegraph_dephasing_rate(alpha_sq: float, chi: float, kappa: float) -> float:
    """Fast-switching storage dephasing from loss-driven jumps between the two KCQ cats."""
    x = alpha_sq
    if x == 0:
        return 0.0
    return chi * chi * x * math.sinh(2 * x) / (2 * kappa * math.cosh(2 * x) ** 3)


# --- T1 / T2 extraction ------------------------------------------------------


@dataclass
class CoherenceResult:
    T1: float
    T2: float
    gamma_phi: float
    fit_t1: FitResult
    fit_t2: FitResult

    @property
    def converged(self) -> bool:
        return self.fit_t1.converged and self.fit_t2.converged

    def to_dict(self) -> dict:
        return {"T1": self.T1, "T2": self.T2, "gamma_phi": self.gamma_phi,
                "converged": self.converged,
                "fit_t1": self.fit_t1.to_dict(), "fit_t2": self.fit_t2.to_dict()}


class FitFailure(RuntimeError):
    pass


def extract_t1_t2(series: PauliSeries) -> CoherenceResult:
    """T1 from Z relaxing towards equilibrium, T2 from the joint X + iY envelope."""
    t = np.asarray(series.t, dtype=float)
    if t.size == 0:
        raise ValueError("empty Pauli series")
    z_fit = fit_exponential(t, np.asarray(series.Z, dtype=float))
    xy_fit = fit_rotating_decay(t, np.asarray(series.X) + 1j * np.asarray(series.Y))
    if not z_fit.converged or not xy_fit.converged:
        raise FitFailure(f"fit did not converge (T1: {z_fit.message}; T2: {xy_fit.message})")
    T1 = z_fit["T"]
    T2 = xy_fit["T"]
    return CoherenceResult(T1, T2, 1.0 / T2 - 1.0 / (2.0 * T1), z_fit, xy_fit)

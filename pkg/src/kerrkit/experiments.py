"""Config-driven virtual experiments.

Every experiment takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentReport`. Sweep values, option durations and reported
quantities are in the units of the configured (unscaled) parameter set. With
``param_set="scaled"`` the simulation itself runs with all rates multiplied by
``scale_factor``; since that is an exact compression of time, results are
mapped back before they are reported.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import erf, eval_laguerre

from .dynamics import (CollapseChannel, evolve_lindblad, evolve_unitary, kerr_free_evolution,
                       kerr_loss_evolution, steady_state, thermal_channels)
from .fitting import fit_gaussian, fit_line, fit_rotating_decay
from .fock import (ModeLayout, QuantumState, coherent_amplitudes, default_dim, destroy, displacement_matrix,
                   embed, fock_state, partial_trace, required_dim, thermal_density)
from .model import (TWO_PI, SystemParams, cat_vector, kcq_pauli_matrix, paper_params, rabi_rate,
                    well_projectors, h_kcq_matrix)
from .spectrum import kcq_gap, kcq_levels, transition_frequencies
from .tomography import (PAULI_BETAS, FitFailure, PauliSeries, char_function, extract_t1_t2,
                         identity_normalize, pauli_from_cf, rng_from, sample_cf, sample_quadratures,
                         thermal_dephasing_rate, thermal_pop_from_width)

PARAM_SETS = ("scaled", "paper")
DEFAULT_SCALE = 50.0


class ConfigError(ValueError):
    """Invalid experiment configuration; `field_path` names the offending entry."""

    def __init__(self, message: str, field_path: str | None = None):
        super().__init__(message)
        self.field_path = field_path


# --- seeds and parallel map ---------------------------------------------------


def task_seed(seed: int, path: str) -> int:
    """Stable 64-bit stream seed for task `path` under master `seed`."""
    digest = hashlib.sha256(f"{int(seed)}/{path}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def task_rng(seed: int, path: str) -> np.random.Generator:
    return np.random.default_rng(task_seed(seed, path))


def _map(fn: Callable, tasks: Sequence[tuple], jobs: int = 1) -> list:
    """Ordered map over independent sweep points, optionally in worker processes."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, *zip(*tasks)))


# --- config and report ---------------------------------------------------------


@dataclass
class ExperimentConfig:
    experiment: str
    params: SystemParams = field(default_factory=paper_params)
    numerics: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    shots: int | None = None
    seed: int = 0
    exact: bool = True
    param_set: str = "scaled"
    scale_factor: float = DEFAULT_SCALE

    def __post_init__(self):
        spec = EXPERIMENTS.get(self.experiment)
        if spec is None:
            raise ConfigError(f"unknown experiment {self.experiment!r}", "experiment")
        if self.param_set not in PARAM_SETS:
            raise ConfigError(f"param_set must be one of {PARAM_SETS}", "param_set")
        if not self.scale_factor > 0:
            raise ConfigError("scale_factor must be positive", "scale_factor")
        if not self.exact and (self.shots is None or self.shots < 1):
            raise ConfigError("sampled mode needs shots >= 1", "shots")
        for axis, grid in self.sweep.items():
            if axis not in spec.sweeps:
                raise ConfigError(f"{self.experiment} has no sweep axis {axis!r}", f"sweep.{axis}")
            if len(grid) == 0:
                raise ConfigError(f"sweep grid {axis!r} is empty", f"sweep.{axis}")
        for key in self.options:
            if key not in spec.options:
                raise ConfigError(f"{self.experiment} has no option {key!r}", f"options.{key}")
        for key in self.numerics:
            if key not in NUMERICS_DEFAULTS:
                raise ConfigError(f"unknown numerics entry {key!r}", f"numerics.{key}")

    @property
    def scale(self) -> float:
        return self.scale_factor if self.param_set == "scaled" else 1.0

    def sim_params(self) -> SystemParams:
        return self.params.scaled(self.scale) if self.scale != 1.0 else self.params

    def grid(self, axis: str) -> list:
        if axis in self.sweep:
            return list(self.sweep[axis])
        return list(EXPERIMENTS[self.experiment].sweeps[axis])

    def option(self, key: str):
        if key in self.options:
            return self.options[key]
        return EXPERIMENTS[self.experiment].options[key]

    def num(self, key: str):
        return self.numerics.get(key, NUMERICS_DEFAULTS[key])

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params.to_config(),
            "numerics": dict(self.numerics),
            "sweep": {k: list(v) for k, v in self.sweep.items()},
            "options": dict(self.options),
            "shots": self.shots,
            "seed": self.seed,
            "mode": "exact" if self.exact else "sampled",
            "param_set": self.param_set,
            "scale_factor": self.scale_factor,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        try:
            params = SystemParams.from_config(d.get("params", {})) if "params" in d else paper_params()
        except KeyError as exc:
            raise ConfigError(f"unknown parameter {exc.args[0]!r}", f"params.{exc.args[0]}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "params") from None
        mode = d.get("mode", "exact")
        if mode not in ("exact", "sampled"):
            raise ConfigError("mode must be 'exact' or 'sampled'", "mode")
        return cls(
            experiment=d.get("experiment", ""),
            params=params,
            numerics=dict(d.get("numerics", {})),
            sweep={k: list(v) for k, v in d.get("sweep", {}).items()},
            options=dict(d.get("options", {})),
            shots=d.get("shots"),
            seed=int(d.get("seed", 0)),
            exact=mode == "exact",
            param_set=d.get("param_set", "scaled"),
            scale_factor=float(d.get("scale_factor", DEFAULT_SCALE)),
        )


NUMERICS_DEFAULTS = {
    "dim": None,  # KCQ / single-mode Fock dimension; None -> default rule
    "levels": None,  # retained KCQ eigenlevels for coupled runs
    "readout_dim": 3,
    "dt": None,
    "tolerance": 1e-3,
    "convergence_step": 5,
    "n_points": 61,
}


@dataclass
class Table:
    header: tuple
    rows: list

    def column(self, name: str) -> np.ndarray:
        i = self.header.index(name)
        return np.array([r[i] for r in self.rows])


@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    seed: int
    tables: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    convergence: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)  # wall-clock, never serialized with the results

    @property
    def converged(self) -> bool:
        return all(c["converged"] for c in self.convergence)

    def add_check(self, name: str, point, base: float, check: float, tolerance: float, relative: bool = True):
        diff = abs(check - base)
        err = diff / max(abs(check), 1e-300) if relative else diff
        self.convergence.append({"name": name, "point": point, "value": base, "value_check": check,
                                 "error": err, "relative": relative, "tolerance": tolerance,
                                 "converged": bool(err <= tolerance)})

    def to_dict(self, include_tables: bool = True) -> dict:
        out = {
            "experiment": self.experiment,
            "config": self.config,
            "seed": self.seed,
            "fits": {k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in self.fits.items()},
            "derived": self.derived,
            "convergence": self.convergence,
            "converged": self.converged,
            "failures": self.failures,
        }
        if include_tables:
            out["tables"] = {k: {"header": list(t.header), "rows": [list(r) for r in t.rows]}
                             for k, t in self.tables.items()}
        return out


def _report(config: ExperimentConfig) -> ExperimentReport:
    return ExperimentReport(config.experiment, config.to_dict(), config.seed,
                            derived={"scale_factor": config.scale, "param_set": config.param_set})


# --- shared building blocks ----------------------------------------------------


@dataclass
class KCQBasis:
    """Lowest KCQ eigenlevels; operators expressed in that eigenbasis (rad/us)."""

    h: np.ndarray
    a: np.ndarray
    n: np.ndarray
    excitation: np.ndarray
    parity: np.ndarray

    @property
    def size(self) -> int:
        return self.h.shape[0]


def kcq_basis(K: float, alpha_sq: float, n_levels: int, dim: int | None = None) -> KCQBasis:
    """Truncate the KCQ to its `n_levels` highest-energy (least excited) eigenstates."""
    if dim is None:
        dim = default_dim(math.sqrt(alpha_sq))
    lv = kcq_levels(K, K * alpha_sq, dim, 0.0, n_levels)
    V = lv.vectors
    a = V.conj().T @ destroy(dim) @ V
    n = V.conj().T @ np.diag(np.arange(dim, dtype=float)).astype(complex) @ V
    h = np.diag(lv.energies - lv.energies[0]).astype(complex)
    return KCQBasis(h, a, n, lv.excitation, lv.parity)


def _default_levels(config: ExperimentConfig, fsd: bool) -> int:
    lv = config.num("levels")
    return int(lv) if lv is not None else (6 if fsd else 8)


_FOCK_QUBIT_D = np.array([displacement_matrix(16, b)[:2, :2] for b in PAULI_BETAS])


def fock_qubit_cf(rho2: np.ndarray) -> np.ndarray:
    """C(beta_k) at the four Pauli displacements for a state in span{|0>, |1>}."""
    return np.einsum("ij,kji->k", rho2, _FOCK_QUBIT_D)


def fock_qubit_paulis(rho2: np.ndarray, shots: int | None = None, rng=None) -> tuple:
    c = fock_qubit_cf(rho2)
    if shots is not None:
        c = np.array([complex(*sample_quadratures(v, shots, 1.0, rng)[0]) for v in c])
    return pauli_from_cf(*c)


def _time_grid(duration: float, n_points: int) -> np.ndarray:
    if n_points < 2:
        raise ConfigError("n_points must be >= 2", "numerics.n_points")
    return np.linspace(0.0, duration, int(n_points))


def _sweep_points(config: ExperimentConfig, axes: Sequence[str]) -> list[dict]:
    grids = [config.grid(a) for a in axes]
    return [dict(zip(axes, combo)) for combo in itertools.product(*grids)]


# --- CF tomography ---------------------------------------------------------------

RECIPES = ("vacuum", "coherent", "fock", "fock_superposition", "thermal")


def _recipe(opts: Mapping) -> dict:
    r = dict(opts)
    kind = r.get("kind", "coherent")
    if kind not in RECIPES:
        raise ConfigError(f"recipe kind must be one of {RECIPES}", "options.recipe.kind")
    r["kind"] = kind
    return r


def _complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _recipe_amplitude(r: dict) -> float:
    kind = r["kind"]
    if kind == "coherent":
        return abs(_complex(r.get("eta", 1.0)))
    if kind == "fock":
        return math.sqrt(int(r.get("n", 1)))
    if kind == "fock_superposition":
        return 1.0
    if kind == "thermal":
        return math.sqrt(float(r.get("n_th", 0.1)) * 10 + 1)
    return 0.0


def prepare_state(r: dict, dim: int) -> QuantumState:
    layout = ModeLayout.of(("storage", dim))
    kind = r["kind"]
    if kind == "vacuum":
        return fock_state(layout, "storage", 0)
    if kind == "coherent":
        return QuantumState(layout, coherent_amplitudes(dim, _complex(r.get("eta", 1.0))))
    if kind == "fock":
        return fock_state(layout, "storage", int(r.get("n", 1)))
    if kind == "fock_superposition":
        c = np.zeros(dim, dtype=complex)
        c[0], c[1] = _complex(r.get("c0", 1 / math.sqrt(2))), _complex(r.get("c1", 1j / math.sqrt(2)))
        return QuantumState(layout, c / np.linalg.norm(c))
    return QuantumState(layout, thermal_density(dim, float(r.get("n_th", 0.1))))


def analytic_cf(r: dict, beta: complex) -> complex:
    """Closed-form characteristic function of a preparation recipe."""
    b = complex(beta)
    g = math.exp(-abs(b) ** 2 / 2)
    kind = r["kind"]
    if kind == "vacuum":
        return complex(g)
    if kind == "coherent":
        eta = _complex(r.get("eta", 1.0))
        return g * np.exp(b * eta.conjugate() - b.conjugate() * eta)
    if kind == "fock":
        return complex(g * eval_laguerre(int(r.get("n", 1)), abs(b) ** 2))
    if kind == "fock_superposition":
        c0, c1 = _complex(r.get("c0", 1 / math.sqrt(2))), _complex(r.get("c1", 1j / math.sqrt(2)))
        norm = abs(c0) ** 2 + abs(c1) ** 2
        c0, c1 = c0 / math.sqrt(norm), c1 / math.sqrt(norm)
        return g * (abs(c0) ** 2 + c0 * c1.conjugate() * b - c1 * c0.conjugate() * b.conjugate()
                    + abs(c1) ** 2 * (1 - abs(b) ** 2))
    n_th = float(r.get("n_th", 0.1))
    return complex(math.exp(-(2 * n_th + 1) * abs(b) ** 2 / 2))


def _cf_grid(r, dim, betas):
    rho = prepare_state(r, dim)
    return np.array([char_function(rho, None, b) for b in betas])


def exp_cf_tomography(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    r = _recipe(config.option("recipe"))
    contrast = float(config.option("contrast"))
    re_grid, im_grid = config.grid("beta_re"), config.grid("beta_im")
    betas = [complex(x, y) for y in im_grid for x in re_grid]
    bmax = max(abs(b) for b in betas)
    dim = config.num("dim") or max(default_dim(_recipe_amplitude(r) + bmax), required_dim(bmax))
    exact = _cf_grid(r, dim, betas)
    analytic = np.array([analytic_cf(r, b) for b in betas])
    header = ["beta_re", "beta_im", "re_exact", "im_exact", "re_analytic", "im_analytic"]
    cols = [exact.real, exact.imag, analytic.real, analytic.imag]
    if not config.exact:
        rho = prepare_state(r, dim)
        samples = [sample_cf(rho, None, b, config.shots, contrast, task_rng(config.seed, f"cf/{i}"))
                   for i, b in enumerate(betas)]
        header += ["re_sampled", "im_sampled", "stderr_re", "stderr_im"]
        cols += [np.array([s.value.real for s in samples]), np.array([s.value.imag for s in samples]),
                 np.array([s.stderr_re for s in samples]), np.array([s.stderr_im for s in samples])]
    rows = [(b.real, b.imag, *(float(c[i]) for c in cols)) for i, b in enumerate(betas)]
    rep.tables["cf_grid"] = Table(tuple(header), rows)
    i0 = int(np.argmin(np.abs(betas)))
    rep.derived.update({
        "recipe": r,
        "dim": dim,
        "contrast": contrast,
        "center_value": exact[i0],
        "max_abs_error_vs_analytic": float(np.max(np.abs(exact - analytic))),
    })
    check = _cf_grid(r, dim + config.num("convergence_step"), betas)
    rep.add_check("cf_grid", "full grid", 0.0, float(np.max(np.abs(check - exact))), 1e-6, relative=False)
    return rep


# --- Kerr refocusing ---------------------------------------------------------------


def _which_well(rho: np.ndarray, p_plus: np.ndarray, p_minus: np.ndarray) -> float:
    return float(np.real(np.sum((p_plus - p_minus) * rho.T)))


def _two_branch_fidelity(psi: np.ndarray, alpha: float) -> tuple[float, float]:
    """Best |<cat|psi>|^2 over cats |b> + e^{i phi}|-b> with b = alpha e^{i theta}.

    Returns (fidelity, theta).
    """
    d = psi.size

    def neg(x):
        theta, phi = x
        b = alpha * np.exp(1j * theta)
        plus, minus = coherent_amplitudes(d, b), coherent_amplitudes(d, -b)
        cat = plus + np.exp(1j * phi) * minus
        return -abs(np.vdot(cat, psi)) ** 2 / np.vdot(cat, cat).real

    grid = [(th, ph) for th in np.linspace(0, np.pi, 36, endpoint=False)
            for ph in np.linspace(0, 2 * np.pi, 36, endpoint=False)]
    start = min(grid, key=neg)
    res = minimize(neg, start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    return float(-res.fun), float(res.x[0] % np.pi)


def _refine_peak(f: Callable[[float], float], t0: float, half_width: float) -> tuple[float, float]:
    res = minimize_scalar(lambda t: -f(t), bounds=(t0 - half_width, t0 + half_width), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(-res.fun)


def exp_kerr_refocusing(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    p = config.sim_params()
    s = config.scale
    alpha = float(abs(config.option("alpha") or p.alpha or 2.0))
    K = p.rad("K")
    delta = TWO_PI * float(config.option("delta_MHz")) * s
    kappa = 1.0 / p.T1a if config.option("loss") else 0.0
    n_rev = int(config.option("n_revivals"))
    dim = config.num("dim") or default_dim(alpha)
    layout = ModeLayout.of(("snail", dim))
    psi0 = QuantumState(layout, coherent_amplitudes(dim, alpha))
    p_plus, p_minus = well_projectors(dim, alpha)
    period = math.pi / K

    def lossless(t):
        return kerr_free_evolution(psi0, K, delta, t).data

    psi_m = coherent_amplitudes(dim, -alpha)

    def fid_alpha(t):
        # the revival may return to |alpha> or, with a detuning, to |-alpha>
        v = lossless(t)
        return max(abs(np.vdot(psi0.data, v)) ** 2, abs(np.vdot(psi_m, v)) ** 2)

    def signal_lossless(t):
        v = lossless(t)
        return _which_well(np.outer(v, v.conj()), p_plus, p_minus)

    times = np.linspace(0.0, n_rev * period, int(config.num("n_points")) * n_rev)
    sig0 = np.array([signal_lossless(t) for t in times])
    rho0 = psi0.density()
    lossy = kerr_loss_evolution(rho0, K, kappa, times, delta) if kappa > 0 else None
    sig_loss = np.array([_which_well(r, p_plus, p_minus) for r in lossy]) if lossy else sig0

    # revivals: numerically refined maxima of |which-well| near multiples of pi/K
    width = 0.1 * period
    peaks = []
    for j in range(1, n_rev + 1):
        t_rev, f_rev = _refine_peak(fid_alpha, j * period, width)
        entry = {"index": j, "time_us": t_rev * s, "fidelity_alpha": f_rev,
                 "signal_lossless": signal_lossless(t_rev)}
        if kappa > 0:
            def lossy_abs(t):
                return abs(_which_well(kerr_loss_evolution(rho0, K, kappa, [0.0, t], delta)[1], p_plus, p_minus))
            t_l, v_l = _refine_peak(lossy_abs, t_rev, width)
            entry.update({"time_lossy_us": t_l * s,
                          "signal_lossy": _which_well(kerr_loss_evolution(rho0, K, kappa, [0.0, t_l], delta)[1],
                                                      p_plus, p_minus)})
        peaks.append(entry)
    t_first = peaks[0]["time_us"] / s
    t_cat = t_first / 2
    cat_fid, cat_axis = _two_branch_fidelity(lossless(t_cat), alpha)

    rows = [(t * s, a, b) for t, a, b in zip(times, sig0, sig_loss)]
    rep.tables["which_well"] = Table(("t_us", "signal_lossless", "signal_lossy"), rows)
    rep.tables["revivals"] = Table(tuple(peaks[0].keys()), [tuple(e.values()) for e in peaks])
    rep.derived.update({
        "alpha": alpha,
        "dim": dim,
        "kappa_a_per_us": kappa / s,
        "revival_time_us": t_first * s,
        "cat_time_us": t_cat * s,
        "convention_revival_us": period * s,
        "revival_fidelity": peaks[0]["fidelity_alpha"],
        "cat_fidelity": cat_fid,
        "cat_axis_rad": cat_axis,
        "revivals": peaks,
    })
    psi_c = QuantumState(ModeLayout.of(("snail", dim + config.num("convergence_step"))),
                         coherent_amplitudes(dim + config.num("convergence_step"), alpha))
    v_c = kerr_free_evolution(psi_c, K, delta, t_first).data
    f_check = max(abs(np.vdot(psi_c.data, v_c)) ** 2,
                  abs(np.vdot(coherent_amplitudes(psi_c.data.size, -alpha), v_c)) ** 2)
    rep.add_check("revival_fidelity", "first revival", peaks[0]["fidelity_alpha"], f_check,
                  config.num("tolerance"))
    return rep


# --- Rabi calibration --------------------------------------------------------------


def _rabi_point(K, alpha, eps_rad, phase, dim, duration, n_points):
    a = destroy(dim)
    drive = eps_rad * np.exp(1j * phase)
    h = h_kcq_matrix(dim, K, K * alpha ** 2) + drive * a.conj().T + np.conj(drive) * a
    layout = ModeLayout.of(("snail", dim))
    psi0 = QuantumState(layout, cat_vector(dim, alpha, "plus"))
    sx = kcq_pauli_matrix(dim, alpha, "x")
    sy = kcq_pauli_matrix(dim, alpha, "y")
    times = _time_grid(duration, n_points)
    tr = evolve_unitary(h, psi0, times, observables={"x": sx, "y": sy}, store_states=False, method="expm")
    x, y = tr.expectations["x"].real, tr.expectations["y"].real
    fit = fit_rotating_decay(times, x + 1j * y)
    return times, x, y, fit


def exp_rabi_calibration(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    p = config.sim_params()
    s = config.scale
    K = p.rad("K")
    n_points = int(config.num("n_points"))
    points = _sweep_points(config, ("eps_z_MHz", "alpha", "phase"))
    tasks = []
    for pt in points:
        alpha = float(pt["alpha"])
        eps = TWO_PI * float(pt["eps_z_MHz"]) * s
        nominal = rabi_rate(eps, alpha) or 1.0
        duration = float(config.option("turns")) * TWO_PI / abs(nominal)
        # every phase of a given (eps, alpha) shares the in-phase duration
        dim = config.num("dim") or default_dim(alpha)
        tasks.append((K, alpha, eps, float(pt["phase"]), dim, duration, n_points))
    results = _map(_rabi_point, tasks, jobs)
    series_rows, point_rows = [], []
    for i, (pt, (times, x, y, fit)) in enumerate(zip(points, results)):
        omega = TWO_PI * fit["f"] / s  # rad/us in the configured units
        for t, xv, yv in zip(times, x, y):
            series_rows.append((i, t * s, xv, yv))
        expected = rabi_rate(TWO_PI * float(pt["eps_z_MHz"]), float(pt["alpha"]))
        point_rows.append((i, float(pt["eps_z_MHz"]), float(pt["alpha"]), float(pt["phase"]),
                           omega / TWO_PI, expected / TWO_PI, fit.converged))
        rep.fits[f"point_{i}"] = fit
    rep.tables["rabi_series"] = Table(("point", "t_us", "sigma_x", "sigma_y"), series_rows)
    rep.tables["rabi_points"] = Table(("point", "eps_z_MHz", "alpha", "phase", "omega_MHz",
                                       "formula_MHz", "converged"), point_rows)
    # linear calibrations on in-phase points
    in_phase = [r for r in point_rows if abs(r[3]) < 1e-12]
    slopes_eps, slopes_alpha = {}, {}
    for alpha in sorted({r[2] for r in in_phase}):
        sel = [r for r in in_phase if r[2] == alpha]
        if len(sel) >= 2:
            lf = fit_line([r[1] for r in sel], [r[4] for r in sel])
            slopes_eps[repr(alpha)] = lf.slope
            rep.fits[f"omega_vs_eps_alpha_{alpha}"] = lf
    for eps in sorted({r[1] for r in in_phase}):
        sel = [r for r in in_phase if r[1] == eps]
        if len(sel) >= 2:
            lf = fit_line([r[2] for r in sel], [r[4] for r in sel])
            slopes_alpha[repr(eps)] = lf.slope
            rep.fits[f"omega_vs_alpha_eps_{eps}"] = lf
    rep.derived.update({"slope_vs_eps": slopes_eps, "slope_vs_alpha": slopes_alpha,
                        "max_rel_error_in_phase": max((abs(r[4] - r[5]) / abs(r[5]) for r in in_phase
                                                       if r[5]), default=None)})
    # convergence at the largest alpha in-phase point
    k = max(range(len(points)), key=lambda j: (points[j]["alpha"], points[j]["eps_z_MHz"]))
    t = list(tasks[k])
    t[4] += config.num("convergence_step")
    f_check = _rabi_point(*t)[3]["f"]
    rep.add_check("omega", k, results[k][3]["f"], f_check, config.num("tolerance"))
    return rep


# --- storage coherence -------------------------------------------------------------

HEATING_MODES = ("zero_only", "on", "off")


def _storage_point(p: SystemParams, alpha_sq: float, fsd: bool, heat_n: float, fsd_g: float,
                   fsd_delta: float, levels: int, dim: int | None, readout_dim: int, times: np.ndarray,
                   shots: int | None, seed: int, path: str, frame: float):
    """One coherence run: returns (Pauli series in the Stark frame, KCQ populations)."""
    basis = kcq_basis(p.rad("K"), alpha_sq, levels, dim)
    M = basis.size
    modes = [("snail", M), ("storage", 2)] + ([("readout", readout_dim)] if fsd else [])
    layout = ModeLayout(tuple(modes))
    A = embed(basis.a, layout, "snail").data
    NA = embed(basis.n, layout, "snail").data
    B = embed(destroy(2), layout, "storage").data
    chi = p.rad("chi_ab")
    H = embed(basis.h, layout, "snail").data - chi * NA @ (B.conj().T @ B)
    kappa_a = p.rad("kappa_a")
    channels = thermal_channels(A, kappa_a, heat_n) + [CollapseChannel(B, p.rad("kappa_b"), "loss")]

    sub = ModeLayout(tuple(m for m in modes if m[0] != "storage"))
    hs = embed(basis.h, sub, "snail").data
    As = embed(basis.a, sub, "snail").data
    sub_channels = thermal_channels(As, kappa_a, heat_n)
    if fsd:
        R = embed(destroy(readout_dim), layout, "readout").data
        H = H + fsd_g * (A.conj().T @ R + A @ R.conj().T) - fsd_delta * (R.conj().T @ R)
        channels.append(CollapseChannel(R, p.rad("kappa_r"), "loss"))
        Rs = embed(destroy(readout_dim), sub, "readout").data
        hs = hs + fsd_g * (As.conj().T @ Rs + As @ Rs.conj().T) - fsd_delta * (Rs.conj().T @ Rs)
        sub_channels.append(CollapseChannel(Rs, p.rad("kappa_r"), "loss"))
    if heat_n > 0:
        rho_s = steady_state(hs, sub_channels)
    else:
        rho_s = np.zeros((sub.total_dim,) * 2, dtype=complex)
        rho_s[0, 0] = 1.0
    psi_b = np.array([1.0, 1.0j]) / math.sqrt(2)
    rho_b = np.outer(psi_b, psi_b.conj())
    r_dim = readout_dim if fsd else 1
    rho0 = np.einsum("arbs,xy->axrbys", rho_s.reshape(M, r_dim, M, r_dim), rho_b)
    rho0 = rho0.reshape(layout.total_dim, layout.total_dim)
    tr = evolve_lindblad(H, channels, QuantumState(layout, rho0, check=False), times, method="expm",
                         check_positivity=False)
    rng = task_rng(seed, path) if shots is not None else None
    pauli = []
    for st in tr.states:
        rb = partial_trace(st, ["storage"]).density()
        pauli.append(fock_qubit_paulis(rb, shots, rng))
    I, X, Y, Z = (np.array(c) for c in zip(*pauli))
    # Stark shift tracked in software: rotate X + iY back by chi * alpha^2 * t
    xy = (X + 1j * Y) * np.exp(-1j * frame * times)
    series = PauliSeries(times, I, xy.real, xy.imag, Z)
    pops = np.real(np.diag(partial_trace(QuantumState(layout, rho0, check=False), ["snail"]).density()))
    return series, pops


def _storage_tasks(config: ExperimentConfig, points, levels_extra=0, dim_extra=0):
    p = config.sim_params()
    s = config.scale
    heating = config.option("heating")
    if heating not in HEATING_MODES:
        raise ConfigError(f"heating must be one of {HEATING_MODES}", "options.heating")
    n_heat = config.option("kcq_n_th")
    n_heat = p.n_th if n_heat is None else float(n_heat)
    duration = float(config.option("duration_T1b")) * p.T1b
    times = _time_grid(duration, config.num("n_points"))
    shots = None if config.exact else config.shots
    tasks = []
    for i, pt in enumerate(points):
        a2 = float(pt["alpha_sq"])
        fsd = bool(pt["fsd"])
        pp = p if pt.get("chi_ab_kHz") is None else replace(p, chi_ab=float(pt["chi_ab_kHz"]) * s)
        heat = n_heat if (heating == "on" or (heating == "zero_only" and a2 == 0)) else 0.0
        g = TWO_PI * s * float(config.option("fsd_g_MHz") if config.option("fsd_g_MHz") is not None
                                else (config.params.g_fsd or 0.5))
        det = config.option("fsd_detuning_MHz")
        det_MHz = kcq_gap(pp, a2) if det in (None, "gap") else float(det) * s
        dim = config.num("dim")
        dim = (dim or default_dim(math.sqrt(a2))) + dim_extra
        tasks.append((pp, a2, fsd, heat, g, TWO_PI * det_MHz, _default_levels(config, fsd) + levels_extra,
                      dim, int(config.num("readout_dim")), times, shots, config.seed, f"storage/{i}",
                      pp.rad("chi_ab") * a2))
    return tasks


def _coherence(series: PauliSeries):
    norm = identity_normalize(series) if np.all(series.I > 0.1) else series
    return extract_t1_t2(norm)


def exp_storage_coherence(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    s = config.scale
    axes = ["alpha_sq", "fsd"] + (["chi_ab_kHz"] if "chi_ab_kHz" in config.sweep else [])
    points = _sweep_points(config, axes)
    tasks = _storage_tasks(config, points)
    results = _map(_storage_point, tasks, jobs)
    series_rows, point_rows = [], []
    for i, (pt, task, (series, pops)) in enumerate(zip(points, tasks, results)):
        for row in series.rows():
            series_rows.append((i, row[0] * s, *row[1:]))
        chi_kHz = task[0].chi_ab / s
        excited = float(np.sum(pops[2:]))
        try:
            coh = _coherence(series)
            rep.fits[f"point_{i}_T1"] = coh.fit_t1
            rep.fits[f"point_{i}_T2"] = coh.fit_t2
            T1, T2, gphi, ok = coh.T1 * s, coh.T2 * s, coh.gamma_phi / s, coh.converged
        except (FitFailure, ValueError) as exc:
            rep.failures.append({"point": i, "message": str(exc)})
            T1 = T2 = gphi = math.nan
            ok = False
        point_rows.append((i, float(pt["alpha_sq"]), bool(pt["fsd"]), chi_kHz, task[3], excited,
                           T1, T2, gphi, T2 / (2 * T1) if T1 == T1 else math.nan, ok))
    header = ("point", "alpha_sq", "fsd", "chi_ab_kHz", "heating_n_th", "kcq_excited_initial",
              "T1_us", "T2_us", "gamma_phi_per_us", "T2_over_2T1", "converged")
    rep.tables["coherence"] = Table(header, point_rows)
    rep.tables["pauli_series"] = Table(("point", "t_us", "I", "X", "Y", "Z"), series_rows)
    off = [r for r in point_rows if not r[2] and r[8] == r[8]]
    derived = {"heating": config.option("heating")}
    if off:
        peak = max(off, key=lambda r: r[8])
        derived["peak_alpha_sq"] = peak[1]
        derived["peak_gamma_phi_per_us"] = peak[8]
        derived["gamma_phi"] = {repr(r[1]): r[8] for r in off}
    rep.derived.update(derived)

    # convergence: the largest alpha_sq point (with FSD if present), Fock dim +5 and levels +2
    k = max(range(len(points)), key=lambda j: (points[j]["alpha_sq"], points[j]["fsd"]))
    check_task = _storage_tasks(config, [points[k]], levels_extra=2,
                                dim_extra=config.num("convergence_step"))[0]
    check_task = check_task[:12] + (f"storage/{k}",) + check_task[13:]
    base = point_rows[k]
    try:
        coh = _coherence(_storage_point(*check_task)[0])
        rep.add_check("T1", k, base[6], coh.T1 * s, config.num("tolerance"))
        rep.add_check("T2", k, base[7], coh.T2 * s, config.num("tolerance"))
    except (FitFailure, ValueError) as exc:
        rep.failures.append({"point": k, "message": f"convergence recheck: {exc}"})
        rep.add_check("T2", k, base[7], math.nan, config.num("tolerance"))
    return rep


# --- Stark shift -------------------------------------------------------------------


def _stark_point(p: SystemParams, alpha_sq: float, levels: int, dim: int | None, times: np.ndarray,
                 loss: bool, shots: int | None, seed: int, path: str):
    basis = kcq_basis(p.rad("K"), alpha_sq, levels, dim)
    layout = ModeLayout((("snail", basis.size), ("storage", 2)))
    NA = embed(basis.n, layout, "snail").data
    B = embed(destroy(2), layout, "storage").data
    H = embed(basis.h, layout, "snail").data - p.rad("chi_ab") * NA @ (B.conj().T @ B)
    psi_b = np.array([1.0, 1.0j]) / math.sqrt(2)
    c_plus = np.zeros(basis.size, dtype=complex)
    c_plus[0] = 1.0
    psi0 = np.kron(c_plus, psi_b)
    rng = task_rng(seed, path) if shots is not None else None
    if loss:
        A = embed(basis.a, layout, "snail").data
        ch = [CollapseChannel(A, p.rad("kappa_a")), CollapseChannel(B, p.rad("kappa_b"))]
        tr = evolve_lindblad(H, ch, QuantumState(layout, np.outer(psi0, psi0.conj()), check=False), times,
                             method="expm", check_positivity=False)
    else:
        tr = evolve_unitary(H, QuantumState(layout, psi0), times, method="expm")
    pauli = [fock_qubit_paulis(partial_trace(st, ["storage"]).density(), shots, rng) for st in tr.states]
    I, X, Y, Z = (np.array(c) for c in zip(*pauli))
    fit = fit_rotating_decay(times, X + 1j * Y)
    return X, Y, fit


def _stark_tasks(config, grid, levels_extra=0, dim_extra=0):
    p = config.sim_params()
    chi_MHz = abs(p.chi_ab) * 1e-3
    top = max(max(grid), 1.0)
    duration = config.option("duration_us")
    duration = float(duration) / config.scale if duration is not None else \
        float(config.option("turns")) / (chi_MHz * top) if chi_MHz > 0 else p.T1b
    times = _time_grid(duration, config.num("n_points"))
    shots = None if config.exact else config.shots
    levels = _default_levels(config, False) + levels_extra
    tasks = []
    for i, a2 in enumerate(grid):
        dim = (config.num("dim") or default_dim(math.sqrt(a2))) + dim_extra
        tasks.append((p, float(a2), levels, dim, times, bool(config.option("loss")), shots, config.seed,
                      f"stark/{i}"))
    return tasks


def exp_stark_shift(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    s = config.scale
    grid = [float(v) for v in config.grid("alpha_sq")]
    tasks = _stark_tasks(config, grid)
    results = _map(_stark_point, tasks, jobs)
    series_rows, rows = [], []
    for i, (a2, task, (X, Y, fit)) in enumerate(zip(grid, tasks, results)):
        for t, x, y in zip(task[4], X, Y):
            series_rows.append((i, t * s, x, y))
        rep.fits[f"point_{i}"] = fit
        rows.append((i, a2, fit["f"] * 1e3 / s, fit.converged))
    rep.tables["stark_series"] = Table(("point", "t_us", "X", "Y"), series_rows)
    rep.tables["stark_points"] = Table(("point", "alpha_sq", "rotation_kHz", "converged"), rows)
    lf = fit_line([r[1] for r in rows], [r[2] for r in rows])
    rep.fits["slope"] = lf
    chi_in = config.params.chi_ab
    rep.derived.update({"slope_kHz": lf.slope, "intercept_kHz": lf.intercept, "chi_ab_input_kHz": chi_in,
                        "slope_rel_error": abs(lf.slope - chi_in) / abs(chi_in) if chi_in else abs(lf.slope)})
    k = int(np.argmax(grid))
    check = _stark_tasks(config, grid, 2, config.num("convergence_step"))[k]
    f_check = _stark_point(*check)[2]["f"] * 1e3 / s
    rep.add_check("rotation_kHz", k, rows[k][2], f_check, config.num("tolerance"))
    return rep


# --- spectroscopy ------------------------------------------------------------------


def _probe_point(h: np.ndarray, a: np.ndarray, rho0: np.ndarray, eps: float, f: float, n_periods: int,
                 steps_per_period: int) -> float:
    """Excited population after n_periods of the drive 2 eps cos(2 pi f t)(a + a^dag)."""
    n = h.shape[0]
    if eps == 0:
        return float(np.real(np.trace(rho0[2:, 2:])))
    x = a + a.conj().T
    period = 1.0 / f
    dt = period / steps_per_period

    def gen(t):
        return -1j * (h + 2 * eps * math.cos(TWO_PI * f * t) * x)

    U = np.eye(n, dtype=complex)
    t = 0.0
    for _ in range(steps_per_period):
        k1 = gen(t) @ U
        k2 = gen(t + dt / 2) @ (U + dt / 2 * k1)
        k3 = gen(t + dt / 2) @ (U + dt / 2 * k2)
        k4 = gen(t + dt) @ (U + dt * k3)
        U = U + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    UN = np.linalg.matrix_power(U, n_periods)
    rho = UN @ rho0 @ UN.conj().T
    return float(np.real(np.trace(rho[2:, 2:])))


def _local_peaks(x: np.ndarray, y: np.ndarray, floor: float) -> list[float]:
    out = []
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] > y[i + 1] and y[i] > floor:
            # parabolic refinement on the three bracketing points
            d = y[i - 1] - 2 * y[i] + y[i + 1]
            shift = 0.5 * (y[i - 1] - y[i + 1]) / d if d != 0 else 0.0
            out.append(float(x[i] + shift * (x[i + 1] - x[i])))
    return out


def exp_spectroscopy(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    p = config.params
    grid = [float(v) for v in config.grid("alpha_sq")]
    n_exc = int(config.option("n_excited"))
    lines = transition_frequencies(p, grid, n_exc, config.num("dim"))
    rep.tables["lines"] = Table(("alpha_sq", "level", "detuning_MHz", "parity", "from_plus"),
                                [tuple(r.values()) for r in lines])
    rep.derived["lines"] = {repr(a2): [r["detuning_MHz"] for r in lines if r["alpha_sq"] == a2] for a2 in grid}
    if config.option("probe"):
        eps = TWO_PI * float(config.option("probe_amplitude_MHz"))
        duration = float(config.option("probe_duration_us"))
        freqs = np.array([float(f) for f in config.grid("probe_MHz")])
        levels = _default_levels(config, False)
        rows = []
        matched = {}
        for a2 in grid:
            basis = kcq_basis(TWO_PI * p.K, a2, levels, config.num("dim"))
            # start in one well: both parities of the ground pair are populated
            well = np.zeros(basis.size, dtype=complex)
            well[0] = well[1] = 1 / math.sqrt(2)
            rho0 = np.outer(well, well.conj())
            tasks = [(basis.h, basis.a, rho0, eps, f, max(1, int(round(duration * f))),
                      int(config.option("steps_per_period"))) for f in freqs]
            pops = np.array(_map(_probe_point, tasks, jobs))
            rows += [(a2, f, v) for f, v in zip(freqs, pops)]
            peaks = _local_peaks(freqs, pops, float(config.option("peak_floor")))
            theory = [r["detuning_MHz"] for r in lines if r["alpha_sq"] == a2]
            linewidth = 1.0 / duration
            matched[repr(a2)] = [{"peak_MHz": pk,
                                  "nearest_line_MHz": min(theory, key=lambda v: abs(v - pk)),
                                  "offset_MHz": min(abs(v - pk) for v in theory),
                                  "within_linewidth": min(abs(v - pk) for v in theory) <= linewidth}
                                 for pk in peaks]
        rep.tables["probe"] = Table(("alpha_sq", "probe_MHz", "excited_population"), rows)
        rep.derived["probe_peaks"] = matched
        rep.derived["probe_linewidth_MHz"] = 1.0 / duration
    # convergence of the lines themselves
    dim = config.num("dim") or default_dim(math.sqrt(max(grid)))
    check = transition_frequencies(p, [max(grid)], n_exc, dim + config.num("convergence_step"))
    base = [r["detuning_MHz"] for r in lines if r["alpha_sq"] == max(grid)]
    err = max(abs(a - b["detuning_MHz"]) for a, b in zip(base, check))
    rep.add_check("lines_MHz", max(grid), 0.0, err, config.num("tolerance") * max(base), relative=False)
    return rep


# --- thermal population ------------------------------------------------------------


def _swap_into_storage(n_th: float, dim: int, swap: str, snail_dim: int) -> np.ndarray:
    if swap == "ideal":
        return thermal_density(dim, n_th)
    # 50:50 -> full swap: beamsplitter exp(-i pi/2 (a^dag b + a b^dag)) with the storage in vacuum
    from scipy.linalg import expm

    layout = ModeLayout.of(("snail", snail_dim), ("storage", dim))
    A = embed(destroy(snail_dim), layout, "snail").data
    B = embed(destroy(dim), layout, "storage").data
    U = expm(-1j * (math.pi / 2) * (A.conj().T @ B + A @ B.conj().T))
    vac = np.zeros((dim, dim), dtype=complex)
    vac[0, 0] = 1.0
    rho = U @ np.kron(thermal_density(snail_dim, n_th), vac) @ U.conj().T
    return partial_trace(QuantumState(layout, rho, check=False), ["storage"]).density()


def exp_thermal_population(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    p = config.params
    xs = np.array([float(v) for v in config.grid("beta_re")])
    dim = config.num("dim") or required_dim(np.max(np.abs(xs)))
    swap = config.option("swap")
    if swap not in ("ideal", "beamsplitter"):
        raise ConfigError("swap must be 'ideal' or 'beamsplitter'", "options.swap")
    layout = ModeLayout.of(("storage", dim))
    before = QuantumState(layout, thermal_density(dim, 0.0))
    after = QuantumState(layout, _swap_into_storage(p.n_th, dim, swap, int(config.option("snail_dim"))),
                         check=False)
    cols = {}
    for name, st in (("before", before), ("after", after)):
        vals = np.array([char_function(st, None, x) for x in xs]).real
        if not config.exact:
            rng = task_rng(config.seed, f"thermal/{name}")
            vals = np.array([sample_quadratures(complex(v), config.shots, 1.0, rng)[0][0] for v in vals])
        cols[name] = vals
        rep.fits[f"gaussian_{name}"] = fit_gaussian(xs, vals)
    w_before = rep.fits["gaussian_before"]["sigma"]
    w_after = rep.fits["gaussian_after"]["sigma"]
    ratio = w_after / w_before
    n_inf = thermal_pop_from_width(min(ratio, 1.0))
    sim = config.sim_params()
    g_th = thermal_dephasing_rate(n_inf, sim.rad("kappa_a"), abs(sim.rad("chi_ab"))) / config.scale
    rep.tables["cf_cut"] = Table(("beta_re", "re_cf_before", "re_cf_after"),
                                 list(zip(xs, cols["before"], cols["after"])))
    rep.derived.update({"swap": swap, "width_before": w_before, "width_after": w_after, "width_ratio": ratio,
                        "n_th_input": p.n_th, "n_th_inferred": n_inf, "gamma_phi_th_per_us": g_th,
                        "T_phi_th_ms": 1e-3 / g_th if g_th > 0 else None})
    if swap == "beamsplitter":
        r2 = _swap_into_storage(p.n_th, dim, swap, int(config.option("snail_dim")) + config.num("convergence_step"))
        err = float(np.max(np.abs(r2 - after.density())))
        rep.add_check("swapped_state", "after", 0.0, err, 1e-6, relative=False)
    else:
        st2 = QuantumState(ModeLayout.of(("storage", dim + config.num("convergence_step"))),
                           thermal_density(dim + config.num("convergence_step"), p.n_th))
        err = max(abs(char_function(st2, None, x) - char_function(after, None, x)) for x in xs)
        rep.add_check("cf_after", "cut", 0.0, float(err), 1e-6, relative=False)
    return rep


# --- FSD calibration -----------------------------------------------------------------


def _fsd_point(basis_h, basis_a, rho0_kcq, g, delta, kappa_a, kappa_r, readout_dim, duration):
    M = basis_h.shape[0]
    layout = ModeLayout((("snail", M), ("readout", readout_dim)))
    A = embed(basis_a, layout, "snail").data
    R = embed(destroy(readout_dim), layout, "readout").data
    H = embed(basis_h, layout, "snail").data + g * (A.conj().T @ R + A @ R.conj().T) - delta * (R.conj().T @ R)
    vac = np.zeros((readout_dim, readout_dim), dtype=complex)
    vac[0, 0] = 1.0
    rho0 = QuantumState(layout, np.kron(rho0_kcq, vac), check=False)
    tr = evolve_lindblad(H, [CollapseChannel(A, kappa_a), CollapseChannel(R, kappa_r)], rho0, [0.0, duration],
                         method="expm", store_states=True, check_positivity=False)
    rk = partial_trace(tr.final, ["snail"]).density()
    return float(np.real(np.trace(rk[2:, 2:]))), rk


def _fsd_initial(M: int, p_exc: float) -> np.ndarray:
    diag = np.zeros(M)
    diag[:2] = (1 - p_exc) / 2
    diag[2:4] = p_exc / 2
    return np.diag(diag).astype(complex)


def iq_histogram(weights: Sequence[float], centers: Sequence[complex], sigma: float, edges: np.ndarray,
                 shots: int | None = None, rng=None) -> np.ndarray:
    """2-D I/Q histogram of a Gaussian mixture: expected counts, or sampled if `shots` given."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    n = shots if shots is not None else 1.0
    if shots is None:
        def cdf(x, c):
            return 0.5 * (1 + erf((x - c) / (math.sqrt(2) * sigma)))
        hist = np.zeros((len(edges) - 1, len(edges) - 1))
        for wk, c in zip(w, centers):
            pi = np.diff(cdf(edges, c.real))
            pq = np.diff(cdf(edges, c.imag))
            hist += wk * np.outer(pi, pq)
        return hist * n
    rng = rng_from(rng)
    comp = rng.choice(len(w), size=shots, p=w)
    cs = np.asarray(centers)[comp]
    pts = cs + sigma * (rng.standard_normal(shots) + 1j * rng.standard_normal(shots))
    hist, _, _ = np.histogram2d(pts.real, pts.imag, bins=[edges, edges])
    return hist


def exp_fsd_calibration(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    rep = _report(config)
    p = config.sim_params()
    s = config.scale
    a2 = float(config.option("alpha_sq") if config.option("alpha_sq") is not None else p.alpha_sq)
    levels = _default_levels(config, True)
    basis = kcq_basis(p.rad("K"), a2, levels, config.num("dim"))
    p_exc = float(config.option("initial_excited"))
    rho0 = _fsd_initial(basis.size, p_exc)
    kappa_r = p.rad("kappa_r")
    duration = float(config.option("duration_kappa_r")) / kappa_r
    rd = int(config.num("readout_dim"))
    deltas = [float(v) for v in config.grid("delta_fsd_MHz")]
    gs = [float(v) for v in config.grid("g_fsd_MHz")]
    tasks = [(basis.h, basis.a, rho0, TWO_PI * g * s, TWO_PI * d * s, p.rad("kappa_a"), kappa_r, rd, duration)
             for g in gs for d in deltas]
    results = _map(_fsd_point, tasks, jobs)
    rows = []
    for (g, d), (pe, _) in zip(itertools.product(gs, deltas), results):
        rows.append((d, g, pe))
    rep.tables["fsd_map"] = Table(("delta_fsd_MHz", "g_fsd_MHz", "excited_population"), rows)
    k = int(np.argmin([r[2] for r in rows]))
    d_opt, g_opt, pe_opt = rows[k]
    gap = kcq_gap(config.params, a2)
    resolution = float(np.min(np.diff(sorted(deltas)))) if len(deltas) > 1 else math.inf
    rep.derived.update({
        "alpha_sq": a2, "levels": basis.size, "initial_excited": p_exc, "duration_us": duration * s,
        "optimum_delta_MHz": d_opt, "optimum_g_MHz": g_opt, "optimum_excited": pe_opt,
        "residual_fraction": pe_opt / p_exc if p_exc > 0 else None,
        "gap_MHz": gap, "map_resolution_MHz": resolution,
        "argmin_matches_gap": abs(d_opt - gap) <= resolution,
    })
    # simplified readout histogram at the optimum
    rk = results[k][1]
    plus_z = np.zeros(basis.size, dtype=complex)
    plus_z[:2] = 1 / math.sqrt(2)
    minus_z = plus_z.copy()
    minus_z[1] = -minus_z[1]
    p_plus = float(np.real(np.vdot(plus_z, rk @ plus_z)))
    p_minus = float(np.real(np.vdot(minus_z, rk @ minus_z)))
    q = float(config.option("qnd"))
    weights = [q * p_plus + (1 - q) * p_minus, q * p_minus + (1 - q) * p_plus, pe_opt]
    sep = float(config.option("iq_separation"))
    centers = [complex(sep, 0), complex(-sep, 0), complex(0, sep)]
    edges = np.linspace(-2.5 * sep, 2.5 * sep, int(config.option("iq_bins")) + 1)
    hist = iq_histogram(weights, centers, float(config.option("iq_sigma")), edges,
                        None if config.exact else config.shots, task_rng(config.seed, "fsd/histogram"))
    mids = 0.5 * (edges[1:] + edges[:-1])
    rep.tables["iq_histogram"] = Table(("I", "Q", "counts"),
                                       [(mids[i], mids[j], hist[i, j]) for i in range(len(mids))
                                        for j in range(len(mids))])
    rep.derived["histogram_weights"] = {"plus": weights[0], "minus": weights[1], "excited": weights[2]}
    # convergence at the optimum: more KCQ levels, larger Fock and readout spaces
    dim = (config.num("dim") or default_dim(math.sqrt(a2))) + config.num("convergence_step")
    b2 = kcq_basis(p.rad("K"), a2, levels + 2, dim)
    pe2, _ = _fsd_point(b2.h, b2.a, _fsd_initial(b2.size, p_exc), TWO_PI * g_opt * s, TWO_PI * d_opt * s,
                        p.rad("kappa_a"), kappa_r, rd + 1, duration)
    rep.add_check("optimum_excited", k, pe_opt, pe2, config.num("tolerance"), relative=False)
    return rep


# --- registry ------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    run: Callable[[ExperimentConfig, int], ExperimentReport]
    sweeps: Mapping[str, Sequence]
    options: Mapping[str, object]


EXPERIMENTS: dict[str, ExperimentSpec] = {
    "exp_cf_tomography": ExperimentSpec(
        exp_cf_tomography,
        {"beta_re": list(np.round(np.linspace(-2.5, 2.5, 21), 12)),
         "beta_im": list(np.round(np.linspace(-2.5, 2.5, 21), 12))},
        {"recipe": {"kind": "coherent", "eta": 1.0}, "contrast": 1.0}),
    "exp_kerr_refocusing": ExperimentSpec(
        exp_kerr_refocusing, {},
        {"alpha": None, "delta_MHz": 0.0, "loss": True, "n_revivals": 3}),
    "exp_rabi_calibration": ExperimentSpec(
        exp_rabi_calibration,
        {"eps_z_MHz": [0.02, 0.04, 0.06], "alpha": [1.5, 2.0, 2.5], "phase": [0.0, math.pi / 2]},
        {"turns": 0.75}),
    "exp_storage_coherence": ExperimentSpec(
        exp_storage_coherence,
        {"alpha_sq": [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0], "fsd": [False], "chi_ab_kHz": [None]},
        {"heating": "zero_only", "kcq_n_th": None, "fsd_g_MHz": None, "fsd_detuning_MHz": "gap",
         "duration_T1b": 3.0}),
    "exp_stark_shift": ExperimentSpec(
        exp_stark_shift, {"alpha_sq": [0.0, 3.0, 4.0, 5.0, 6.0]},
        {"duration_us": None, "turns": 1.5, "loss": False}),
    "exp_spectroscopy": ExperimentSpec(
        exp_spectroscopy,
        {"alpha_sq": [4.0, 7.0], "probe_MHz": list(np.round(np.arange(5.0, 45.0, 0.05), 10))},
        {"n_excited": 4, "probe": False, "probe_amplitude_MHz": 0.02, "probe_duration_us": 5.0,
         "steps_per_period": 256, "peak_floor": 0.02}),
    "exp_thermal_population": ExperimentSpec(
        exp_thermal_population, {"beta_re": list(np.round(np.linspace(-3.0, 3.0, 41), 12))},
        {"swap": "ideal", "snail_dim": 8}),
    "exp_fsd_calibration": ExperimentSpec(
        exp_fsd_calibration,
        {"delta_fsd_MHz": list(np.round(np.arange(10.0, 15.0001, 0.25), 10)), "g_fsd_MHz": [0.0, 0.1, 0.25, 0.5]},
        {"alpha_sq": None, "initial_excited": 0.5, "duration_kappa_r": 5.0, "qnd": 0.91,
         "iq_separation": 1.0, "iq_sigma": 0.3, "iq_bins": 24}),
}


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    start = time.perf_counter()
    rep = EXPERIMENTS[config.experiment].run(config, jobs)
    rep.timings["total_s"] = time.perf_counter() - start
    return rep

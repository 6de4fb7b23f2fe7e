"""Unitary and Lindblad time evolution.

Time is in us and Hamiltonians in rad/us. The default integrator is
fixed-step classical RK4. Static generators can instead be propagated exactly
with ``method="expm"``, which is what the long coupled runs use.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from .fock import ModeLayout, Operator, QuantumState, _as_layout, destroy, embed
from .model import TWO_PI, SystemParams, h_kcq_matrix

RK4_STABILITY = 2.5  # |dt * lambda| limit on the imaginary axis (exact bound ~2.83)
DEFAULT_DT_FACTOR = 0.02
MAX_LIOUVILLE_DIM = 80


class IntegratorError(ValueError):
    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


def _mat(op) -> np.ndarray:
    return op.data if isinstance(op, Operator) else np.asarray(op, dtype=complex)


def _spectral_norm(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


# --- Hamiltonians with explicit time dependence -----------------------------


class TimeDependentHamiltonian:
    """H(t) = H0 + sum_k f_k(t) A_k + h.c. of the driven part.

    Each term is (coefficient function, operator); the Hermitian conjugate of
    ``f(t) A`` is added automatically.
    """

    def __init__(self, layout: ModeLayout, static=None, terms=(), breakpoints=()):
        self.layout = layout
        n = layout.total_dim
        self.static = np.zeros((n, n), dtype=complex) if static is None else _mat(static).copy()
        self.terms: list[tuple[Callable[[float], complex], np.ndarray, float]] = []
        for entry in terms:
            self.add_term(*entry)
        self.breakpoints = sorted(set(breakpoints))

    def add_term(self, coeff: Callable[[float], complex], op, peak: float = 1.0):
        self.terms.append((coeff, _mat(op), float(peak)))

    @property
    def is_static(self) -> bool:
        return not self.terms

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for f, op, _ in self.terms:
            c = f(t)
            if c != 0:
                h += c * op + np.conj(c) * op.conj().T
        return h

    def norm_bound(self) -> float:
        bound = _spectral_norm(self.static)
        for _, op, peak in self.terms:
            bound += 2 * abs(peak) * _spectral_norm(op)
        return bound


def _as_generator(H):
    """Return (static matrix or None, callable or None, norm bound, breakpoints)."""
    if isinstance(H, TimeDependentHamiltonian):
        if H.is_static:
            return H.static, None, _spectral_norm(H.static), H.breakpoints
        return None, H, H.norm_bound(), H.breakpoints
    if callable(H) and not isinstance(H, (Operator, np.ndarray)):
        return None, H, None, []
    m = _mat(H)
    return m, None, _spectral_norm(m), []


# --- channels and trajectories -----------------------------------------------


@dataclass(frozen=True)
class CollapseChannel:
    """Dissipator rate * D[L] with D[L]rho = L rho L^dag - {L^dag L, rho}/2."""

    operator: object
    rate: float
    kind: str = "custom"

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"negative rate {self.rate} for {self.kind} channel")
        if self.kind not in ("loss", "gain", "dephasing", "custom"):
            raise ValueError(f"unknown channel kind {self.kind!r}")

    @property
    def matrix(self) -> np.ndarray:
        return _mat(self.operator)


def thermal_channels(op, kappa: float, n_th: float) -> list[CollapseChannel]:
    """Loss at kappa(1+n_th) paired with gain at kappa n_th."""
    a = _mat(op)
    out = [CollapseChannel(a, kappa * (1.0 + n_th), "loss")]
    if n_th > 0:
        out.append(CollapseChannel(a.conj().T, kappa * n_th, "gain"))
    return out


def dephasing_channel(num_op, kappa_phi: float) -> CollapseChannel:
    """Number-operator dephasing; off-diagonal |0><1| decays as exp(-kappa_phi t / 2)."""
    return CollapseChannel(num_op, kappa_phi, "dephasing")


@dataclass
class Trajectory:
    times: np.ndarray
    states: list | None
    expectations: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> QuantumState:
        if not self.states:
            raise ValueError("trajectory recorded observables only")
        return self.states[-1]


def _output_times(t_span) -> np.ndarray:
    times = np.asarray(t_span, dtype=float).ravel()
    if times.size < 2:
        raise ValueError("t_span needs a start and an end time")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


def _choose_dt(dt, norm, times, breakpoints):
    span = times[-1] - times[0]
    if dt is None:
        shortest = span
        pts = sorted(set([times[0], times[-1]] + [b for b in breakpoints if times[0] < b < times[-1]]))
        if len(pts) > 1:
            shortest = min(np.diff(pts))
        candidates = [shortest / 200]
        if norm:
            candidates.append(DEFAULT_DT_FACTOR / norm)
        dt = min(candidates)
    if dt <= 0:
        raise IntegratorError("dt must be positive")
    if norm and dt * norm > RK4_STABILITY:
        suggest = DEFAULT_DT_FACTOR / norm
        raise IntegratorError(
            f"dt = {dt:.3g} us exceeds the RK4 stability bound {RK4_STABILITY / norm:.3g} us "
            f"for generator norm {norm:.3g}; try dt = {suggest:.3g}", suggest)
    return dt


def _observables(observables) -> dict[str, np.ndarray]:
    if not observables:
        return {}
    return {name: _mat(op) for name, op in observables.items()}


def _rk4_advance(f, y, t0, t1, dt, breaks):
    """Classical RK4 from t0 to t1, restarted at every breakpoint inside the interval.

    Within each piece the generator is sampled just inside the endpoints, so a
    segment switching on or off at a breakpoint never leaks into its neighbour.
    """
    pts = [t0] + [b for b in breaks if t0 < b < t1] + [t1]
    steps = 0
    for a, b in zip(pts, pts[1:]):
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        h = (b - a) / n
        eps = 1e-12 * max(abs(b), abs(a), b - a)
        lo, hi = a + eps, b - eps

        def g(t, v):
            return f(min(max(t, lo), hi), v)

        t = a
        for _ in range(n):
            k1 = g(t, y)
            k2 = g(t + h / 2, y + h / 2 * k1)
            k3 = g(t + h / 2, y + h / 2 * k2)
            k4 = g(t + h, y + h * k3)
            y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        steps += n
    return y, steps


# --- unitary evolution -------------------------------------------------------


def evolve_unitary(H, psi0: QuantumState, t_span, dt: float | None = None, observables=None,
                   store_states: bool = True, method: str = "rk4") -> Trajectory:
    """Integrate i d(psi)/dt = H psi; states are recorded at the times in `t_span`."""
    if not psi0.is_pure:
        raise ValueError("evolve_unitary needs a pure initial state")
    times = _output_times(t_span)
    static, td, norm, breaks = _as_generator(H)
    obs = _observables(observables)
    psi = psi0.data.astype(complex).copy()
    layout = psi0.layout

    states = [] if store_states else None
    rec = {k: np.empty(len(times), dtype=complex) for k in obs}
    drift = 0.0
    steps = 0

    def record(i, vec):
        nonlocal drift
        drift = max(drift, abs(np.linalg.norm(vec) - 1.0))
        for k, m in obs.items():
            rec[k][i] = np.vdot(vec, m @ vec)
        if store_states:
            states.append(QuantumState(layout, vec.copy(), check=False))

    record(0, psi)
    if method == "expm":
        if static is None:
            raise IntegratorError("method 'expm' needs a time-independent Hamiltonian")
        # exact for any output grid: propagate each time from t0 in the eigenbasis
        energies, vecs = np.linalg.eigh(0.5 * (static + static.conj().T))
        c0 = vecs.conj().T @ psi
        for i in range(1, len(times)):
            psi = vecs @ (np.exp(-1j * energies * (times[i] - times[0])) * c0)
            record(i, psi)
        used_dt = None
    elif method == "rk4":
        if td is not None and norm is None:
            norm = _spectral_norm(td(times[0]))
        used_dt = _choose_dt(dt, norm, times, breaks)
        if static is not None:
            gen = -1j * static

            def f(_t, v):
                return gen @ v
        else:
            def f(t, v):
                return -1j * (td(t) @ v)

        for i in range(1, len(times)):
            psi, n = _rk4_advance(f, psi, times[i - 1], times[i], used_dt, breaks)
            steps += n
            record(i, psi)
    else:
        raise ValueError(f"unknown method {method!r}")

    span = times[-1] - times[0]
    diag = {"method": method, "dt": used_dt, "steps": steps, "norm_drift": drift,
            "norm_drift_per_us": drift / span if span > 0 else 0.0}
    return Trajectory(times, states, rec, diag)


# --- Lindblad evolution ------------------------------------------------------


def liouvillian(H, channels: Sequence[CollapseChannel]) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    h = _mat(H)
    n = h.shape[0]
    eye = np.eye(n)
    heff = h.astype(complex).copy()
    sup = np.zeros((n * n, n * n), dtype=complex)
    for ch in channels:
        L = ch.matrix
        heff = heff - 0.5j * ch.rate * (L.conj().T @ L)
        sup += ch.rate * np.kron(L, L.conj())
    sup += -1j * np.kron(heff, eye) + 1j * np.kron(eye, heff.conj())
    return sup


def _lindblad_parts(channels):
    jumps = []
    anti = None
    for ch in channels:
        L = ch.matrix
        if ch.rate == 0:
            continue
        jumps.append((ch.rate, L, L.conj().T))
        term = ch.rate * (L.conj().T @ L)
        anti = term if anti is None else anti + term
    return jumps, anti


def evolve_lindblad(H, channels: Sequence[CollapseChannel], rho0: QuantumState, t_span,
                    dt: float | None = None, observables=None, store_states: bool = True,
                    method: str = "rk4", check_positivity: bool = True) -> Trajectory:
    """Integrate the Lindblad master equation; states recorded at the times in `t_span`."""
    for ch in channels:
        if ch.rate < 0:
            raise ValueError("negative rate")
    times = _output_times(t_span)
    static, td, norm, breaks = _as_generator(H)
    obs = _observables(observables)
    rho = rho0.density().astype(complex).copy()
    layout = rho0.layout
    n = rho.shape[0]
    jumps, anti = _lindblad_parts(channels)
    if anti is None:
        anti = np.zeros((n, n), dtype=complex)

    states = [] if store_states else None
    rec = {k: np.empty(len(times), dtype=complex) for k in obs}
    drift = 0.0
    min_eig = np.inf

    def record(i, r):
        nonlocal drift, min_eig
        drift = max(drift, abs(np.trace(r) - 1.0))
        if check_positivity:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()))
        for k, m in obs.items():
            rec[k][i] = np.trace(m @ r)
        if store_states:
            states.append(QuantumState(layout, r.copy(), check=False))

    record(0, rho)
    steps = 0
    if method == "expm":
        if static is None:
            raise IntegratorError("method 'expm' needs a time-independent Hamiltonian")
        if n > MAX_LIOUVILLE_DIM:
            raise IntegratorError(f"dimension {n} too large for a dense Liouvillian (limit {MAX_LIOUVILLE_DIM})")
        sup = liouvillian(static, channels)
        cache: dict[int, np.ndarray] = {}
        # steps equal to 1e-10 of the span share one propagator
        quantum = max(times[-1] - times[0], 1e-300) * 1e-10
        vec = rho.reshape(-1)
        for i in range(1, len(times)):
            key = int(round((times[i] - times[i - 1]) / quantum))
            if key not in cache:
                cache[key] = expm(sup * (times[i] - times[i - 1]))
            vec = cache[key] @ vec
            rho = vec.reshape(n, n)
            record(i, rho)
        used_dt = None
    elif method == "rk4":
        if td is not None and norm is None:
            norm = _spectral_norm(td(times[0]))
        gen_norm = (norm or 0.0) + 0.5 * _spectral_norm(anti) + sum(r * _spectral_norm(L) ** 2 for r, L, _ in jumps)
        used_dt = _choose_dt(dt, gen_norm, times, breaks)

        def rhs(t, r):
            h = static if td is None else td(t)
            heff = h - 0.5j * anti
            out = -1j * (heff @ r) + 1j * (r @ heff.conj().T)
            for rate, L, Ld in jumps:
                out += rate * (L @ r @ Ld)
            return out

        for i in range(1, len(times)):
            rho, m = _rk4_advance(rhs, rho, times[i - 1], times[i], used_dt, breaks)
            steps += m
            record(i, rho)
    else:
        raise ValueError(f"unknown method {method!r}")

    span = times[-1] - times[0]
    diag = {"method": method, "dt": used_dt, "steps": steps, "trace_drift": drift,
            "trace_drift_per_us": drift / span if span > 0 else 0.0,
            "min_eigenvalue": min_eig if check_positivity else None}
    return Trajectory(times, states, rec, diag)


def steady_state(H, channels: Sequence[CollapseChannel]) -> np.ndarray:
    """Null vector of the Liouvillian, normalized to unit trace."""
    h = _mat(H)
    n = h.shape[0]
    sup = liouvillian(h, channels)
    # replace one equation by the trace condition
    a = sup.copy()
    b = np.zeros(n * n, dtype=complex)
    a[0, :] = np.eye(n).reshape(-1)
    b[0] = 1.0
    rho = np.linalg.solve(a, b).reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho)


# --- Kerr free evolution -----------------------------------------------------


def kerr_loss_evolution(rho0: np.ndarray, K: float, kappa: float, times, delta: float = 0.0) -> list[np.ndarray]:
    """Master-equation propagation for H = delta n - K a^dag^2 a^2 with loss kappa D[a].

    H is Fock-diagonal and the loss only couples rho[p, q] to rho[p+1, q+1], so
    every diagonal offset evolves as an independent bidiagonal block that is
    exponentiated exactly.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    times = np.asarray(times, dtype=float)
    n = np.arange(d, dtype=float)
    energy = -K * n * (n - 1) + delta * n
    out = [np.zeros((d, d), dtype=complex) for _ in times]
    for k in range(d):
        m = np.arange(d - k)
        p, q = m + k, m
        gen = np.diag(-1j * (energy[p] - energy[q]) - 0.5 * kappa * (p + q))
        if d - k > 1:
            gen += np.diag(kappa * np.sqrt((p[:-1] + 1) * (q[:-1] + 1)), 1)
        x0 = rho0[p, q]
        for i, t in enumerate(times):
            x = expm(gen * (t - times[0])) @ x0
            out[i][p, q] = x
            if k:
                out[i][q, p] = np.conj(x)
    return out



def kerr_phases(dim: int, K: float, delta: float, t: float) -> np.ndarray:
    n = np.arange(dim, dtype=float)
    return np.exp(1j * (K * n * (n - 1) - delta * n) * t)


def kerr_free_evolution(psi: QuantumState, K: float, delta: float = 0.0, t: float = 0.0) -> QuantumState:
    """Exact propagation under delta a^dag a - K a^dag^2 a^2 for a single-mode state."""
    if len(psi.layout.modes) != 1:
        raise ValueError("kerr_free_evolution acts on single-mode states")
    ph = kerr_phases(psi.layout.total_dim, K, delta, t)
    if psi.is_pure:
        return QuantumState(psi.layout, ph * psi.data, check=False)
    return QuantumState(psi.layout, np.outer(ph, ph.conj()) * psi.data, check=False)


# --- pulse schedules ---------------------------------------------------------

CHANNELS = ("squeeze", "resonant_z", "beamsplitter_storage", "beamsplitter_readout",
            "cavity_drive", "kerr_free")
ENVELOPES = ("constant", "gaussian", "tanh_ramp", "ramp_up", "ramp_down")


@dataclass(frozen=True)
class Segment:
    channel: str
    start: float
    duration: float
    amplitude: complex = 0.0
    envelope: str = "constant"
    detuning: float = 0.0
    phase: float = 0.0
    sigma: float | None = None
    rise: float | None = None

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def envelope_value(self, t: float) -> float:
        tau = t - self.start
        if tau < 0 or tau >= self.duration:
            return 0.0
        d = self.duration
        if self.envelope == "constant":
            return 1.0
        if self.envelope == "gaussian":
            sigma = self.sigma if self.sigma is not None else d / 4
            return math.exp(-((tau - d / 2) ** 2) / (2 * sigma * sigma))
        if self.envelope == "tanh_ramp":
            rise = self.rise if self.rise is not None else d / 8
            half = math.tanh(d / (2 * rise))
            return (math.tanh((tau - d / 2) / rise) + half) / (2 * half)
        if self.envelope == "ramp_up":
            return tau / d
        return 1.0 - tau / d

    def to_dict(self) -> dict:
        out = asdict(self)
        amp = complex(self.amplitude)
        out["amplitude"] = [amp.real, amp.imag]
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "Segment":
        d = dict(d)
        amp = d.get("amplitude", 0.0)
        if isinstance(amp, (list, tuple)):
            d["amplitude"] = complex(amp[0], amp[1])
        return cls(**d)


@dataclass(frozen=True)
class PulseSchedule:
    segments: tuple[Segment, ...] = ()
    total_duration: float | None = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        by_channel: dict[str, list[Segment]] = {}
        for s in segs:
            by_channel.setdefault(s.channel, []).append(s)
        for ch, items in by_channel.items():
            items = sorted(items, key=lambda s: s.start)
            for a, b in zip(items, items[1:]):
                if b.start < a.end - 1e-12:
                    raise ValueError(f"overlapping segments on channel {ch!r}")
        # squeezing is off during kerr_free windows
        for kf in by_channel.get("kerr_free", []):
            for sq in by_channel.get("squeeze", []):
                if sq.start < kf.end - 1e-12 and kf.start < sq.end - 1e-12:
                    raise ValueError("squeeze segment overlaps a kerr_free window")
        end = max((s.end for s in segs), default=0.0)
        if self.total_duration is None:
            object.__setattr__(self, "total_duration", end)
        elif self.total_duration < end - 1e-12:
            raise ValueError("total_duration shorter than the last segment")

    def breakpoints(self) -> list[float]:
        pts = {0.0, float(self.total_duration)}
        for s in self.segments:
            pts.update((s.start, s.end))
        return sorted(pts)

    def to_json(self) -> str:
        return json.dumps({"segments": [s.to_dict() for s in self.segments],
                           "total_duration": self.total_duration}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PulseSchedule":
        d = json.loads(text)
        return cls(tuple(Segment.from_dict(s) for s in d.get("segments", [])), d.get("total_duration"))


DEFAULT_MODES = {"snail": "snail", "storage": "storage", "readout": "readout"}


def _channel_operator(seg: Segment, layout: ModeLayout, modes: Mapping[str, str]) -> np.ndarray | None:
    def mode_op(role):
        label = modes[role]
        if label not in layout.labels:
            raise ValueError(f"channel {seg.channel!r} needs mode {label!r}, absent from layout")
        return embed(destroy(layout.dim(label)), layout, label).data

    if seg.channel == "kerr_free":
        return None
    if seg.channel == "squeeze":
        a = mode_op("snail")
        return a.conj().T @ a.conj().T
    if seg.channel == "resonant_z":
        return mode_op("snail").conj().T
    if seg.channel == "cavity_drive":
        return mode_op("storage").conj().T
    partner = mode_op("storage" if seg.channel == "beamsplitter_storage" else "readout")
    return mode_op("snail").conj().T @ partner


def _segment_coefficient(seg: Segment) -> Callable[[float], complex]:
    amp = TWO_PI * complex(seg.amplitude) * np.exp(1j * seg.phase)
    # beamsplitters rotate as exp(+i 2pi Delta t) so that Delta is the pump
    # detuning from the difference frequency; single-mode drives as exp(-i 2pi delta t)
    sign = 1.0 if seg.channel.startswith("beamsplitter") else -1.0
    w = sign * TWO_PI * seg.detuning

    def coeff(t: float) -> complex:
        env = seg.envelope_value(t)
        if env == 0.0:
            return 0.0
        return amp * env * np.exp(1j * w * t) if w else amp * env

    return coeff


def schedule_to_hamiltonian(schedule: PulseSchedule, params: SystemParams, layout: ModeLayout,
                            base=None, modes: Mapping[str, str] | None = None) -> TimeDependentHamiltonian:
    """Time-dependent Hamiltonian (rad/us) from a pulse schedule.

    The default static part is the undriven Kerr term -K a^dag^2 a^2 on the
    SNAIL; squeezing is only present during squeeze segments.
    """
    layout = _as_layout(layout)
    modes = {**DEFAULT_MODES, **(modes or {})}
    if base is None:
        label = modes["snail"]
        if label in layout.labels:
            base = embed(h_kcq_matrix(layout.dim(label), params.rad("K"), 0.0), layout, label)
        else:
            base = np.zeros((layout.total_dim,) * 2, dtype=complex)
    H = TimeDependentHamiltonian(layout, base, breakpoints=schedule.breakpoints())
    for seg in schedule.segments:
        op = _channel_operator(seg, layout, modes)
        if op is None:
            continue
        H.add_term(_segment_coefficient(seg), op, peak=TWO_PI * abs(seg.amplitude))
    return H


# --- frequency-selective dissipation ----------------------------------------


def fsd_channel(params: SystemParams, layout: ModeLayout, snail: str = "snail", readout: str = "readout",
                frame: str = "rotating"):
    """FSD beamsplitter term and the readout loss channel.

    In the lab frame the term is g (a^dag r e^{+i 2pi Delta t} + h.c.), which
    is resonant with the cooling sideband when Delta equals the KCQ gap. The
    rotating frame removes the time dependence at the cost of a -2pi Delta r^dag r
    term; only readout phases differ between the two frames.
    """
    layout = _as_layout(layout)
    for name in ("g_fsd", "delta_fsd", "kappa_r"):
        if getattr(params, name) is None:
            raise ValueError(f"fsd_channel needs parameter {name!r}")
    g = params.rad("g_fsd")
    delta = params.rad("delta_fsd")
    a = embed(destroy(layout.dim(snail)), layout, snail).data
    r = embed(destroy(layout.dim(readout)), layout, readout).data
    hop = a.conj().T @ r
    channel = CollapseChannel(r, params.rad("kappa_r"), "loss")
    if frame == "rotating":
        h = g * (hop + hop.conj().T) - delta * (r.conj().T @ r)
        return Operator(layout, h), channel
    if frame == "lab":
        H = TimeDependentHamiltonian(layout)
        H.add_term(lambda t: g * np.exp(1j * delta * t), hop, peak=abs(g))
        return H, channel
    raise ValueError(f"unknown frame {frame!r}")


def fsd_effective_channels(h_snail: np.ndarray, a: np.ndarray, g: float, delta: float, kappa_r: float,
                           n_levels: int | None = None) -> list[CollapseChannel]:
    """Readout mode adiabatically eliminated: Lorentzian-weighted jumps between eigenstates.

    `h_snail` and `a` are single-mode matrices. Each downward transition
    j -> i of the inverted KCQ spectrum (E_i > E_j) gets a jump |i><j| with
    rate 4 g^2 |a_ij|^2 (kappa_r/4) / ((kappa_r/2)^2 + (omega_ij - delta)^2).
    """
    w, v = np.linalg.eigh(h_snail)
    order = np.argsort(-w)
    w, v = w[order], v[:, order]
    if n_levels is not None:
        w, v = w[:n_levels], v[:, :n_levels]
    amat = v.conj().T @ a @ v
    out = []
    for i in range(len(w)):
        for j in range(len(w)):
            omega = w[i] - w[j]
            if omega <= 0 or abs(amat[i, j]) < 1e-12:
                continue
            rate = g * g * abs(amat[i, j]) ** 2 * kappa_r / ((kappa_r / 2) ** 2 + (omega - delta) ** 2)
            jump = np.outer(v[:, i], v[:, j].conj())
            out.append(CollapseChannel(jump, rate, "custom"))
    return out

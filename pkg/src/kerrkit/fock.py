"""Truncated Fock-space operators and states.

Kronecker ordering follows the mode order of a :class:`ModeLayout`: the first
listed mode is the leftmost factor, so on a layout ``[("a", 2), ("b", 3)]``
the basis index is ``i_a * 3 + i_b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12
POSITIVITY_TOL = 1e-10


class LayoutError(ValueError):
    """Raised when operators or states live on incompatible layouts."""


class TruncationError(ValueError):
    """Raised when an amplitude is too large for the mode truncation."""

    def __init__(self, message: str, required_dim: int):
        super().__init__(message)
        self.required_dim = required_dim


class StateError(ValueError):
    """Raised when a state violates its normalization or positivity invariants."""


@dataclass(frozen=True)
class ModeLayout:
    modes: tuple[tuple[str, int], ...]

    def __post_init__(self):
        modes = tuple((str(label), int(dim)) for label, dim in self.modes)
        if not modes:
            raise LayoutError("layout needs at least one mode")
        labels = [m[0] for m in modes]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate mode labels in {labels}")
        for label, dim in modes:
            if dim < 2:
                raise LayoutError(f"mode {label!r} has dim {dim}; every dim must be >= 2")
        object.__setattr__(self, "modes", modes)

    @classmethod
    def of(cls, *modes: tuple[str, int]) -> "ModeLayout":
        return cls(tuple(modes))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(m[0] for m in self.modes)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m[1] for m in self.modes)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown mode label {label!r}; layout has {list(self.labels)}") from None

    def dim(self, label: str) -> int:
        return self.modes[self.index(label)][1]

    def concat(self, other: "ModeLayout") -> "ModeLayout":
        return ModeLayout(self.modes + other.modes)

    def subset(self, labels: Sequence[str]) -> "ModeLayout":
        return ModeLayout(tuple(self.modes[self.index(lab)] for lab in labels))


def _as_layout(layout: ModeLayout | Sequence[tuple[str, int]]) -> ModeLayout:
    return layout if isinstance(layout, ModeLayout) else ModeLayout(tuple(layout))


class Operator:
    """Dense operator on the full space of a layout."""

    __array_priority__ = 100
    __slots__ = ("layout", "data")

    def __init__(self, layout: ModeLayout, data):
        data = np.asarray(data, dtype=complex)
        n = layout.total_dim
        if data.shape != (n, n):
            raise LayoutError(f"operator shape {data.shape} does not match layout dimension {n}")
        self.layout = layout
        self.data = data

    def _check(self, other: "Operator"):
        if other.layout != self.layout:
            raise LayoutError("operators live on different layouts")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.layout, self.data @ other.data)
        return self.data @ np.asarray(other)

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.layout, self.data + other.data)
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.layout, self.data - other.data)
        return NotImplemented

    def __neg__(self):
        return Operator(self.layout, -self.data)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator) or np.ndim(scalar) != 0:
            return NotImplemented
        return Operator(self.layout, self.data * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Operator(self.layout, self.data / scalar)

    def dag(self) -> "Operator":
        return Operator(self.layout, self.data.conj().T)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() <= tol

    def commutator(self, other: "Operator") -> "Operator":
        return self @ other - other @ self

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def __repr__(self):
        return f"Operator(layout={list(self.layout.modes)})"


class QuantumState:
    """Pure (vector) or mixed (density matrix) state with checked invariants."""

    __slots__ = ("layout", "data")

    def __init__(self, layout: ModeLayout, data, check: bool = True):
        data = np.asarray(data, dtype=complex)
        n = layout.total_dim
        if data.shape not in ((n,), (n, n)):
            raise LayoutError(f"state shape {data.shape} does not match layout dimension {n}")
        self.layout = layout
        self.data = data
        if check:
            self.validate()

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def validate(self, norm_tol: float = NORM_TOL, herm_tol: float = HERMITIAN_TOL,
                 pos_tol: float = POSITIVITY_TOL) -> "QuantumState":
        if self.is_pure:
            err = abs(np.linalg.norm(self.data) - 1.0)
            if err >= norm_tol:
                raise StateError(f"pure state norm off by {err:.3e}")
            return self
        rho = self.data
        err = abs(np.trace(rho) - 1.0)
        if err >= norm_tol:
            raise StateError(f"density matrix trace off by {err:.3e}")
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > herm_tol:
            raise StateError(f"density matrix not Hermitian ({herm:.3e})")
        lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lam < -pos_tol:
            raise StateError(f"density matrix has negative eigenvalue {lam:.3e}")
        return self

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def to_mixed(self) -> "QuantumState":
        return self if not self.is_pure else QuantumState(self.layout, self.density(), check=False)

    def __repr__(self):
        return f"QuantumState({self.kind}, layout={list(self.layout.modes)})"


def required_dim(amplitude: complex) -> int:
    """Smallest dim for which |amplitude|^2 <= dim/4."""
    return max(2, math.ceil(4 * abs(amplitude) ** 2 - 1e-12))


def check_truncation(amplitude: complex, dim: int, what: str = "amplitude") -> None:
    if abs(amplitude) ** 2 > dim / 4 + 1e-12:
        need = required_dim(amplitude)
        raise TruncationError(
            f"{what} |{amplitude:.4g}|^2 = {abs(amplitude) ** 2:.4g} exceeds dim/4 for dim {dim}; "
            f"use dim >= {need}",
            need,
        )


def default_dim(amplitude: complex = 0.0) -> int:
    """Default truncation for a mode hosting `amplitude`.

    The heuristic max(16, |a|^2 + 7 sqrt(|a|^2 + 1)) is raised where needed so
    the result always satisfies the |a|^2 <= dim/4 safety rule.
    """
    n = abs(amplitude) ** 2
    return max(16, math.ceil(n + 7 * math.sqrt(n + 1)), required_dim(amplitude))


def _single(layout, mode):
    layout = _as_layout(layout)
    return layout, layout.dim(mode)


def destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def embed(op, layout: ModeLayout, mode: str) -> Operator:
    """Lift a single-mode matrix onto the full layout."""
    layout = _as_layout(layout)
    k = layout.index(mode)
    mat = op.data if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    d = layout.dims[k]
    if mat.shape != (d, d):
        raise LayoutError(f"operator of shape {mat.shape} cannot act on mode {mode!r} of dim {d}")
    left = int(np.prod(layout.dims[:k]))
    right = int(np.prod(layout.dims[k + 1:]))
    full = np.kron(np.kron(np.eye(left), mat), np.eye(right))
    return Operator(layout, full)


def identity(layout: ModeLayout) -> Operator:
    layout = _as_layout(layout)
    return Operator(layout, np.eye(layout.total_dim, dtype=complex))


def ladder(layout: ModeLayout, mode: str) -> Operator:
    layout, d = _single(layout, mode)
    return embed(destroy(d), layout, mode)


def number(layout: ModeLayout, mode: str) -> Operator:
    layout, d = _single(layout, mode)
    return embed(np.diag(np.arange(d, dtype=float)), layout, mode)


def parity(layout: ModeLayout, mode: str) -> Operator:
    layout, d = _single(layout, mode)
    return embed(np.diag((-1.0) ** np.arange(d)), layout, mode)


def displacement_matrix(dim: int, beta: complex) -> np.ndarray:
    check_truncation(beta, dim, "displacement")
    a = destroy(dim)
    return expm(beta * a.conj().T - np.conj(beta) * a)


def displacement_op(layout: ModeLayout, mode: str, beta: complex) -> Operator:
    layout, d = _single(layout, mode)
    return embed(displacement_matrix(d, complex(beta)), layout, mode)


def coherent_amplitudes(dim: int, alpha: complex) -> np.ndarray:
    """Normalized coherent-state amplitudes truncated to `dim` levels."""
    n = np.arange(dim)
    alpha = complex(alpha)
    if alpha == 0:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
        return vec
    logmag = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - 0.5 * abs(alpha) ** 2
    vec = np.exp(logmag) * np.exp(1j * n * np.angle(alpha))
    return vec / np.linalg.norm(vec)


def _single_mode_state(layout: ModeLayout, mode: str, vec: np.ndarray) -> QuantumState:
    """Place `vec` on `mode` with every other mode in vacuum."""
    layout = _as_layout(layout)
    full = np.ones(1, dtype=complex)
    for label, d in layout.modes:
        if label == mode:
            part = vec
        else:
            part = np.zeros(d, dtype=complex)
            part[0] = 1.0
        full = np.kron(full, part)
    return QuantumState(layout, full)


def coherent_state(layout: ModeLayout, mode: str, alpha: complex) -> QuantumState:
    layout, d = _single(layout, mode)
    check_truncation(alpha, d, "coherent amplitude")
    return _single_mode_state(layout, mode, coherent_amplitudes(d, alpha))


def fock_state(layout: ModeLayout, mode: str, n: int) -> QuantumState:
    layout, d = _single(layout, mode)
    if not 0 <= n < d:
        raise ValueError(f"Fock level {n} out of range for dim {d}")
    vec = np.zeros(d, dtype=complex)
    vec[n] = 1.0
    return _single_mode_state(layout, mode, vec)


def thermal_density(dim: int, n_th: float) -> np.ndarray:
    if n_th < 0:
        raise ValueError("thermal occupation must be non-negative")
    if n_th == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        ratio = n_th / (1.0 + n_th)
        p = ratio ** np.arange(dim)
        p /= p.sum()
    return np.diag(p).astype(complex)


def thermal_state(layout: ModeLayout, mode: str, n_th: float) -> QuantumState:
    layout = _as_layout(layout)
    if len(layout.modes) != 1:
        raise LayoutError("thermal_state builds single-mode states; combine with tensor_product")
    return QuantumState(layout, thermal_density(layout.dim(mode), n_th))


def tensor_product(*items):
    """Kronecker product of states or operators, concatenating layouts in order."""
    if len(items) == 1 and isinstance(items[0], (list, tuple)):
        items = tuple(items[0])
    if not items:
        raise ValueError("nothing to combine")
    if all(isinstance(x, Operator) for x in items):
        layout = items[0].layout
        data = items[0].data
        for op in items[1:]:
            layout = layout.concat(op.layout)
            data = np.kron(data, op.data)
        return Operator(layout, data)
    if all(isinstance(x, QuantumState) for x in items):
        layout = items[0].layout
        if all(s.is_pure for s in items):
            data = items[0].data
            for s in items[1:]:
                layout = layout.concat(s.layout)
                data = np.kron(data, s.data)
            return QuantumState(layout, data / np.linalg.norm(data))
        data = items[0].density()
        for s in items[1:]:
            layout = layout.concat(s.layout)
            data = np.kron(data, s.density())
        return QuantumState(layout, data, check=False)
    raise LayoutError("tensor_product needs all states or all operators")


def partial_trace(state: QuantumState, keep: Iterable[str]) -> QuantumState:
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one mode")
    layout = state.layout
    idx = [layout.index(k) for k in keep]
    dims = layout.dims
    nm = len(dims)
    rho = state.density().reshape(dims + dims)
    traced = [i for i in range(nm) if i not in idx]
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:nm])
    col = list(letters[nm:2 * nm])
    for i in traced:
        col[i] = row[i]
    out = "".join(row[i] for i in idx) + "".join(col[i] for i in idx)
    red = np.einsum("".join(row) + "".join(col) + "->" + out, rho)
    n = int(np.prod([dims[i] for i in idx]))
    red = red.reshape(n, n)
    red = 0.5 * (red + red.conj().T)
    return QuantumState(layout.subset(keep), red, check=False)


def expectation(op: Operator, state: QuantumState) -> complex:
    if op.layout != state.layout:
        raise LayoutError("operator and state live on different layouts")
    if state.is_pure:
        return complex(np.vdot(state.data, op.data @ state.data))
    return complex(np.trace(op.data @ state.data))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(s1: QuantumState, s2: QuantumState) -> float:
    if s1.layout != s2.layout:
        raise LayoutError("states live on different layouts")
    if s1.is_pure and s2.is_pure:
        f = abs(np.vdot(s1.data, s2.data)) ** 2
    elif s1.is_pure or s2.is_pure:
        psi, rho = (s1.data, s2.data) if s1.is_pure else (s2.data, s1.data)
        f = np.real(np.vdot(psi, rho @ psi))
    else:
        r = _psd_sqrt(s1.data)
        ev = np.linalg.eigvalsh(r @ s2.data @ r)
        f = np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2
    return float(min(1.0, max(0.0, f)))


@dataclass(frozen=True)
class ConvergenceCheck:
    dim: int
    dim_check: int
    value: np.ndarray
    value_check: np.ndarray
    rel_error: float
    tolerance: float

    @property
    def converged(self) -> bool:
        return self.rel_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "dim_check": self.dim_check,
            "rel_error": self.rel_error,
            "tolerance": self.tolerance,
            "converged": self.converged,
        }


def check_convergence(compute: Callable[[int], object], dim: int, tol: float = 1e-6,
                      step: int = 5) -> ConvergenceCheck:
    """Evaluate `compute` at dim and dim + step and compare."""
    v1 = np.atleast_1d(np.asarray(compute(dim), dtype=complex))
    v2 = np.atleast_1d(np.asarray(compute(dim + step), dtype=complex))
    scale = max(np.max(np.abs(v2)), 1e-300)
    err = float(np.max(np.abs(v1 - v2)) / scale)
    return ConvergenceCheck(dim, dim + step, v1, v2, err, tol)

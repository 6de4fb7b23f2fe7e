"""Levenberg-Marquardt curve fitting for the decay and oscillation models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


@dataclass
class FitResult:
    names: tuple[str, ...]
    values: np.ndarray
    covariance: np.ndarray | None
    residual_norm: float
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    message: str = ""

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def stderr(self, name: str) -> float:
        if self.covariance is None:
            return math.nan
        i = self.names.index(name)
        return float(math.sqrt(max(self.covariance[i, i], 0.0)))

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def to_dict(self) -> dict:
        return {
            "parameters": self.as_dict(),
            "stderr": {n: self.stderr(n) for n in self.names},
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "message": self.message,
        }


def _jacobian(residual, p, r0):
    J = np.empty((r0.size, p.size))
    for i in range(p.size):
        h = 1e-7 * max(abs(p[i]), 1e-6)
        up = p.copy()
        dn = p.copy()
        up[i] += h
        dn[i] -= h
        J[:, i] = (residual(up) - residual(dn)) / (2 * h)
    return J


def _scaled_gradient(J, r):
    g = J.T @ r
    scale = np.linalg.norm(J, axis=0) * np.linalg.norm(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(scale > 0, np.abs(g) / scale, 0.0)
    return float(np.max(s, initial=0.0))


def levenberg_marquardt(residual: Callable[[np.ndarray], np.ndarray], p0: Sequence[float],
                        names: Sequence[str], max_iter: int = 500, gtol: float = 1e-8,
                        xtol: float = 1e-14, ftol: float = 1e-15,
                        data_norm: float | None = None) -> FitResult:
    """Minimize ||residual(p)||^2 by damped Gauss-Newton with numerical Jacobians.

    ``converged`` is true when the scaled gradient (cosine between each
    Jacobian column and the residual) is below `gtol`, when the residual
    vanishes to rounding relative to `data_norm`, or when no step can reduce
    the cost any more and the scaled gradient is below 1e-3.
    """
    p = np.asarray(p0, dtype=float).copy()
    r = residual(p)
    if not np.all(np.isfinite(r)):
        return FitResult(tuple(names), p, None, math.inf, False, 0, math.inf, "non-finite residual at start")
    cost = float(r @ r)
    lam = 1e-3
    scale0 = max(float(np.linalg.norm(r)), data_norm or 0.0, 1e-300)
    it = 0
    message = "max iterations reached"
    J = _jacobian(residual, p, r)
    for it in range(1, max_iter + 1):
        grad = _scaled_gradient(J, r)
        if grad <= gtol or math.sqrt(cost) <= 1e-15 * scale0:
            message = "gradient below tolerance"
            break
        A = J.T @ J
        g = J.T @ r
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        improved = False
        for _ in range(60):
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = p + step
            rt = residual(trial)
            ct = float(rt @ rt) if np.all(np.isfinite(rt)) else math.inf
            if ct < cost:
                small_step = np.all(np.abs(step) <= xtol * (np.abs(p) + xtol))
                small_gain = (cost - ct) <= ftol * cost
                p, r, cost = trial, rt, ct
                lam = max(lam / 3, 1e-15)
                improved = True
                break
            lam *= 4
        if not improved:
            message = "no further decrease possible"
            J = _jacobian(residual, p, r)
            break
        J = _jacobian(residual, p, r)
        if small_step or small_gain:
            message = "step below tolerance"
            break
    grad = _scaled_gradient(J, r)
    # a stalled search is accepted when the finite-difference gradient is small
    stalled = message != "max iterations reached" and grad <= 1e-3
    converged = grad <= max(gtol, 1e-6) or math.sqrt(cost) <= 1e-10 * scale0 or stalled
    dof = r.size - p.size
    cov = None
    try:
        s2 = cost / dof if dof > 0 else 0.0
        cov = np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        pass
    return FitResult(tuple(names), p, cov, math.sqrt(cost), bool(converged), it, grad, message)


def _check(x, y, n_params):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y)
    if x.shape != y.shape[:1] or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    if x.size < 2 * n_params:
        raise ValueError(f"need at least {2 * n_params} points, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("data contain non-finite values")
    return x, y


# --- exponential ----------------------------------------------------------


def exponential(t, A, T, offset):
    return A * np.exp(-t / T) + offset


def _exp_guess(t, y, offset):
    yc = y - offset
    sign = 1.0 if np.mean(yc[: max(2, len(yc) // 4)]) >= 0 else -1.0
    mask = sign * yc > 1e-3 * np.max(np.abs(yc))
    if mask.sum() < 2:
        return sign * np.max(np.abs(yc)), (t[-1] - t[0]) / 2
    slope, icpt = np.polyfit(t[mask], np.log(sign * yc[mask]), 1)
    T = -1.0 / slope if slope < 0 else (t[-1] - t[0])
    return sign * math.exp(icpt), T


def fit_exponential(t, y, with_offset: bool = True) -> FitResult:
    t, y = _check(t, y, 3 if with_offset else 2)
    y = np.asarray(y, dtype=float)
    best = None
    offsets = [0.0, float(y[-1])] if with_offset else [0.0]
    for c0 in offsets:
        A0, T0 = _exp_guess(t, y, c0)
        if with_offset:
            res = levenberg_marquardt(lambda p: exponential(t, p[0], p[1], p[2]) - y, [A0, T0, c0],
                                      ("A", "T", "offset"), data_norm=float(np.linalg.norm(y)))
        else:
            res = levenberg_marquardt(lambda p: exponential(t, p[0], p[1], 0.0) - y, [A0, T0], ("A", "T"),
                                      data_norm=float(np.linalg.norm(y)))
        if best is None or res.residual_norm < best.residual_norm:
            best = res
    return best


# --- damped sinusoid -------------------------------------------------------


def damped_sinusoid(t, A, T, f, phase, offset):
    return A * np.exp(-t / T) * np.cos(2 * np.pi * f * t + phase) + offset


def _sinusoid_guess(t, y):
    """Grid search over (f, T) with the linear parameters solved exactly."""
    span = t[-1] - t[0]
    dt = np.min(np.diff(t))
    f_max = 0.5 / dt
    freqs = np.concatenate([[0.0], np.linspace(0.25 / span, f_max, 400)])
    rates = np.concatenate([[0.0], np.geomspace(0.1 / span, 10 / span, 15)])
    best = (math.inf, None)
    tt = t - t[0]
    for f in freqs:
        c = np.cos(2 * np.pi * f * tt)
        s = np.sin(2 * np.pi * f * tt)
        for g in rates:
            env = np.exp(-g * tt)
            M = np.stack([env * c, env * s, np.ones_like(tt)], axis=1)
            coef, *_ = np.linalg.lstsq(M, y, rcond=None)
            err = float(np.sum((M @ coef - y) ** 2))
            if err < best[0]:
                best = (err, (f, g, coef))
    f, g, (a, b, off) = best[1]
    amp = math.hypot(a, b)
    phase0 = math.atan2(-b, a)
    # refer amplitude and phase back to t = 0
    A = amp * math.exp(g * t[0])
    phase = phase0 - 2 * np.pi * f * t[0]
    T = 1.0 / g if g > 0 else 10 * span
    return [A, T, f, phase, off]


def fit_damped_sinusoid(t, y) -> FitResult:
    t, y = _check(t, y, 5)
    y = np.asarray(y, dtype=float)
    p0 = _sinusoid_guess(t, y)
    res = levenberg_marquardt(lambda p: damped_sinusoid(t, *p) - y, p0, ("A", "T", "f", "phase", "offset"),
                              data_norm=float(np.linalg.norm(y)))
    return _canonical_sinusoid(res)


def _canonical_sinusoid(res: FitResult) -> FitResult:
    A, T, f, ph, off = res.values
    if f < 0:
        f, ph = -f, -ph
    if A < 0:
        A, ph = -A, ph + math.pi
    ph = (ph + math.pi) % (2 * math.pi) - math.pi
    res.values = np.array([A, T, f, ph, off])
    return res


# --- complex rotating decay -------------------------------------------------


def rotating_decay(t, A, T, f, phase):
    return A * np.exp(-t / T) * np.exp(1j * (2 * np.pi * f * t + phase))


def fit_rotating_decay(t, z) -> FitResult:
    """Joint fit of X + iY = A exp(-t/T) exp(i(2 pi f t + phase))."""
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=complex)
    _check(t, z.real, 2)
    mag = np.abs(z)
    ok = mag > 1e-3 * mag.max()
    ang = np.unwrap(np.angle(z[ok]))
    f0, ph0 = np.polyfit(t[ok], ang, 1)
    slope, icpt = np.polyfit(t[ok], np.log(mag[ok]), 1)
    T0 = -1.0 / slope if slope < 0 else 10 * (t[-1] - t[0])

    def resid(p):
        d = rotating_decay(t, *p) - z
        return np.concatenate([d.real, d.imag])

    return levenberg_marquardt(resid, [math.exp(icpt), T0, f0 / (2 * np.pi), ph0], ("A", "T", "f", "phase"),
                               data_norm=float(np.linalg.norm(z)))


# --- gaussian -------------------------------------------------------------


def gaussian(x, A, sigma, center):
    return A * np.exp(-((x - center) ** 2) / (2 * sigma * sigma))


def fit_gaussian(x, y) -> FitResult:
    x, y = _check(x, y, 3)
    y = np.asarray(y, dtype=float)
    w = np.clip(y, 0, None)
    tot = w.sum()
    if tot > 0:
        c0 = float((w * x).sum() / tot)
        s0 = float(math.sqrt(max((w * (x - c0) ** 2).sum() / tot, 1e-12)))
    else:
        c0, s0 = float(x[np.argmax(np.abs(y))]), (x[-1] - x[0]) / 4
    A0 = float(y[np.argmin(np.abs(x - c0))])
    res = levenberg_marquardt(lambda p: gaussian(x, *p) - y, [A0, s0, c0], ("A", "sigma", "center"),
                              data_norm=float(np.linalg.norm(y)))
    res.values[1] = abs(res.values[1])
    return res


# --- linear ---------------------------------------------------------------


@dataclass
class LinearFit:
    slope: float
    intercept: float
    slope_stderr: float
    intercept_stderr: float
    residual_norm: float
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "slope_stderr": self.slope_stderr,
                "intercept_stderr": self.intercept_stderr, "residual_norm": self.residual_norm}


def fit_line(x, y) -> LinearFit:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a line")
    M = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    r = M @ coef - y
    dof = max(x.size - 2, 1)
    s2 = float(r @ r) / dof
    cov = np.linalg.pinv(M.T @ M) * s2
    return LinearFit(float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])),
                     float(math.sqrt(cov[1, 1])), float(np.linalg.norm(r)))

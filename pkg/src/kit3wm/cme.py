"""Three-tone coupled-mode equations (3WM + 4WM) along the line.

Position ``x`` is a continuous cell coordinate on ``[0, N_c]``; wavenumbers are
in rad/cell and amplitudes are complex current envelopes in ampere. The phase
factors ``exp(+-i dk x)`` are kept explicitly so any dispersion table can drive
the equations.
"""

from __future__ import annotations

import cmath
import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import RK45 as _RK45

from .core import PumpDrive

# Dormand-Prince 5(4) tableau and its quartic continuous extension.
_C = [float(c) for c in _RK45.C]
_A = [[float(a) for a in row] for row in _RK45.A]
_B = [float(b) for b in _RK45.B]
_E = [float(e) for e in _RK45.E]
_P = np.asarray(_RK45.P, dtype=float)

MANLEY_ROWE_WARN = 1e-6


class CmeStepError(RuntimeError):
    """The adaptive step fell below the minimum allowed size."""

    def __init__(self, x: float, message: str):
        super().__init__(f"{message} at x = {x:.6g} cells")
        self.x = x


class ConservationWarning(RuntimeWarning):
    pass


class Wavenumbers(NamedTuple):
    pump: float
    signal: float
    idler: float

    @property
    def mismatch(self) -> float:
        return self.pump - self.signal - self.idler


class CmeState(NamedTuple):
    x: float
    i_p: complex
    i_s: complex
    i_i: complex


@dataclass(frozen=True)
class IntegratorControls:
    rtol: float = 1e-9
    #: absolute tolerance as a fraction of the initial pump amplitude
    atol_scale: float = 1e-12
    n_samples: int = 1000
    keep_steps: bool = False
    first_step: Optional[float] = None
    min_step: float = 1e-9
    max_steps: int = 2_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol_scale > 0):
            raise ValueError("tolerances must be positive")
        if self.n_samples < 2:
            raise ValueError("need at least two samples (both line ends)")


def cme_rhs(state: CmeState, k: Wavenumbers, epsilon: float, xi: float) -> tuple[complex, complex, complex]:
    """Derivatives ``(dI_p/dx, dI_s/dx, dI_i/dx)`` of the full three-tone CME."""
    return _rhs(state.x, state.i_p, state.i_s, state.i_i, k.pump, k.signal, k.idler, k.mismatch, epsilon, xi)


def _rhs(x, ip, is_, ii, kp, ks, ki, dk, eps, xi):
    ph = cmath.exp(1j * dk * x)
    ap = ip.real * ip.real + ip.imag * ip.imag
    as_ = is_.real * is_.real + is_.imag * is_.imag
    ai = ii.real * ii.real + ii.imag * ii.imag
    e4 = 0.25j * eps
    x8 = 0.125j * xi
    dp = kp * (e4 * is_ * ii / ph + x8 * ip * (ap + 2 * as_ + 2 * ai))
    ds = ks * (e4 * ip * ii.conjugate() * ph + x8 * is_ * (2 * ap + as_ + 2 * ai))
    di = ki * (e4 * ip * is_.conjugate() * ph + x8 * ii * (2 * ap + 2 * as_ + ai))
    return dp, ds, di


@dataclass(frozen=True)
class CmeSolution:
    x: np.ndarray
    i_p: np.ndarray
    i_s: np.ndarray
    i_i: np.ndarray
    wavenumbers: Wavenumbers
    drive: PumpDrive
    initial: tuple[complex, complex, complex]
    epsilon: float
    xi: float
    n_steps: int = 0
    n_rejected: int = 0
    steps: Optional[tuple[np.ndarray, np.ndarray]] = field(default=None, repr=False)

    @property
    def length(self) -> float:
        return float(self.x[-1])

    def signal_gain(self) -> float:
        """Signal power gain ``|I_s(N_c)/I_s0|**2`` (linear)."""
        i_s0 = self.initial[1]
        if i_s0 == 0:
            raise ZeroDivisionError("signal gain undefined for a zero signal seed")
        return abs(self.i_s[-1] / i_s0) ** 2

    def signal_gain_db(self) -> float:
        return 10.0 * math.log10(self.signal_gain())

    def gain_trace_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.abs(self.i_s / self.initial[1]) ** 2)

    def fluxes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        kp, ks, ki = self.wavenumbers
        return np.abs(self.i_p) ** 2 / kp, np.abs(self.i_s) ** 2 / ks, np.abs(self.i_i) ** 2 / ki

    def manley_rowe_residuals(self) -> tuple[float, float]:
        """Maximum drift of the two flux invariants, relative to the total initial flux.

        Invariants: ``|I_s|^2/k_s - |I_i|^2/k_i`` and ``|I_p|^2/k_p + |I_s|^2/k_s``.
        """
        fp, fs, fi = self.fluxes()
        total = fp[0] + fs[0] + fi[0]
        if total == 0:
            return 0.0, 0.0
        si = fs - fi
        ps = fp + fs
        return float(np.max(np.abs(si - si[0])) / total), float(np.max(np.abs(ps - ps[0])) / total)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x_cells", "re_ip", "im_ip", "re_is", "im_is", "re_ii", "im_ii"])
        for x, p, s, i in zip(self.x, self.i_p, self.i_s, self.i_i):
            writer.writerow([repr(float(v)) for v in (x, p.real, p.imag, s.real, s.imag, i.real, i.imag)])
        return buf.getvalue()


def integrate_cme(
    drive: PumpDrive,
    wavenumbers,
    signal_amplitude: complex,
    n_cells: float,
    idler_amplitude: complex = 0.0,
    pump_amplitude: Optional[complex] = None,
    controls: IntegratorControls = IntegratorControls(),
    epsilon: Optional[float] = None,
    xi: Optional[float] = None,
    sample_points=None,
) -> CmeSolution:
    """Integrate the full CME from ``x = 0`` to ``x = n_cells``.

    Adaptive Dormand-Prince 5(4) steps; amplitudes at the sample positions come
    from the quartic dense-output interpolant. ``epsilon``/``xi`` override the
    drive's coefficients (e.g. ``xi=0`` drops the 4WM terms).
    """
    if n_cells < 1:
        raise ValueError(f"n_cells must be >= 1, got {n_cells!r}")
    k = Wavenumbers(*map(float, wavenumbers))
    if min(k) <= 0:
        raise ValueError("wavenumbers must be positive")
    eps = drive.epsilon if epsilon is None else float(epsilon)
    xi_ = drive.xi if xi is None else float(xi)
    ip0 = complex(drive.pump_amplitude if pump_amplitude is None else pump_amplitude)
    y0 = (ip0, complex(signal_amplitude), complex(idler_amplitude))
    if sample_points is None:
        samples = np.linspace(0.0, float(n_cells), controls.n_samples)
    else:
        samples = np.asarray(sample_points, dtype=float)
        if samples[0] < 0 or samples[-1] > n_cells or np.any(np.diff(samples) < 0):
            raise ValueError("sample points must be sorted within [0, n_cells]")

    scale = max(abs(ip0), abs(y0[1]), abs(y0[2]))
    atol = controls.atol_scale * (scale if scale > 0 else 1.0)
    rtol = controls.rtol
    kp, ks, ki = k
    dk = k.mismatch

    def f(x, y):
        return _rhs(x, y[0], y[1], y[2], kp, ks, ki, dk, eps, xi_)

    out = np.empty((samples.size, 3), dtype=complex)
    j = 0
    x = 0.0
    y = y0
    while j < samples.size and samples[j] <= 0.0:
        out[j] = y
        j += 1

    end = float(n_cells)
    fx = f(x, y)
    h = controls.first_step or _initial_step(fx, y, end, rtol, atol)
    node_x = [x] if controls.keep_steps else None
    node_y = [y] if controls.keep_steps else None
    n_steps = n_rej = 0
    a = _A
    c = _C
    b = _B
    e = _E
    while x < end:
        if n_steps + n_rej > controls.max_steps:
            raise CmeStepError(x, "maximum step count exceeded")
        h = min(h, end - x)
        if h < controls.min_step:
            raise CmeStepError(x, "step size below minimum")
        k1 = fx
        ks_ = [k1]
        for s in range(1, 6):
            row = a[s]
            yi = tuple(
                y[m] + h * sum(row[q] * ks_[q][m] for q in range(s)) for m in range(3)
            )
            ks_.append(f(x + c[s] * h, yi))
        y_new = tuple(y[m] + h * sum(b[q] * ks_[q][m] for q in range(6)) for m in range(3))
        f_new = f(x + h, y_new)
        ks_.append(f_new)
        err2 = 0.0
        for m in range(3):
            em = h * sum(e[q] * ks_[q][m] for q in range(7))
            sc = atol + rtol * max(abs(y[m]), abs(y_new[m]))
            err2 += (abs(em) / sc) ** 2
        err = math.sqrt(err2 / 3)
        if err <= 1.0:
            x_new = x + h if h < end - x else end
            # dense output for samples inside (x, x_new]
            if j < samples.size and samples[j] <= x_new:
                kmat = np.array(ks_, dtype=complex)  # (7, 3)
                q = _P.T @ kmat  # (4, 3)
                while j < samples.size and samples[j] <= x_new:
                    th = (samples[j] - x) / h
                    powers = np.array([th, th * th, th**3, th**4])
                    out[j] = np.asarray(y) + h * (powers @ q)
                    j += 1
                if samples[j - 1] == x_new:
                    out[j - 1] = y_new
            x, y, fx = x_new, y_new, f_new
            n_steps += 1
            if controls.keep_steps:
                node_x.append(x)
                node_y.append(y)
            factor = 10.0 if err == 0 else min(10.0, 0.9 * err ** -0.2)
            h *= factor
        else:
            n_rej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
        if not all(map(_finite, y)):
            raise CmeStepError(x, "non-finite amplitudes")

    steps = None
    if controls.keep_steps:
        steps = (np.asarray(node_x), np.asarray(node_y, dtype=complex))
    sol = CmeSolution(
        x=samples.copy(),
        i_p=out[:, 0].copy(),
        i_s=out[:, 1].copy(),
        i_i=out[:, 2].copy(),
        wavenumbers=k,
        drive=drive,
        initial=y0,
        epsilon=eps,
        xi=xi_,
        n_steps=n_steps,
        n_rejected=n_rej,
        steps=steps,
    )
    drift = max(sol.manley_rowe_residuals())
    if drift > MANLEY_ROWE_WARN:
        warnings.warn(f"Manley-Rowe invariants drifted by {drift:.2e}", ConservationWarning, stacklevel=2)
    return sol


def _finite(z: complex) -> bool:
    return math.isfinite(z.real) and math.isfinite(z.imag)


def _initial_step(fx, y, end, rtol, atol) -> float:
    d0 = max(abs(v) for v in y) / atol
    d1 = max(abs(v) for v in fx) / atol
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-3 * end
    else:
        h = 0.01 * d0 / d1
    return min(h, 0.1 * end)


def analytic_gain(drive: PumpDrive, k_s: float, k_i: float, x) -> np.ndarray:
    """Phase-matched small-signal gain ``cosh^2(g3 x)``, ``g3 = eps I_p0 sqrt(k_s k_i)/4``."""
    g3 = drive.epsilon * drive.pump_amplitude * math.sqrt(k_s * k_i) / 4
    return np.cosh(g3 * np.asarray(x, dtype=float)) ** 2


def degenerate_gain(delta_l: float, k_p: float, x) -> np.ndarray:
    """``cosh^2(delta_L k_p x / 8)``, the ``k_s = k_i = k_p/2`` limit of :func:`analytic_gain`."""
    return np.cosh(delta_l * k_p * np.asarray(x, dtype=float) / 8) ** 2


def phase_mismatch(k_p, k_s, k_i, xi: float, pump_amplitude: float):
    """Total 3WM mismatch including the Kerr shifts; zero at exponential-gain phase matching."""
    return (k_p - k_s - k_i) + xi * pump_amplitude**2 / 8 * (k_p - 2 * k_s - 2 * k_i)


def undepleted_solution(drive: PumpDrive, wavenumbers, signal_amplitude: complex, x, idler_amplitude: complex = 0.0):
    """Closed-form amplitudes for a constant-magnitude pump (arbitrary mismatch).

    Returns ``(I_p, I_s, I_i)`` arrays at positions ``x``; the pump is assumed
    real at the input.
    """
    kp, ks, ki = map(float, wavenumbers)
    ip0 = drive.pump_amplitude
    xs = np.asarray(x, dtype=float)
    dbeta = phase_mismatch(kp, ks, ki, drive.xi, ip0)
    kap_s = ks * drive.epsilon * ip0 / 4
    kap_i = ki * drive.epsilon * ip0 / 4
    g = np.sqrt(complex(kap_s * kap_i - dbeta**2 / 4))
    ch = np.cosh(g * xs)
    sh_over_g = xs.astype(complex) if g == 0 else np.sinh(g * xs) / g
    u0 = complex(signal_amplitude)
    v0 = complex(idler_amplitude).conjugate()
    u = ch * u0 + sh_over_g * (-0.5j * dbeta * u0 + 1j * kap_s * v0)
    v = ch * v0 + sh_over_g * (-1j * kap_i * u0 + 0.5j * dbeta * v0)
    kerr = drive.xi * ip0**2
    i_s = u * np.exp(0.5j * dbeta * xs) * np.exp(0.25j * kerr * ks * xs)
    i_i = np.conj(v * np.exp(-0.5j * dbeta * xs)) * np.exp(0.25j * kerr * ki * xs)
    i_p = ip0 * np.exp(0.125j * kerr * kp * xs)
    return i_p, i_s, i_i

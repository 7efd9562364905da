"""ABCD cascade of the artificial line, S21, and the dispersion relation k(omega).

ABCD matrices are numpy arrays of shape ``(..., 2, 2)`` so that a whole frequency
grid is cascaded at once. Entry order is ``[[A, B], [C, D]]``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .core import CellParams, DomainError, LoadingPattern

#: Alias documenting that an ndarray holds ``[[A, B], [C, D]]`` two-port matrices.
AbcdMatrix = np.ndarray

POLE_RTOL = 1e-6


class PoleError(ArithmeticError):
    """Raised when a frequency sits exactly on a finger resonance."""


class UnwrapError(RuntimeError):
    """Raised when the S21 phase unwrap loses track of the 2*pi count."""


def _cell_abcd(omega, series_l: float, cap: float, finger_l: float) -> AbcdMatrix:
    w = np.asarray(omega, dtype=float)
    den = 2.0 - finger_l * cap * w**2
    if np.any(den == 0):
        raise PoleError("frequency grid hits the finger resonance 2 - L_f C w^2 = 0")
    m = np.empty(w.shape + (2, 2), dtype=complex)
    m[..., 0, 0] = 1.0
    m[..., 0, 1] = 1j * series_l * w
    m[..., 1, 0] = 2j * cap * w / den
    m[..., 1, 1] = 1.0 - 2.0 * series_l * cap * w**2 / den
    return m


def unloaded_cell_abcd(omega, cell: CellParams) -> AbcdMatrix:
    """ABCD matrix of one unloaded cell (series ``L_d`` followed by the finger shunt)."""
    return _cell_abcd(omega, cell.series_inductance, cell.shunt_capacitance, cell.finger_inductance)


def loaded_cell_abcd(omega, cell: CellParams, loading: LoadingPattern) -> AbcdMatrix:
    return _cell_abcd(
        omega,
        cell.series_inductance,
        loading.loaded_capacitance(cell),
        loading.loaded_finger_inductance,
    )


def matrix_power(m: AbcdMatrix, n: int) -> AbcdMatrix:
    """Batched integer power by repeated squaring."""
    if n < 0:
        raise ValueError("negative matrix power")
    result = np.broadcast_to(np.eye(2, dtype=complex), m.shape).copy()
    base = m
    while n:
        if n & 1:
            result = result @ base
        n >>= 1
        if n:
            base = base @ base
    return result


def supercell_abcd(omega, cell: CellParams, loading: LoadingPattern) -> AbcdMatrix:
    half = matrix_power(unloaded_cell_abcd(omega, cell), loading.unloaded_cells // 2)
    loaded = matrix_power(loaded_cell_abcd(omega, cell, loading), loading.loaded_cells)
    return half @ loaded @ half


def line_abcd(omega, cell: CellParams, loading: Optional[LoadingPattern] = None, n: Optional[int] = None) -> AbcdMatrix:
    """ABCD of the full line.

    ``n`` counts cells for an unloaded line and supercells for a loaded one; it
    defaults to ``loading.supercell_count`` when a loading pattern is given.
    """
    if loading is None:
        if n is None:
            raise ValueError("an unloaded line needs an explicit cell count")
        return matrix_power(unloaded_cell_abcd(omega, cell), n)
    if n is None:
        n = loading.supercell_count
    return matrix_power(supercell_abcd(omega, cell, loading), n)


def abcd_to_s21(m: AbcdMatrix, z0: float = 50.0) -> np.ndarray:
    if not z0 > 0:
        raise DomainError(f"z0 must be positive, got {z0!r}")
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    return 2.0 / (a + b / z0 + c * z0 + d)


def abcd_to_s11(m: AbcdMatrix, z0: float = 50.0) -> np.ndarray:
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    return (a + b / z0 - c * z0 - d) / (a + b / z0 + c * z0 + d)


def line_s21(omega, cell: CellParams, loading: Optional[LoadingPattern] = None, n: Optional[int] = None, z0: float = 50.0):
    return abcd_to_s21(line_abcd(omega, cell, loading, n), z0)


def _period_matrix(omega, cell, loading):
    if loading is None:
        return unloaded_cell_abcd(omega, cell), 1
    return supercell_abcd(omega, cell, loading), loading.cells_per_supercell


def _period_delay(cell: CellParams, loading: Optional[LoadingPattern]) -> float:
    """Low-frequency phase delay of one period, used to pick the first Bloch branch."""
    tau = cell.linear_wavenumber_per_omega
    if loading is None:
        return tau
    tau_l = math.sqrt(cell.series_inductance * loading.loaded_capacitance(cell))
    return loading.unloaded_cells * tau + loading.loaded_cells * tau_l


def bloch_phase(omega, cell: CellParams, loading: Optional[LoadingPattern] = None) -> np.ndarray:
    """Extended-zone Bloch phase per period from ``cos(theta) = (A + D)/2``.

    The phase of a lossless passive line grows monotonically with frequency, so
    each sample takes the smallest branch ``2 pi m +/- arccos`` not below the
    previous one. Inside a stopband the real part sits at a multiple of pi.
    """
    w = np.asarray(omega, dtype=float)
    period, _ = _period_matrix(w, cell, loading)
    half_trace = 0.5 * (period[..., 0, 0] + period[..., 1, 1]).real
    base = np.arccos(np.clip(half_trace, -1.0, 1.0))
    theta = np.empty_like(base)
    # first branch from the linear delay estimate
    guess = w[0] * _period_delay(cell, loading)
    m = round(guess / (2 * math.pi))
    cands = np.array([2 * math.pi * (m + j) + s * base[0] for j in (-1, 0, 1) for s in (1, -1)])
    prev = cands[np.argmin(np.abs(cands - guess))]
    theta[0] = prev
    tol = 1e-9
    for j in range(1, w.size):
        b = base[j]
        k = math.floor((prev - tol) / (2 * math.pi))
        best = math.inf
        for mm in (k, k + 1, k + 2):
            for c in (2 * math.pi * mm + b, 2 * math.pi * mm - b):
                if prev - tol <= c < best:
                    best = c
        prev = best
        theta[j] = prev
    return theta


def bloch_wavenumber(omega, cell: CellParams, loading: Optional[LoadingPattern] = None) -> np.ndarray:
    """Bloch wavenumber in rad per cell (period phase divided by cells per period)."""
    _, cells = _period_matrix(np.asarray([1.0]), cell, loading)
    return bloch_phase(omega, cell, loading) / cells


def pole_frequencies(cell: CellParams, loading: Optional[LoadingPattern] = None) -> list[float]:
    poles = [math.sqrt(2.0 / (cell.finger_inductance * cell.shunt_capacitance))]
    if loading is not None and loading.loaded_cells:
        poles.append(math.sqrt(2.0 / (loading.loaded_finger_inductance * loading.loaded_capacitance(cell))))
    return poles


def _nudge_poles(w: np.ndarray, poles: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    w = w.copy()
    flagged = np.zeros(w.shape, dtype=bool)
    for p in poles:
        near = np.abs(w - p) <= POLE_RTOL * p
        for j in np.flatnonzero(near):
            step = (w[j + 1] - w[j]) if j + 1 < w.size else (w[j] - w[j - 1])
            w[j] = w[j] - 0.5 * step if w[j] >= p else w[j] + 0.5 * step
            # half a grid step keeps the grid strictly increasing
            flagged[j] = True
    return w, flagged


def stopband_mask(omega, cell: CellParams, loading: Optional[LoadingPattern] = None) -> np.ndarray:
    period, _ = _period_matrix(np.asarray(omega, dtype=float), cell, loading)
    return np.abs(0.5 * (period[..., 0, 0] + period[..., 1, 1]).real) > 1.0


def default_frequency_grid(
    cell: CellParams,
    loading: Optional[LoadingPattern] = None,
    f_min: float = 0.05e9,
    f_max: float = 12e9,
    points: int = 12_000,
    refine_band: float = 300e6,
    refine_factor: int = 10,
) -> np.ndarray:
    """Angular frequency grid with extra density around any detected stopband."""
    f = np.linspace(f_min, f_max, points)
    w = 2 * np.pi * f
    mask = stopband_mask(w, cell, loading)
    if not mask.any():
        return w
    df = f[1] - f[0]
    extra = []
    # contiguous stopband runs
    edges = np.flatnonzero(np.diff(mask.astype(int)))
    starts = list(f[edges[::2] + 1]) if mask[0] == 0 else [f[0]] + list(f[edges[1::2] + 1])
    ends = list(f[edges[1::2]]) if mask[0] == 0 else list(f[edges[::2]])
    if len(ends) < len(starts):
        ends.append(f[-1])
    for lo, hi in zip(starts, ends):
        a, b = max(f_min, lo - refine_band), min(f_max, hi + refine_band)
        extra.append(np.arange(a, b, df / refine_factor))
    f_all = np.unique(np.concatenate([f] + extra))
    return 2 * np.pi * f_all


@dataclass(frozen=True)
class DispersionTable:
    frequency_grid: np.ndarray
    k: np.ndarray
    s21_magnitude: np.ndarray
    cell: CellParams
    loading: Optional[LoadingPattern]
    n_cells: int
    method: str = "guided"
    nudged: np.ndarray = field(default=None, repr=False)
    _spline: CubicSpline = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicSpline(self.frequency_grid, self.k))
        if self.nudged is None:
            object.__setattr__(self, "nudged", np.zeros(self.frequency_grid.shape, dtype=bool))

    @property
    def linear_k(self) -> np.ndarray:
        return self.frequency_grid * self.cell.linear_wavenumber_per_omega

    @property
    def k_star(self) -> np.ndarray:
        """Nonlinear part of the wavenumber, ``k - omega sqrt(L_d C)``."""
        return self.k - self.linear_k

    @property
    def omega_range(self) -> tuple[float, float]:
        return float(self.frequency_grid[0]), float(self.frequency_grid[-1])

    def wavenumber(self, omega):
        """Cubic interpolation of k at arbitrary angular frequencies within the grid."""
        w = np.asarray(omega, dtype=float)
        lo, hi = self.omega_range
        if np.any((w < lo) | (w > hi)):
            raise DomainError("frequency outside the dispersion table range")
        out = self._spline(w)
        return float(out) if out.ndim == 0 else out

    def stopband(self, threshold: float = 0.1) -> Optional[tuple[float, float]]:
        """Angular frequency span where ``|S21| < threshold``, or None."""
        idx = np.flatnonzero(self.s21_magnitude < threshold)
        if idx.size == 0:
            return None
        return float(self.frequency_grid[idx[0]]), float(self.frequency_grid[idx[-1]])

    def descriptor(self) -> dict:
        return {
            "cell": self.cell.to_dict(),
            "loading": None if self.loading is None else self.loading.to_dict(),
            "n_cells": self.n_cells,
            "method": self.method,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq_hz", "k_rad_per_cell", "k_star_rad_per_cell", "s21_mag"])
        f = self.frequency_grid / (2 * np.pi)
        for row in zip(f, self.k, self.k_star, self.s21_magnitude):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "line": self.descriptor(),
            "freq_hz": (self.frequency_grid / (2 * np.pi)).tolist(),
            "k_rad_per_cell": self.k.tolist(),
            "k_star_rad_per_cell": self.k_star.tolist(),
            "s21_mag": self.s21_magnitude.tolist(),
            "nudged": [int(j) for j in np.flatnonzero(self.nudged)],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "DispersionTable":
        doc = json.loads(text)
        line = doc["line"]
        cell = CellParams(**line["cell"])
        loading = None if line["loading"] is None else LoadingPattern(**line["loading"])
        w = 2 * np.pi * np.asarray(doc["freq_hz"], dtype=float)
        nudged = np.zeros(w.shape, dtype=bool)
        nudged[doc.get("nudged", [])] = True
        return cls(w, np.asarray(doc["k_rad_per_cell"]), np.asarray(doc["s21_mag"]), cell, loading,
                   int(line["n_cells"]), line.get("method", "guided"), nudged)


def _s21_chunks(w, cell, loading, n_periods, z0, chunk):
    out = np.empty(w.shape, dtype=complex)
    for start in range(0, w.size, chunk):
        sl = slice(start, start + chunk)
        out[sl] = line_s21(w[sl], cell, loading, n_periods, z0)
    return out


def dispersion_relation(
    cell: CellParams,
    loading: Optional[LoadingPattern] = None,
    n_cells: Optional[int] = None,
    freq_grid=None,
    z0: float = 50.0,
    method: Literal["guided", "unwrap"] = "guided",
    chunk: int = 4096,
) -> DispersionTable:
    """Wavenumber per cell from the phase of the full-line S21, ``k = -phase/N_c``.

    ``freq_grid`` is in rad/s (default :func:`default_frequency_grid`).

    ``method="unwrap"`` accumulates 2*pi corrections between neighbouring samples,
    anchored at the first sample, and raises :class:`UnwrapError` if the total
    phase drifts by more than pi from the Bloch phase outside stopbands (the
    grid is too coarse). ``method="guided"`` takes, for every sample, the 2*pi branch of the
    S21 phase nearest to ``N_c`` times the Bloch wavenumber; it is immune to
    missed wraps at stopband edges.
    """
    if loading is None:
        if n_cells is None:
            raise ValueError("an unloaded line needs n_cells")
        n_periods, cells_per_period = n_cells, 1
    else:
        cells_per_period = loading.cells_per_supercell
        if n_cells is None:
            n_cells = loading.total_cells
        if n_cells % cells_per_period:
            raise DomainError("n_cells must be a whole number of supercells")
        n_periods = n_cells // cells_per_period
    if freq_grid is None:
        freq_grid = default_frequency_grid(cell, loading)
    w = np.asarray(freq_grid, dtype=float)
    if w.ndim != 1 or w.size < 2 or np.any(np.diff(w) <= 0) or w[0] <= 0:
        raise DomainError("freq_grid must be a strictly increasing 1-D array of positive frequencies")
    w, nudged = _nudge_poles(w, pole_frequencies(cell, loading))

    s21 = _s21_chunks(w, cell, loading, n_periods, z0, chunk)
    raw = -np.angle(s21)
    target = n_periods * bloch_phase(w, cell, loading)
    if method == "guided":
        phase = raw + 2 * np.pi * np.round((target - raw) / (2 * np.pi))
    elif method == "unwrap":
        phase = np.unwrap(raw)
        phase = phase + 2 * np.pi * round((target[0] - phase[0]) / (2 * np.pi))
        passband = ~stopband_mask(w, cell, loading)
        drift = np.abs(phase - target)[passband]
        if drift.size and drift.max() > np.pi:
            j = int(np.flatnonzero(passband)[np.argmax(drift)])
            raise UnwrapError(
                f"phase unwrap lost count near {w[j] / 2 / np.pi / 1e9:.6g} GHz; refine the frequency grid"
            )
    else:
        raise ValueError(f"unknown method {method!r}")
    return DispersionTable(w, phase / n_cells, np.abs(s21), cell, loading, n_cells, method, nudged)

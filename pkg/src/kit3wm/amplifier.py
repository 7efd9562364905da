"""Amplifier observables: gain profiles, phase-matched pairs, compression, tilt, pump calibration."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .cme import CmeStepError, IntegratorControls, integrate_cme, phase_mismatch
from .core import DomainError, PowerConvention, PumpDrive, amplitude_to_dbm, dbm_to_amplitude, ghz
from .dispersion import DispersionTable

TWO_PI = 2 * math.pi
ROOT_TOL = TWO_PI * 1e3  # 1 kHz in rad/s

_ENDPOINTS = IntegratorControls(n_samples=2)


class NoCompressionError(RuntimeError):
    """The gain never dropped 1 dB below its small-signal value within the probe grid."""


def _map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map; ``workers > 1`` uses processes (results are identical)."""
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def triplet_wavenumbers(dispersion: DispersionTable, pump: float, signal: float) -> tuple[float, float, float]:
    return (
        float(dispersion.wavenumber(pump)),
        float(dispersion.wavenumber(signal)),
        float(dispersion.wavenumber(pump - signal)),
    )


def signal_gain_db(
    drive: PumpDrive,
    dispersion: DispersionTable,
    signal: float,
    signal_amplitude: float,
    controls: IntegratorControls = _ENDPOINTS,
    **overrides,
) -> float:
    """Signal power gain (dB) at the line output for one signal frequency."""
    k = triplet_wavenumbers(dispersion, drive.pump_frequency, signal)
    sol = integrate_cme(drive, k, signal_amplitude, dispersion.n_cells, controls=controls, **overrides)
    return sol.signal_gain_db()


@dataclass(frozen=True)
class GainProfile:
    signal_grid: np.ndarray
    gain_db: np.ndarray
    drive: PumpDrive
    signal_amplitude: float
    line: dict
    failed: np.ndarray = field(default=None)
    notes: tuple = ()

    def __post_init__(self):
        if self.failed is None:
            object.__setattr__(self, "failed", np.zeros(self.signal_grid.shape, dtype=bool))

    @property
    def idler_grid(self) -> np.ndarray:
        """Idler frequencies carrying the mirrored gain copy (metadata only)."""
        return self.drive.pump_frequency - self.signal_grid

    @property
    def failure_fraction(self) -> float:
        return float(np.mean(self.failed)) if self.failed.size else 0.0

    def peak_frequencies(self) -> np.ndarray:
        """Signal frequencies of local gain maxima (interior points and plateau edges)."""
        g = np.where(self.failed, -np.inf, self.gain_db)
        idx = [j for j in range(1, g.size - 1) if g[j] >= g[j - 1] and g[j] >= g[j + 1] and g[j] > -np.inf]
        return self.signal_grid[idx]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["freq_hz", "gain_db"])
        for w, g, bad in zip(self.signal_grid, self.gain_db, self.failed):
            writer.writerow([repr(float(w / TWO_PI)), "nan" if bad else repr(float(g))])
        return buf.getvalue()


class _ProfilePoint:
    # picklable callable for process pools
    def __init__(self, drive, dispersion, amplitude, controls):
        self.drive, self.dispersion, self.amplitude, self.controls = drive, dispersion, amplitude, controls

    def __call__(self, w):
        try:
            return signal_gain_db(self.drive, self.dispersion, w, self.amplitude, self.controls), ""
        except (CmeStepError, DomainError, ArithmeticError) as exc:
            return math.nan, f"{w / TWO_PI:.6g} Hz: {exc}"


def default_signal_grid(f_lo: float = 2.5e9, f_hi: float = 6.5e9, points: int = 201) -> np.ndarray:
    return TWO_PI * np.linspace(f_lo, f_hi, points)


def gain_profile(
    drive: PumpDrive,
    dispersion: DispersionTable,
    signal_grid=None,
    signal_amplitude: Optional[float] = None,
    controls: IntegratorControls = _ENDPOINTS,
    workers: int = 1,
) -> GainProfile:
    """Full-CME signal gain across a signal grid (rad/s).

    Default seed is ``I_p0/100`` with no idler input. Points whose integration
    fails are flagged in ``failed`` and reported as NaN; the sweep continues.
    """
    grid = default_signal_grid() if signal_grid is None else np.asarray(signal_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty signal grid")
    amp = drive.pump_amplitude / 100 if signal_amplitude is None else signal_amplitude
    lo, hi = dispersion.omega_range
    wp = drive.pump_frequency
    if grid.min() < lo or grid.max() > hi or (wp - grid).min() < lo or (wp - grid).max() > hi or not lo <= wp <= hi:
        raise DomainError("signal, idler or pump frequency outside the dispersion table")
    results = _map(_ProfilePoint(drive, dispersion, amp, controls), list(grid), workers)
    gains = np.array([r[0] for r in results])
    notes = tuple(r[1] for r in results if r[1])
    return GainProfile(grid, gains, drive, amp, dispersion.descriptor(), np.isnan(gains), notes)


def mismatch_curve(drive: PumpDrive, dispersion: DispersionTable, signal, pump: Optional[float] = None):
    """Kerr-corrected mismatch ``delta_beta`` (rad/cell) versus signal frequency."""
    wp = drive.pump_frequency if pump is None else pump
    ws = np.asarray(signal, dtype=float)
    kp = dispersion.wavenumber(wp)
    return phase_mismatch(kp, dispersion.wavenumber(ws), dispersion.wavenumber(wp - ws), drive.xi, drive.pump_amplitude)


def find_phase_matched_pairs(
    pump: float,
    drive: PumpDrive,
    dispersion: DispersionTable,
    band: Optional[tuple[float, float]] = None,
    n_scan: int = 4001,
    degenerate_tol: float = 1e-12,
) -> list[tuple[float, float]]:
    """Signal/idler pairs ``(w_s, w_i)``, ``w_s <= w_i``, where the total mismatch vanishes.

    The mismatch is symmetric under signal/idler exchange, so only ``w_s <= w_p/2``
    is scanned. Sign changes are refined by bisection to 1 kHz. A tangent zero at
    exactly ``w_p/2`` (no sign change) is reported when ``|delta_beta| <= degenerate_tol``.
    Zeros with a tone inside the stopband are dropped.
    """
    lo, hi = dispersion.omega_range
    s_lo = max(lo, pump - hi)
    s_hi = pump / 2
    if band is not None:
        s_lo = max(s_lo, band[0])
        s_hi = min(s_hi, band[1])
    if not (0 < s_lo < s_hi) or not lo <= pump <= hi:
        raise DomainError("search band is empty or outside the dispersion table")
    ws = np.linspace(s_lo, s_hi, n_scan)

    def db(w):
        return float(mismatch_curve(drive, dispersion, w, pump))

    vals = mismatch_curve(drive, dispersion, ws, pump)
    roots = []
    for j in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        roots.append(brentq(db, ws[j], ws[j + 1], xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps))
    for j in np.flatnonzero(vals[:-1] == 0):
        roots.append(float(ws[j]))
    if s_hi == pump / 2 and abs(vals[-1]) <= degenerate_tol:
        roots.append(float(s_hi))
    band_gap = dispersion.stopband()
    if band_gap is not None:
        # inside the stopband the Bloch wave is evanescent, so a zero there is not a matched pair
        roots = [r for r in roots if not any(band_gap[0] <= w <= band_gap[1] for w in (r, pump - r))]
    roots = sorted(set(roots))
    collapsed = []
    for r in roots:
        if not collapsed or r - collapsed[-1] > ROOT_TOL:
            collapsed.append(r)
    return [(r, pump - r) for r in collapsed]


def pump_for_detuning(
    detuning: float,
    drive: PumpDrive,
    dispersion: DispersionTable,
    bracket: Optional[tuple[float, float]] = None,
    n_scan: int = 2001,
) -> float:
    """Pump frequency (rad/s) whose phase-matched pair sits at ``w_p/2 +/- detuning``.

    Scans upward from the top of the stopband (or across ``bracket``) for the first
    sign change of the mismatch and refines it with Brent's method.
    """
    if bracket is None:
        sb = dispersion.stopband()
        start = (sb[1] if sb else dispersion.omega_range[0]) + TWO_PI * 1e6
        bracket = (start, min(start + TWO_PI * 1.5e9, dispersion.omega_range[1]))

    def db(wp):
        return float(mismatch_curve(drive, dispersion, wp / 2 - detuning, wp))

    grid = np.linspace(bracket[0], bracket[1], n_scan)
    vals = np.array([db(w) for w in grid])
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if idx.size == 0:
        raise DomainError("no pump frequency in the bracket phase matches this detuning")
    j = idx[0]
    return brentq(db, grid[j], grid[j + 1], xtol=1e-6, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class CompressionCurve:
    probe_dbm: np.ndarray
    gain_db: np.ndarray
    p_1db_dbm: float
    probe_frequency: float
    small_signal_gain_db: float
    convention: str = "half"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["probe_dbm", "gain_db"])
        for p, g in zip(self.probe_dbm, self.gain_db):
            writer.writerow([repr(float(p)), repr(float(g))])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps({"p_1db_dbm": self.p_1db_dbm, "freq_hz": self.probe_frequency / TWO_PI})


def compression_curve(
    drive: PumpDrive,
    dispersion: DispersionTable,
    probe_frequency: float,
    probe_dbm: Iterable[float],
    z0: float = 50.0,
    convention: PowerConvention = "half",
    power_tol_db: float = 0.1,
    controls: IntegratorControls = _ENDPOINTS,
    small_signal_dbm: float = -140.0,
) -> CompressionCurve:
    """Gain versus probe power with full pump depletion, and the input 1 dB compression point.

    ``P_-1dB`` is bracketed on the grid and then bisected (in dBm) until the bracket
    is narrower than ``power_tol_db``.
    """
    powers = np.asarray(list(probe_dbm), dtype=float)
    if powers.size == 0:
        raise ValueError("empty probe power grid")
    if np.any(np.diff(powers) <= 0):
        raise ValueError("probe powers must be strictly increasing")
    pump_dbm = amplitude_to_dbm(drive.pump_amplitude, z0, convention)
    if powers.max() >= pump_dbm:
        raise DomainError(f"probe powers must stay below the pump power ({pump_dbm:.2f} dBm)")

    def gain_at(p):
        return signal_gain_db(drive, dispersion, probe_frequency, dbm_to_amplitude(p, z0, convention), controls)

    g_ss = gain_at(min(small_signal_dbm, powers.min()))
    gains = np.array([gain_at(p) for p in powers])
    below = np.flatnonzero(gains < g_ss - 1.0)
    if below.size == 0:
        raise NoCompressionError(
            f"gain at {probe_frequency / TWO_PI / 1e9:.4f} GHz stays within 1 dB of {g_ss:.2f} dB up to {powers.max():.1f} dBm"
        )
    j = below[0]
    if j == 0:
        hi = powers[0]
        lo = small_signal_dbm
    else:
        lo, hi = powers[j - 1], powers[j]
    while hi - lo > power_tol_db:
        mid = 0.5 * (lo + hi)
        if gain_at(mid) < g_ss - 1.0:
            hi = mid
        else:
            lo = mid
    return CompressionCurve(powers, gains, 0.5 * (lo + hi), probe_frequency, g_ss, convention)


@dataclass(frozen=True)
class AsymmetryReport:
    seeds: tuple
    profiles: tuple
    tilts_db: tuple
    detuning: float

    def tilt_for(self, seed: float) -> float:
        return self.tilts_db[self.seeds.index(seed)]


def tilt_metric(drive: PumpDrive, dispersion: DispersionTable, signal_amplitude: float, detuning: float = ghz(1.0),
                controls: IntegratorControls = _ENDPOINTS) -> float:
    """Gain at ``w_p/2 + detuning`` minus gain at ``w_p/2 - detuning`` (dB)."""
    half = drive.pump_frequency / 2
    up = signal_gain_db(drive, dispersion, half + detuning, signal_amplitude, controls)
    down = signal_gain_db(drive, dispersion, half - detuning, signal_amplitude, controls)
    return up - down


def asymmetry_diagnostic(
    drive: PumpDrive,
    dispersion: DispersionTable,
    seeds: Optional[Sequence[float]] = None,
    signal_grid=None,
    detuning: float = ghz(1.0),
    controls: IntegratorControls = _ENDPOINTS,
    workers: int = 1,
) -> AsymmetryReport:
    """Gain profiles at increasing seed amplitude and their tilt about half the pump frequency.

    Default seeds are ``I_p0/100, /12, /8, /6``.
    """
    ip0 = drive.pump_amplitude
    seeds = tuple(ip0 / n for n in (100, 12, 8, 6)) if seeds is None else tuple(seeds)
    profiles, tilts = [], []
    for s in seeds:
        profiles.append(gain_profile(drive, dispersion, signal_grid, s, controls, workers))
        tilts.append(tilt_metric(drive, dispersion, s, detuning, controls))
    return AsymmetryReport(seeds, tuple(profiles), tuple(tilts), detuning)


def pump_phase_shift(drive: PumpDrive, bare_inductance: float, capacitance: float, form: str = "derived") -> float:
    """Kerr phase shift per cell of a lone pump, ``delta_p`` (rad/cell).

    ``form="derived"`` is ``xi k_p I_p0^2 / 8`` with ``k_p = w_p sqrt(L_d C)`` and
    ``L_d = L_0 (1 + I_d^2/I_*^2)``; it equals the pump phase the CME accumulate.
    ``form="printed"`` evaluates ``(1/8)(I_p0/I_*)^2 w_p sqrt(L_0 C) sqrt(1 + I_d^2/I_*^2)``,
    which differs from the derived form by a factor ``1 + I_d^2/I_*^2``.
    """
    r = (drive.dc_bias / drive.scale_current) ** 2
    base = 0.125 * (drive.pump_amplitude / drive.scale_current) ** 2 * drive.pump_frequency * math.sqrt(
        bare_inductance * capacitance
    )
    if form == "derived":
        return base / math.sqrt(1 + r)
    if form == "printed":
        return base * math.sqrt(1 + r)
    raise ValueError(f"unknown form {form!r}")


def calibrate_pump_amplitude(
    measured_phase_shift: float,
    n_cells: float,
    dc_bias: float,
    scale_current: float,
    pump_frequency: float,
    bare_inductance: float,
    capacitance: float,
    form: str = "derived",
) -> float:
    """Invert the pump phase shift. ``measured_phase_shift`` is ``phi - phi_0`` of S21 (rad).

    The wavenumber shift is ``delta_p = -measured/n_cells``, positive for a pump
    that slows the line, so a positive measured shift is out of the model's domain.
    """
    if n_cells < 1:
        raise DomainError("n_cells must be >= 1")
    delta_p = -measured_phase_shift / n_cells
    if delta_p < 0:
        raise DomainError("measured phase shift has the wrong sign for a kinetic-inductance nonlinearity")
    unit = pump_phase_shift(
        PumpDrive(dc_bias, scale_current, 0.5 * scale_current, pump_frequency),
        bare_inductance, capacitance, form,
    ) / 0.25
    # unit is delta_p for I_p0 = I_star
    amp = scale_current * math.sqrt(delta_p / unit)
    if not amp < scale_current:
        raise DomainError("inferred pump amplitude exceeds the scale current")
    return amp

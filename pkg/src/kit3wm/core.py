"""Shared physical types for the dc-biased three-wave-mixing kinetic inductance line.

All quantities are SI base units (henry, farad, ampere, rad/s). Conversions to
dB/dBm happen only at the I/O boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

from scipy import constants as _const

HBAR = _const.hbar
K_B = _const.k
E_CHARGE = _const.e

#: Vacuum noise in quanta.
N_VACUUM = 0.5

PowerConvention = Literal["half", "full"]


class DomainError(ValueError):
    """Raised when a physical input falls outside the model's domain."""


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise DomainError(f"{name} must be strictly positive and finite, got {value!r}")


@dataclass(frozen=True)
class CellParams:
    """Lumped elements of one unloaded cell: series inductance and two finger resonators."""

    series_inductance: float
    shunt_capacitance: float
    finger_inductance: float

    def __post_init__(self):
        _require_positive(
            series_inductance=self.series_inductance,
            shunt_capacitance=self.shunt_capacitance,
            finger_inductance=self.finger_inductance,
        )

    @property
    def impedance(self) -> float:
        return math.sqrt(self.series_inductance / self.shunt_capacitance)

    @property
    def finger_resonance(self) -> float:
        """Angular resonance of one finger, ``1/sqrt(L_f C/2)``."""
        return 1.0 / math.sqrt(self.finger_inductance * self.shunt_capacitance / 2)

    @property
    def finger_q(self) -> float:
        return math.sqrt(self.finger_inductance / (self.shunt_capacitance / 2)) / self.impedance

    @property
    def linear_wavenumber_per_omega(self) -> float:
        """``sqrt(L_d C)``: seconds per cell, the dispersionless slope of k(omega)."""
        return math.sqrt(self.series_inductance * self.shunt_capacitance)

    def to_dict(self) -> dict:
        return {
            "series_inductance": self.series_inductance,
            "shunt_capacitance": self.shunt_capacitance,
            "finger_inductance": self.finger_inductance,
        }


@dataclass(frozen=True)
class LoadingPattern:
    """Periodic impedance loading: ``N_u/2`` unloaded, ``N_l`` loaded, ``N_u/2`` unloaded cells."""

    unloaded_cells: int
    loaded_cells: int
    loaded_impedance: float
    loaded_finger_inductance: float
    supercell_count: int

    def __post_init__(self):
        if self.unloaded_cells < 0 or self.unloaded_cells % 2:
            raise DomainError(f"unloaded_cells must be a nonnegative even count, got {self.unloaded_cells}")
        if self.loaded_cells < 0:
            raise DomainError(f"loaded_cells must be nonnegative, got {self.loaded_cells}")
        if self.unloaded_cells + self.loaded_cells == 0:
            raise DomainError("a supercell needs at least one cell")
        if self.supercell_count < 0:
            raise DomainError(f"supercell_count must be nonnegative, got {self.supercell_count}")
        _require_positive(
            loaded_impedance=self.loaded_impedance,
            loaded_finger_inductance=self.loaded_finger_inductance,
        )

    @property
    def cells_per_supercell(self) -> int:
        return self.unloaded_cells + self.loaded_cells

    @property
    def total_cells(self) -> int:
        return self.supercell_count * self.cells_per_supercell

    def loaded_capacitance(self, cell: CellParams) -> float:
        """Capacitance to ground of a loaded cell, ``C_l = L_d / Z_l**2``."""
        return cell.series_inductance / self.loaded_impedance**2

    def to_dict(self) -> dict:
        return {
            "unloaded_cells": self.unloaded_cells,
            "loaded_cells": self.loaded_cells,
            "loaded_impedance": self.loaded_impedance,
            "loaded_finger_inductance": self.loaded_finger_inductance,
            "supercell_count": self.supercell_count,
        }


def nonlinearity_coefficients(dc_bias: float, scale_current: float) -> tuple[float, float]:
    """Return the 3WM and 4WM inductance coefficients ``(epsilon, xi)``.

    ``L = L_d (1 + epsilon I + xi I**2)`` with ``epsilon = 2 I_d/(I_*^2 + I_d^2)``
    and ``xi = 1/(I_*^2 + I_d^2)``.
    """
    if not scale_current > 0:
        raise DomainError(f"scale_current must be positive, got {scale_current!r}")
    if not 0 <= dc_bias < scale_current:
        raise DomainError(f"dc_bias must satisfy 0 <= I_d < I_star, got I_d={dc_bias!r}")
    xi = 1.0 / (scale_current**2 + dc_bias**2)
    return 2.0 * dc_bias * xi, xi


@dataclass(frozen=True)
class PumpDrive:
    dc_bias: float
    scale_current: float
    pump_amplitude: float
    pump_frequency: float
    epsilon: float = field(init=False)
    xi: float = field(init=False)

    def __post_init__(self):
        eps, xi = nonlinearity_coefficients(self.dc_bias, self.scale_current)
        if not 0 <= self.pump_amplitude < self.scale_current:
            raise DomainError(
                f"pump_amplitude must satisfy 0 <= I_p0 < I_star, got {self.pump_amplitude!r}"
            )
        _require_positive(pump_frequency=self.pump_frequency)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "xi", xi)

    @property
    def delta_l(self) -> float:
        """Relative inductance modulation depth caused by the pump."""
        return self.epsilon * self.pump_amplitude

    def replace(self, **changes) -> "PumpDrive":
        values = {
            "dc_bias": self.dc_bias,
            "scale_current": self.scale_current,
            "pump_amplitude": self.pump_amplitude,
            "pump_frequency": self.pump_frequency,
        }
        values.update(changes)
        return PumpDrive(**values)

    def to_dict(self) -> dict:
        return {
            "dc_bias": self.dc_bias,
            "scale_current": self.scale_current,
            "pump_amplitude": self.pump_amplitude,
            "pump_frequency": self.pump_frequency,
        }


@dataclass(frozen=True)
class ToneTriplet:
    pump: float
    signal: float
    idler: float

    def __post_init__(self):
        _require_positive(pump=self.pump, signal=self.signal, idler=self.idler)
        if self.signal + self.idler != self.pump:
            raise DomainError(
                f"3WM energy conservation violated: {self.signal!r} + {self.idler!r} != {self.pump!r}"
            )

    @classmethod
    def from_pump_signal(cls, pump: float, signal: float) -> "ToneTriplet":
        # pump - signal may round so that signal + idler != pump. Search nearby idlers
        # first; at a binade edge no idler may work, so the signal moves by an ulp too.
        for _ in range(8):
            idler = pump - signal
            for _ in range(4):
                if signal + idler == pump:
                    return cls(pump, signal, idler)
                idler = math.nextafter(idler, math.inf if signal + idler < pump else -math.inf)
            signal = math.nextafter(signal, 0.0)
        raise DomainError(f"cannot split {pump!r} into an exact signal/idler pair near {signal!r}")


def amplitude_to_watt(amplitude: float, z0: float, convention: PowerConvention = "half") -> float:
    if not z0 > 0:
        raise DomainError(f"z0 must be positive, got {z0!r}")
    if amplitude < 0:
        raise DomainError(f"amplitude must be nonnegative, got {amplitude!r}")
    factor = 0.5 if convention == "half" else 1.0
    return factor * z0 * amplitude**2


def amplitude_to_dbm(amplitude: float, z0: float = 50.0, convention: PowerConvention = "half") -> float:
    """Power of a current amplitude in dBm; ``-inf`` for zero amplitude.

    ``convention="half"`` treats ``amplitude`` as a peak current (``P = Z I^2/2``);
    ``"full"`` uses ``P = Z I^2``.
    """
    watt = amplitude_to_watt(amplitude, z0, convention)
    if watt == 0:
        return -math.inf
    return 10.0 * math.log10(watt / 1e-3)


def dbm_to_amplitude(dbm: float, z0: float = 50.0, convention: PowerConvention = "half") -> float:
    if not z0 > 0:
        raise DomainError(f"z0 must be positive, got {z0!r}")
    if dbm == -math.inf:
        return 0.0
    factor = 0.5 if convention == "half" else 1.0
    watt = 1e-3 * 10.0 ** (dbm / 10.0)
    return math.sqrt(watt / (factor * z0))


def quanta_to_kelvin(quanta: float, omega: float) -> float:
    return quanta * HBAR * omega / K_B


def kelvin_to_quanta(kelvin: float, omega: float) -> float:
    return kelvin * K_B / (HBAR * omega)


def ghz(f_ghz: float) -> float:
    """Angular frequency in rad/s for a frequency given in GHz."""
    return 2 * math.pi * f_ghz * 1e9

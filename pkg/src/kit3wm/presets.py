"""Parameter sets of the fabricated device and its noise-measurement chain."""

from __future__ import annotations

from .core import CellParams, LoadingPattern, PumpDrive, ghz

REFERENCE_CELL = CellParams(series_inductance=45.2e-12, shunt_capacitance=18.8e-15, finger_inductance=1.02e-9)
REFERENCE_LOADING = LoadingPattern(
    unloaded_cells=60,
    loaded_cells=6,
    loaded_impedance=80.0,
    loaded_finger_inductance=335e-12,
    supercell_count=1000,
)
REFERENCE_N_CELLS = 66_000

SCALE_CURRENT = 7e-3
DC_BIAS = 1.5e-3
#: Pump amplitude used for the theory curves.
THEORY_PUMP_AMPLITUDE = SCALE_CURRENT / 60
#: Measured pump amplitude, calibrated from the pump phase shift.
MEASURED_PUMP_AMPLITUDE = 160e-6

#: Reference pump frequencies (GHz) for the gain-profile presets, keyed by the intended
#: detuning (GHz) of the phase-matched pair from half the pump frequency.
REFERENCE_PUMPS_GHZ = {0.0: 8.8812, 1.0: 8.8992, 1.5: 8.9256, 2.0: 8.9736}
#: Reference pump (GHz) meant to have no phase-matched pair.
REFERENCE_UNMATCHED_PUMP_GHZ = 8.855


def reference_drive(pump_ghz: float = 8.8812, pump_amplitude: float = THEORY_PUMP_AMPLITUDE) -> PumpDrive:
    return PumpDrive(
        dc_bias=DC_BIAS,
        scale_current=SCALE_CURRENT,
        pump_amplitude=pump_amplitude,
        pump_frequency=ghz(pump_ghz),
    )


#: Component insertion losses (dB) between 3.5 and 5.5 GHz.
REFERENCE_INSERTION_LOSS_DB = {
    "sntj": 1.0,
    "bias_tee": 0.3,
    "lpf": 0.2,
    "dc": 0.2,
    "iso": 0.7,
    "kit": 1.4,
    "bypass": 2.4,
}

#: Chain values used in the main-text noise discussion.
REFERENCE_CHAIN = {
    "eta1_s": 0.57,
    "eta1_i": 0.57,
    "eta2": 0.64,
    "gain_db": 16.6,
    "hemt_noise": 8.0,
    "excess_sum": 0.77,
}

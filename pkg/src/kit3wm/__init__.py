"""Simulation and calibration toolkit for dc-biased three-wave-mixing kinetic inductance traveling-wave amplifiers."""

__version__ = "0.1.0"

from .core import (
    CellParams,
    DomainError,
    LoadingPattern,
    PumpDrive,
    ToneTriplet,
    amplitude_to_dbm,
    dbm_to_amplitude,
    ghz,
    kelvin_to_quanta,
    nonlinearity_coefficients,
    quanta_to_kelvin,
)
from .dispersion import DispersionTable, dispersion_relation, line_abcd, line_s21
from .cme import CmeSolution, IntegratorControls, integrate_cme, analytic_gain, phase_mismatch
from .amplifier import (
    compression_curve,
    find_phase_matched_pairs,
    gain_profile,
    pump_for_detuning,
    asymmetry_diagnostic,
    pump_phase_shift,
    calibrate_pump_amplitude,
)
from .noise import (
    NoiseChain,
    SntjSweep,
    chain_output_noise,
    fit_sweep,
    naive_fit,
    loss_budget,
    simulate_sweep,
    sntj_noise,
    system_added_noise,
)

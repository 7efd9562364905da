import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kit3wm.amplifier import (
    NoCompressionError,
    asymmetry_diagnostic,
    calibrate_pump_amplitude,
    compression_curve,
    find_phase_matched_pairs,
    gain_profile,
    mismatch_curve,
    pump_for_detuning,
    pump_phase_shift,
    signal_gain_db,
    tilt_metric,
)
from kit3wm.cme import IntegratorControls
from kit3wm.core import DomainError, PumpDrive, ghz
from kit3wm.presets import REFERENCE_CELL, reference_drive

L0 = 4.321560975609756e-11
COARSE = ghz(1) * np.linspace(2.5, 6.5, 41)


@pytest.fixture(scope="module")
def matched(reference_table):
    """Drive whose degenerate triplet is phase matched on the loaded line."""
    drive = reference_drive()
    return drive.replace(pump_frequency=pump_for_detuning(0.0, drive, reference_table))


def test_no_three_wave_term_gives_unity_gain(reference_table):
    drive = PumpDrive(0.0, 7e-3, 7e-3 / 60, ghz(8.8812))
    prof = gain_profile(drive, reference_table, COARSE)
    assert np.max(np.abs(prof.gain_db)) < 1e-9


def test_profile_shape_and_metadata(reference_table, matched):
    prof = gain_profile(matched, reference_table, COARSE)
    assert prof.gain_db.shape == COARSE.shape
    assert not prof.failed.any() and prof.failure_fraction == 0
    assert np.allclose(prof.idler_grid, matched.pump_frequency - COARSE)
    assert prof.signal_amplitude == matched.pump_amplitude / 100
    assert prof.line["n_cells"] == 66_000
    assert 16 < prof.gain_db.max() < 20


def test_gain_at_half_pump_is_finite(reference_table, matched):
    g = signal_gain_db(matched, reference_table, matched.pump_frequency / 2, matched.pump_amplitude / 100)
    assert math.isfinite(g)


@pytest.mark.parametrize("detuning_ghz", [0.2, 0.7, 1.0, 1.8])
def test_small_signal_profile_symmetric(reference_table, matched, detuning_ghz):
    tilt = tilt_metric(matched, reference_table, matched.pump_amplitude / 1000, ghz(detuning_ghz))
    assert abs(tilt) < 0.05


def test_failed_points_are_flagged_not_fatal(reference_table, matched):
    prof = gain_profile(matched, reference_table, COARSE[:5], controls=IntegratorControls(n_samples=2, max_steps=3))
    assert prof.failed.all()
    assert prof.failure_fraction == 1.0
    assert len(prof.notes) == 5
    rows = list(csv.reader(io.StringIO(prof.to_csv())))
    assert rows[0] == ["freq_hz", "gain_db"]
    assert all(r[1] == "nan" for r in rows[1:])


def test_profile_csv_values(reference_table, matched):
    prof = gain_profile(matched, reference_table, COARSE[:3])
    rows = list(csv.reader(io.StringIO(prof.to_csv())))
    assert float(rows[1][0]) == pytest.approx(2.5e9)
    assert np.array_equal([float(r[1]) for r in rows[1:]], prof.gain_db)


def test_profile_domain_errors(reference_table, matched):
    with pytest.raises(ValueError):
        gain_profile(matched, reference_table, [])
    with pytest.raises(DomainError):
        gain_profile(matched, reference_table, [ghz(200)])


def test_parallel_sweep_identical(reference_table, matched):
    a = gain_profile(matched, reference_table, COARSE, workers=1)
    b = gain_profile(matched, reference_table, COARSE, workers=3)
    assert np.array_equal(a.gain_db, b.gain_db)


def test_reordered_grid_gives_same_points(reference_table, matched):
    a = gain_profile(matched, reference_table, COARSE)
    b = gain_profile(matched, reference_table, COARSE[::-1])
    assert np.array_equal(a.gain_db, b.gain_db[::-1])


def test_pairs_are_matched_and_ordered(reference_table):
    drive = reference_drive()
    for f in (8.80, 8.8812, 8.9736):
        wp = ghz(f)
        pairs = find_phase_matched_pairs(wp, drive, reference_table)
        assert pairs
        lo, hi = reference_table.stopband()
        for ws, wi in pairs:
            assert ws <= wi
            assert ws + wi == pytest.approx(wp, rel=1e-15)
            assert not lo <= ws <= hi and not lo <= wi <= hi
            assert abs(mismatch_curve(drive, reference_table, ws, wp)) < 1e-8


def test_no_pairs_below_matching_threshold(reference_table, matched):
    wp = matched.pump_frequency - ghz(0.05)
    assert find_phase_matched_pairs(wp, matched, reference_table) == []


def test_pair_search_band_errors(reference_table, matched):
    with pytest.raises(DomainError):
        find_phase_matched_pairs(ghz(8.9), matched, reference_table, band=(ghz(5), ghz(6)))
    with pytest.raises(DomainError):
        find_phase_matched_pairs(ghz(500), matched, reference_table)


@pytest.mark.parametrize("detuning_ghz", [0.5, 1.0, 1.5, 2.0])
def test_pump_for_detuning_round_trip(reference_table, detuning_ghz):
    drive = reference_drive()
    wp = pump_for_detuning(ghz(detuning_ghz), drive, reference_table)
    pairs = find_phase_matched_pairs(wp, drive, reference_table)
    detunings = [(wi - ws) / 2 for ws, wi in pairs]
    assert min(abs(d - ghz(detuning_ghz)) for d in detunings) < ghz(1e-3)


def test_matching_pump_rises_with_detuning(reference_table):
    drive = reference_drive()
    pumps = [pump_for_detuning(ghz(d), drive, reference_table) for d in (0.0, 0.5, 1.0, 1.5, 2.0)]
    assert all(b > a for a, b in zip(pumps, pumps[1:]))


def test_pump_for_detuning_without_root(reference_table, matched):
    with pytest.raises(DomainError):
        pump_for_detuning(ghz(1), matched, reference_table, bracket=(ghz(8.60), ghz(8.70)))


def test_profile_collapses_below_threshold(reference_table, matched):
    drive = matched.replace(pump_frequency=matched.pump_frequency - ghz(0.05))
    prof = gain_profile(drive, reference_table, COARSE)
    assert prof.gain_db.mean() < 3


def test_detuned_pump_gives_two_lobes(reference_table):
    drive = reference_drive()
    drive = drive.replace(pump_frequency=pump_for_detuning(ghz(2), drive, reference_table))
    prof = gain_profile(drive, reference_table, COARSE)
    half = drive.pump_frequency / 2
    peaks = prof.peak_frequencies()
    assert (peaks < half).any() and (peaks > half).any()
    centre = np.argmin(np.abs(COARSE - half))
    assert prof.gain_db[centre] < prof.gain_db.max() - 1


@pytest.fixture(scope="module")
def compression(reference_table, matched):
    probe = matched.pump_frequency / 2 + ghz(1)
    return compression_curve(matched, reference_table, probe, np.arange(-90.0, -49.0, 1.0))


def test_compression_plateau_and_monotone(compression):
    g = compression.gain_db
    assert g[0] == pytest.approx(compression.small_signal_gain_db, abs=1e-3)
    peak = int(np.argmax(g))
    assert np.all(np.diff(g[peak:]) <= 0.05)
    assert g[-1] < compression.small_signal_gain_db - 1


def test_compression_point_consistent_with_curve(reference_table, matched, compression):
    p1 = compression.p_1db_dbm
    below = signal_gain_db(matched, reference_table, compression.probe_frequency, _amp(p1 - 0.1))
    above = signal_gain_db(matched, reference_table, compression.probe_frequency, _amp(p1 + 0.1))
    target = compression.small_signal_gain_db - 1
    assert below >= target - 0.02 and above <= target + 0.02


def _amp(dbm):
    from kit3wm.core import dbm_to_amplitude

    return dbm_to_amplitude(dbm)


def test_compression_outputs(compression):
    rows = list(csv.reader(io.StringIO(compression.to_csv())))
    assert rows[0] == ["probe_dbm", "gain_db"]
    summary = json.loads(compression.summary_json())
    assert set(summary) == {"p_1db_dbm", "freq_hz"}
    assert "\n" not in compression.summary_json()


def test_compression_errors(reference_table, matched):
    probe = matched.pump_frequency / 2
    with pytest.raises(NoCompressionError):
        compression_curve(matched, reference_table, probe, [-120.0, -110.0, -100.0])
    with pytest.raises(DomainError):
        compression_curve(matched, reference_table, probe, [-40.0, -20.0])
    with pytest.raises(ValueError):
        compression_curve(matched, reference_table, probe, [])
    with pytest.raises(ValueError):
        compression_curve(matched, reference_table, probe, [-60.0, -70.0])


@pytest.mark.parametrize("detuning_ghz", [0.2, 0.5, 0.8, 1.0])
def test_compression_higher_above_half_pump(reference_table, matched, detuning_ghz):
    half = matched.pump_frequency / 2
    grid = np.arange(-90.0, -40.0, 1.0)
    up = compression_curve(matched, reference_table, half + ghz(detuning_ghz), grid)
    down = compression_curve(matched, reference_table, half - ghz(detuning_ghz), grid)
    assert up.p_1db_dbm > down.p_1db_dbm


def test_tilt_grows_with_seed(reference_table, matched):
    report = asymmetry_diagnostic(matched, reference_table, signal_grid=COARSE)
    tilts = report.tilts_db
    assert abs(tilts[0]) < 0.05
    assert all(t > 0 for t in tilts[1:])
    assert all(b > a for a, b in zip(tilts, tilts[1:]))
    assert report.tilt_for(matched.pump_amplitude / 6) == tilts[-1]
    assert len(report.profiles) == 4


def test_pump_phase_shift_basics():
    drive = reference_drive(8.8812, 160e-6)
    assert pump_phase_shift(drive.replace(pump_amplitude=0.0), L0, REFERENCE_CELL.shunt_capacitance) == 0
    one = pump_phase_shift(drive, L0, REFERENCE_CELL.shunt_capacitance)
    two = pump_phase_shift(drive.replace(pump_amplitude=320e-6), L0, REFERENCE_CELL.shunt_capacitance)
    assert two == pytest.approx(4 * one, rel=1e-14)
    r = (drive.dc_bias / drive.scale_current) ** 2
    printed = pump_phase_shift(drive, L0, REFERENCE_CELL.shunt_capacitance, form="printed")
    assert printed / one == pytest.approx(1 + r, rel=1e-14)
    with pytest.raises(ValueError):
        pump_phase_shift(drive, L0, REFERENCE_CELL.shunt_capacitance, form="other")


def test_derived_phase_shift_equals_kerr_term():
    drive = reference_drive(8.8812, 160e-6)
    k_p = drive.pump_frequency * REFERENCE_CELL.linear_wavenumber_per_omega
    want = drive.xi * k_p * drive.pump_amplitude**2 / 8
    assert pump_phase_shift(drive, L0, REFERENCE_CELL.shunt_capacitance) == pytest.approx(want, rel=1e-12)


@given(
    frac_d=st.floats(0, 0.9),
    frac_p=st.floats(1e-3, 0.9),
    f=st.floats(1e9, 2e10),
    form=st.sampled_from(["derived", "printed"]),
)
@settings(max_examples=100)
def test_calibration_round_trip(frac_d, frac_p, f, form):
    i_star = 7e-3
    drive = PumpDrive(frac_d * i_star, i_star, frac_p * i_star, 2 * math.pi * f)
    n = 66_000
    shift = -pump_phase_shift(drive, L0, REFERENCE_CELL.shunt_capacitance, form) * n
    back = calibrate_pump_amplitude(shift, n, drive.dc_bias, i_star, drive.pump_frequency, L0,
                                    REFERENCE_CELL.shunt_capacitance, form)
    assert back == pytest.approx(drive.pump_amplitude, rel=1e-9)


def test_calibration_domain():
    args = (66_000, 1.5e-3, 7e-3, ghz(8.8812), L0, REFERENCE_CELL.shunt_capacitance)
    with pytest.raises(DomainError):
        calibrate_pump_amplitude(+0.2, *args)
    with pytest.raises(DomainError):
        calibrate_pump_amplitude(-0.2, 0.5, *args[1:])
    with pytest.raises(DomainError):
        calibrate_pump_amplitude(-1e4, *args)
    assert calibrate_pump_amplitude(0.0, *args) == 0.0


def test_calibration_reference_measurement():
    amp = calibrate_pump_amplitude(
        -0.21198235118477554, 66_000, 1.5e-3, 7e-3, ghz(8.8812), L0, REFERENCE_CELL.shunt_capacitance
    )
    assert amp == pytest.approx(160e-6, rel=1e-9)

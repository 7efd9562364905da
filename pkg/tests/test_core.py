import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kit3wm.core import (
    CellParams,
    DomainError,
    LoadingPattern,
    PumpDrive,
    ToneTriplet,
    amplitude_to_dbm,
    dbm_to_amplitude,
    kelvin_to_quanta,
    nonlinearity_coefficients,
    quanta_to_kelvin,
)
from kit3wm.presets import REFERENCE_CELL, REFERENCE_LOADING, reference_drive

currents = st.floats(1e-4, 2e-2)


def test_zero_bias_has_no_three_wave_term():
    eps, xi = nonlinearity_coefficients(0.0, 7e-3)
    assert eps == 0.0
    assert xi == pytest.approx(1 / 4.9e-5, rel=1e-12)


def test_operating_point_coefficients():
    eps, xi = nonlinearity_coefficients(1.5e-3, 7e-3)
    # oracle: the definitions evaluated by hand
    assert eps == pytest.approx(2 * 1.5e-3 / (49e-6 + 2.25e-6), rel=1e-12)
    assert xi == pytest.approx(1 / (49e-6 + 2.25e-6), rel=1e-12)
    assert eps == pytest.approx(58.54, abs=0.005)
    assert xi == pytest.approx(19512, abs=0.5)


def test_modulation_depth_at_theory_pump():
    drive = reference_drive()
    assert drive.delta_l == pytest.approx(6.8e-3, abs=0.05e-3)


@pytest.mark.parametrize("i_d, i_star", [(7e-3, 7e-3), (8e-3, 7e-3), (-1e-3, 7e-3), (1e-3, 0.0), (1e-3, -1.0)])
def test_coefficient_domain(i_d, i_star):
    with pytest.raises(DomainError):
        nonlinearity_coefficients(i_d, i_star)


@given(i_star=currents, frac=st.floats(0, 0.999))
def test_epsilon_is_twice_bias_times_xi(i_star, frac):
    eps, xi = nonlinearity_coefficients(frac * i_star, i_star)
    assert eps == 2 * (frac * i_star) * xi


@given(i_d=st.floats(0, 5e-3), a=currents, b=currents)
def test_coefficients_nonincreasing_in_scale_current(i_d, a, b):
    lo, hi = sorted((a, b))
    if i_d >= lo:
        return
    e_lo, x_lo = nonlinearity_coefficients(i_d, lo)
    e_hi, x_hi = nonlinearity_coefficients(i_d, hi)
    assert 0 <= e_hi <= e_lo
    assert 0 < x_hi <= x_lo


@given(st.lists(st.floats(0, 6.9e-3), min_size=2, max_size=8))
def test_delta_l_linear_in_pump(amps):
    base = PumpDrive(1.5e-3, 7e-3, 1e-4, 1e10)
    for a in amps:
        assert base.replace(pump_amplitude=a).delta_l == pytest.approx(base.delta_l * a / 1e-4, rel=1e-12, abs=1e-300)


def test_drive_rejects_large_pump():
    with pytest.raises(DomainError):
        PumpDrive(1.5e-3, 7e-3, 7e-3, 1e10)
    with pytest.raises(DomainError):
        PumpDrive(1.5e-3, 7e-3, 1e-4, 0.0)


@given(
    ld=st.floats(1e-12, 1e-9),
    c=st.floats(1e-15, 1e-12),
    lf=st.floats(1e-11, 1e-8),
)
def test_cell_derived_quantities_round_trip(ld, c, lf):
    cell = CellParams(ld, c, lf)
    z = cell.impedance
    assert z * z * c == pytest.approx(ld, rel=1e-12)
    wf = cell.finger_resonance
    assert wf * wf * lf * c / 2 == pytest.approx(1.0, rel=1e-12)
    assert cell.finger_q * z == pytest.approx(math.sqrt(2 * lf / c), rel=1e-12)
    assert CellParams(**cell.to_dict()) == cell


def test_reference_cell_values():
    assert REFERENCE_CELL.impedance == pytest.approx(49.03, abs=0.01)
    assert REFERENCE_CELL.finger_resonance / (2 * math.pi) == pytest.approx(51.4e9, rel=2e-3)
    assert REFERENCE_LOADING.loaded_capacitance(REFERENCE_CELL) == pytest.approx(7.06e-15, abs=0.005e-15)
    assert REFERENCE_LOADING.total_cells == 66_000


@pytest.mark.parametrize("value", [0.0, -1e-12, math.inf, math.nan])
def test_cell_rejects_nonpositive(value):
    with pytest.raises(DomainError):
        CellParams(value, 1e-15, 1e-9)


def test_loading_requires_even_unloaded_count():
    with pytest.raises(DomainError):
        LoadingPattern(61, 6, 80.0, 335e-12, 1000)


@given(nu=st.integers(0, 200).map(lambda n: 2 * n), nl=st.integers(0, 50), nsc=st.integers(0, 5000))
def test_total_cells_exact(nu, nl, nsc):
    if nu + nl == 0:
        return
    assert LoadingPattern(nu, nl, 80.0, 335e-12, nsc).total_cells == nsc * (nu + nl)


@given(p=st.floats(1e6, 2e10), s=st.floats(0.01, 0.99))
def test_triplet_from_pump_signal_is_exact(p, s):
    t = ToneTriplet.from_pump_signal(p, p * s)
    assert t.signal + t.idler == t.pump


def test_triplet_rejects_energy_violation():
    with pytest.raises(DomainError):
        ToneTriplet(10.0, 4.0, 5.0)
    with pytest.raises(DomainError):
        ToneTriplet(0.1 + 0.2, 0.1, 0.2 + 1e-15)


def test_power_conventions():
    assert amplitude_to_dbm(160e-6) == pytest.approx(-31.93, abs=0.01)
    assert amplitude_to_dbm(160e-6, convention="full") == pytest.approx(-28.92, abs=0.01)
    assert amplitude_to_dbm(0.0) == -math.inf
    assert dbm_to_amplitude(-math.inf) == 0.0
    with pytest.raises(DomainError):
        amplitude_to_dbm(1e-3, z0=0.0)


@given(dbm=st.floats(-200, 30), conv=st.sampled_from(["half", "full"]), z0=st.floats(1, 500))
def test_dbm_round_trip(dbm, conv, z0):
    back = amplitude_to_dbm(dbm_to_amplitude(dbm, z0, conv), z0, conv)
    assert back == pytest.approx(dbm, abs=1e-9)


# subnormal results lose relative precision, so tiny nonzero n are excluded
@given(n=st.one_of(st.just(0.0), st.floats(1e-200, 100)), f=st.floats(1e8, 2e10))
def test_quanta_kelvin_round_trip(n, f):
    w = 2 * math.pi * f
    assert kelvin_to_quanta(quanta_to_kelvin(n, w), w) == pytest.approx(n, rel=1e-12, abs=1e-300)

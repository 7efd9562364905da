"""
Gain profile and saturation
===========================

Integrates the coupled-mode equations across the band, then looks at how a
strong signal tilts the profile and moves the compression point.
"""

import numpy as np

from kit3wm import compression_curve, gain_profile, pump_for_detuning
from kit3wm.amplifier import tilt_metric
from kit3wm.presets import REFERENCE_CELL, REFERENCE_LOADING, reference_drive
from kit3wm import dispersion_relation

TWO_PI = 2 * np.pi
GHZ = TWO_PI * 1e9

table = dispersion_relation(REFERENCE_CELL, REFERENCE_LOADING)
drive = reference_drive()
drive = drive.replace(pump_frequency=pump_for_detuning(0.0, drive, table))
print(f"pump at {drive.pump_frequency / GHZ:.4f} GHz, I_p0 = {drive.pump_amplitude * 1e6:.1f} uA")

# %%
# Small-signal profile on a 201-point grid.
profile = gain_profile(drive, table)
peak = np.nanargmax(profile.gain_db)
print(f"peak gain {profile.gain_db[peak]:.2f} dB at {profile.signal_grid[peak] / GHZ:.3f} GHz")
print(f"mean gain {np.nanmean(profile.gain_db):.2f} dB over {profile.signal_grid.size} points")

# %%
# Larger seeds deplete the pump; the upper half of the band holds up better.
for n in (100, 12, 8, 6):
    print(f"I_s0 = I_p0/{n:<3d} tilt {tilt_metric(drive, table, drive.pump_amplitude / n):+.3f} dB")

# %%
powers = np.arange(-80.0, -48.0, 1.0)
for sign, side in ((-1, "below"), (1, "above")):
    curve = compression_curve(drive, table, drive.pump_frequency / 2 + sign * GHZ, powers)
    print(f"1 GHz {side} half pump: G_ss {curve.small_signal_gain_db:.2f} dB, P-1dB {curve.p_1db_dbm:.2f} dBm")

"""
Dispersion of the loaded line and where the pump phase matches
===============================================================

Builds the Bloch wavenumber of the periodically loaded line, locates the
stopband, and scans pump frequencies for phase-matched signal/idler pairs.
Run with ``python3 demos/dispersion_and_phase_matching.py``.
"""

import numpy as np

from kit3wm import dispersion_relation, find_phase_matched_pairs, pump_for_detuning
from kit3wm.presets import REFERENCE_CELL, REFERENCE_LOADING, REFERENCE_PUMPS_GHZ, reference_drive

TWO_PI = 2 * np.pi

# %%
# The table covers 0.5 to 30 GHz by default; k is unwrapped per cell.
table = dispersion_relation(REFERENCE_CELL, REFERENCE_LOADING)
lo, hi = table.stopband()
print(f"stopband  {lo / TWO_PI / 1e9:.3f} - {hi / TWO_PI / 1e9:.3f} GHz")

# k* is what the loading adds on top of the straight line omega*sqrt(L C)
for f in (4, 6, 8, 8.5, 10, 12):
    i = np.argmin(np.abs(table.frequency_grid - TWO_PI * f * 1e9))
    print(f"  {f:5.1f} GHz  k* = {table.k_star[i]:+.3e} rad/cell")

# %%
# Roots of the Kerr-corrected mismatch for the pump presets.
drive = reference_drive()
for target, f_p in sorted(REFERENCE_PUMPS_GHZ.items()):
    w_p = TWO_PI * f_p * 1e9
    pairs = find_phase_matched_pairs(w_p, drive.replace(pump_frequency=w_p), table)
    found = [(w_p / 2 - ws) / TWO_PI / 1e9 for ws, _ in pairs]
    print(f"pump {f_p} GHz: detuning {', '.join(f'{d:.3f}' for d in found)} GHz (preset label {target})")

# %%
# Inverting the search gives the pump that puts the roots where we want them.
for target in (0.0, 1.0, 1.5, 2.0):
    w_p = pump_for_detuning(TWO_PI * target * 1e9, drive, table)
    print(f"detuning {target} GHz needs a pump at {w_p / TWO_PI / 1e9:.5f} GHz")

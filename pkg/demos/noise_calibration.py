"""
Calibrating the noise of the amplifier chain with a shot-noise junction
=======================================================================

Simulates a junction bias sweep through the chain, fits it with the
signal-plus-idler model and with the single-input model, and converts the
loss budget into chain efficiencies.
"""

import numpy as np

from kit3wm import NoiseChain, loss_budget, simulate_sweep, system_added_noise
from kit3wm.core import ghz, quanta_to_kelvin
from kit3wm.noise import compare_fits, hemt_only_noise
from kit3wm.presets import REFERENCE_CHAIN, REFERENCE_INSERTION_LOSS_DB

# %%
budget = loss_budget(REFERENCE_INSERTION_LOSS_DB, 4.5e9)
print(f"eta1_s = {budget.eta1_s:.3f}  eta2 = {budget.eta2:.3f}  bypassed chain {budget.total_db:.1f} dB")

chain = NoiseChain(
    eta1_s=REFERENCE_CHAIN["eta1_s"], eta1_i=REFERENCE_CHAIN["eta1_i"], eta2=REFERENCE_CHAIN["eta2"],
    gain=10 ** (REFERENCE_CHAIN["gain_db"] / 10), hemt_gain=10**3.5, room_gain=100.0,
    hemt_noise=REFERENCE_CHAIN["hemt_noise"],
    excess_s=REFERENCE_CHAIN["excess_sum"] / 2, excess_i=REFERENCE_CHAIN["excess_sum"] / 2,
)
noise = system_added_noise(chain)
print(f"system noise {noise.exact:.3f} quanta = {quanta_to_kelvin(noise.exact, ghz(4.5)):.3f} K")
print(f"  of which the HEMT contributes {noise.hemt_term:.3f} quanta")

# with the amplifier bypassed the HEMT dominates
eta = budget.eta_total
off = hemt_only_noise(NoiseChain(eta1_s=eta, eta1_i=eta, eta2=1.0, gain=1.0, hemt_noise=8.0))
print(f"amplifier off: {off:.1f} quanta = {quanta_to_kelvin(off, ghz(4.5)):.2f} K")

# %%
# The idler port sees the junction too; dropping it doubles the apparent gain
# and halves the apparent noise. Signal and idler are only 81 MHz apart here, so
# this sweep is noiseless: with noise the two knees cannot be told apart.
sweep = simulate_sweep(chain, ghz(4.4), ghz(4.4812))
comparison = compare_fits(sweep)
print(comparison.report())

# %%
# Repeat over seeds to see the scatter of the recovered system noise.
estimates = [compare_fits(simulate_sweep(chain, ghz(4.0), ghz(4.8812), sigma=0.05, seed=s)).two_input.n_sigma
             for s in range(30)]
print(f"30 seeds: mean {np.mean(estimates):.3f}, std {np.std(estimates):.3f} (truth {noise.exact:.3f})")

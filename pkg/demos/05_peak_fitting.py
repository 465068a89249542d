"""
From a raw trace to assigned transitions
========================================

Simulate a spectrum, add a slow baseline, remove it with a spline fitted
outside the resonance windows, fit derivative Lorentzians and match the
centres to the transition table.
"""

import numpy as np

from donorspin import AS75, solve
from donorspin.lockin import FM, SpectrumConfig, simulate_spectrum
from donorspin.specfit import assign_transitions, expected_resonances, fit_peaks, subtract_background

sol = solve(AS75, 3.6)
rf = sol.energies[4] - sol.energies[1]
gamma = 0.005

B = np.arange(3.3, 4.3, 5e-4)
signal = simulate_spectrum(AS75, SpectrumConfig(rf, B, FM, 0.001, gamma)).signal
raw = signal + 0.3 * np.max(np.abs(signal)) * (1 + (B - 3.3) - 0.8 * (B - 3.3) ** 2)

lines = expected_resonances(AS75, rf, B[0], B[-1], gamma)
windows = [(b - 8 * w, b + 8 * w) for _, b, w in lines]
corrected, baseline = subtract_background(B, raw, windows)
print("baseline residual: %.1e of the signal scale" % (np.max(np.abs(corrected - signal)) / np.max(np.abs(signal))))

fit = fit_peaks(B, corrected, len(lines), guesses=[(b, w) for _, b, w in lines])
print("converged:", fit.converged, " r^2 = %.8f" % fit.r_squared)
for a, pk in zip(assign_transitions(fit, AS75, rf), fit.peaks):
    print(f"peak at {pk.center:.5f} mT  dBpp = {pk.delta_B_pp * 1e3:.3f} uT  "
          f"phase {pk.phase_sign:+d}  -> {a.transition}, off by {a.distance * 1e3:.3f} uT")

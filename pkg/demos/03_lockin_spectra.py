"""
Lock-in spectra under frequency and field modulation
====================================================

A field sweep at a fixed carrier, demodulated at the first harmonic.
Frequency modulation (FM) shifts the detuning directly, so the sign of the
recorded derivative depends on the sign of df/dB0 at each crossing. Field
modulation (BM) always follows dL/dB0 and shows no such inversion.
"""

import numpy as np

from donorspin import AS75, solve
from donorspin.lockin import BM, FM, SpectrumConfig, simulate_spectrum
from donorspin.specfit import expected_resonances

# Carrier chosen so that the (2,5) line crosses it at 3.6 mT and again just
# below 4.0 mT, on the other side of its turning point.
sol = solve(AS75, 3.6)
rf = sol.energies[4] - sol.energies[1]
gamma = 0.005
print("carrier %.5f MHz" % rf)

grid = np.arange(3.3, 4.3, 5e-4)
fm = simulate_spectrum(AS75, SpectrumConfig(rf, grid, FM, 0.001, gamma)).signal
bm = simulate_spectrum(AS75, SpectrumConfig(rf, grid, BM, 1e-4, gamma)).signal

for pair, B_res, width in expected_resonances(AS75, rf, 3.3, 4.3, gamma):
    low = (grid > B_res - 4 * width) & (grid < B_res)
    s_fm = np.sign(fm[low][np.argmax(np.abs(fm[low]))])
    s_bm = np.sign(bm[low][np.argmax(np.abs(bm[low]))])
    print(f"{pair} at {B_res:.4f} mT (width {width * 1e3:.2f} uT): "
          f"low-field lobe FM {s_fm:+.0f}, BM {s_bm:+.0f}")

# At the nominal 383.000 MHz the carrier sits below both turning
# frequencies; the CT lines never cross and appear as broad near-miss
# features, while (3,4) resonates at about 0.67 mT.
wide = np.arange(0.3, 6.0, 0.002)
spec = simulate_spectrum(AS75, SpectrumConfig(383.0, wide, FM, 0.5, 1.0), keep_components=True)
for pair, trace in sorted(spec.components.items()):
    k = np.argmax(np.abs(trace))
    print(f"383 MHz component {pair}: strongest response {trace[k]:+.3g} at {wide[k]:.3f} mT")

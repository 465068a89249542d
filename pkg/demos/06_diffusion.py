"""
Lateral spread of As from a contact
===================================

Crank-Nicolson diffusion from a constant-concentration source through a
three-step anneal, and the distance at which the profile drops below the
metal-insulator transition threshold.

The Arrhenius parameters below are illustrative placeholders, not fitted
values.
"""

import numpy as np
from scipy.special import erfc

from donorspin.diffusion import (
    DEVICE_BUDGET,
    ILLUSTRATIVE_AS_IN_SI,
    ConcentrationProfile,
    DiffusivityModel,
    diffuse,
    diffusion_length,
    mit_crossing,
    reference_marker,
)

model = DiffusivityModel(**ILLUSTRATIVE_AS_IN_SI)
for step in DEVICE_BUDGET:
    print(f"{step.label:9s} {step.temperature - 273.15:6.0f} C {step.duration:5.0f} s  "
          f"D = {model.diffusivity(step.temperature):.3e} cm^2/s")

profile = ConcentrationProfile.uniform(200.0, 0.5, left_bc="source", source_concentration=1e20)
final = diffuse(profile, DEVICE_BUDGET, model)
L = diffusion_length(model, DEVICE_BUDGET)
print("diffusion length sqrt(sum D t) = %.2f nm" % L)
print("MIT crossing (7.8e18 cm^-3) at %.2f nm" % mit_crossing(final, 7.8e18))

# With the source held fixed, substituting tau = integral of D dt turns the
# whole budget into one step, so erfc(x / 2L) is exact. Here L spans only
# about eight cells; refining the grid shows the second-order convergence.
for dx in (0.5, 0.25, 0.125):
    p = ConcentrationProfile.uniform(100.0, dx, left_bc="source", source_concentration=1e20)
    c = diffuse(p, DEVICE_BUDGET, model)
    exact = 1e20 * erfc(c.x / (2 * L))
    mask = exact > 1e17
    err = np.max(np.abs(c.concentration[mask] / exact[mask] - 1))
    print("dx = %.3f nm: max deviation from erfc %.2f%%" % (dx, 100 * err))

print(reference_marker(16, 5e17).header_line())

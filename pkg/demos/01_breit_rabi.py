"""
Energy levels of an As donor in a weak field
============================================

The donor electron (S = 1/2) couples to the 75As nucleus (I = 3/2) through
the contact hyperfine interaction A = 198.4 MHz. At zero field the eight
levels group into an F = 1 triplet and an F = 2 quintet separated by 2A.
"""

import numpy as np

from donorspin import AS75, solve, sweep

# Zero field: two degenerate manifolds.
E0 = solve(AS75, 0.0).energies
print("B0 = 0 mT levels (MHz):", np.round(E0, 3))
print("F=2 / F=1 gap: %.4f MHz (2A = %.1f)" % (E0[3:].mean() - E0[:3].mean(), 2 * AS75.A))

# A sweep up to 10 mT. Levels are listed in ascending order at each field;
# the tracked view follows each state continuously instead.
table = sweep(AS75, 0.0, 10.0, 0.5)
for B, e in zip(table.B_grid[::4], table.energies[::4]):
    print("%5.1f mT  " % B + " ".join("%9.2f" % v for v in e))

# Far above the hyperfine scale the levels split into two groups of four
# whose slope is set by the electron Zeeman term.
slopes = table.level_slopes()[-1]
print("slopes at 10 mT (MHz/mT):", np.round(slopes, 2))

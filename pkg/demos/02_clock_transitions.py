"""
Clock transitions
=================

Where an allowed transition frequency has a turning point in B0 it is, to
first order, insensitive to field noise. For 75As two such points sit close
together near 3.8 mT.
"""

from donorspin import AS75, find_clock_transitions, transition_table

cts = find_clock_transitions(AS75, 0.5, 10.0)
for ct in cts:
    print(f"({ct.i},{ct.j})  B* = {ct.B_star:.5f} mT  f* = {ct.f_star:.5f} MHz  "
          f"curvature = {ct.curvature:.4f} MHz/mT^2")

c1, c2 = cts
print("pair splitting: %.1f kHz, %.2f uT" % (abs(c1.f_star - c2.f_star) * 1e3, abs(c1.B_star - c2.B_star) * 1e3))

# Slopes of the allowed lines on either side of the turning points.
for B in (3.0, 3.8, 4.6):
    rows = [t for t in transition_table(AS75, B) if t.allowed and t.pair in ((2, 5), (3, 6))]
    print(f"B0 = {B} mT:", ", ".join(f"{t.pair} df/dB = {t.dfdB:+.4f}" for t in rows))

# Compare with the ordinary (3,4) line, which has no turning point here.
(t34,) = [t for t in transition_table(AS75, 0.65) if t.pair == (3, 4)]
print("(3,4) at 0.65 mT: f = %.2f MHz, df/dB = %.2f MHz/mT" % (t34.f, t34.dfdB))
print("field sensitivity ratio (3,4) vs CT at 3.7 mT: %.0f" % (
    abs(t34.dfdB) / abs(next(t.dfdB for t in transition_table(AS75, 3.7) if t.pair == (2, 5)))))

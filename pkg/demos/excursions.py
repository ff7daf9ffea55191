"""
Two particles under stirring
============================

Follow the difference of two stirred particles started as neighbors
(the exclusion difference X) next to a free walk with the same jump
rates (Y), and look at how long each spends next to the origin.
"""
import math

from cpstir import exclusion, green
from cpstir.core import SeededStream

s = SeededStream(1, "demo/excursions")

# Mean time to leave the shell of nearest neighbors. X cannot step onto
# the origin (the two particles never share a site), Y can.
for d in (2, 3):
    exact = exclusion.excursion_constants(d)
    for kind, target in (("X", "U_X"), ("Y", "U_Y")):
        r = exclusion.excursion_mean(kind, target, d, 200_000, s)
        print(f"d={d} {target:4s} simulated {r.mean:.4f} ± {r.std_error:.4f}   exact {exact[target]:.4f}")

# In d=3 both local times settle at (G(0,0) - 1)/2; the gap at finite t
# shrinks like 1/sqrt(t).
print("\nG(0,0) =", green.G_D3, " (G-1)/2 =", green.LOCAL_TIME_D3)
for t in (1e2, 1e3):
    x = exclusion.local_time_estimate("X", "N0", t, 3, 20_000, s)
    y = exclusion.local_time_estimate("Y", "N0", t, 3, 20_000, s)
    print(f"t={t:7.0f}  X: {x.mean:.4f}  Y: {y.mean:.4f}  "
          f"expected shortfall ≈ {exclusion.d3_truncation_bias(t):.4f}")

# In d=2 the local time grows like log t / (2 pi); the ratio of the
# exclusion difference near the origin to the free walk near {0} + shell
# tends to 4/5.
hs = [1e2, 1e3, 1e4]
curve = exclusion.local_time_curve("Y", "N0", hs, 2, 5000, s)
for h, r in zip(hs, curve):
    print(f"d=2 t={h:6.0f}  Y near origin {r.mean:.4f}   log t/(2 pi) = {math.log(h) / (2 * math.pi):.4f}")
r = exclusion.local_time_ratio(1e4, 2, 5000, s)
print(f"ratio at t=1e4: {r.mean:.3f} ± {r.std_error:.3f} (limit 0.8)")

"""
One window of length 1/log N
============================

In a window of length t* = 1/log N the root gives birth twice and nobody
else does anything (the pattern E). With some probability the second
child lands on the first one and is lost; this is the event I. Twice
P[I] beats the growth e^{t*(lam-1)} - 1 of the free genealogy when lam is
close enough to 1, which rules out survival.
"""
import math

from cpstir import events
from cpstir.core import SeededStream
from cpstir.genealogy import t_star

s = SeededStream(4, "demo/events")
lam, N = 1.0, 100.0
print(f"t* = {t_star(N):.4f}")
print(f"P[E] closed form {events.prob_E_closed(lam, N):.6f}")
r = events.estimate_event_E(lam, N, 500_000, s)
print(f"P[E] simulated   {r.mean:.6f} ± {r.std_error:.6f}")

# Replay the window through the coupled construction, conditioned on E.
i = events.estimate_I_prob(lam, N, 3000, s)
j = events.estimate_J_prob(lam, N, 3000, s)
o = events.p_I_oracle(lam, N, 50_000, s)
print(f"P[I] {i.mean:.3e} ± {i.std_error:.1e}  ({i.extra['occurrences']} occurrences)")
print(f"P[J] {j.mean:.3e} ± {j.std_error:.1e}")
print(f"P[I] from the difference process alone {o.mean:.3e} ± {o.std_error:.1e}")

# The criterion with the lower confidence bound of the estimate.
for lam_try in (1.0, 1.0 + 0.5 * math.log1p(2 * o.mean) / t_star(N), 1.01):
    v = events.extinction_criterion(lam_try, N, o)
    print(f"lam={lam_try:.6f}: {v.value}")

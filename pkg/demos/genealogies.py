"""
Free and thinned genealogies
============================

The free genealogy branches without interaction. The thinned one uses
the same clocks and positions but drops every birth onto an occupied
site, which makes it a contact process with stirring.
"""
import numpy as np

from cpstir.core import SeededStream, UniformBuffer
from cpstir.genealogy import ROOT, CoupledSystem, evolve_coupled, psi_mean

s = SeededStream(3, "demo/genealogy")

for lam in (0.8, 1.2):
    r = psi_mean(lam, 5.0, 20_000, s)
    print(f"lam={lam}: E[#Psi at t=5] = {r.mean:.3f} ± {r.std_error:.3f}  (e^((lam-1)t) = {r.extra['target']:.3f})")

# A blocked birth by hand: the root gives birth twice in the same direction
# before anything moves.
c = CoupledSystem(lam=1.0, N=0.0)
print(c.birth(ROOT, (1, 0), t=0.1))   # ((1,), 1): placed in both
print(c.birth(ROOT, (1, 0), t=0.2))   # ((2,), -1): present in Psi only
c.audit()

# More stirring separates relatives faster, so fewer births are blocked.
buf = UniformBuffer(s.child("runs"))
for N in (0.0, 10.0, 100.0):
    gaps = []
    for _ in range(300):
        run = evolve_coupled(1.5, N, 2.0, buf, checkpoints=[2.0])
        gaps.append(run.psi_counts[-1] - run.xi_counts[-1])
    print(f"N={N:5.0f}: mean #Psi - #Xi at t=2 is {np.mean(gaps):.3f}")

run = evolve_coupled(1.5, 5.0, 1.0, buf, checkpoints=[1.0], log=True)
for t, kind, a, x in run.log[:8]:
    print(f"{t:.4f} {kind:15s} {a} {x}")

"""
Alternating renewal pairs with heavy-tailed gaps
================================================

Two alternating processes share their v-blocks (Pareto, infinite mean)
and differ only in the u-blocks. The time spent in u-blocks up to t then
has the same growth in both, and the ratio of means tends to
E[u1]/E[u2].
"""
from cpstir import renewal
from cpstir.core import DistributionSpec as D
from cpstir.core import SeededStream

s = SeededStream(2, "demo/renewal")
heavy = D.pareto(0.5, 1.0)

for u1, u2 in ((D.deterministic(1), D.exponential(1)), (D.deterministic(2), D.deterministic(1))):
    spec = renewal.RenewalSpec(u1, u2, heavy)
    for t in (1e2, 1e4, 1e6):
        r = renewal.kappa_ratio(spec, t, 1000, s)
        print(f"{str(u1):6s} vs {str(u2):6s} t={t:8.0f}: ratio {r.mean:.4f} ± {r.std_error:.4f}"
              f"   target {r.extra['target']:.2f}")

# The number of completed cycles grows sublinearly because the v-blocks
# have no mean.
spec = renewal.RenewalSpec(D.deterministic(1), D.deterministic(1), heavy)
for r in renewal.n_t_sublinearity(spec, [1e2, 1e4, 1e6], 300, s):
    print(f"t={r.extra['horizon']:8.0f}: E[N_t]/t = {r.mean:.4g}")

# The partial sums of mean-one u's stay within k^(3/4) of the integers.
for k in (100, 1000, 10_000):
    r = renewal.delta_max_statistic(D.exponential(1), k, 300, s)
    print(f"k={k:6d}: E[max Delta]/k^(3/4) = {r.extra['scaled']:.4f}")

# Pathwise, the difference of the two u-times never exceeds max Delta.
spec = renewal.RenewalSpec(D.deterministic(1), D.exponential(1), heavy)
print("bound violations:", renewal.kappa_difference_bound_check(spec, 1e3, 1000, s))

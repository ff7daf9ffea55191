"""Two alternating renewal processes that share their v-state sojourns.

Path ``i`` starts in its u-state at time 0 and alternates
``U^(i)_0, V_0, U^(i)_1, V_1, ...``. Both paths read the same realized
``V`` sequence and independent ``U`` sequences. ``kappa_t`` is the time spent
in the u-state up to ``t``; ``N_t`` is the number of completed
``(U, V)`` cycles, i.e. the ``n`` with ``S_{2n} <= t < S_{2n+2}``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import DistributionSpec, EstimateReport, SeededStream, as_generator, ratio_of_means


@dataclass(frozen=True)
class RenewalSpec:
    u1: DistributionSpec
    u2: DistributionSpec
    v: DistributionSpec

    def __str__(self) -> str:
        return f"u1={self.u1};u2={self.u2};v={self.v}"

    @property
    def theorem_hypotheses(self) -> bool:
        """Finite second moments for both u's and an infinite-mean v."""
        return (self.u1.finite_second_moment and self.u2.finite_second_moment
                and math.isinf(self.v.mean))


@dataclass
class RenewalPath:
    s_points: np.ndarray  # S_0, S_1, ..., S_{2N+2}
    kappa: float
    n_t: int
    horizon: float
    u: np.ndarray
    v: np.ndarray

    def kappa_complement(self) -> float:
        """``t`` minus the time spent in the v-state before ``t``."""
        n = self.n_t
        s_next_u_end = self.s_points[2 * n + 1]
        return self.horizon - self.v[:n].sum() - max(0.0, self.horizon - s_next_u_end)


def _grow(spec: DistributionSpec, rng, have: np.ndarray, need: int) -> np.ndarray:
    if have.size >= need:
        return have
    extra = max(need - have.size, have.size, 64)
    return np.concatenate([have, np.asarray(spec.sample(rng, extra), dtype=float)])


class _LazySequence:
    """An i.i.d. sequence drawn in chunks from one generator, on demand."""

    def __init__(self, spec: DistributionSpec, rng):
        self.spec = spec
        self.rng = rng
        self.values = np.empty(0)

    def take(self, n: int) -> np.ndarray:
        self.values = _grow(self.spec, self.rng, self.values, n)
        return self.values[:n]


def _path_from(u: _LazySequence, v: _LazySequence, t: float) -> RenewalPath:
    n = 64
    while True:
        uu = u.take(n)
        vv = v.take(n)
        cyc = np.cumsum(uu + vv)
        if cyc[-1] > t:
            break
        n *= 2
    # N_t: completed cycles, S_{2n} = cyc[n-1] <= t
    n_t = int(np.searchsorted(cyc, t, side="right"))
    uu = u.take(n_t + 1)
    vv = v.take(n_t + 1)
    s = np.empty(2 * n_t + 3)
    s[0] = 0.0
    steps = np.empty(2 * n_t + 2)
    steps[0::2] = uu
    steps[1::2] = vv
    s[1:] = np.cumsum(steps)
    s_2n = s[2 * n_t]
    kappa = uu[:n_t].sum() + min(t, s[2 * n_t + 1]) - s_2n
    return RenewalPath(s, float(kappa), n_t, float(t), uu.copy(), vv.copy())


def simulate_pair(spec: RenewalSpec, horizon_t: float, s, shared_v: bool = True,
                  shared_u: bool = False) -> tuple[RenewalPath, RenewalPath]:
    """Both renewal paths up to ``horizon_t`` from one stream.

    ``shared_v=False`` draws a separate V sequence per path (sensitivity
    studies only; the coupled statements need the shared sequence).
    ``shared_u=True`` feeds path 2 the U sequence of path 1 and requires
    ``u1 == u2``.
    """
    if not horizon_t > 0:
        raise ValueError("horizon must be positive")
    rng = as_generator(s)
    if shared_u and spec.u1 != spec.u2:
        raise ValueError("shared_u requires identical u distributions")
    u1 = _LazySequence(spec.u1, rng)
    u2 = u1 if shared_u else _LazySequence(spec.u2, rng)
    v1 = _LazySequence(spec.v, rng)
    v2 = v1 if shared_v else _LazySequence(spec.v, rng)
    return _path_from(u1, v1, horizon_t), _path_from(u2, v2, horizon_t)


def kappa_ratio(spec: RenewalSpec, horizon_t: float, n_reps: int, s: SeededStream,
                shared_u: bool = False) -> EstimateReport:
    """``E[kappa^(1)_t] / E[kappa^(2)_t]`` as a ratio of means (delta-method error)."""
    if not spec.theorem_hypotheses:
        warnings.warn(f"{spec} does not meet the finite-variance u / infinite-mean v "
                      "hypotheses; the limit ratio is not guaranteed", RuntimeWarning,
                      stacklevel=2)
    k1 = np.empty(n_reps)
    k2 = np.empty(n_reps)
    base = s.child(f"renewal/{spec}/t{horizon_t:.12g}")
    for r in range(n_reps):
        p1, p2 = simulate_pair(spec, horizon_t, base.child(f"rep/{r}"), shared_u=shared_u)
        k1[r] = p1.kappa
        k2[r] = p2.kappa
    ratio, se = ratio_of_means(k1, k2)
    target = spec.u1.mean / spec.u2.mean
    return EstimateReport(n_reps, ratio, se, {"horizon": float(horizon_t),
                                               "kappa1_mean": float(k1.mean()),
                                               "kappa2_mean": float(k2.mean()),
                                               "target": target})


def delta_sequence(u2_draws: np.ndarray, k: int) -> np.ndarray:
    """``Delta_m`` for ``m = 0..k`` when the first sequence is identically 1.

    ``Delta_m`` is the largest gap between a point of ``[m, m+1]`` and a
    point of ``[P_m, P_{m+1}]`` with ``P_m = U_0 + ... + U_{m-1}``, which is
    ``max(m + 1 - P_m, P_{m+1} - m)``.
    """
    u = np.asarray(u2_draws, dtype=float)[: k + 1]
    if u.size < k + 1:
        raise ValueError("need at least k + 1 draws")
    p = np.concatenate([[0.0], np.cumsum(u)])
    m = np.arange(k + 1)
    return np.maximum(m + 1 - p[:-1], p[1:] - m)


def delta_max_statistic(u2: DistributionSpec, k: int, n_reps: int,
                        s: SeededStream) -> EstimateReport:
    """Estimate ``E[max_{0<=m<=k} Delta_m]`` for a mean-one ``u2``."""
    if not math.isclose(u2.mean, 1.0, rel_tol=1e-12):
        raise ValueError("the Delta statistic is defined here for E[u2] = 1 only")
    if k < 0:
        raise ValueError("k must be nonnegative")
    rng = s.child(f"delta/{u2}/k{k}").rng
    out = np.empty(n_reps)
    for r in range(n_reps):
        out[r] = delta_sequence(np.asarray(u2.sample(rng, k + 1), dtype=float), k).max()
    return EstimateReport.from_samples(out, k=k, scaled=float(out.mean() / max(k, 1) ** 0.75))


def n_t_sublinearity(spec: RenewalSpec, horizons, n_reps: int, s: SeededStream,
                     which: int = 1) -> list[EstimateReport]:
    """``E[N_t] / t`` along a horizon grid, all horizons read from the same paths."""
    h = np.sort(np.asarray(horizons, dtype=float))
    if h.size == 0 or h[0] <= 0:
        raise ValueError("horizons must be positive")
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    u_spec = spec.u1 if which == 1 else spec.u2
    counts = np.empty((n_reps, h.size))
    base = s.child(f"nt/{spec}/{which}")
    for r in range(n_reps):
        rng = base.child(f"rep/{r}").rng
        path = _path_from(_LazySequence(u_spec, rng), _LazySequence(spec.v, rng), h[-1])
        cyc = path.s_points[2::2]
        counts[r] = np.searchsorted(cyc, h, side="right")
    return [EstimateReport.from_samples(counts[:, i] / t, horizon=float(t),
                                        mean_n_t=float(counts[:, i].mean()))
            for i, t in enumerate(h)]


def kappa_difference_bound_check(spec: RenewalSpec, horizon_t: float, n_reps: int,
                                 s: SeededStream, tol: float = 1e-9) -> int:
    """Count paths with ``|kappa2 - kappa1| > max_{m <= N1} Delta_m``.

    Requires ``u1`` identically 1. Any nonzero return is a failure of the
    bound.
    """
    if spec.u1 != DistributionSpec.deterministic(1.0):
        raise ValueError("the bound check needs u1 = deterministic(1)")
    base = s.child(f"bound/{spec}/t{horizon_t:.12g}")
    violations = 0
    for r in range(n_reps):
        rng = base.child(f"rep/{r}").rng
        u1 = _LazySequence(spec.u1, rng)
        u2 = _LazySequence(spec.u2, rng)
        v = _LazySequence(spec.v, rng)
        p1 = _path_from(u1, v, horizon_t)
        p2 = _path_from(u2, v, horizon_t)
        bound = delta_sequence(u2.take(p1.n_t + 1), p1.n_t).max()
        if abs(p2.kappa - p1.kappa) > bound + tol:
            violations += 1
    return violations

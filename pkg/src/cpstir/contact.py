"""Direct simulation of the contact process with stirring on Z^d.

Each particle dies at rate 1 and at rate ``lam`` picks a uniform neighbor
and gives birth there if it is empty. Every edge rings at rate ``N`` and
swaps the contents of its endpoints.

Two realizations of the same generator live here:

* :class:`ContactState` is a readable Python Gillespie step that uses the
  rate table literally (an edge between two occupied sites still rings,
  with no effect).
* :func:`survival_probability` runs a numba kernel that never schedules
  null swaps: only edges with exactly one occupied endpoint move anything,
  and there are ``2d n - 2 pairs`` of them for ``n`` particles with
  ``pairs`` adjacent occupied pairs.

The lattice is unbounded; occupied sites are stored in a hash map keyed by
packed coordinates (21 bits per axis, which is ample for the horizons here).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .core import (SUPPORTED_DIMS, EstimateReport, SeededStream, Site, UniformBuffer, add,
                   as_buffer, replicate, unit_vectors)
from .green import G_D3

DIED, ALIVE, CAPPED = 0, 1, 2


@dataclass
class Configuration:
    occupied: set = field(default_factory=set)
    time: float = 0.0

    @classmethod
    def single(cls, d: int) -> "Configuration":
        return cls({(0,) * d}, 0.0)


@dataclass(frozen=True)
class RateTable:
    lam: float
    N: float
    d: int

    def __post_init__(self):
        if self.lam < 0 or self.N < 0:
            raise ValueError("rates must be nonnegative")
        if self.d not in SUPPORTED_DIMS:
            raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}")

    def active_edges(self, occupied) -> int:
        edges = set()
        for x in occupied:
            for z in unit_vectors(self.d):
                y = add(x, z)
                edges.add((x, y) if x < y else (y, x))
        return len(edges)

    def total_rate(self, occupied) -> float:
        return len(occupied) * (1.0 + self.lam) + self.N * self.active_edges(occupied)


class ContactState:
    """Gillespie stepping with an incrementally maintained total rate."""

    def __init__(self, config: Configuration, rates: RateTable):
        self.config = Configuration(set(config.occupied), config.time)
        self.rates = rates
        self.units = unit_vectors(rates.d)
        self.pairs = sum(1 for x in self.config.occupied for z in self.units
                         if add(x, z) in self.config.occupied) // 2

    def _occupied_neighbors(self, x) -> int:
        occ = self.config.occupied
        return sum(1 for z in self.units if add(x, z) in occ)

    def active_edges(self) -> int:
        return 2 * self.rates.d * len(self.config.occupied) - self.pairs

    def rate(self) -> float:
        n = len(self.config.occupied)
        return n * (1.0 + self.rates.lam) + self.rates.N * self.active_edges()

    def _insert(self, x):
        self.pairs += self._occupied_neighbors(x)
        self.config.occupied.add(x)

    def _remove(self, x):
        self.config.occupied.discard(x)
        self.pairs -= self._occupied_neighbors(x)

    def step(self, s) -> tuple[str, float]:
        """Advance by one event; returns ``(kind, dt)``."""
        occ = self.config.occupied
        if not occ:
            raise ValueError("the empty configuration is absorbing")
        buf = as_buffer(s)
        lam, N, d = self.rates.lam, self.rates.N, self.rates.d
        total = self.rate()
        dt = buf.exponential(total)
        self.config.time += dt
        u = buf.random() * total
        n = len(occ)
        # sorted order keeps the choice reproducible regardless of set hashing
        if u < n:
            x = sorted(occ)[buf.below(n)]
            self._remove(x)
            return "death", dt
        if u < n * (1.0 + lam):
            x = sorted(occ)[buf.below(n)]
            y = add(x, self.units[buf.below(2 * d)])
            if y in occ:
                return "void_birth", dt
            self._insert(y)
            return "birth", dt
        # uniform active edge by rejection on (site, direction)
        ordered = sorted(occ)
        while True:
            x = ordered[buf.below(n)]
            y = add(x, self.units[buf.below(2 * d)])
            if y in occ and buf.random() < 0.5:
                continue
            break
        if y in occ:
            return "null_swap", dt
        self._remove(x)
        self._insert(y)
        return "swap", dt


_OFFSET = 1 << 20
_MASK = (1 << 21) - 1


@njit(cache=True)
def _key(pos, d):
    k = 0
    for c in range(d):
        k |= (pos[c] + _OFFSET) << (21 * c)
    return k


@njit(cache=True)
def _nb_count(table, p, d):
    c = 0
    q = p.copy()
    for a in range(d):
        for sgn in (1, -1):
            q[a] = p[a] + sgn
            if _key(q, d) in table:
                c += 1
        q[a] = p[a]
    return c


@njit(cache=True)
def _pairs_from_scratch(table, pos, count, d):
    c = 0
    for i in range(count):
        c += _nb_count(table, pos[i], d)
    return c // 2


@njit(cache=True)
def _cp_kernel(rng, n, d, lam, N, horizon, cap, check):
    out = np.zeros((n, 4))
    for r in range(n):
        table = Dict.empty(key_type=types.int64, value_type=types.int64)
        pos = np.zeros((cap + 1, d), dtype=np.int64)
        table[_key(pos[0], d)] = 0
        count = 1
        pairs = 0
        t = 0.0
        status = ALIVE
        drift = 0
        n_events = 0
        while True:
            if count == 0:
                status = DIED
                break
            if count >= cap:
                status = CAPPED
                break
            moves = 2 * d * count - 2 * pairs
            total = count * (1.0 + lam) + N * moves
            t += rng.exponential(1.0 / total)
            if t > horizon:
                break
            n_events += 1
            u = rng.random() * total
            if u < count:
                i = rng.integers(0, count)
                pairs -= _nb_count(table, pos[i], d)
                del table[_key(pos[i], d)]
                last = count - 1
                if i != last:
                    pos[i] = pos[last]
                    table[_key(pos[i], d)] = i
                count -= 1
            elif u < count * (1.0 + lam):
                i = rng.integers(0, count)
                j = rng.integers(0, 2 * d)
                q = pos[i].copy()
                q[j // 2] += 1 if j % 2 == 0 else -1
                kq = _key(q, d)
                if kq not in table:
                    pos[count] = q
                    table[kq] = count
                    count += 1
                    pairs += _nb_count(table, q, d)
            else:
                while True:
                    i = rng.integers(0, count)
                    j = rng.integers(0, 2 * d)
                    q = pos[i].copy()
                    q[j // 2] += 1 if j % 2 == 0 else -1
                    kq = _key(q, d)
                    if kq not in table:
                        break
                pairs -= _nb_count(table, pos[i], d)
                del table[_key(pos[i], d)]
                pos[i] = q
                table[kq] = i
                pairs += _nb_count(table, q, d)
            if check:
                drift += abs(pairs - _pairs_from_scratch(table, pos, count, d))
        out[r, 0] = status
        out[r, 1] = count
        out[r, 2] = drift
        out[r, 3] = n_events
    return out


def _cp_block(rng, count, d, lam, N, horizon, cap, check):
    return _cp_kernel(rng, count, d, lam, N, horizon, cap, check)


def survival_runs(lam: float, N: float, horizon_T: float, pop_cap: int, n_reps: int,
                  s: SeededStream, d: int = 2, check: bool = False, workers: int = 1,
                  offset: int = 0) -> np.ndarray:
    """Raw per-run rows ``(status, final count, bookkeeping drift, events)``.

    The stream label does not depend on ``lam``, so runs at different birth
    rates share their randomness block by block. ``offset`` selects a later
    slice of blocks (for sequential sampling).
    """
    if lam < 0 or N < 0:
        raise ValueError("rates must be nonnegative")
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}")
    if pop_cap < 2:
        raise ValueError("pop_cap must be at least 2")
    label = f"survival/d{d}/N{N:.12g}/T{horizon_T:.12g}/cap{pop_cap}/from{offset}"
    return replicate(_cp_block, n_reps, s.child(label), block=256, workers=workers, d=d,
                     lam=float(lam), N=float(N), horizon=float(horizon_T), cap=int(pop_cap),
                     check=bool(check))


def survival_probability(lam: float, N: float, horizon_T: float = 50.0, pop_cap: int = 10_000,
                         n_reps: int = 2000, s: SeededStream | None = None, d: int = 2,
                         check: bool = False, workers: int = 1) -> EstimateReport:
    """Fraction of runs alive at ``horizon_T`` or reaching ``pop_cap``.

    ``extra`` reports the two censoring routes separately and, with
    ``check``, the total drift between incremental and recomputed
    adjacent-pair counts (zero when the bookkeeping is right).
    """
    if s is None:
        raise ValueError("a SeededStream is required")
    rows = survival_runs(lam, N, horizon_T, pop_cap, n_reps, s, d, check, workers)
    return _survival_report(rows, lam, N, horizon_T, pop_cap, d)


def _survival_report(rows, lam, N, horizon_T, pop_cap, d) -> EstimateReport:
    status = rows[:, 0]
    alive = status == ALIVE
    capped = status == CAPPED
    return EstimateReport.from_samples(alive | capped, d=d, N=float(N), lam=float(lam),
                                       T=float(horizon_T), cap=int(pop_cap),
                                       alive_fraction=float(alive.mean()),
                                       censored_by_cap_fraction=float(capped.mean()),
                                       bookkeeping_drift=float(rows[:, 2].sum()),
                                       mean_events=float(rows[:, 3].mean()))


@dataclass
class Probe:
    lam: float
    n_reps: int
    survival: float
    std_error: float
    above: bool


@dataclass
class LambdaCInterval:
    lo: float
    hi: float
    probes: list
    caveat: str = ("finite-horizon, capped survival proxy; the bracket locates where the "
                   "proxy crosses the threshold, not the true critical value")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


def _probe(lam, N, d, T, cap, threshold, n_reps, s, z, first, workers) -> Probe:
    """Sequential probe: double the sample until the z-interval excludes the threshold."""
    rows = np.empty((0, 4))
    batch = min(first, n_reps)
    while True:
        more = survival_runs(lam, N, T, cap, batch, s, d, workers=workers, offset=rows.shape[0])
        rows = np.concatenate([rows, more])
        p = float(np.isin(rows[:, 0], (ALIVE, CAPPED)).mean())
        m = rows.shape[0]
        # a zero or one success fraction would give se 0; floor with the 1/m rule
        se = math.sqrt(max(p * (1 - p), 1.0 / m) / m)
        if abs(p - threshold) > z * se or m >= n_reps:
            return Probe(float(lam), m, p, se, p >= threshold)
        batch = min(m, n_reps - m)


def estimate_lambda_c(N: float, d: int = 2, horizon_T: float = 50.0, pop_cap: int = 10_000,
                      survival_threshold: float = 0.02, tol: float = 0.05,
                      s: SeededStream | None = None, lo: float = 1.0, hi: float = 3.0,
                      n_reps: int = 2000, z: float = 3.0, first_batch: int = 64,
                      workers: int = 1) -> LambdaCInterval:
    """Bisection for the birth rate where the survival proxy crosses the threshold."""
    if s is None:
        raise ValueError("a SeededStream is required")
    if not 0.0 <= survival_threshold < 1.0:
        raise ValueError("threshold must lie in [0, 1)")
    if tol <= 0 or not lo < hi:
        raise ValueError("need tol > 0 and lo < hi")
    if survival_threshold == 0.0:
        return LambdaCInterval(lo, lo, [], caveat="threshold 0: every birth rate counts as surviving")
    args = (N, d, horizon_T, pop_cap, survival_threshold, n_reps, s, z, first_batch, workers)
    probes = [_probe(lo, *args), _probe(hi, *args)]
    if probes[0].above or not probes[1].above:
        raise ValueError(f"[{lo}, {hi}] does not bracket the threshold: survival "
                         f"{probes[0].survival:.4f} at lo, {probes[1].survival:.4f} at hi")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        p = _probe(mid, *args)
        probes.append(p)
        if p.above:
            hi = mid
        else:
            lo = mid
    return LambdaCInterval(lo, hi, probes)


def asymptotic_lower_bound(d: int, N: float) -> float:
    """Large-``N`` lower bound on the critical birth rate."""
    if N <= math.e:
        raise ValueError("the bound is stated for N > e")
    if d == 3:
        return 1.0 + (G_D3 - 1.0) / (2 * d * N)
    if d == 2:
        return 1.0 + math.log(N) / (4 * math.pi * N)
    raise ValueError("the bound is available for d = 2 and d = 3")


def lone_particle_positions(N: float, horizon: float, n_reps: int, s, d: int = 2) -> np.ndarray:
    """Positions at ``horizon`` of a single particle under stirring only (``lam=0``, no deaths).

    Used to check that a lone particle performs a rate-``2dN`` walk; deaths
    are switched off by construction.
    """
    buf = as_buffer(s)
    units = unit_vectors(d)
    out = np.zeros((n_reps, d), dtype=np.int64)
    for r in range(n_reps):
        x = [0] * d
        t = buf.exponential(2 * d * N) if N > 0 else math.inf
        while t <= horizon:
            z = units[buf.below(2 * d)]
            for a in range(d):
                x[a] += z[a]
            t += buf.exponential(2 * d * N)
        out[r] = x
    return out


def contact_positions_lone(N: float, horizon: float, n_reps: int, s, d: int = 2) -> np.ndarray:
    """Same statistic read off :class:`ContactState` with ``lam = 0`` and deaths conditioned away.

    A lone particle's motion does not depend on its death clock, so runs
    that die before ``horizon`` are discarded and rerun.
    """
    buf = as_buffer(s)
    rates = RateTable(0.0, N, d)
    out = []
    while len(out) < n_reps:
        st = ContactState(Configuration.single(d), rates)
        while True:
            x = next(iter(st.config.occupied))
            kind, dt = st.step(buf)
            if st.config.time > horizon:
                out.append(x)
                break
            if kind == "death":
                break
    return np.asarray(out, dtype=np.int64)

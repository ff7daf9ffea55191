"""Two particles under exclusion dynamics, through their difference process.

``exclusion_difference`` is ``X = A - B`` for two particles stirred at rate
one per edge. Off the neighbor set ``N_0`` of the origin it jumps at rate 2 to
each of the ``2d`` neighbors (total ``4d``). At ``z`` in ``N_0`` it jumps to
``-z`` at rate 1 (the shared edge rings and the particles swap) and at rate 2
to each other neighbor except the origin, total ``4d - 1``; it never visits
the origin.

``free_difference`` is ``Y = A' - B'`` for two independent walks that each
jump at rate ``2d``. Their difference jumps at total rate ``4d`` everywhere,
so "rate 2d per walk" and "rate 4d for the difference" describe the same
process.

Local times are accumulated exactly from holding times. Far from the origin
the estimators skip ahead: from L1 distance ``r >= 3`` the next ``r - 2``
jumps cannot reach a site at distance <= 1, and on that stretch both
processes are the plain rate-``4d`` walk, so the position after those jumps
(multinomial) and the elapsed time (Gamma) are drawn directly. The skip is
exact, not an approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import (EstimateReport, SeededStream, Site, _check_dim, add, as_generator,
                   l1, linear_slope, neighbors, replicate, unit_vectors)

EXCLUSION = 0
FREE = 1
KINDS = {"exclusion_difference": EXCLUSION, "X": EXCLUSION, "x": EXCLUSION,
         "free_difference": FREE, "Y": FREE, "y": FREE}

TRACK_N0 = 0
TRACK_N0_BAR = 1
TRACKED = {"N0": TRACK_N0, "N_0": TRACK_N0, "N0bar": TRACK_N0_BAR, "N_0bar": TRACK_N0_BAR,
           "N0_bar": TRACK_N0_BAR}

EXCURSION_TARGETS = ("U_X", "U_Y", "U_Y_N0", "U_Y_0")


def kind_code(kind) -> int:
    if isinstance(kind, (int, np.integer)) and int(kind) in (EXCLUSION, FREE):
        return int(kind)
    try:
        return KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown walk kind {kind!r}") from None


def tracked_code(tracked) -> int:
    if isinstance(tracked, (int, np.integer)) and int(tracked) in (TRACK_N0, TRACK_N0_BAR):
        return int(tracked)
    try:
        return TRACKED[tracked]
    except KeyError:
        raise ValueError(f"unknown tracked set {tracked!r}") from None


# ---------------------------------------------------------------------------
# Python-level state and step (reference path, also used by the CLI traces)
# ---------------------------------------------------------------------------


@dataclass
class DifferenceState:
    position: Site
    clock: float = 0.0
    local_time_N0: float = 0.0
    local_time_origin: float = 0.0


def jump_law(position: Site, kind) -> list[tuple[Site, float]]:
    """Jump targets with their rates from ``position`` (rates, not probabilities)."""
    k = kind_code(kind)
    x = tuple(position)
    nbrs = neighbors(x)
    if k == EXCLUSION and l1(x) == 0:
        raise ValueError("exclusion difference cannot sit at the origin")
    if k == EXCLUSION and l1(x) == 1:
        minus = tuple(-a for a in x)
        out = [(minus, 1.0)]
        out += [(y, 2.0) for y in nbrs if l1(y) != 0]
        return out
    return [(y, 2.0) for y in nbrs]


def step(state: DifferenceState, kind, s, rate: float = 1.0) -> tuple[DifferenceState, float]:
    """One jump of the difference process; ``rate`` is the stirring rate per edge."""
    rng = as_generator(s)
    law = jump_law(state.position, kind)
    rates = np.array([r for _, r in law]) * rate
    total = rates.sum()
    h = rng.exponential(1.0 / total)
    j = rng.choice(len(law), p=rates / total)
    n = l1(state.position)
    new = DifferenceState(
        position=law[j][0],
        clock=state.clock + h,
        local_time_N0=state.local_time_N0 + (h if n == 1 else 0.0),
        local_time_origin=state.local_time_origin + (h if n == 0 else 0.0),
    )
    return new, float(h)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _l1(pos):
    s = 0
    for a in pos:
        s += abs(a)
    return s


@njit(cache=True)
def _start_uniform_n0(pos, rng):
    d = pos.shape[0]
    pos[:] = 0
    j = rng.integers(0, 2 * d)
    pos[j // 2] = 1 if j % 2 == 0 else -1


@njit(cache=True)
def _jump(pos, kind, rng):
    """Apply one jump in place; returns the total rate (per unit stirring rate)."""
    d = pos.shape[0]
    if kind == EXCLUSION and _l1(pos) == 1:
        total = 4 * d - 1
        u = rng.integers(0, total)
        if u == 0:
            for i in range(d):
                pos[i] = -pos[i]
            return total
        # index of -z among the 2d directions; skip it
        i0 = 0
        for i in range(d):
            if pos[i] != 0:
                i0 = i
        bad = 2 * i0 + (1 if pos[i0] > 0 else 0)
        # u in 1..4d-2: two units of rate per remaining direction
        j = (u - 1) // 2
        if j >= bad:
            j += 1
        pos[j // 2] += 1 if j % 2 == 0 else -1
        return total
    j = rng.integers(0, 2 * d)
    pos[j // 2] += 1 if j % 2 == 0 else -1
    return 4 * d


@njit(cache=True)
def _multi_step(pos, k, rng):
    """Displace ``pos`` by ``k`` independent uniform unit steps."""
    d = pos.shape[0]
    remaining = k
    ndir = 2 * d
    for j in range(ndir):
        if remaining == 0:
            break
        if j == ndir - 1:
            c = remaining
        else:
            c = rng.binomial(remaining, 1.0 / (ndir - j))
        remaining -= c
        pos[j // 2] += c if j % 2 == 0 else -c


@njit(cache=True)
def _excursion_kernel(rng, n, d, kind):
    """Columns: exit time, time in N_0, time at origin (before exit)."""
    out = np.zeros((n, 3))
    pos = np.zeros(d, dtype=np.int64)
    for r in range(n):
        _start_uniform_n0(pos, rng)
        t = 0.0
        t_n0 = 0.0
        t_0 = 0.0
        while True:
            m = _l1(pos)
            if kind == EXCLUSION:
                if m != 1:
                    break
            elif m > 1:
                break
            rate = 4 * d - 1 if (kind == EXCLUSION and m == 1) else 4 * d
            h = rng.exponential(1.0 / rate)
            t += h
            if m == 1:
                t_n0 += h
            else:
                t_0 += h
            _jump(pos, kind, rng)
        out[r, 0] = t
        out[r, 1] = t_n0
        out[r, 2] = t_0
    return out


@njit(cache=True)
def _local_time_kernel(rng, n, d, kind, tracked, horizons, rate, skip, weighted):
    """Local time in the tracked set up to each horizon, one row per path.

    With ``weighted`` the integrand is ``1 - s / horizons[-1]`` instead of 1
    (used for the collision-probability identity).
    """
    H = horizons.shape[0]
    out = np.zeros((n, H))
    pos = np.zeros(d, dtype=np.int64)
    tmax = horizons[H - 1]
    base = 4.0 * d * rate
    for r in range(n):
        _start_uniform_n0(pos, rng)
        t = 0.0
        lt = 0.0
        hi = 0
        while hi < H:
            m = _l1(pos)
            if skip and m >= 3:
                k = m - 2
                dt = rng.gamma(k, 1.0 / base)
                _multi_step(pos, k, rng)
                t_new = t + dt
                while hi < H and horizons[hi] <= t_new:
                    out[r, hi] = lt
                    hi += 1
                t = t_new
                continue
            inside = m == 1 or (tracked == TRACK_N0_BAR and m == 0)
            if kind == EXCLUSION and m == 1:
                total = (4.0 * d - 1.0) * rate
            else:
                total = base
            h = rng.exponential(1.0 / total)
            t_new = t + h
            while hi < H and horizons[hi] <= t_new:
                if inside:
                    a = t
                    b = horizons[hi]
                    if weighted:
                        out[r, hi] = lt + (b - a) - (b * b - a * a) / (2.0 * tmax)
                    else:
                        out[r, hi] = lt + (b - a)
                else:
                    out[r, hi] = lt
                hi += 1
            if inside:
                if weighted:
                    b = min(t_new, tmax)
                    if b > t:
                        lt += (b - t) - (b * b - t * t) / (2.0 * tmax)
                else:
                    lt += h
            t = t_new
            _jump(pos, kind, rng)
    return out


@njit(cache=True)
def _pair_kernel(rng, n, d, horizon, rate):
    """Literal two-particle exclusion; returns ``A_t - B_t`` at ``horizon``."""
    out = np.zeros((n, d), dtype=np.int64)
    a = np.zeros(d, dtype=np.int64)
    b = np.zeros(d, dtype=np.int64)
    diff = np.zeros(d, dtype=np.int64)
    for r in range(n):
        a[:] = 0
        _start_uniform_n0(b, rng)
        t = 0.0
        while True:
            for i in range(d):
                diff[i] = a[i] - b[i]
            adjacent = _l1(diff) == 1
            n_edges = 4 * d - 1 if adjacent else 4 * d
            t += rng.exponential(1.0 / (n_edges * rate))
            if t > horizon:
                break
            e = rng.integers(0, n_edges)
            # edges 0..2d-1 touch A, the rest touch B (shared edge listed under A)
            if e < 2 * d:
                j = e
                i = j // 2
                sg = 1 if j % 2 == 0 else -1
                a[i] += sg
                same = True
                for q in range(d):
                    if a[q] != b[q]:
                        same = False
                if same:
                    # ring on the shared edge: swap
                    a[i] -= sg
                    for q in range(d):
                        tmp = a[q]
                        a[q] = b[q]
                        b[q] = tmp
            else:
                k = e - 2 * d
                # B's directions except the one pointing at A when adjacent
                if adjacent:
                    i0 = 0
                    for q in range(d):
                        if diff[q] != 0:
                            i0 = q
                    bad = 2 * i0 + (0 if diff[i0] > 0 else 1)
                    if k >= bad:
                        k += 1
                b[k // 2] += 1 if k % 2 == 0 else -1
        for i in range(d):
            out[r, i] = a[i] - b[i]
    return out


@njit(cache=True)
def _difference_at_kernel(rng, n, d, kind, horizon, rate):
    out = np.zeros((n, d), dtype=np.int64)
    pos = np.zeros(d, dtype=np.int64)
    for r in range(n):
        _start_uniform_n0(pos, rng)
        t = 0.0
        while True:
            m = _l1(pos)
            total = (4 * d - 1) if (kind == EXCLUSION and m == 1) else 4 * d
            t += rng.exponential(1.0 / (total * rate))
            if t > horizon:
                break
            _jump(pos, kind, rng)
        out[r, :] = pos
    return out


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _excursion_block(rng, count, d, kind):
    return _excursion_kernel(rng, count, d, kind)


def excursion_mean(kind, target: str, d: int, n_reps: int, s: SeededStream,
                   workers: int = 1) -> EstimateReport:
    """Mean excursion time in the origin's neighborhood, started uniform on ``N_0``.

    ``U_X``: exit time of X from ``N_0``. ``U_Y``: exit time of Y from
    ``N_0 + {0}``. ``U_Y_N0`` / ``U_Y_0``: time Y spends in ``N_0`` / at the
    origin before that exit.
    """
    _check_dim(d)
    if target not in EXCURSION_TARGETS:
        raise ValueError(f"target must be one of {EXCURSION_TARGETS}")
    k = kind_code(kind)
    if target == "U_X" and k != EXCLUSION:
        raise ValueError("U_X is defined for the exclusion difference")
    if target != "U_X" and k != FREE:
        raise ValueError(f"{target} is defined for the free difference")
    samples = replicate(_excursion_block, n_reps, s.child(f"excursion/{k}/d{d}"),
                        block=1 << 16, workers=workers, d=d, kind=k)
    col = {"U_X": 0, "U_Y": 0, "U_Y_N0": 1, "U_Y_0": 2}[target]
    return EstimateReport.from_samples(samples[:, col], d=d)


def excursion_constants(d: int) -> dict[str, float]:
    """Closed-form means of ``U_X``, ``U_Y_N0``, ``U_Y`` and ``U_Y_0``."""
    ux = 1.0 / (4 * d - 2)
    uy = (2 * d + 1) / (8 * d * d - 4 * d)
    return {"U_X": ux, "U_Y_N0": ux, "U_Y": uy, "U_Y_0": uy - ux}


def _local_time_block(rng, count, d, kind, tracked, horizons, rate, skip, weighted):
    return _local_time_kernel(rng, count, d, kind, tracked, horizons, rate, skip, weighted)


def local_time_paths(kind, tracked_set, horizons, d: int, n_reps: int, s: SeededStream,
                     rate: float = 1.0, skip: bool = True, weighted: bool = False,
                     workers: int = 1) -> np.ndarray:
    """Per-path local times at each horizon, shape ``(n_reps, len(horizons))``."""
    _check_dim(d)
    h = np.asarray(horizons, dtype=float)
    if h.ndim != 1 or h.size == 0 or np.any(np.diff(h) < 0) or np.any(h < 0):
        raise ValueError("horizons must be a nonempty nondecreasing sequence of times >= 0")
    if not rate > 0:
        raise ValueError("rate must be positive")
    k = kind_code(kind)
    tr = tracked_code(tracked_set)
    label = f"localtime/{k}/{tr}/d{d}/r{rate:.12g}/w{int(weighted)}"
    return replicate(_local_time_block, n_reps, s.child(label), block=1 << 12,
                     workers=workers, d=d, kind=k, tracked=tr, horizons=h,
                     rate=float(rate), skip=bool(skip), weighted=bool(weighted))


def local_time_estimate(kind, tracked_set, horizon_t: float, d: int, n_reps: int,
                        s: SeededStream, rate: float = 1.0, skip: bool = True,
                        workers: int = 1) -> EstimateReport:
    """Expected time spent in the tracked set up to ``horizon_t``."""
    if horizon_t < 0:
        raise ValueError("horizon must be nonnegative")
    paths = local_time_paths(kind, tracked_set, [horizon_t], d, n_reps, s, rate=rate,
                             skip=skip, workers=workers)
    return EstimateReport.from_samples(paths[:, 0], horizon=float(horizon_t), d=d)


def local_time_curve(kind, tracked_set, horizons, d: int, n_reps: int, s: SeededStream,
                     rate: float = 1.0, workers: int = 1) -> list[EstimateReport]:
    paths = local_time_paths(kind, tracked_set, horizons, d, n_reps, s, rate=rate,
                             workers=workers)
    return [EstimateReport.from_samples(paths[:, i], horizon=float(h), d=d)
            for i, h in enumerate(horizons)]


def log_slope(kind, tracked_set, horizons, d: int, n_reps: int, s: SeededStream,
              workers: int = 1) -> EstimateReport:
    """Slope of expected local time against ``log t`` over a horizon grid.

    All horizons are read off the same paths; the slope is fitted per path so
    the standard error accounts for that correlation.
    """
    paths = local_time_paths(kind, tracked_set, horizons, d, n_reps, s, workers=workers)
    slope, se = linear_slope(np.log(np.asarray(horizons, dtype=float)), paths)
    return EstimateReport(n_reps, slope, se, {"d": d})


def local_time_ratio(horizon_t: float, d: int, n_reps: int, s: SeededStream,
                     workers: int = 1) -> EstimateReport:
    """E[time of X in N_0] / E[time of Y in N_0 + {0}] up to ``horizon_t``."""
    x = local_time_estimate(EXCLUSION, TRACK_N0, horizon_t, d, n_reps, s.child("X"),
                            workers=workers)
    y = local_time_estimate(FREE, TRACK_N0_BAR, horizon_t, d, n_reps, s.child("Y"),
                            workers=workers)
    r = x.mean / y.mean
    se = r * math.sqrt((x.std_error / x.mean) ** 2 + (y.std_error / y.mean) ** 2)
    return EstimateReport(n_reps, r, se, {"horizon": float(horizon_t), "d": d,
                                          "x_mean": x.mean, "y_mean": y.mean})


def d3_truncation_bias(horizon_t: float) -> float:
    """Leading-order expected time in ``N_0`` after ``horizon_t`` for d=3.

    Each coordinate of the rate-12 difference walk has variance ``4s``, so the
    six neighbor sites carry density about ``6 (8 pi s)^{-3/2}``; integrating
    from ``t`` to infinity gives ``12 (8 pi)^{-3/2} t^{-1/2}``.
    """
    return 12.0 * (8.0 * math.pi) ** -1.5 / math.sqrt(horizon_t)


def dual_pair_trace(d: int, horizon: float, s, rate: float = 1.0,
                    start: Site | None = None):
    """Trajectory ``[(t, A, B), ...]`` of two particles under exclusion dynamics.

    Every edge touching A or B rings at ``rate``; a ring moves a particle to
    the other endpoint, and a ring on the edge joining A and B swaps them.
    ``B_0`` defaults to a uniform neighbor of ``A_0 = 0``.
    """
    _check_dim(d)
    rng = as_generator(s)
    a = (0,) * d
    units = unit_vectors(d)
    b = start if start is not None else units[int(rng.integers(0, 2 * d))]
    if l1(tuple(x - y for x, y in zip(a, b))) != 1:
        raise ValueError("the pair must start at neighboring sites")
    t = 0.0
    out = [(0.0, a, b)]
    while True:
        edges = [(a, add(a, z)) for z in units]
        edges += [(b, add(b, z)) for z in units if add(b, z) != a]
        t += rng.exponential(1.0 / (len(edges) * rate))
        if t > horizon:
            break
        x, y = edges[int(rng.integers(0, len(edges)))]
        if {x, y} == {a, b}:
            a, b = b, a
        elif x == a:
            a = y
        else:
            b = y
        out.append((t, a, b))
    return out


def _pair_block(rng, count, d, horizon, rate):
    return _pair_kernel(rng, count, d, horizon, rate)


def _difference_block(rng, count, d, kind, horizon, rate):
    return _difference_at_kernel(rng, count, d, kind, horizon, rate)


def pair_difference_samples(d: int, horizon: float, n_reps: int, s: SeededStream,
                            rate: float = 1.0) -> np.ndarray:
    """``A_t - B_t`` at ``horizon`` from the literal pair simulator."""
    return replicate(_pair_block, n_reps, s.child(f"pair/d{d}"), block=1 << 14,
                     d=d, horizon=float(horizon), rate=float(rate))


def difference_samples(kind, d: int, horizon: float, n_reps: int, s: SeededStream,
                       rate: float = 1.0) -> np.ndarray:
    """Position of the difference process at ``horizon`` (generator simulator)."""
    return replicate(_difference_block, n_reps, s.child(f"diff/{kind_code(kind)}/d{d}"),
                     block=1 << 14, d=d, kind=kind_code(kind), horizon=float(horizon),
                     rate=float(rate))

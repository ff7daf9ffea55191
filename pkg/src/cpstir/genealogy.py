"""Branching genealogy on the tree of addresses, coupled to the contact process.

A particle is named by its address in the tree: the root is ``()``, and the
``n``-th child of ``a`` is ``a + (n,)`` (``n >= 1``). Each particle carries a
status in ``{-1, 0, 1}`` (absent for good, never present, present).

``Psi`` is the free branching process: every present particle dies at rate 1
and at rate ``lam`` gives birth to its lowest never-present child. ``Xi`` is
the thinned copy driven by the same clocks: a birth whose target site is
already occupied in ``xi`` marks the child ``-1`` in ``Xi`` instead of
``1``. Positions follow one stirring flow: when an edge rings, everything on
one endpoint moves to the other and vice versa.

The flow is realized lazily. Only edges touching an occupied site can move a
tracked particle, so rings are generated on those edges alone (rate ``N``
each). By superposition and thinning of independent Poisson clocks this has
the same law as ringing every edge of Z^d.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import SUPPORTED_DIMS, SeededStream, Site, UniformBuffer, as_buffer, direction, origin

ROOT: tuple = ()


class InvariantViolation(AssertionError):
    """A coupling invariant failed; the run is not a valid realization."""


def parent(a: tuple) -> tuple:
    if not a:
        raise ValueError("the root has no parent")
    return a[:-1]


def child(a: tuple, n: int) -> tuple:
    if n < 1:
        raise ValueError("children are numbered from 1")
    return a + (n,)


class IndexedSet:
    """Set with O(1) insert, delete and uniform choice."""

    __slots__ = ("items", "index")

    def __init__(self, items=()):
        self.items = []
        self.index = {}
        for x in items:
            self.add(x)

    def add(self, x) -> None:
        if x not in self.index:
            self.index[x] = len(self.items)
            self.items.append(x)

    def discard(self, x) -> None:
        i = self.index.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.index[last] = i

    def choice(self, buf: UniformBuffer):
        return self.items[buf.below(len(self.items))]

    def __contains__(self, x) -> bool:
        return x in self.index

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)


_ALLOWED = {(0, 1), (1, -1), (0, -1)}


class GenealogyState:
    """Sparse status map on the tree (unlisted addresses are 0)."""

    def __init__(self, name: str = "Psi"):
        self.name = name
        self.status: dict[tuple, int] = {}
        self.present = IndexedSet()
        self.appeared: dict[tuple, float] = {}
        self.vanished: dict[tuple, float] = {}
        self._next: dict[tuple, int] = {}

    def __getitem__(self, a: tuple) -> int:
        return self.status.get(a, 0)

    def set(self, a: tuple, value: int, t: float) -> None:
        old = self.status.get(a, 0)
        if (old, value) not in _ALLOWED:
            raise InvariantViolation(f"{self.name}{a}: illegal transition {old} -> {value}")
        self.status[a] = value
        if value == 1:
            self.present.add(a)
            self.appeared[a] = t
        else:
            self.present.discard(a)
            if old == 1:
                self.vanished[a] = t
        if a and old == 0:
            p = a[:-1]
            n = self._next.get(p, 1)
            while self.status.get(p + (n,), 0) != 0:
                n += 1
            self._next[p] = n

    def next_child(self, a: tuple) -> int:
        """Smallest ``n`` with status 0 at ``a + (n,)`` (cached)."""
        return self._next.get(a, 1)

    def scan_next_child(self, a: tuple) -> int:
        n = 1
        while self.status.get(a + (n,), 0) != 0:
            n += 1
        return n

    def count(self) -> int:
        return len(self.present)


# neighbor lists in the fixed order +e1, -e1, +e2, ...; spelled out per
# dimension because this is the innermost loop of the stirring engine
_NEIGHBOR_FNS = {
    1: lambda x: ((x[0] + 1,), (x[0] - 1,)),
    2: lambda x: ((x[0] + 1, x[1]), (x[0] - 1, x[1]), (x[0], x[1] + 1), (x[0], x[1] - 1)),
    3: lambda x: ((x[0] + 1, x[1], x[2]), (x[0] - 1, x[1], x[2]), (x[0], x[1] + 1, x[2]),
                  (x[0], x[1] - 1, x[2]), (x[0], x[1], x[2] + 1), (x[0], x[1], x[2] - 1)),
}


class StirringEngine:
    """Positions of finitely many particles under the rate-``N`` stirring flow.

    Several particles may share a site; a ring on edge ``{x, y}`` exchanges
    the whole contents of ``x`` and ``y``. The active edges are those with at
    least one occupied endpoint; an edge between two occupied sites is one
    edge.
    """

    def __init__(self, d: int, N: float):
        if d not in SUPPORTED_DIMS:
            raise ValueError(f"dimension must be one of {SUPPORTED_DIMS}")
        if N < 0:
            raise ValueError("stirring rate must be nonnegative")
        self.d = d
        self.N = float(N)
        self.units = [direction(j, d) for j in range(2 * d)]
        self.nbrs = _NEIGHBOR_FNS[d]
        self.members: dict[Site, list] = {}
        self.sites = IndexedSet()
        self.pos: dict = {}
        self.adjacent_pairs = 0

    def _occupied_neighbors(self, x: Site) -> int:
        m = self.members
        return len([y for y in self.nbrs(x) if y in m])

    def place(self, pid, x: Site) -> None:
        if pid in self.pos:
            raise InvariantViolation(f"particle {pid} placed twice")
        lst = self.members.get(x)
        if lst is None:
            self.adjacent_pairs += self._occupied_neighbors(x)
            self.members[x] = [pid]
            self.sites.add(x)
        else:
            lst.append(pid)
        self.pos[pid] = x

    def remove(self, pid) -> Site:
        x = self.pos.pop(pid)
        lst = self.members[x]
        lst.remove(pid)
        if not lst:
            del self.members[x]
            self.sites.discard(x)
            self.adjacent_pairs -= self._occupied_neighbors(x)
        return x

    def active_edges(self) -> int:
        return 2 * self.d * len(self.sites) - self.adjacent_pairs

    def count_active_edges(self) -> int:
        """Active edge count recomputed from scratch."""
        edges = set()
        for x in self.members:
            for y in self.nbrs(x):
                edges.add((x, y) if x < y else (y, x))
        return len(edges)

    def rate(self) -> float:
        return self.N * self.active_edges()

    def pick_edge(self, buf: UniformBuffer) -> tuple[Site, Site]:
        """Uniform active edge: uniform (site, direction), then halve doubly-seen edges."""
        while True:
            x = self.sites.choice(buf)
            y = self.nbrs(x)[buf.below(2 * self.d)]
            if y in self.members and buf.random() < 0.5:
                continue
            return x, y

    def swap(self, x: Site, y: Site) -> None:
        mx = self.members.pop(x, None)
        my = self.members.pop(y, None)
        if mx is not None and my is not None:
            self.members[x] = my
            self.members[y] = mx
        elif mx is not None:
            self.sites.discard(x)
            self.adjacent_pairs -= self._occupied_neighbors(x)
            self.adjacent_pairs += self._occupied_neighbors(y)
            self.members[y] = mx
            self.sites.add(y)
        elif my is not None:
            self.sites.discard(y)
            self.adjacent_pairs -= self._occupied_neighbors(y)
            self.adjacent_pairs += self._occupied_neighbors(x)
            self.members[x] = my
            self.sites.add(x)
        else:
            return
        for pid in self.members.get(x, ()):
            self.pos[pid] = x
        for pid in self.members.get(y, ()):
            self.pos[pid] = y

    def ring(self, buf: UniformBuffer) -> tuple[Site, Site]:
        x, y = self.pick_edge(buf)
        self.swap(x, y)
        return x, y

    def run(self, t0: float, t1: float, buf: UniformBuffer, on_ring=None) -> int:
        """Ring edges over ``(t0, t1]``; returns the number of rings."""
        t = t0
        n = 0
        while True:
            r = self.rate()
            if r == 0:
                return n
            t += buf.exponential(r)
            if t > t1:
                return n
            x, y = self.ring(buf)
            n += 1
            if on_ring is not None:
                on_ring(x, y)


# ---------------------------------------------------------------------------
# Psi alone
# ---------------------------------------------------------------------------


@dataclass
class PsiTrajectory:
    checkpoints: np.ndarray
    counts: np.ndarray
    truncated: bool
    n_events: int


def evolve_psi(lam: float, horizon: float, s, checkpoints=None,
               cap: int = 100_000) -> PsiTrajectory:
    """Free branching genealogy from the root; present counts at ``checkpoints``."""
    if lam < 0:
        raise ValueError("birth rate must be nonnegative")
    cps = np.asarray([horizon] if checkpoints is None else checkpoints, dtype=float)
    buf = as_buffer(s)
    psi = GenealogyState("Psi")
    psi.set(ROOT, 1, 0.0)
    counts = np.zeros(cps.size, dtype=np.int64)
    t = 0.0
    ci = 0
    n_events = 0
    truncated = False
    while ci < cps.size and cps[ci] <= 0.0:
        counts[ci] = 1
        ci += 1
    while ci < cps.size:
        n = len(psi.present)
        if n == 0:
            break
        if n > cap:
            truncated = True
            counts[ci:] = n
            break
        t_new = t + buf.exponential((1.0 + lam) * n)
        while ci < cps.size and cps[ci] < t_new:
            counts[ci] = n
            ci += 1
        if ci == cps.size:
            break
        t = t_new
        a = psi.present.choice(buf)
        if buf.random() * (1.0 + lam) < lam:
            psi.set(child(a, psi.next_child(a)), 1, t)
        else:
            psi.set(a, -1, t)
        n_events += 1
    return PsiTrajectory(cps, counts, truncated, n_events)


def psi_mean(lam: float, horizon: float, n_reps: int, s: SeededStream, cap: int = 100_000):
    """Mean present count at ``horizon``; truncated runs are dropped and counted."""
    from .core import EstimateReport

    buf = UniformBuffer(s.child(f"psi/{lam:.12g}/{horizon:.12g}"))
    vals = []
    dropped = 0
    for _ in range(n_reps):
        tr = evolve_psi(lam, horizon, buf, cap=cap)
        if tr.truncated:
            dropped += 1
        else:
            vals.append(tr.counts[-1])
    rep = EstimateReport.from_samples(vals, horizon=float(horizon), truncated=dropped,
                                      target=math.exp((lam - 1.0) * horizon))
    return rep


# ---------------------------------------------------------------------------
# Coupled Psi / Xi / xi
# ---------------------------------------------------------------------------


class CoupledSystem:
    """One realization of ``(Psi, Xi, xi)`` advanced by explicit events.

    Genealogical events are applied through :meth:`birth` and :meth:`death`
    (shared clocks: a clock of a Psi-present particle acts on Xi as well when
    that particle is Xi-present). Stirring goes through :meth:`ring` or
    :meth:`stir_until`.
    """

    def __init__(self, lam: float, N: float, d: int = 2, log: bool = False):
        self.lam = float(lam)
        self.N = float(N)
        self.d = d
        self.t = 0.0
        self.psi = GenealogyState("Psi")
        self.xi_tree = GenealogyState("Xi")
        self.engine = StirringEngine(d, N)
        self.occ: dict[Site, tuple] = {}
        self.log = [] if log else None
        self.psi.set(ROOT, 1, 0.0)
        self.xi_tree.set(ROOT, 1, 0.0)
        self.engine.place(ROOT, origin(d))
        self.occ[origin(d)] = ROOT
        self.n_blocked = 0

    def _record(self, kind, a, x):
        if self.log is not None:
            self.log.append((self.t, kind, a, x))

    def position(self, a: tuple):
        """Location of ``a``; ``None`` stands for the cemetery."""
        return self.engine.pos.get(a)

    def birth(self, a: tuple, m: Site, t: float | None = None) -> tuple[tuple, int]:
        """Birth clock of ``a`` rings with displacement ``m``.

        Returns the child address and its Xi status after the event (1, -1,
        or 0 when ``a`` itself is not Xi-present).
        """
        if t is not None:
            self.t = t
        if self.psi[a] != 1:
            raise InvariantViolation(f"birth from non-present particle {a}")
        n = self.psi.next_child(a)
        b = child(a, n)
        x = self.engine.pos[a]
        target = tuple(p + q for p, q in zip(x, m))
        self.psi.set(b, 1, self.t)
        self.engine.place(b, target)
        xi_status = 0
        if self.xi_tree[a] == 1:
            if self.xi_tree.next_child(a) != n:
                raise InvariantViolation(f"next-child mismatch at {a}")
            if target in self.occ:
                self.xi_tree.set(b, -1, self.t)
                self.n_blocked += 1
                xi_status = -1
                self._record("blocked", b, target)
            else:
                self.xi_tree.set(b, 1, self.t)
                self.occ[target] = b
                xi_status = 1
                self._record("birth", b, target)
        else:
            self._record("birth_psi_only", b, target)
        return b, xi_status

    def death(self, a: tuple, t: float | None = None) -> None:
        if t is not None:
            self.t = t
        self.psi.set(a, -1, self.t)
        x = self.engine.remove(a)
        if self.xi_tree[a] == 1:
            self.xi_tree.set(a, -1, self.t)
            if self.occ.get(x) != a:
                raise InvariantViolation(f"xi occupancy lost track of {a} at {x}")
            del self.occ[x]
            self._record("death", a, x)
        else:
            self._record("death_psi_only", a, x)

    def ring(self, buf: UniformBuffer, check: bool = True) -> tuple[Site, Site]:
        x, y = self.engine.ring(buf)
        self._swap_occ(x, y, check)
        return x, y

    def _swap_occ(self, x, y, check=True):
        ax = self.occ.pop(x, None)
        ay = self.occ.pop(y, None)
        if ax is not None:
            self.occ[y] = ax
        if ay is not None:
            self.occ[x] = ay
        if check:
            for site in (x, y):
                a = self.occ.get(site)
                if a is not None and self.engine.pos.get(a) != site:
                    raise InvariantViolation(f"xi particle {a} not at {site} after ring")
                xi_here = sum(1 for p in self.engine.members.get(site, ()) if self.xi_tree[p] == 1)
                if xi_here != (a is not None):
                    raise InvariantViolation(f"xi occupancy at {site} is {xi_here}")
        self._record("ring", None, (x, y))

    def stir_until(self, t1: float, buf: UniformBuffer, check: bool = True) -> int:
        """Run the flow from the current time to ``t1``."""
        n = self.engine.run(self.t, t1, buf, on_ring=lambda x, y: self._swap_occ(x, y, check))
        self.t = t1
        return n

    def psi_count(self) -> int:
        return len(self.psi.present)

    def xi_count(self) -> int:
        return len(self.xi_tree.present)

    def audit(self) -> None:
        """Check the coupling invariants; raise :class:`InvariantViolation` on breach."""
        psi, xi, pos = self.psi, self.xi_tree, self.engine.pos
        if set(pos) != set(psi.present):
            raise InvariantViolation("located particles differ from Psi-present particles")
        sites = Counter(pos[a] for a in xi.present if a in pos)
        if any(c > 1 for c in sites.values()):
            raise InvariantViolation("xi has a site with two particles")
        if {pos[a]: a for a in xi.present if a in pos} != self.occ:
            raise InvariantViolation("xi occupancy map out of sync")
        for a in xi.present:
            if psi[a] != 1:
                raise InvariantViolation(f"{a} present in Xi but not in Psi")
            if xi.scan_next_child(a) != psi.scan_next_child(a):
                raise InvariantViolation(f"next free child differs at {a}")
        if len(self.occ) != len(xi.present):
            raise InvariantViolation("occupied sites differ from Xi-present count")
        if self.engine.active_edges() != self.engine.count_active_edges():
            raise InvariantViolation("active edge bookkeeping drifted")

    def audit_presence_times(self) -> None:
        """A particle ever present in Xi has the same presence interval in Psi."""
        for a, t in self.xi_tree.appeared.items():
            if self.psi.appeared.get(a) != t:
                raise InvariantViolation(f"{a} appeared at different times")
            if a in self.xi_tree.vanished and self.psi.vanished.get(a) != self.xi_tree.vanished[a]:
                raise InvariantViolation(f"{a} vanished at different times")
            if a not in self.xi_tree.vanished and a in self.psi.vanished:
                raise InvariantViolation(f"{a} vanished in Psi only")


@dataclass
class CoupledRun:
    checkpoints: np.ndarray
    psi_counts: np.ndarray
    xi_counts: np.ndarray
    xi_sites: np.ndarray
    truncated: bool
    n_events: int
    n_audits: int
    n_blocked: int
    log: list | None = field(default=None, repr=False)


def t_star(N: float) -> float:
    """Window length ``1 / log N`` (needs ``N > e`` to stay below 1)."""
    if N <= 1:
        raise ValueError("t* needs N > 1")
    return 1.0 / math.log(N)


def evolve_coupled(lam: float, N: float, horizon: float, s, d: int = 2, checkpoints=None,
                   cap: int = 100_000, audit: bool = True, log: bool = False) -> CoupledRun:
    """Coupled evolution of ``(Psi, Xi, xi)`` from the root at the origin.

    Checkpoints default to the multiples of ``t*`` up to ``horizon`` (or the
    horizon alone when ``N <= e``). With ``audit`` every genealogical event is
    followed by the full invariant check and every ring by a check of the two
    sites it touched (a ring changes nothing else).
    """
    if lam < 0 or N < 0:
        raise ValueError("rates must be nonnegative")
    if checkpoints is None:
        if N > math.e:
            ts = t_star(N)
            k = int(math.floor(horizon / ts + 1e-12))
            cps = np.arange(0, k + 1) * ts
        else:
            cps = np.array([0.0, horizon])
    else:
        cps = np.asarray(checkpoints, dtype=float)
    buf = as_buffer(s)
    sysm = CoupledSystem(lam, N, d, log=log)
    P = np.zeros(cps.size, dtype=np.int64)
    X = np.zeros(cps.size, dtype=np.int64)
    S = np.zeros(cps.size, dtype=np.int64)
    ci = 0
    n_events = 0
    n_audits = 0
    truncated = False
    t = 0.0

    def record_upto(limit):
        nonlocal ci
        while ci < cps.size and cps[ci] < limit:
            P[ci] = sysm.psi_count()
            X[ci] = sysm.xi_count()
            S[ci] = len(sysm.occ)
            ci += 1

    record_upto(1e-300)  # checkpoint at time 0
    while ci < cps.size:
        n = sysm.psi_count()
        if n > cap:
            truncated = True
            break
        gen_rate = (1.0 + lam) * n
        total = gen_rate + sysm.engine.rate()
        if total == 0:
            record_upto(math.inf)
            break
        t_new = t + buf.exponential(total)
        record_upto(t_new)
        if ci == cps.size:
            break
        t = t_new
        sysm.t = t
        if buf.random() * total < gen_rate:
            a = sysm.psi.present.choice(buf)
            if buf.random() * (1.0 + lam) < lam:
                sysm.birth(a, sysm.engine.units[buf.below(2 * d)])
            else:
                sysm.death(a)
            if audit:
                sysm.audit()
                n_audits += 1
        else:
            sysm.ring(buf, check=audit)
        n_events += 1
    if truncated:
        P[ci:] = -1
        X[ci:] = -1
        S[ci:] = -1
    if audit:
        sysm.audit()
        sysm.audit_presence_times()
        n_audits += 1
    return CoupledRun(cps, P, X, S, truncated, n_events, n_audits, sysm.n_blocked, sysm.log)

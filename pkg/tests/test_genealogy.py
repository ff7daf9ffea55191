import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from cpstir import exclusion as ex
from cpstir.core import SeededStream, UniformBuffer
from cpstir.genealogy import (ROOT, CoupledSystem, GenealogyState, IndexedSet,
                              InvariantViolation, StirringEngine, child, evolve_coupled,
                              evolve_psi, parent, psi_mean, t_star)


def test_addresses():
    a = child(child(ROOT, 2), 1)
    assert a == (2, 1)
    assert parent(a) == (2,)
    assert parent(parent(a)) == ROOT
    with pytest.raises(ValueError):
        parent(ROOT)
    with pytest.raises(ValueError):
        child(ROOT, 0)


@pytest.mark.parametrize("old,new", [(1, 0), (-1, 0), (-1, 1), (1, 1), (0, 0)])
def test_illegal_transitions(old, new):
    g = GenealogyState()
    if old != 0:
        g.set((1,), 1, 0.0)
        if old == -1:
            g.set((1,), -1, 1.0)
    with pytest.raises(InvariantViolation):
        g.set((1,), new, 2.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 6), st.sampled_from([1, -1])), max_size=40))
def test_next_child_cache_matches_scan(ops):
    g = GenealogyState()
    g.set(ROOT, 1, 0.0)
    for n, v in ops:
        a = (n,)
        old = g[a]
        if (old, v) in {(0, 1), (1, -1), (0, -1)}:
            g.set(a, v, 0.0)
        assert g.next_child(ROOT) == g.scan_next_child(ROOT)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 9)), max_size=60))
def test_indexed_set_behaves_like_set(ops):
    s, ref = IndexedSet(), set()
    for add, x in ops:
        if add:
            s.add(x)
            ref.add(x)
        else:
            s.discard(x)
            ref.discard(x)
        assert set(s) == ref and len(s) == len(ref)
        assert all(x in s for x in ref)


def test_indexed_set_choice_uniform(stream):
    s = IndexedSet(range(5))
    s.discard(2)
    buf = UniformBuffer(stream)
    counts = np.bincount([s.choice(buf) for _ in range(40_000)], minlength=5)
    assert counts[2] == 0
    assert stats.chisquare(counts[[0, 1, 3, 4]]).pvalue > 1e-3


def test_psi_checkpoint_zero_is_root(stream):
    tr = evolve_psi(1.3, 2.0, stream, checkpoints=[0.0, 2.0])
    assert tr.counts[0] == 1


def test_psi_pure_death(stream):
    # lam = 0: the root alone, present at t with probability e^{-t}
    vals = [evolve_psi(0.0, 1.0, stream).counts[-1] for _ in range(20_000)]
    p = np.mean(vals)
    assert set(vals) <= {0, 1}
    assert abs(p - math.exp(-1)) < 3 * math.sqrt(p * (1 - p) / len(vals))


@pytest.mark.parametrize("lam", [0.8, 1.2])
def test_psi_mean_growth(stream, lam):
    r = psi_mean(lam, 3.0, 20_000, stream)
    assert r.extra["truncated"] == 0
    assert abs(r.mean - math.exp((lam - 1) * 3.0)) < 3 * r.std_error


def test_psi_rejects_negative_rate(stream):
    with pytest.raises(ValueError):
        evolve_psi(-1.0, 1.0, stream)


def test_psi_cap_marks_truncation(stream):
    tr = evolve_psi(5.0, 10.0, stream, cap=50)
    assert tr.truncated and tr.counts[-1] > 50


def test_blocked_birth_by_hand():
    c = CoupledSystem(1.0, 0.0, d=2)
    b1, s1 = c.birth(ROOT, (1, 0), t=0.1)
    assert (b1, s1) == ((1,), 1)
    b2, s2 = c.birth(ROOT, (1, 0), t=0.2)
    assert (b2, s2) == ((2,), -1)
    assert c.psi[b2] == 1 and c.xi_tree[b2] == -1
    assert c.psi_count() == 3 and c.xi_count() == 2
    # the blocked child lives on in Psi; its births do not reach Xi
    b3, s3 = c.birth(b2, (0, 1), t=0.3)
    assert s3 == 0 and c.xi_tree[b3] == 0
    # both trees agree on the next free child of the root
    assert c.psi.next_child(ROOT) == c.xi_tree.next_child(ROOT) == 3
    c.death(b1, t=0.4)
    assert (1, 0) not in c.occ
    b4, s4 = c.birth(ROOT, (1, 0), t=0.5)
    assert (b4, s4) == ((3,), 1)
    c.audit()
    c.audit_presence_times()
    with pytest.raises(InvariantViolation):
        c.birth(b1, (1, 0))


def test_audit_catches_tampering():
    c = CoupledSystem(1.0, 0.0, d=2)
    c.birth(ROOT, (1, 0))
    c.occ[(5, 5)] = (1,)
    with pytest.raises(InvariantViolation):
        c.audit()


def test_t_star():
    assert t_star(100) == pytest.approx(1 / math.log(100))
    with pytest.raises(ValueError):
        t_star(1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([(1.5, 2.0), (1.2, 20.0), (2.0, 0.0)]),
       st.sampled_from([2, 3]))
def test_coupled_invariants_hold(seed, rates, d):
    lam, N = rates
    r = evolve_coupled(lam, N, 1.5, SeededStream(seed, "inv"), d=d, checkpoints=[0.5, 1.0, 1.5],
                       cap=300)
    ok = r.psi_counts >= 0
    assert np.all(r.xi_counts[ok] <= r.psi_counts[ok])
    assert np.all(r.xi_sites[ok] == r.xi_counts[ok])


def test_coupled_default_checkpoints(stream):
    r = evolve_coupled(1.0, 100.0, 1.0, stream)
    ts = 1 / math.log(100)
    np.testing.assert_allclose(r.checkpoints, ts * np.arange(int(1 / ts) + 1))
    assert r.psi_counts[0] == r.xi_counts[0] == 1


def test_blocking_happens_and_fades_with_stirring(stream):
    def gaps(N, n):
        buf = UniformBuffer(stream.child(f"N{N}"))
        out = []
        for _ in range(n):
            r = evolve_coupled(1.5, N, 1.0, buf, checkpoints=[1.0], audit=False)
            out.append(r.psi_counts[-1] - r.xi_counts[-1])
        return np.array(out)

    slow, fast = gaps(0.0, 1000), gaps(100.0, 300)
    assert (slow > 0).mean() > 0.05
    se = math.hypot(slow.std(ddof=1) / math.sqrt(slow.size), fast.std(ddof=1) / math.sqrt(fast.size))
    assert slow.mean() - fast.mean() > 3 * se


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.integers(0, 3), min_size=1, max_size=80))
def test_engine_edge_bookkeeping(seed, ops):
    buf = UniformBuffer(SeededStream(seed, "engine"))
    eng = StirringEngine(2, 1.0)
    nxt = 0
    for op in ops:
        if op == 0 or not eng.pos:
            x = (buf.below(5) - 2, buf.below(5) - 2)
            eng.place(nxt, x)
            nxt += 1
        elif op == 1:
            eng.remove(list(eng.pos)[buf.below(len(eng.pos))])
        else:
            x, y = eng.ring(buf)
            assert abs(x[0] - y[0]) + abs(x[1] - y[1]) == 1
        assert eng.active_edges() == eng.count_active_edges()
        for pid, x in eng.pos.items():
            assert pid in eng.members[x]
        assert set(eng.sites) == set(eng.members)


def test_engine_picks_active_edges_uniformly(stream):
    eng = StirringEngine(2, 1.0)
    eng.place("a", (0, 0))
    eng.place("b", (1, 0))
    assert eng.active_edges() == 7
    buf = UniformBuffer(stream)
    counts = {}
    for _ in range(70_000):
        x, y = eng.pick_edge(buf)
        e = (x, y) if x < y else (y, x)
        counts[e] = counts.get(e, 0) + 1
    assert len(counts) == 7
    assert stats.chisquare(list(counts.values())).pvalue > 1e-3


def test_engine_swap_moves_whole_contents():
    eng = StirringEngine(2, 1.0)
    eng.place("a", (0, 0))
    eng.place("b", (0, 0))
    eng.place("c", (1, 0))
    eng.swap((0, 0), (1, 0))
    assert eng.pos == {"a": (1, 0), "b": (1, 0), "c": (0, 0)}
    eng.swap((1, 0), (1, 1))
    assert eng.pos["a"] == (1, 1) and (1, 0) not in eng.members


def test_lone_particle_is_a_walk(stream):
    # a single particle under rate-N stirring jumps at total rate 2dN
    N, t, n = 2.0, 1.0, 40_000
    buf = UniformBuffer(stream)
    m = np.zeros(n, dtype=np.int64)
    for i in range(n):
        eng = StirringEngine(2, N)
        eng.place(0, (0, 0))
        eng.run(0.0, t, buf)
        x = eng.pos[0]
        m[i] = abs(x[0]) + abs(x[1])
    probs = oracles.walk_l1_distribution(2, 4 * N, t, kmax=50)
    h = np.bincount(m, minlength=probs.size)[: probs.size]
    keep = probs * n > 20
    obs = np.append(h[keep], n - h[keep].sum())
    exp = np.append(probs[keep] * n, n - probs[keep].sum() * n)
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_pair_under_engine_matches_exclusion_difference(stream):
    # two particles under the flow: their difference is the exclusion difference
    t, n = 1.0, 30_000
    buf = UniformBuffer(stream.child("engine"))
    diffs = np.zeros(n, dtype=np.int64)
    for i in range(n):
        eng = StirringEngine(2, 1.0)
        eng.place(0, (0, 0))
        eng.place(1, (1, 0))
        eng.run(0.0, t, buf)
        a, b = eng.pos[0], eng.pos[1]
        diffs[i] = abs(a[0] - b[0]) + abs(a[1] - b[1])
    assert diffs.min() >= 1
    ref = np.abs(ex.difference_samples("X", 2, t, n, stream.child("ref"))).sum(axis=1)
    kmax = 12
    ha = np.bincount(np.minimum(diffs, kmax), minlength=kmax + 1)
    hb = np.bincount(np.minimum(ref, kmax), minlength=kmax + 1)
    keep = (ha + hb) > 20
    assert stats.chi2_contingency(np.vstack([ha[keep], hb[keep]])).pvalue > 1e-3


def test_event_log_replays_counts(stream):
    r = evolve_coupled(1.5, 5.0, 1.0, stream, checkpoints=[1.0], log=True)
    kinds = [k for _, k, _, _ in r.log]
    born = kinds.count("birth")
    died = kinds.count("death")
    if not r.truncated:
        assert 1 + born - died == r.xi_counts[-1]
    assert kinds.count("blocked") == r.n_blocked
    times = [t for t, *_ in r.log]
    assert times == sorted(times)


def test_thinned_below_free_at_moderate_stirring(stream):
    buf = UniformBuffer(stream)
    strict = 0
    for _ in range(300):
        r = evolve_coupled(1.5, 10.0, 3.0, buf, checkpoints=[1.0, 2.0, 3.0], cap=2000)
        if r.truncated:
            continue
        assert np.all(r.xi_counts <= r.psi_counts)
        strict += r.xi_counts[-1] < r.psi_counts[-1]
    assert strict > 0


def test_large_stirring_approaches_branching_mean(stream):
    # at N = 1000 collisions are rare and E[#Xi] is close to e^{(lam - 1) t}
    lam, t, n = 1.2, 3.0, 400
    buf = UniformBuffer(stream.child("fast"))
    fast = np.array([evolve_coupled(lam, 1000.0, t, buf, checkpoints=[t], audit=False).xi_counts[-1]
                     for _ in range(n)], dtype=float)
    buf = UniformBuffer(stream.child("still"))
    still = np.array([evolve_coupled(lam, 0.0, t, buf, checkpoints=[t], audit=False).xi_counts[-1]
                      for _ in range(4 * n)], dtype=float)
    target = math.exp((lam - 1) * t)
    se = fast.std(ddof=1) / math.sqrt(n)
    assert abs(fast.mean() - target) < 3 * se
    assert abs(fast.mean() - target) < abs(still.mean() - target)

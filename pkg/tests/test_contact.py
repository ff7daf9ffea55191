import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from cpstir import contact as cp
from cpstir.core import SeededStream, UniformBuffer
from cpstir.genealogy import evolve_coupled

G_D3 = 1.5163860591519782  # oracles.green_watson()


def _hist_test(m, probs, n):
    h = np.bincount(m, minlength=probs.size)[: probs.size]
    keep = probs * n > 20
    obs = np.append(h[keep], n - h[keep].sum())
    exp = np.append(probs[keep] * n, n - probs[keep].sum() * n)
    return stats.chisquare(obs, exp).pvalue


def test_rate_table():
    rt = cp.RateTable(1.5, 2.0, 2)
    occ = {(0, 0), (1, 0)}
    assert rt.active_edges(occ) == 7
    assert rt.total_rate(occ) == pytest.approx(2 * 2.5 + 2.0 * 7)
    with pytest.raises(ValueError):
        cp.RateTable(-1.0, 0.0, 2)
    with pytest.raises(ValueError):
        cp.RateTable(1.0, 0.0, 4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 4.0), st.floats(0.0, 5.0), st.sampled_from([1, 2, 3]))
def test_incremental_rate_matches_recomputed(seed, lam, N, d):
    rates = cp.RateTable(lam, N, d)
    state = cp.ContactState(cp.Configuration.single(d), rates)
    buf = UniformBuffer(SeededStream(seed, "rate"))
    for _ in range(150):
        if not state.config.occupied:
            break
        before = len(state.config.occupied)
        kind, dt = state.step(buf)
        assert dt > 0
        after = len(state.config.occupied)
        assert after - before == {"death": -1, "birth": 1}.get(kind, 0)
        assert state.rate() == pytest.approx(rates.total_rate(state.config.occupied), rel=1e-12)


def test_step_on_empty_is_an_error(stream):
    state = cp.ContactState(cp.Configuration(set()), cp.RateTable(1.0, 1.0, 2))
    with pytest.raises(ValueError):
        state.step(stream)


def test_lone_particle_lifetime(stream):
    buf = UniformBuffer(stream)
    life = []
    for _ in range(20_000):
        state = cp.ContactState(cp.Configuration.single(2), cp.RateTable(0.0, 0.0, 2))
        kind, dt = state.step(buf)
        assert kind == "death" and not state.config.occupied
        life.append(dt)
    assert stats.kstest(life, "expon").pvalue > 1e-3


def test_adjacent_pair_swap_is_null(stream):
    buf = UniformBuffer(stream)
    occ = {(0, 0), (1, 0)}
    n_null = n_stir = 0
    for _ in range(14_000):
        state = cp.ContactState(cp.Configuration(set(occ)), cp.RateTable(0.0, 1.0, 2))
        kind, _ = state.step(buf)
        if kind == "null_swap":
            assert state.config.occupied == occ
            n_null += 1
        if kind in ("swap", "null_swap"):
            n_stir += 1
    # one of the seven active edges joins the two particles
    p = n_null / n_stir
    assert abs(p - 1 / 7) < 3 * math.sqrt(p * (1 - p) / n_stir)


def test_void_birth_keeps_a_set(stream):
    buf = UniformBuffer(stream)
    seen_void = False
    for _ in range(300):
        state = cp.ContactState(cp.Configuration({(0,), (1,)}), cp.RateTable(5.0, 0.0, 1))
        kind, _ = state.step(buf)
        seen_void |= kind == "void_birth"
        assert len(state.config.occupied) in (1, 2, 3)
    assert seen_void


def test_lone_particle_walk_vs_oracle(stream):
    N, t, n = 2.0, 1.0, 20_000
    pos = cp.contact_positions_lone(N, t, n, stream.child("contact"))
    probs = oracles.walk_l1_distribution(2, 4 * N, t, kmax=50)
    assert _hist_test(np.abs(pos).sum(axis=1), probs, n) > 1e-3
    ref = cp.lone_particle_positions(N, t, n, stream.child("walk"))
    assert _hist_test(np.abs(ref).sum(axis=1), probs, n) > 1e-3
    # coordinate law as well, not just the distance
    for a in range(2):
        assert stats.ks_2samp(pos[:, a], ref[:, a]).pvalue > 1e-3


def test_pure_death_survival(stream):
    r = cp.survival_probability(0.0, 1.0, 10.0, 100, 2000, stream)
    assert r.mean < 0.005
    assert r.extra["censored_by_cap_fraction"] == 0


def test_supercritical_survival(stream):
    r = cp.survival_probability(5.0, 0.0, 20.0, 1000, 1000, stream)
    assert r.mean > 0.3


def test_monotone_in_lambda(stream):
    lams = [1.0, 1.4, 1.8, 2.2, 2.6]
    reps = [cp.survival_probability(l, 2.0, 10.0, 500, 3000, stream) for l in lams]
    for a, b in zip(reps, reps[1:]):
        assert b.mean - a.mean > -3 * math.hypot(a.std_error, b.std_error)
    assert reps[-1].mean > reps[0].mean


def test_common_randomness_across_lambda(stream):
    a = cp.survival_runs(1.5, 2.0, 5.0, 500, 300, stream)
    b = cp.survival_runs(1.5, 2.0, 5.0, 500, 300, stream)
    np.testing.assert_array_equal(a, b)


def test_worker_count_does_not_change_results(stream):
    a = cp.survival_runs(1.6, 3.0, 5.0, 500, 600, stream, workers=1)
    b = cp.survival_runs(1.6, 3.0, 5.0, 500, 600, stream, workers=2)
    np.testing.assert_array_equal(a, b)


def test_offset_gives_fresh_runs(stream):
    a = cp.survival_runs(1.6, 3.0, 5.0, 500, 300, stream)
    b = cp.survival_runs(1.6, 3.0, 5.0, 500, 300, stream, offset=300)
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("lam,N,d", [(1.5, 2.0, 2), (2.5, 0.0, 2), (1.2, 10.0, 3), (3.0, 1.0, 1)])
def test_kernel_bookkeeping_check(stream, lam, N, d):
    r = cp.survival_probability(lam, N, 5.0, 300, 200, stream, d=d, check=True)
    assert r.extra["bookkeeping_drift"] == 0


def test_kernel_matches_python_step(stream):
    # the kernel skips null swaps; the literal Gillespie step does not
    lam, N, T, n = 1.5, 2.0, 2.0, 3000
    fast = cp.survival_probability(lam, N, T, 10_000, n, stream)
    buf = UniformBuffer(stream.child("python"))
    alive = 0
    for _ in range(n):
        state = cp.ContactState(cp.Configuration.single(2), cp.RateTable(lam, N, 2))
        while state.config.occupied:
            occ = set(state.config.occupied)
            state.step(buf)
            if state.config.time > T:
                state.config.occupied = occ
                break
        alive += bool(state.config.occupied)
    p = alive / n
    se = math.hypot(fast.std_error, math.sqrt(p * (1 - p) / n))
    assert abs(fast.mean - p) < 3 * se


def test_no_stirring_matches_thinned_genealogy(stream):
    # with N = 0 the thinned genealogy is the basic contact process
    lam, T, n = 1.6, 4.0, 3000
    fast = cp.survival_probability(lam, 0.0, T, 10_000, n, stream)
    buf = UniformBuffer(stream.child("genealogy"))
    alive = 0
    for _ in range(n):
        r = evolve_coupled(lam, 0.0, T, buf, checkpoints=[T], audit=False)
        alive += r.xi_counts[-1] > 0
    p = alive / n
    se = math.hypot(fast.std_error, math.sqrt(p * (1 - p) / n))
    assert abs(fast.mean - p) < 3 * se


def test_survival_argument_checks(stream):
    with pytest.raises(ValueError):
        cp.survival_probability(1.0, 1.0, 1.0, 100, 10, None)
    with pytest.raises(ValueError):
        cp.survival_probability(1.0, 1.0, 1.0, 1, 10, stream)
    with pytest.raises(ValueError):
        cp.survival_probability(1.0, 1.0, 1.0, 100, 10, stream, d=5)


def test_lambda_c_small_bisection(stream):
    iv = cp.estimate_lambda_c(0.0, 2, 10.0, 200, 0.1, 0.2, stream, lo=1.0, hi=3.0, n_reps=400)
    assert iv.hi - iv.lo <= 0.2
    assert 1.0 <= iv.lo < iv.hi <= 3.0
    assert len(iv.probes) >= 3
    below = [p for p in iv.probes if p.lam <= iv.lo]
    above = [p for p in iv.probes if p.lam >= iv.hi]
    assert all(not p.above for p in below) and all(p.above for p in above)
    assert "proxy" in iv.caveat


def test_lambda_c_threshold_zero(stream):
    iv = cp.estimate_lambda_c(0.0, s=stream, survival_threshold=0.0, lo=1.1, hi=2.0)
    assert iv.lo == iv.hi == 1.1


def test_lambda_c_not_bracketing(stream):
    with pytest.raises(ValueError):
        cp.estimate_lambda_c(0.0, 2, 5.0, 200, 0.1, 0.1, stream, lo=2.5, hi=3.0, n_reps=200)
    with pytest.raises(ValueError):
        cp.estimate_lambda_c(0.0, 2, 5.0, 200, 0.1, 0.1, stream, lo=2.0, hi=1.0)
    with pytest.raises(ValueError):
        cp.estimate_lambda_c(0.0, 2, 5.0, 200, 1.5, 0.1, stream)


def test_asymptotic_bounds():
    assert oracles.green_watson() == pytest.approx(G_D3, rel=1e-12)
    assert cp.asymptotic_lower_bound(3, 100.0) == pytest.approx(
        oracles.lower_bound_formula(3, 100.0, G_D3), rel=1e-12)
    assert cp.asymptotic_lower_bound(3, 100.0) == pytest.approx(1.000861, abs=5e-7)
    assert cp.asymptotic_lower_bound(2, math.e**2) == pytest.approx(
        oracles.lower_bound_formula(2, math.e**2, G_D3), rel=1e-12)
    assert cp.asymptotic_lower_bound(2, math.e**2) == pytest.approx(1.02154, abs=5e-6)


def test_asymptotic_bounds_limits():
    for d in (2, 3):
        vals = [cp.asymptotic_lower_bound(d, N) for N in (10.0, 1e3, 1e6, 1e9)]
        assert all(v > 1 for v in vals)
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] - 1 < 1e-7
    with pytest.raises(ValueError):
        cp.asymptotic_lower_bound(2, 2.0)
    with pytest.raises(ValueError):
        cp.asymptotic_lower_bound(1, 100.0)

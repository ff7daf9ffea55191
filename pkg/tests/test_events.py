import math

import numpy as np
import pytest

import oracles
from cpstir import events as ev
from cpstir import exclusion as ex
from cpstir.core import EstimateReport
from cpstir.genealogy import t_star

P_E_1_100 = 0.0064068351  # oracles.prob_E_poisson(1, 100)


@pytest.mark.parametrize("lam,N", [(1.0, 100.0), (0.3, 10.0), (2.0, 1e4), (1.0, 3.0)])
def test_closed_form_matches_poisson_oracle(lam, N):
    assert ev.prob_E_closed(lam, N) == pytest.approx(oracles.prob_E_poisson(lam, N), rel=1e-12)


def test_frozen_value():
    assert oracles.prob_E_poisson(1.0, 100.0) == pytest.approx(P_E_1_100, rel=1e-6)
    assert ev.prob_E_closed(1.0, 100.0) == pytest.approx(P_E_1_100, rel=1e-6)


def test_event_E_estimate(stream):
    r = ev.estimate_event_E(1.0, 100.0, 400_000, stream)
    assert abs(r.mean - P_E_1_100) < 3 * r.std_error


def test_event_E_zero_birth_rate(stream):
    assert ev.prob_E_closed(0.0, 100.0) == 0.0
    assert ev.estimate_event_E(0.0, 100.0, 10_000, stream).mean == 0.0


def test_event_E_monotone_near_zero(stream):
    lams = np.linspace(0.0, 0.5, 11)
    vals = [ev.prob_E_closed(l, 100.0) for l in lams]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    lo = ev.estimate_event_E(0.1, 100.0, 200_000, stream)
    hi = ev.estimate_event_E(0.4, 100.0, 200_000, stream)
    assert hi.mean - lo.mean > 3 * math.hypot(lo.std_error, hi.std_error)


def test_event_E_needs_N_above_one(stream):
    with pytest.raises(ValueError):
        ev.estimate_event_E(1.0, 1.0, 10, stream)
    with pytest.raises(ValueError):
        ev.estimate_event_E(-1.0, 10.0, 10, stream)


@pytest.mark.parametrize("est", [ev.estimate_I_prob, ev.estimate_J_prob])
@pytest.mark.parametrize("method", ["direct", "conditional"])
def test_zero_birth_rate_gives_zero(stream, est, method):
    r = est(0.0, 20.0, 200, stream, method=method)
    assert r.mean == 0.0


def test_unknown_method(stream):
    with pytest.raises(ValueError):
        ev.estimate_I_prob(1.0, 20.0, 10, stream, method="bogus")


@pytest.fixture(scope="module")
def n20():
    from cpstir.core import SeededStream
    s = SeededStream(20240611, "events-n20")
    lam, N = 1.0, 20.0
    return {
        "I": ev.estimate_I_prob(lam, N, 10_000, s),
        "J": ev.estimate_J_prob(lam, N, 10_000, s),
        "I_direct": ev.estimate_I_prob(lam, N, 300_000, s, method="direct"),
        "J_direct": ev.estimate_J_prob(lam, N, 300_000, s, method="direct"),
        "oracle": ev.p_I_oracle(lam, N, 100_000, s),
        "p_E": ev.prob_E_closed(lam, N),
    }


def test_replays_are_consistent(n20):
    for key in ("I", "J", "I_direct", "J_direct"):
        r = n20[key]
        assert r.extra["occurrences"] > 0, key
        assert r.extra["count_violations"] == 0, key
        assert r.extra["block_mismatches"] == 0, key


def test_I_below_E(n20):
    assert n20["I"].mean <= n20["p_E"]
    assert n20["I_direct"].mean <= n20["p_E"] + 3 * n20["I_direct"].std_error


def test_conditional_matches_oracle(n20):
    o = n20["oracle"]
    for key in ("I", "J"):
        r = n20[key]
        assert abs(r.mean - o.mean) < 3 * math.hypot(r.std_error, o.std_error), key


def test_direct_matches_conditional(n20):
    for key in ("I", "J"):
        a, b = n20[key], n20[key + "_direct"]
        assert abs(a.mean - b.mean) < 3 * math.hypot(a.std_error, b.std_error), key


def test_I_equals_J(n20):
    a, b = n20["I"], n20["J"]
    assert abs(a.mean - b.mean) < 3 * math.hypot(a.std_error, b.std_error)


def test_direct_window_frequency(n20):
    # I needs the pattern E; J needs a pattern of the same probability
    for key in ("I_direct", "J_direct"):
        r = n20[key]
        p = r.extra["window_hits"] / r.n_reps
        assert abs(p - n20["p_E"]) < 3 * math.sqrt(p * (1 - p) / r.n_reps), key


@pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
def test_finite_lower_bound_below_oracle(stream, eps):
    o = ev.p_I_oracle(1.0, 50.0, 50_000, stream)
    lb = ev.p_I_lower_bound(1.0, 50.0, eps, 50_000, stream)
    assert lb.mean < o.mean + 3 * math.hypot(lb.std_error, o.std_error)
    with pytest.raises(ValueError):
        ev.p_I_lower_bound(1.0, 50.0, 1.0, 10, stream)


def test_criterion_value():
    assert ev.criterion_value(1.0, 100.0, 0.0) == 1.0
    assert ev.criterion_value(2.0, 100.0, 0.1) == pytest.approx(math.exp(t_star(100.0)) - 0.2)


def test_criterion_examples():
    R = ev.CriterionResult
    assert ev.extinction_criterion(1.0, 100.0, 1e-9) is R.EXTINCT_GUARANTEED
    assert ev.extinction_criterion(1.01, 100.0, 0.0) is R.INCONCLUSIVE
    assert ev.extinction_criterion(0.9, 100.0, 0.0) is R.EXTINCT_GUARANTEED
    assert ev.extinction_criterion(1.0, 100.0, 0.0) is R.INCONCLUSIVE


def test_criterion_threshold():
    # the criterion flips at lam = 1 + log(1 + 2p)/t*
    p, N = 1e-3, 100.0
    edge = 1 + math.log1p(2 * p) / t_star(N)
    assert ev.extinction_criterion(edge - 1e-9, N, p) is ev.CriterionResult.EXTINCT_GUARANTEED
    assert ev.extinction_criterion(edge + 1e-9, N, p) is ev.CriterionResult.INCONCLUSIVE


def test_criterion_uses_lower_confidence_bound():
    noisy = EstimateReport(10, 1e-4, 1e-4)
    sharp = EstimateReport(10, 1e-4, 1e-6)
    assert ev.extinction_criterion(1.0, 100.0, noisy) is ev.CriterionResult.INCONCLUSIVE
    assert ev.extinction_criterion(1.0, 100.0, sharp) is ev.CriterionResult.EXTINCT_GUARANTEED
    assert ev.extinction_criterion(1.0, 100.0, noisy, z=0.5) is ev.CriterionResult.EXTINCT_GUARANTEED


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_criterion_rejects_bad_probability(p):
    with pytest.raises(ValueError):
        ev.extinction_criterion(1.0, 100.0, p)


def test_large_N_chain(stream):
    # N = 1000, lam = 1 + theta g(N)/(dN); the estimate of P[I] must sit above
    # the asymptotic lower bound and give extinction. At this N the true
    # 2 P[I] is only about 0.28 t* g(N)/(dN), so theta has to be well below
    # that for a lower confidence bound from ~40 occurrences to clear it.
    N, d, theta, eps = 1000.0, 2, 0.05, 0.5
    g = ex.local_time_estimate("X", "N0", N, d, 20_000, stream.child("g"))
    lam = 1 + theta * g.mean / (d * N)
    ts = t_star(N)
    r = ev.estimate_I_prob(lam, N, 12_000, stream.child("I"))
    o = ev.p_I_oracle(lam, N, 20_000, stream.child("oracle"))
    assert r.extra["count_violations"] == 0 and r.extra["block_mismatches"] == 0
    assert abs(r.mean - o.mean) < 3 * math.hypot(r.std_error, o.std_error)
    bound = (1 - eps) ** 3 * ts * g.mean / (2 * d * N)
    assert r.mean + 3 * r.std_error >= bound
    assert o.mean >= bound
    assert ev.extinction_criterion(lam, N, r) is ev.CriterionResult.EXTINCT_GUARANTEED

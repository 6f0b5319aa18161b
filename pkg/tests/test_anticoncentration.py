import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.special import comb

from rmsimplicity.anticoncentration import (
    ConcentrationEstimate,
    EnumerationBudgetError,
    PreconditionError,
    ball_counts,
    levy_estimate,
    levy_exact,
    lo_bound_check_1d,
    lo_bound_check_2d,
    lo_bound_check_4d,
    small_ball_matrix,
    tensorization_check,
    threshold_tau,
)
from rmsimplicity.distributions import EntryLaw, LazyLaw
from rmsimplicity.ensembles import EnsembleSpec
from rmsimplicity.rng import stream

RAD = EntryLaw("rademacher")


def _zero_sampler(dim):
    return lambda rng, m: np.zeros((m, dim))


def test_point_mass_at_zero():
    rows = levy_estimate(_zero_sampler(3), [1e-9, 0.5], 1000, "fixed_zero", stream(0))
    assert all(r.p_hat == 1.0 and r.ci_high == 1.0 for r in rows)


def test_levy_exact_examples():
    assert levy_exact([-2, 0, 2], [0.25, 0.5, 0.25], 0.5)[0].p_hat == 0.5
    signs = np.array(list(itertools.product([-1, 1], repeat=4)))
    s = signs @ np.full(4, 0.5)
    vals, counts = np.unique(s, return_counts=True)
    est = levy_exact(vals, counts / 16, 0.4)[0]
    assert est.p_hat == pytest.approx(6 / 16)
    assert est.ci_low == est.p_hat == est.ci_high and est.method == "exact_enumeration"


def test_levy_needs_trials():
    with pytest.raises(ValueError):
        levy_estimate(_zero_sampler(1), [0.1], 0, "fixed_zero", stream(0))
    with pytest.raises(ValueError):
        levy_estimate(_zero_sampler(1), [0.1], 50, "fixed_zero", stream(0))


@given(arrays(np.float64, st.tuples(st.integers(1, 80), st.integers(1, 3)), elements=st.floats(-3, 3)),
       st.lists(st.floats(0.01, 4), min_size=1, max_size=6), st.integers(0, 2**32))
def test_mode_search_dominates_and_monotone(x, radii, seed):
    radii = sorted(radii)
    fixed = ball_counts(x, radii, "fixed_zero")
    mode = ball_counts(x, radii, "empirical_mode_search", stream(seed))
    assert np.all(mode >= fixed)
    assert np.all(np.diff(fixed) >= 0)
    if x.shape[1] == 1:
        assert np.all(np.diff(mode) >= 0)


def test_one_dim_mode_search_is_exact_window_max():
    x = np.array([0.0, 0.1, 0.15, 1.0, 1.05, 1.1, 1.12])
    # best window of width 0.2 holds the four points in [1.0, 1.12]
    assert ball_counts(x, [0.1], "empirical_mode_search")[0] == 4


@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(0.01, 1)), min_size=1, max_size=8),
       st.floats(0.01, 2), st.integers(0, 2**32))
def test_exact_enumeration_permutation_invariant(pairs, eps, seed):
    atoms = np.array([a for a, _ in pairs])
    probs = np.array([p for _, p in pairs])
    probs /= probs.sum()
    perm = stream(seed).permutation(len(pairs))
    a = levy_exact(atoms, probs, eps)[0].p_hat
    b = levy_exact(atoms[perm], probs[perm], eps)[0].p_hat
    assert a == pytest.approx(b, abs=1e-12)


def test_confidence_invariants():
    e = ConcentrationEstimate.from_counts(0.1, 7, 1000)
    assert e.ci_low <= e.p_hat <= e.ci_high
    assert isinstance(e.p_hat, float)


def _brute_small_ball(n, v, t, build):
    hits = 0
    total = 0
    for signs in itertools.product([-1.0, 1.0], repeat=n * n):
        m = build(np.array(signs))
        total += 1
        hits += np.linalg.norm(m @ v) <= t * math.sqrt(n) * (1 + 1e-12)
    return hits / total


def test_small_ball_exact_iid_matches_brute_force():
    v = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    spec = EnsembleSpec("iid_square", 3, RAD)
    for t in (0.3, 0.9, 1.2):
        got = small_ball_matrix(spec, v, t, exact=True)[0].p_hat
        assert got == pytest.approx(_brute_small_ball(3, v, t, lambda s: s.reshape(3, 3)), abs=1e-12)


def test_small_ball_exact_zeroed_matches_brute_force():
    spec = EnsembleSpec("zeroed_M", 3, RAD, D_size=1)
    v = np.array([0.6, 0.0, 0.8, 0.0, 0.0])
    free = [(0, 1), (0, 2), (1, 0)]  # (n-1) x n block positions, 0-based

    def build(signs):
        m = np.zeros((5, 5))
        for s, (i, j) in zip(signs, free):
            m[i, 2 + j] = m[2 + j, i] = s
        return m

    for t in (0.2, 0.5, 1.0):
        hits = [np.linalg.norm(build(np.array(s)) @ v) <= t * math.sqrt(3) * (1 + 1e-12)
                for s in itertools.product([-1.0, 1.0], repeat=3)]
        assert small_ball_matrix(spec, v, t, exact=True)[0].p_hat == pytest.approx(np.mean(hits))


def test_small_ball_monte_carlo_agrees_with_exact():
    spec = EnsembleSpec("iid_square", 3, RAD)
    v = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)
    exact = small_ball_matrix(spec, v, 0.9, exact=True)[0].p_hat
    mc = small_ball_matrix(spec, v, 0.9, trials=5000, rng=stream(3))[0]
    assert mc.ci_low <= exact <= mc.ci_high


def test_small_ball_lazy_zero_is_certain():
    spec = EnsembleSpec("truncated_M_underline", 2, LazyLaw(RAD, nu=0.0))
    est = small_ball_matrix(spec, np.ones(5) / math.sqrt(5), [1e-6, 0.5], exact=True)
    assert [e.p_hat for e in est] == [1.0, 1.0]


def test_small_ball_deterministic_norm_cap():
    # rademacher entries give ||A v|| <= ||A||_F ||v|| = n
    spec = EnsembleSpec("iid_square", 4, RAD)
    est = small_ball_matrix(spec, np.eye(4)[0], 4 / 2, trials=200, rng=stream(4))[0]
    assert est.p_hat == 1.0


def test_small_ball_budget_errors():
    spec = EnsembleSpec("iid_square", 5, RAD)
    with pytest.raises(EnumerationBudgetError):
        small_ball_matrix(spec, np.ones(5), 1.0, exact=True)
    with pytest.raises(EnumerationBudgetError):
        small_ball_matrix(EnsembleSpec("iid_square", 2, EntryLaw("gaussian")), np.ones(2), 1.0, exact=True)
    with pytest.raises(ValueError):
        small_ball_matrix(spec, np.ones(4), 1.0, exact=True)


@pytest.mark.parametrize("L, exponent, tau", [(2, 3, 1 / 8), (5, 3, 1 / 20), (5, 7, 1 / 20)])
def test_threshold_zero_matrix(L, exponent, tau):
    spec = EnsembleSpec("truncated_M_underline", 2, LazyLaw(RAD, nu=0.0))
    est = threshold_tau(spec, np.ones(5) / math.sqrt(5), L, exponent)
    assert est.bracket[0] <= tau <= est.bracket[1] + 1e-12
    assert est.bracket[1] - est.bracket[0] <= 1e-3 and not est.inconclusive


def test_threshold_two_by_two_step_function():
    # ||Mv|| is 0, sqrt 2, 2 with probabilities 1/4, 1/2, 1/4; P = 1/4 below t = 1
    spec = EnsembleSpec("iid_square", 2, RAD)
    v = np.ones(2) / math.sqrt(2)
    est = threshold_tau(spec, v, 2, 3)
    expected = 0.25 ** (1 / 3) / 8
    assert est.bracket[0] <= expected <= est.bracket[1]
    lo, hi = est.bracket
    for t, holds in ((lo, True), (hi, False)):
        p = small_ball_matrix(spec, v, t, exact=True)[0].p_hat
        assert (p >= (8 * t) ** 3) == holds or t == 0


def test_threshold_monte_carlo_flags():
    spec = EnsembleSpec("iid_square", 6, EntryLaw("gaussian"))
    est = threshold_tau(spec, np.eye(6)[0], 3, 11, rng=stream(5), trials=2000)
    assert est.method == "monte_carlo"
    assert est.bracket[1] - est.bracket[0] <= 1e-3


def test_threshold_rejects_small_L():
    with pytest.raises(ValueError):
        threshold_tau(EnsembleSpec("iid_square", 2, RAD), np.ones(2), 1.5, 3)


def _unit(rng, n):
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def test_lo_1d_requires_certificate():
    v = np.full(50, 50**-0.5)
    with pytest.raises(PreconditionError):
        lo_bound_check_1d(v, RAD, [0.02, 0.1], 1000, stream(6))


def test_lo_1d_lattice_mass():
    n = 100
    v = np.full(n, n**-0.5)
    table = lo_bound_check_1d(v, RAD, [0.5 / math.sqrt(n)], 200_000, stream(7), certify=False)
    r = table.rows[0]
    exact = comb(n, n // 2, exact=True) / 2**n
    assert r.ci_low <= exact <= r.ci_high


def test_lo_1d_slope_and_level():
    v = _unit(stream(8, "v"), 50)
    eps = np.geomspace(0.02, 0.5, 8)
    table = lo_bound_check_1d(v, RAD, eps, 200_000, stream(8))
    assert 0.8 <= table.slope <= 1.2
    at = next(r for r in table.rows if abs(r.radius - 0.1) < 0.03)
    assert at.p_hat <= 0.5
    wide = lo_bound_check_1d(v, RAD, [3.0], 20_000, stream(9), certify=False)
    assert wide.rows[0].p_hat >= 0.99


def _pair(n, seed, omega):
    rng = stream(seed, "pair")
    c = _unit(rng, n)
    d = rng.standard_normal(n)
    d -= (d @ c) * c
    return c, omega * d / np.linalg.norm(d)


def test_lo_2d_halving_doubles():
    c, d = _pair(100, 10, 0.5)
    table = lo_bound_check_2d(c, d, RAD, [0.05, 0.1], 100_000, stream(10))
    ratio = table.stats["halving_ratios"][0]
    assert ratio is not None and 2 / 1.5 <= ratio <= 2 * 1.5


def test_lo_2d_preconditions_and_saturation():
    c, d = _pair(60, 11, 0.5)
    with pytest.raises(PreconditionError):
        lo_bound_check_2d(c, d + 0.1 * c, RAD, [0.1], 1000, stream(11))
    with pytest.raises(PreconditionError):
        lo_bound_check_2d(2 * c, d, RAD, [0.1], 1000, stream(11))
    big = lo_bound_check_2d(c, d, RAD, [100.0], 1000, stream(11), certify=False, halving=False)
    assert big.rows[0].p_hat == 1.0


def test_lo_4d_preconditions():
    n = 40
    q, _ = np.linalg.qr(stream(12).standard_normal((n, 4)))
    c, c2, d, d2 = q.T
    with pytest.raises(PreconditionError):
        lo_bound_check_4d(c, c2, 0 * d, 0 * d2, RAD, [0.5], 1000, stream(12))
    with pytest.raises(PreconditionError):
        lo_bound_check_4d(c, c, d, d2, RAD, [0.5], 1000, stream(12))
    big = lo_bound_check_4d(c, c2, 0.5 * d, 0.5 * d2, RAD, [50.0], 1000, stream(12), certify=False,
                            halving=False)
    assert big.rows[0].p_hat == 1.0


def _uniform(rng, m):
    return rng.random(m)


def test_tensorization_reference():
    ref = tensorization_check(_uniform, 1.0, [0.5], 5, 10_000_000, stream(13, "ref"))["rows"][0]
    rep = tensorization_check(_uniform, 1.0, [0.5], 5, 200_000, stream(14))
    r = rep["rows"][0]
    assert abs(r.p_hat - ref.p_hat) <= 5 * math.sqrt(ref.p_hat * (1 - ref.p_hat) / 200_000)
    assert rep["C_point"] <= 3


def test_tensorization_saturates_and_reduces():
    rep = tensorization_check(_uniform, 1.0, [1.0, 1.5], 4, 10_000, stream(15))
    assert all(r.p_hat == 1.0 for r in rep["rows"])
    one = tensorization_check(_uniform, 1.0, [0.1, 0.3, 0.7], 1, 200_000, stream(16))
    for r in one["rows"]:
        assert r.ci_low <= r.radius <= r.ci_high

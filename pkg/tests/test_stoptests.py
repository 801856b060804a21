"""Agreement posterior, Beta majority tail, trackers, and the ESC window."""
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpsc import (
    DATA_INDEPENDENT,
    AgreementParams,
    BetaMajorityState,
    Modality,
    TrackerState,
    beta_majority_tail,
    esc_window_check,
    posterior_safe,
    text_key,
    tracker_backfill,
)
from conftest import A, B, C, COT, POT, sample

# Calibrated parameter rows exercised throughout: five (c, a1, a2) triples
# spanning the observed range, all satisfying a1*a2 <= c.
PARAM_ROWS = [
    (0.840, 0.527, 0.996),
    (0.862, 0.667, 0.999),
    (0.861, 0.682, 0.996),
    (0.938, 0.844, 0.998),
    (0.918, 0.783, 0.991),
]


# ------------------------------------------------------------------- params

def test_params_derived_rates():
    p = AgreementParams(c=0.840, a1=0.527, a2=0.996)
    assert math.isclose(p.q1, 0.527 * 0.996 / 0.840, rel_tol=1e-15)
    assert math.isclose(p.q0, 0.527 * 0.004 / 0.160, rel_tol=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(c=0.0, a1=0.5, a2=0.9),
    dict(c=1.0, a1=0.5, a2=0.9),
    dict(c=0.5, a1=0.0, a2=0.9),
    dict(c=0.5, a1=1.0, a2=0.9),
    dict(c=0.5, a1=0.5, a2=0.0),
    dict(c=0.5, a1=0.5, a2=1.1),
])
def test_params_rejects_out_of_range(kwargs):
    with pytest.raises(ValueError):
        AgreementParams(**kwargs)


def test_params_rejects_q1_above_one():
    # a1*a2 = 0.81 > c = 0.5
    with pytest.raises(ValueError, match="q1"):
        AgreementParams(c=0.5, a1=0.9, a2=0.9)


def test_params_rejects_q0_above_one():
    # a1*(1-a2) = 0.45 > 1-c = 0.1
    with pytest.raises(ValueError, match="q0"):
        AgreementParams(c=0.9, a1=0.5, a2=0.1)


def test_params_json_round_trip():
    p = AgreementParams(c=0.84, a1=0.527, a2=0.996, model="m")
    assert AgreementParams.from_json(p.to_json()) == p


def test_data_independent_surrogate():
    assert DATA_INDEPENDENT.c == 0.5
    assert DATA_INDEPENDENT.a2 == 1.0
    assert DATA_INDEPENDENT.q0 == 0.0


# ---------------------------------------------------------------- posterior

def test_posterior_no_evidence_is_prior():
    for c, a1, a2 in PARAM_ROWS:
        assert posterior_safe(AgreementParams(c, a1, a2), 0, 0) == c


def test_posterior_single_match_is_a2():
    # P(safe | one match in one trial) = a2 by definition, exactly
    for c, a1, a2 in PARAM_ROWS:
        assert posterior_safe(AgreementParams(c, a1, a2), 1, 1) == a2


def test_posterior_single_disagreement_closed_form():
    # P(safe | 0 of 1) = (c - a1*a2) / (1 - a1)
    c, a1, a2 = PARAM_ROWS[0]
    got = posterior_safe(AgreementParams(c, a1, a2), 0, 1)
    want = (c - a1 * a2) / (1 - a1)
    assert abs(got - want) < 1e-12
    assert round(got, 5) == 0.66619


def test_posterior_certifies_on_match_when_a2_is_one():
    for k, t in [(1, 1), (1, 5), (3, 7), (40, 40)]:
        assert posterior_safe(DATA_INDEPENDENT, k, t) == 1.0


def test_posterior_zero_match_decay_when_a2_is_one():
    # q0 = 0: disagreements can only come from the unsafe hypothesis... they
    # can't -- q0 = 0 means an unsafe anchor never matches, so disagreements
    # are uninformative against "safe" only through (1 - q1).
    p = AgreementParams(c=0.8, a1=0.4, a2=1.0)
    q1 = p.q1
    for t in range(1, 12):
        num = 0.8 * (1 - q1) ** t
        want = num / (num + 0.2)
        assert abs(posterior_safe(p, 0, t) - want) < 1e-15


def test_posterior_monotone_in_matches():
    p = AgreementParams(*PARAM_ROWS[1])
    t = 10
    values = [posterior_safe(p, k, t) for k in range(t + 1)]
    # strictly increasing until float precision saturates at 1.0
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert all(a < b for a, b in zip(values, values[1:]) if b < 1.0)
    assert values[0] < values[2]


def test_posterior_monotone_in_disagreements():
    p = AgreementParams(*PARAM_ROWS[2])
    values = [posterior_safe(p, 2, t) for t in range(2, 20)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert all(a > b for a, b in zip(values, values[1:]) if a > 0.0)
    assert values[0] > values[-1]


def test_posterior_extreme_counts_stay_bounded():
    # overwhelming evidence saturates cleanly instead of overflowing
    p = AgreementParams(*PARAM_ROWS[3])
    assert posterior_safe(p, 0, 10**6) == 0.0
    assert posterior_safe(p, 10**6, 10**6) == 1.0
    assert 0.0 <= posterior_safe(p, 10**5, 2 * 10**5) <= 1.0


@pytest.mark.parametrize("k,t", [(-1, 0), (1, 0), (3, 2), (0, -1)])
def test_posterior_rejects_bad_counts(k, t):
    with pytest.raises(ValueError):
        posterior_safe(AgreementParams(*PARAM_ROWS[0]), k, t)


def exact_posterior(c: Fraction, a1: Fraction, a2: Fraction,
                    k: int, t: int) -> Fraction:
    """Independent oracle: the Bayes ratio with binomial terms kept in."""
    q1 = a1 * a2 / c
    q0 = a1 * (1 - a2) / (1 - c)
    binom = math.comb(t, k)
    w1 = c * binom * q1**k * (1 - q1)**(t - k)
    w0 = (1 - c) * binom * q0**k * (1 - q0)**(t - k)
    if w1 + w0 == 0:
        return c
    return w1 / (w1 + w0)


@given(st.integers(0, 30), st.integers(0, 30))
@settings(max_examples=120)
def test_posterior_matches_exact_fractions(k, extra):
    t = k + extra
    for c, a1, a2 in PARAM_ROWS:
        params = AgreementParams(c, a1, a2)
        want = exact_posterior(Fraction(c), Fraction(a1), Fraction(a2), k, t)
        got = posterior_safe(params, k, t)
        assert abs(got - float(want)) < 1e-12


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(0.05, 1.0),
       st.integers(0, 40), st.integers(0, 40))
@settings(max_examples=200)
def test_posterior_is_a_probability(c, u, a2, k, extra):
    a1 = min(c / a2, (1 - c) / (1 - a2) if a2 < 1 else 2.0, 0.99) * u
    if a1 <= 0:
        return
    params = AgreementParams(c=c, a1=a1, a2=a2)
    value = posterior_safe(params, k, k + extra)
    assert 0.0 <= value <= 1.0


# ---------------------------------------------------------------- beta tail

def test_beta_tail_known_values():
    assert beta_majority_tail(4, 1) == 57 / 64 == 0.890625
    assert beta_majority_tail(7, 0) == 0.99609375
    assert beta_majority_tail(5, 0) == 0.984375
    assert beta_majority_tail(4, 0) == 0.96875
    assert beta_majority_tail(0, 0) == 0.5


def test_beta_tail_tie_is_exactly_half():
    for v in range(11):
        assert beta_majority_tail(v, v) == 0.5


def test_beta_tail_rejects_negative():
    with pytest.raises(ValueError):
        beta_majority_tail(-1, 0)
    with pytest.raises(ValueError):
        beta_majority_tail(0, -2)


@given(st.integers(0, 30), st.integers(0, 30))
def test_beta_tail_symmetry(v1, v2):
    assert beta_majority_tail(v1, v2) + beta_majority_tail(v2, v1) == pytest.approx(1.0, abs=1e-15)


@given(st.integers(0, 25))
def test_beta_tail_strictly_increasing_in_lead(v2):
    values = [beta_majority_tail(v1, v2) for v1 in range(v2, v2 + 10)]
    assert all(a < b for a, b in zip(values, values[1:]))


def test_beta_state_threshold():
    state = BetaMajorityState(threshold=0.975)
    assert not state.should_stop(4, 0)
    assert state.should_stop(5, 0)
    assert not state.should_stop(6, 1)   # 0.96484... < 0.975
    assert state.should_stop(7, 1)


# ----------------------------------------------------------------- trackers

def test_tracker_counts_opposite_modality_only():
    tracker = TrackerState(anchor=B, anchor_modality=POT)
    tracker = tracker.observe(sample("p", COT, 0, A))   # opposite, no match
    tracker = tracker.observe(sample("p", POT, 1, B))   # own modality: no-op
    tracker = tracker.observe(sample("p", COT, 1, B))   # opposite, match
    tracker = tracker.observe(sample("p", COT, 2, None))  # invalid: no-op
    assert (tracker.t, tracker.k) == (2, 1)


def test_tracker_backfill_equals_folding():
    history = [
        sample("p", COT, 0, A),
        sample("p", POT, 0, B),
        sample("p", COT, 1, None),
        sample("p", COT, 2, B),
    ]
    built = tracker_backfill(B, POT, history, created_at=3)
    folded = TrackerState(B, POT, created_at=3)
    for s in history:
        folded = folded.observe(s)
    assert built == folded
    assert (built.t, built.k) == (2, 1)


def test_tracker_posterior_uses_counts():
    tracker = tracker_backfill(A, COT, [sample("p", POT, 0, A)])
    assert tracker.posterior(DATA_INDEPENDENT) == 1.0
    empty = TrackerState(A, COT)
    assert empty.posterior(DATA_INDEPENDENT) == 0.5


# --------------------------------------------------------------- ESC window

def test_esc_window_unanimous():
    assert esc_window_check([A, A, A, A, A], 5)


def test_esc_window_not_full():
    assert not esc_window_check([A, A, A, A], 5)
    assert not esc_window_check([A] * 6, 5)


def test_esc_window_disagreement():
    assert not esc_window_check([A, A, B, A, A], 5)


def test_esc_window_rejects_none_entries():
    assert not esc_window_check([None, A, A, A, A], 5)
    assert not esc_window_check([A, A, None, A, A], 5)


def test_esc_window_size_zero():
    assert not esc_window_check([], 0)

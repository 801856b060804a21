"""Statistical stop tests: cross-modal agreement posterior, Beta majority
tail, and unanimous-window checks.

The agreement model scores an anchor answer y by P(safe | k of t
opposite-modality samples matched y), where "safe" means y is correct or the
full-set verdict would be wrong anyway. Its three parameters are the prior
safe rate c, the marginal match rate a1, and the safe-given-match rate a2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence

from .answers import AnswerKey, Modality, Sample, answers_equal


@dataclass(frozen=True)
class AgreementParams:
    """Calibrated (c, a1, a2) with the derived per-trial match likelihoods.

    q1 = a1*a2/c is the match probability when the anchor is safe and
    q0 = a1*(1-a2)/(1-c) when it is not; both must be valid probabilities,
    which bounds a1*a2 <= c and a1*(1-a2) <= 1-c.
    """

    c: float
    a1: float
    a2: float
    model: str = ""

    def __post_init__(self) -> None:
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must be in (0,1), got {self.c}")
        if not 0.0 < self.a1 < 1.0:
            raise ValueError(f"a1 must be in (0,1), got {self.a1}")
        if not 0.0 < self.a2 <= 1.0:
            raise ValueError(f"a2 must be in (0,1], got {self.a2}")
        if self.a1 * self.a2 > self.c:
            raise ValueError(
                f"q1 > 1: a1*a2 = {self.a1 * self.a2:.6g} exceeds c = {self.c:.6g}")
        if self.a1 * (1.0 - self.a2) > 1.0 - self.c:
            raise ValueError(
                f"q0 > 1: a1*(1-a2) = {self.a1 * (1.0 - self.a2):.6g} "
                f"exceeds 1-c = {1.0 - self.c:.6g}")

    @property
    def q1(self) -> float:
        return self.a1 * self.a2 / self.c

    @property
    def q0(self) -> float:
        if self.a2 == 1.0:
            return 0.0
        return self.a1 * (1.0 - self.a2) / (1.0 - self.c)

    def to_json(self) -> dict:
        return {"model": self.model, "c": self.c, "a1": self.a1, "a2": self.a2}

    @classmethod
    def from_json(cls, obj: dict) -> "AgreementParams":
        return cls(c=obj["c"], a1=obj["a1"], a2=obj["a2"],
                   model=obj.get("model", ""))

    @classmethod
    def load(cls, path: str) -> "AgreementParams":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# Surrogate for the data-independent strategies: with a2=1 any cross-modal
# match certifies the anchor (posterior 1), and the k=0 posterior stays
# below any threshold > 1/2.
DATA_INDEPENDENT = AgreementParams(c=0.5, a1=0.5, a2=1.0, model="data-independent")


def _log_weight(prior: float, q: float, k: int, t: int) -> float:
    """log(prior * q^k * (1-q)^(t-k)) with 0^0 = 1 conventions."""
    acc = math.log(prior)
    if k > 0:
        if q == 0.0:
            return -math.inf
        acc += k * math.log(q)
    if t - k > 0:
        if q == 1.0:
            return -math.inf
        acc += (t - k) * math.log1p(-q)
    return acc


def posterior_safe(params: AgreementParams, k: int, t: int) -> float:
    """P(anchor safe | k matches in t opposite-modality trials).

    The binomial coefficients of the two likelihoods cancel, so the whole
    computation runs on the two weights c*q1^k*(1-q1)^(t-k) and
    (1-c)*q0^k*(1-q0)^(t-k), evaluated in log space for stability.
    """
    if t < 0 or k < 0 or k > t:
        raise ValueError(f"need 0 <= k <= t, got k={k} t={t}")
    if t == 0:
        return params.c
    if params.q0 == 0.0:
        if k >= 1:
            return 1.0
        num = params.c * (1.0 - params.q1) ** t
        return num / (num + (1.0 - params.c))
    if k == 1 and t == 1:
        return params.a2  # definitional: a2 is P(safe | one match)
    l1 = _log_weight(params.c, params.q1, k, t)
    l0 = _log_weight(1.0 - params.c, params.q0, k, t)
    if l1 == -math.inf and l0 == -math.inf:
        return params.c  # both hypotheses assign zero likelihood; fall back to prior
    if l1 == -math.inf:
        return 0.0
    if l0 == -math.inf:
        return 1.0
    d = l0 - l1
    if d > 700.0:
        return 0.0
    if d < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(d))


@dataclass(frozen=True)
class TrackerState:
    """One anchored agreement test: k matches out of t opposite-modality trials."""

    anchor: AnswerKey
    anchor_modality: Modality
    t: int = 0
    k: int = 0
    created_at: int = 0  # creation order among trackers of one run

    def observe(self, sample: Sample) -> "TrackerState":
        """Fold one sample in; same-modality and invalid samples are no-ops."""
        if not sample.valid or sample.modality is self.anchor_modality:
            return self
        matched = answers_equal(sample.answer, self.anchor)
        return TrackerState(self.anchor, self.anchor_modality,
                            self.t + 1, self.k + int(matched), self.created_at)

    def posterior(self, params: AgreementParams) -> float:
        return posterior_safe(params, self.k, self.t)


def tracker_backfill(
    anchor: AnswerKey,
    anchor_modality: Modality,
    history: Sequence[Sample],
    created_at: int = 0,
) -> TrackerState:
    """Start a tracker over samples seen so far, whether before or after
    the anchor's own sample (which contributes nothing: same modality)."""
    state = TrackerState(anchor, anchor_modality, created_at=created_at)
    for sample in history:
        state = state.observe(sample)
    return state


def beta_majority_tail(v1: int, v2: int) -> float:
    """P(theta > 1/2) under Beta(v1+1, v2+1), computed exactly.

    For integer counts the tail reduces to the binomial sum
    sum_{j<=v1} C(v1+v2+1, j) / 2^(v1+v2+1); the Fraction result is
    converted to float once, so tail(v, v) is exactly 0.5.
    """
    if v1 < 0 or v2 < 0:
        raise ValueError(f"vote counts must be >= 0, got {v1}, {v2}")
    n = v1 + v2 + 1
    num = sum(math.comb(n, j) for j in range(v1 + 1))
    return float(Fraction(num, 2 ** n))


@dataclass
class BetaMajorityState:
    """Adaptive-consistency stop rule over the two current top vote counts."""

    threshold: float

    def should_stop(self, v1: int, v2: int) -> bool:
        return beta_majority_tail(v1, v2) >= self.threshold


def esc_window_check(window: Sequence[Optional[AnswerKey]], size: int) -> bool:
    """True iff the window is full and unanimous (invalids never count)."""
    if len(window) != size or size <= 0:
        return False
    first = window[0]
    if first is None:
        return False
    return all(answers_equal(first, other) for other in window)

"""Infer the agreement-model parameters (c, a1, a2) from full-sampling traces.

One calibration event per unique (problem, answer, introducing modality):
its trials are all valid opposite-modality samples of that problem, its
matches the ones equal to the anchor, and it is safe when the anchor is
correct or the full-set verdict is wrong anyway.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from .aggregate import AggregationStrategy, aggregate
from .answers import AnswerKey, FrequencyTable, Modality, Sample, answers_equal
from .samplers import TraceIndex
from .stoptests import AgreementParams

DEFAULT_MIN_ANCHORS = 50


class InsufficientData(Exception):
    pass


class CalibrationError(Exception):
    pass


@dataclass(frozen=True)
class CalibrationEvent:
    problem_id: str
    anchor: AnswerKey
    anchor_modality: Modality
    trials: int
    matches: int
    safe: bool


@dataclass
class CalibrationEstimate:
    n_anchors: int
    n_safe: int
    total_trials: int
    total_matches: int
    safe_matches: int
    c: float
    a1: float
    a2: float
    warnings: List[str] = field(default_factory=list)

    def report(self) -> str:
        lines = [
            f"anchors:        {self.n_anchors} ({self.n_safe} safe)",
            f"trials:         {self.total_trials} ({self.total_matches} matches, "
            f"{self.safe_matches} on safe anchors)",
            f"c  = {self.c:.6f}",
            f"a1 = {self.a1:.6f}",
            f"a2 = {self.a2:.6f}",
        ]
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


def safety_label(anchor: AnswerKey, gold: AnswerKey,
                 full_verdict: Optional[AnswerKey]) -> bool:
    """Safe = the anchor is correct, or the full-set verdict is wrong anyway."""
    return answers_equal(anchor, gold) or not answers_equal(full_verdict, gold)


def full_sampling_order(trace: TraceIndex, problem_id: str) -> List[Sample]:
    """Arrival order of a full-sampling pass: CoT/PoT interleaved by index."""
    cot = trace.get((problem_id, Modality.COT), [])
    pot = trace.get((problem_id, Modality.POT), [])
    out: List[Sample] = []
    for i in range(max(len(cot), len(pot))):
        if i < len(cot):
            out.append(cot[i])
        if i < len(pot):
            out.append(pot[i])
    return out


def build_events(trace: TraceIndex, golds: Dict[str, AnswerKey]) -> List[CalibrationEvent]:
    problem_ids = sorted({pid for pid, _ in trace})
    events: List[CalibrationEvent] = []
    for pid in problem_ids:
        gold = golds.get(pid)
        if gold is None:
            raise CalibrationError(f"no gold answer for traced problem {pid}")
        samples = full_sampling_order(trace, pid)
        valid = [s for s in samples if s.valid]
        if not valid:
            continue
        table = FrequencyTable.from_samples(valid)
        verdict = aggregate(AggregationStrategy.CP_MAJ, table)
        opposite_counts = {
            Modality.COT: sum(1 for s in valid if s.modality is Modality.POT),
            Modality.POT: sum(1 for s in valid if s.modality is Modality.COT),
        }
        seen: set = set()
        for s in valid:
            if s.answer in seen:
                continue
            seen.add(s.answer)
            trials = opposite_counts[s.modality]
            matches = sum(
                1 for o in valid
                if o.modality is not s.modality and answers_equal(o.answer, s.answer))
            events.append(CalibrationEvent(
                problem_id=pid,
                anchor=s.answer,
                anchor_modality=s.modality,
                trials=trials,
                matches=matches,
                safe=safety_label(s.answer, gold, verdict.answer),
            ))
    return events


def _shrink(count: float, total: int, name: str, warnings: List[str]) -> float:
    # add-half smoothing, applied only at the 0/1 boundaries
    if count == 0:
        warnings.append(f"{name} = 0/{total}; shrunk by a half-count")
        count = 0.5
    elif count == total:
        warnings.append(f"{name} = {total}/{total}; shrunk by a half-count")
        count = total - 0.5
    return count / total


def estimate(events: Iterable[CalibrationEvent],
             min_anchors: int = DEFAULT_MIN_ANCHORS) -> CalibrationEstimate:
    """Pooled maximum-likelihood estimates with boundary smoothing.

    Raises InsufficientData below min_anchors or when no trials/matches
    exist to estimate a1/a2 from.
    """
    events = list(events)
    n_anchors = len(events)
    if n_anchors < min_anchors:
        raise InsufficientData(
            f"{n_anchors} anchors < required minimum {min_anchors}")
    n_safe = sum(1 for e in events if e.safe)
    total_trials = sum(e.trials for e in events)
    total_matches = sum(e.matches for e in events)
    safe_matches = sum(e.matches for e in events if e.safe)
    if total_trials == 0:
        raise InsufficientData("no opposite-modality trials in the trace")
    if total_matches == 0:
        raise InsufficientData("no matches observed; a2 is not estimable")

    warnings: List[str] = []
    c = _shrink(n_safe, n_anchors, "c", warnings)
    a1 = _shrink(total_matches, total_trials, "a1", warnings)
    if safe_matches == total_matches:
        a2 = 1.0
        warnings.append("a2 = 1 (degenerate estimate: every match was safe)")
    elif safe_matches == 0:
        warnings.append(f"a2 = 0/{total_matches}; shrunk by a half-count")
        a2 = 0.5 / total_matches
    else:
        a2 = safe_matches / total_matches

    return CalibrationEstimate(
        n_anchors=n_anchors,
        n_safe=n_safe,
        total_trials=total_trials,
        total_matches=total_matches,
        safe_matches=safe_matches,
        c=c, a1=a1, a2=a2,
        warnings=warnings,
    )


def infer_params(trace: TraceIndex, golds: Dict[str, AnswerKey], model: str = "",
                 min_anchors: int = DEFAULT_MIN_ANCHORS,
                 ) -> Tuple[AgreementParams, CalibrationEstimate]:
    """Full pipeline: events -> pooled estimates -> validated parameters."""
    est = estimate(build_events(trace, golds), min_anchors=min_anchors)
    try:
        params = AgreementParams(c=est.c, a1=est.a1, a2=est.a2, model=model)
    except ValueError as exc:
        raise CalibrationError(f"estimates violate the agreement model: {exc}") from exc
    return params, est

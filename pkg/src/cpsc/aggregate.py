"""Full-set aggregation over a frequency table of CoT/PoT answers."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from .answers import AnswerKey, FrequencyTable, Modality


class AggregationStrategy(str, Enum):
    SC_COT = "sc-cot"
    SC_POT = "sc-pot"
    CP_MAJ = "cp-maj"
    CP_MAX = "cp-max"
    CP_AGR = "cp-agr"
    COT_SINGLE = "cot"
    POT_SINGLE = "pot"


@dataclass(frozen=True)
class Verdict:
    """Chosen answer plus how contested the choice was. answer=None is Abstain."""

    answer: Optional[AnswerKey]
    support: int = 0
    tie_broken: bool = False


def tie_break(candidates: List[AnswerKey], table: FrequencyTable) -> AnswerKey:
    """Resolve a primary-score tie: higher combined votes, then earliest first seen."""
    return min(candidates, key=lambda k: (-table.total(k), table.first_seen(k)))


def _pick(table: FrequencyTable, score) -> Verdict:
    keys = table.keys()
    scored = [(score(k), k) for k in keys]
    best = max(s for s, _ in scored) if scored else None
    candidates = [k for s, k in scored if s == best]
    if not candidates:
        return Verdict(answer=None)
    chosen = tie_break(candidates, table) if len(candidates) > 1 else candidates[0]
    return Verdict(answer=chosen, support=table.total(chosen),
                   tie_broken=len(candidates) > 1)


def aggregate(strategy: AggregationStrategy, table: FrequencyTable) -> Verdict:
    """Apply a full-set strategy to the vote table. Empty relevant set -> Abstain.

    SC_* majorities only see their own modality; CP_MAJ sums both; CP_MAX takes
    the better per-modality count; CP_AGR prefers answers produced by both
    modalities and breaks within each class by total votes.
    """
    if strategy is AggregationStrategy.SC_COT:
        return _single_modality_majority(table, Modality.COT)
    if strategy is AggregationStrategy.SC_POT:
        return _single_modality_majority(table, Modality.POT)
    if strategy is AggregationStrategy.CP_MAJ:
        return _pick(table, table.total)
    if strategy is AggregationStrategy.CP_MAX:
        return _pick(table, lambda k: max(table.count(Modality.COT, k),
                                          table.count(Modality.POT, k)))
    if strategy is AggregationStrategy.CP_AGR:
        def agr_score(k: AnswerKey) -> Tuple[int, int]:
            in_both = int(table.count(Modality.COT, k) > 0
                          and table.count(Modality.POT, k) > 0)
            return (in_both, table.total(k))
        return _pick(table, agr_score)
    if strategy is AggregationStrategy.COT_SINGLE:
        return _first_sample_verdict(table, Modality.COT)
    if strategy is AggregationStrategy.POT_SINGLE:
        return _first_sample_verdict(table, Modality.POT)
    raise ValueError(f"unknown aggregation strategy: {strategy}")


def _single_modality_majority(table: FrequencyTable, modality: Modality) -> Verdict:
    own = table.counts[modality]
    if not own:
        return Verdict(answer=None)
    best = max(own.values())
    candidates = [k for k, c in own.items() if c == best]
    chosen = tie_break(candidates, table) if len(candidates) > 1 else candidates[0]
    return Verdict(answer=chosen, support=table.total(chosen),
                   tie_broken=len(candidates) > 1)


def _first_sample_verdict(table: FrequencyTable, modality: Modality) -> Verdict:
    first = table.first_answer[modality]
    if first is None:
        return Verdict(answer=None)
    return Verdict(answer=first, support=table.total(first))

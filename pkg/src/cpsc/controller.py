"""Sequential sampling controller: alternates modalities, feeds stop tests
after every sample, and falls back to full-set aggregation at the budget."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .aggregate import AggregationStrategy, Verdict, aggregate
from .answers import AnswerKey, FrequencyTable, Modality, Sample, answers_equal
from .samplers import ProblemSpec, SamplerExhausted, SampleSource
from .stoptests import (
    DATA_INDEPENDENT,
    AgreementParams,
    TrackerState,
    beta_majority_tail,
    esc_window_check,
    posterior_safe,
    tracker_backfill,
)


class StoppingStrategy(str, Enum):
    CP_AA = "cp-aa"    # tracker per unique answer, agreement certifies
    CP_FA = "cp-fa"    # trackers on the first answer of each modality
    CP_FF = "cp-ff"    # single first-vs-first comparison
    CP_DAA = "cp-daa"  # data-driven CP_AA (calibrated posterior)
    CP_DFA = "cp-dfa"  # data-driven CP_FA
    ASC = "asc"        # Beta majority over one modality
    ASC_CP = "asc-cp"  # Beta majority over the alternating stream
    ESC = "esc"        # unanimous non-overlapping window, one modality
    FS_C = "fs-c"      # stop if first two CoT samples agree
    FS_P = "fs-p"      # stop if first two PoT samples agree
    FULL = "full"      # consume the whole budget, aggregate


class StopReason(str, Enum):
    CROSS_MODAL_AGREEMENT = "cross_modal_agreement"
    BETA_MAJORITY = "beta_majority"
    ESC_WINDOW = "esc_window"
    FIRST_SECOND_AGREEMENT = "first_second_agreement"
    BUDGET_EXHAUSTED = "budget_exhausted"


_TRACKER_ALL = {StoppingStrategy.CP_AA, StoppingStrategy.CP_DAA}
_TRACKER_FIRST = {StoppingStrategy.CP_FA, StoppingStrategy.CP_DFA}
_DATA_DRIVEN = {StoppingStrategy.CP_DAA, StoppingStrategy.CP_DFA}
_BETA_STRATEGIES = {
    StoppingStrategy.CP_AA, StoppingStrategy.CP_FA, StoppingStrategy.CP_FF,
    StoppingStrategy.CP_DAA, StoppingStrategy.CP_DFA,
    StoppingStrategy.ASC, StoppingStrategy.ASC_CP,
}
_ALTERNATING = {
    StoppingStrategy.CP_AA, StoppingStrategy.CP_FA, StoppingStrategy.CP_FF,
    StoppingStrategy.CP_DAA, StoppingStrategy.CP_DFA,
    StoppingStrategy.ASC_CP, StoppingStrategy.FULL,
}
_SINGLE_MODALITY = {
    StoppingStrategy.ASC: Modality.COT,
    StoppingStrategy.ESC: Modality.COT,
    StoppingStrategy.FS_C: Modality.COT,
    StoppingStrategy.FS_P: Modality.POT,
}


def default_fallback(strategy: StoppingStrategy) -> AggregationStrategy:
    """Aggregation applied when the budget runs out without a stop."""
    single = _SINGLE_MODALITY.get(strategy)
    if single is Modality.COT:
        return AggregationStrategy.SC_COT
    if single is Modality.POT:
        return AggregationStrategy.SC_POT
    return AggregationStrategy.CP_MAJ


@dataclass(frozen=True)
class RunConfig:
    strategy: StoppingStrategy
    params: Optional[AgreementParams] = None
    rho: float = 0.975
    budget: int = 40
    esc_window_size: int = 5
    modality_order: Tuple[Modality, Modality] = (Modality.COT, Modality.POT)
    high_temperature: float = 0.7
    beta_rho: Optional[float] = None  # defaults to rho
    fallback: Optional[AggregationStrategy] = None
    single_modality: Optional[Modality] = None  # force a one-modality schedule
    label: Optional[str] = None  # record strategy name override

    def __post_init__(self) -> None:
        if not 0.5 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0.5, 1), got {self.rho}")
        if self.beta_rho is not None and not 0.5 < self.beta_rho < 1.0:
            raise ValueError(f"beta_rho must be in (0.5, 1), got {self.beta_rho}")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.alternating:
            if self.budget < 2 or self.budget % 2:
                raise ValueError(
                    f"alternating strategies need an even budget >= 2, got {self.budget}")
        if self.strategy in _DATA_DRIVEN and self.params is None:
            raise ValueError(f"{self.strategy.value} requires calibrated params")
        if set(self.modality_order) != {Modality.COT, Modality.POT}:
            raise ValueError("modality_order must contain both modalities")

    @property
    def alternating(self) -> bool:
        return self.strategy in _ALTERNATING and self.single_modality is None

    @property
    def effective_params(self) -> AgreementParams:
        # only the data-driven strategies consume calibration; CP_AA/FA/FF
        # always run on the fixed a2=1 surrogate, whatever params were given
        if self.strategy in _DATA_DRIVEN:
            assert self.params is not None
            return self.params
        return DATA_INDEPENDENT

    @property
    def own_modality(self) -> Optional[Modality]:
        if self.alternating:
            return None
        return self.single_modality or _SINGLE_MODALITY[self.strategy]

    def modality_at(self, step: int) -> Modality:
        if self.alternating:
            return self.modality_order[step % 2]
        own = self.own_modality
        assert own is not None
        return own


@dataclass(frozen=True)
class RunRecord:
    problem_id: str
    strategy: str
    verdict: Verdict
    samples_used: int
    stop_reason: StopReason
    stopped_at_two: bool
    telemetry: dict

    def to_json(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "strategy": self.strategy,
            "answer": self.verdict.answer.to_json() if self.verdict.answer else None,
            "support": self.verdict.support,
            "tie_broken": self.verdict.tie_broken,
            "samples_used": self.samples_used,
            "stop_reason": self.stop_reason.value,
            "stopped_at_two": self.stopped_at_two,
            "telemetry": self.telemetry,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        answer = obj.get("answer")
        verdict = Verdict(
            answer=AnswerKey.from_json(answer) if answer else None,
            support=obj.get("support", 0),
            tie_broken=obj.get("tie_broken", False),
        )
        return cls(
            problem_id=obj["problem_id"],
            strategy=obj["strategy"],
            verdict=verdict,
            samples_used=obj["samples_used"],
            stop_reason=StopReason(obj["stop_reason"]),
            stopped_at_two=obj["stopped_at_two"],
            telemetry=obj.get("telemetry", {}),
        )


def dumps_record(record: RunRecord) -> str:
    return json.dumps(record.to_json(), sort_keys=True)


@dataclass
class _Stop:
    reason: StopReason
    answer: AnswerKey
    score: float  # posterior or tail that fired


def run_problem(config: RunConfig, source: SampleSource,
                problem: ProblemSpec) -> RunRecord:
    """Sample until a stop test fires or the budget is gone.

    Stop tests are evaluated after every sample. Precedence on simultaneous
    fires: cross-modal trackers (highest posterior, then creation order),
    then the Beta majority test, then the ESC window.
    """
    strategy = config.strategy
    label = config.label or strategy.value
    params = config.effective_params
    beta_threshold = config.beta_rho if config.beta_rho is not None else config.rho

    history: List[Sample] = []
    table = FrequencyTable()
    trackers: List[TrackerState] = []
    seen_keys: set = set()
    esc_buffer: List[AnswerKey] = []
    counters: Dict[Modality, int] = {Modality.COT: 0, Modality.POT: 0}
    ff_checked = False
    ff_fired: Optional[_Stop] = None
    exhausted = False
    stop: Optional[_Stop] = None
    beta_tail_last: Optional[float] = None

    for step in range(config.budget):
        modality = config.modality_at(step)
        index = counters[modality]
        temperature = 0.0 if index == 0 else config.high_temperature
        try:
            sample = source.next_sample(problem, modality, temperature)
        except SamplerExhausted:
            exhausted = True
            break
        counters[modality] += 1
        history.append(sample)

        if sample.valid:
            table.add(sample)
            trackers = [tr.observe(sample) for tr in trackers]
            if strategy in _TRACKER_ALL and sample.answer not in seen_keys:
                trackers.append(tracker_backfill(
                    sample.answer, modality, history, created_at=len(trackers)))
            elif strategy in _TRACKER_FIRST and index == 0:
                trackers.append(tracker_backfill(
                    sample.answer, modality, history, created_at=len(trackers)))
            seen_keys.add(sample.answer)
            if strategy is StoppingStrategy.ESC:
                esc_buffer.append(sample.answer)

        # -- cross-modal agreement tests --
        if trackers:
            fired = [(tr.posterior(params), -tr.created_at, tr) for tr in trackers]
            fired = [f for f in fired if f[0] >= config.rho]
            if fired:
                best = max(fired, key=lambda f: (f[0], f[1]))
                stop = _Stop(StopReason.CROSS_MODAL_AGREEMENT, best[2].anchor, best[0])
        if (stop is None and strategy is StoppingStrategy.CP_FF and not ff_checked
                and counters[Modality.COT] >= 1 and counters[Modality.POT] >= 1):
            ff_checked = True
            first_c = table.first_answer[Modality.COT]
            first_p = table.first_answer[Modality.POT]
            agreed = answers_equal(first_c, first_p)
            post = posterior_safe(params, int(agreed), 1)
            if agreed and post >= config.rho:
                stop = _Stop(StopReason.CROSS_MODAL_AGREEMENT, first_c, post)
                ff_fired = stop

        # -- Beta majority test over all samples so far --
        if stop is None and strategy in _BETA_STRATEGIES:
            v1, v2 = table.top_two_counts()
            if v1 > 0:
                beta_tail_last = beta_majority_tail(v1, v2)
                if beta_tail_last >= beta_threshold:
                    leader = max(table.keys(), key=table.total)
                    stop = _Stop(StopReason.BETA_MAJORITY, leader, beta_tail_last)

        # -- ESC unanimous window (non-overlapping) --
        if strategy is StoppingStrategy.ESC and len(esc_buffer) == config.esc_window_size:
            if stop is None and esc_window_check(esc_buffer, config.esc_window_size):
                stop = _Stop(StopReason.ESC_WINDOW, esc_buffer[0], 1.0)
            else:
                esc_buffer.clear()

        # -- first-second agreement (FS ablations) --
        if (stop is None and strategy in (StoppingStrategy.FS_C, StoppingStrategy.FS_P)
                and counters[modality] == 2):
            own = [s for s in history if s.modality is modality]
            if (own[0].valid and own[1].valid
                    and answers_equal(own[0].answer, own[1].answer)):
                stop = _Stop(StopReason.FIRST_SECOND_AGREEMENT, own[0].answer, 1.0)

        if stop is not None:
            break

    samples_used = len(history)
    telemetry: dict = {
        "budget": config.budget,
        "exhausted": exhausted,
        "beta_tail": beta_tail_last,
        "trackers": [
            {"anchor": tr.anchor.to_json(), "modality": tr.anchor_modality.value,
             "t": tr.t, "k": tr.k, "posterior": tr.posterior(params)}
            for tr in trackers
        ],
    }
    if ff_fired is not None or (config.strategy is StoppingStrategy.CP_FF and ff_checked):
        telemetry["ff_checked"] = ff_checked

    if stop is not None:
        verdict = Verdict(answer=stop.answer, support=table.total(stop.answer))
        telemetry["stop_score"] = stop.score
        return RunRecord(
            problem_id=problem.id,
            strategy=label,
            verdict=verdict,
            samples_used=samples_used,
            stop_reason=stop.reason,
            stopped_at_two=samples_used == 2,
            telemetry=telemetry,
        )

    fallback = config.fallback or default_fallback(strategy)
    verdict = aggregate(fallback, table)
    telemetry["fallback"] = fallback.value
    return RunRecord(
        problem_id=problem.id,
        strategy=label,
        verdict=verdict,
        samples_used=samples_used,
        stop_reason=StopReason.BUDGET_EXHAUSTED,
        stopped_at_two=False,
        telemetry=telemetry,
    )

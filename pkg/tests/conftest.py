"""Shared builders for the test suite.

Most tests drive the controller through scripted replay streams, so the
helpers here are about making those streams terse to write: `sample()`
builds one canonical Sample, `scripted()` turns per-modality answer lists
into a ReplaySource, `make_world()` builds a small synthetic world.
"""
from typing import Dict, Iterable, List, Optional, Sequence

from cpsc import (
    AnswerKey,
    Modality,
    ProblemSpec,
    ReplaySource,
    Sample,
    SyntheticProblem,
    SyntheticWorld,
    index_trace,
    normalize_answer,
    numeric_key,
    text_key,
)

COT = Modality.COT
POT = Modality.POT

# small text answer pool used all over the controller/aggregation tests
A = text_key("a")
B = text_key("b")
C = text_key("c")
D = text_key("d")

PROBLEM = ProblemSpec(id="p1", question="?", gold=A)


def schedule_temperature(index: int) -> float:
    return 0.0 if index == 0 else 0.7


def sample(
    pid: str,
    modality: Modality,
    index: int,
    answer: Optional[AnswerKey],
    temperature: Optional[float] = None,
) -> Sample:
    """One scripted sample; answer=None means an invalid sample."""
    if temperature is None:
        temperature = schedule_temperature(index)
    if answer is None:
        return Sample(pid, modality, index, temperature, "",
                      answer=None, invalid_reason="scripted-invalid")
    return Sample(pid, modality, index, temperature, answer.render(), answer=answer)


def script_samples(
    cot: Sequence[Optional[AnswerKey]] = (),
    pot: Sequence[Optional[AnswerKey]] = (),
    pid: str = "p1",
) -> List[Sample]:
    out = []
    for modality, seq in ((COT, cot), (POT, pot)):
        for i, ans in enumerate(seq):
            out.append(sample(pid, modality, i, ans))
    return out


def scripted(
    cot: Sequence[Optional[AnswerKey]] = (),
    pot: Sequence[Optional[AnswerKey]] = (),
    pid: str = "p1",
) -> ReplaySource:
    """ReplaySource over per-modality answer scripts (None = invalid)."""
    return ReplaySource(index_trace(script_samples(cot, pot, pid)))


def make_world(
    dists: Dict[str, Dict[str, float]],
    golds: Dict[str, str],
    pot_dists: Optional[Dict[str, Dict[str, float]]] = None,
) -> SyntheticWorld:
    """World where PoT shares CoT's distribution unless overridden."""
    problems = []
    for pid, d_cot in dists.items():
        d_pot = (pot_dists or {}).get(pid, d_cot)
        problems.append(SyntheticProblem(
            spec=ProblemSpec(id=pid, question=f"q-{pid}",
                             gold=normalize_answer(golds[pid])),
            d_cot={normalize_answer(k): v for k, v in d_cot.items()},
            d_pot={normalize_answer(k): v for k, v in d_pot.items()},
        ))
    return SyntheticWorld(problems)


def uniform_world(n_problems: int, gold_mass: float = 0.8,
                  n_wrong: int = 4) -> SyntheticWorld:
    """n problems, each with one gold answer at gold_mass and n_wrong
    distractors splitting the rest evenly; same distribution both modalities."""
    problems = []
    wrong_mass = (1.0 - gold_mass) / n_wrong
    for i in range(n_problems):
        gold = numeric_key(i)
        dist = {gold: gold_mass}
        for w in range(n_wrong):
            dist[text_key(f"wrong-{i}-{w}")] = wrong_mass
        problems.append(SyntheticProblem(
            spec=ProblemSpec(id=f"p{i}", question=f"q{i}", gold=gold),
            d_cot=dict(dist),
            d_pot=dict(dist),
        ))
    return SyntheticWorld(problems)

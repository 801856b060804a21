"""Sample sources: recorded-trace replay, synthetic worlds, and trace I/O.

A source hands the controller one sample at a time per (problem, modality).
Replay and synthetic sources are deterministic so different strategies can
be compared on identical streams.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Protocol, Tuple

from .answers import AnswerKey, Modality, Sample, normalize_answer


class SamplerExhausted(Exception):
    """Raised when a finite source has no further sample for the request."""


class TraceMismatch(Exception):
    """Replay was asked for a sample whose recording disagrees (e.g. temperature)."""


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    question: str
    gold: AnswerKey
    context: str = ""

    @property
    def text(self) -> str:
        if self.context:
            return f"{self.context}\n\n{self.question}"
        return self.question


def load_problems(path: str) -> List[ProblemSpec]:
    """Read a JSONL dataset: {"id", "question", "context"?, "gold"}."""
    problems = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            gold = normalize_answer(str(obj["gold"]))
            if gold is None:
                raise ValueError(f"problem {obj['id']}: gold answer does not normalize")
            problems.append(ProblemSpec(
                id=str(obj["id"]),
                question=obj["question"],
                gold=gold,
                context=obj.get("context", "") or "",
            ))
    return problems


class SampleSource(Protocol):
    def next_sample(self, problem: ProblemSpec, modality: Modality,
                    temperature: float) -> Sample:
        ...


TraceIndex = Dict[Tuple[str, Modality], List[Sample]]


def index_trace(samples: Iterable[Sample]) -> TraceIndex:
    """Group samples by (problem, modality), ordered by sample index."""
    trace: TraceIndex = {}
    for s in samples:
        trace.setdefault((s.problem_id, s.modality), []).append(s)
    for seq in trace.values():
        seq.sort(key=lambda s: s.index)
    return trace


def load_trace(path: str) -> TraceIndex:
    with open(path) as fh:
        samples = [Sample.from_json(json.loads(line)) for line in fh if line.strip()]
    return index_trace(samples)


def record_trace(samples: Iterable[Sample], path: str) -> int:
    """Append-free JSONL dump of samples; returns the number written."""
    n = 0
    with open(path, "w") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), sort_keys=True) + "\n")
            n += 1
    return n


class ReplaySource:
    """Replays a recorded trace with per-(problem, modality) cursors.

    The requested temperature must match the recording; a drifted schedule
    means the comparison is no longer like-for-like.
    """

    def __init__(self, trace: TraceIndex, strict_temperature: bool = True) -> None:
        self._trace = trace
        self._strict = strict_temperature
        self._cursors: Dict[Tuple[str, Modality], int] = {}

    def next_sample(self, problem: ProblemSpec, modality: Modality,
                    temperature: float) -> Sample:
        key = (problem.id, modality)
        seq = self._trace.get(key, [])
        i = self._cursors.get(key, 0)
        if i >= len(seq):
            raise SamplerExhausted(
                f"trace exhausted for {problem.id}/{modality.value} at index {i}")
        sample = seq[i]
        self._cursors[key] = i + 1
        if self._strict and abs(sample.temperature - temperature) > 1e-9:
            raise TraceMismatch(
                f"{problem.id}/{modality.value}[{i}]: recorded temperature "
                f"{sample.temperature} != requested {temperature}")
        return sample


@dataclass(frozen=True)
class SyntheticProblem:
    """A problem with known per-modality categorical answer distributions."""

    spec: ProblemSpec
    d_cot: Dict[AnswerKey, float]
    d_pot: Dict[AnswerKey, float]

    def __post_init__(self) -> None:
        for name, dist in (("d_cot", self.d_cot), ("d_pot", self.d_pot)):
            if not dist:
                raise ValueError(f"{self.spec.id}: {name} is empty")
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"{self.spec.id}: {name} sums to {total!r}, not 1")
            if any(p < 0 for p in dist.values()):
                raise ValueError(f"{self.spec.id}: {name} has negative mass")

    def distribution(self, modality: Modality) -> Dict[AnswerKey, float]:
        return self.d_cot if modality is Modality.COT else self.d_pot

    def mode(self, modality: Modality) -> AnswerKey:
        dist = self.distribution(modality)
        best = max(dist.values())
        for key, p in dist.items():  # insertion order breaks ties
            if p == best:
                return key
        raise AssertionError("unreachable")


class SyntheticWorld:
    def __init__(self, problems: List[SyntheticProblem]) -> None:
        self.problems = list(problems)
        self.by_id = {p.spec.id: p for p in self.problems}
        if len(self.by_id) != len(self.problems):
            raise ValueError("duplicate problem ids in synthetic world")

    def specs(self) -> List[ProblemSpec]:
        return [p.spec for p in self.problems]


def load_world(path: str) -> SyntheticWorld:
    """Read a synthetic world file.

    JSON: {"problems": [{"id", "gold", "question"?, "cot": {answer: prob},
    "pot": {answer: prob}}, ...]}. Answer strings are normalized the same way
    model output is.
    """
    with open(path) as fh:
        obj = json.load(fh)

    def dist(pid: str, raw: Dict[str, float]) -> Dict[AnswerKey, float]:
        out: Dict[AnswerKey, float] = {}
        for text, p in raw.items():
            key = normalize_answer(text)
            if key is None:
                raise ValueError(f"problem {pid}: answer {text!r} does not normalize")
            out[key] = out.get(key, 0.0) + float(p)
        return out

    problems = []
    for entry in obj["problems"]:
        pid = str(entry["id"])
        gold = normalize_answer(str(entry["gold"]))
        if gold is None:
            raise ValueError(f"problem {pid}: gold answer does not normalize")
        spec = ProblemSpec(id=pid, question=entry.get("question", pid), gold=gold)
        problems.append(SyntheticProblem(
            spec=spec,
            d_cot=dist(pid, entry["cot"]),
            d_pot=dist(pid, entry["pot"]),
        ))
    return SyntheticWorld(problems)


def _stream_rng(seed: int, problem_id: str, modality: Modality) -> random.Random:
    # Stable per-stream seeding so draw order does not depend on the
    # strategy's consumption schedule (shared-prefix pairing).
    digest = hashlib.md5(f"{seed}|{problem_id}|{modality.value}".encode()).hexdigest()
    return random.Random(int(digest[:16], 16))


class SyntheticSource:
    """Draws i.i.d. samples from a synthetic world's distributions.

    Index 0 of each modality returns the distribution's mode (the
    temperature-0 analogue) unless temp0_mode=False, in which case index 0
    is drawn like any other sample.
    """

    def __init__(self, world: SyntheticWorld, seed: int = 0,
                 temp0_mode: bool = True) -> None:
        self.world = world
        self.seed = seed
        self.temp0_mode = temp0_mode
        self._rngs: Dict[Tuple[str, Modality], random.Random] = {}
        self._cursors: Dict[Tuple[str, Modality], int] = {}

    def next_sample(self, problem: ProblemSpec, modality: Modality,
                    temperature: float) -> Sample:
        sp = self.world.by_id.get(problem.id)
        if sp is None:
            raise SamplerExhausted(f"unknown problem {problem.id}")
        key = (problem.id, modality)
        index = self._cursors.get(key, 0)
        self._cursors[key] = index + 1
        if index == 0 and self.temp0_mode:
            answer = sp.mode(modality)
        else:
            rng = self._rngs.get(key)
            if rng is None:
                rng = self._rngs[key] = _stream_rng(self.seed, problem.id, modality)
            dist = sp.distribution(modality)
            keys = list(dist)
            answer = rng.choices(keys, weights=[dist[k] for k in keys])[0]
        return Sample(
            problem_id=problem.id,
            modality=modality,
            index=index,
            temperature=temperature,
            raw_text=answer.render(),
            answer=answer,
        )


class RecordingSource:
    """Wraps a source and keeps every sample it hands out (for trace capture)."""

    def __init__(self, inner: SampleSource) -> None:
        self.inner = inner
        self.samples: List[Sample] = []

    def next_sample(self, problem: ProblemSpec, modality: Modality,
                    temperature: float) -> Sample:
        sample = self.inner.next_sample(problem, modality, temperature)
        self.samples.append(sample)
        return sample


def generate_trace(world: SyntheticWorld, n_per_modality: int, seed: int = 0,
                   temp0_mode: bool = True) -> List[Sample]:
    """Materialize a full-sampling trace: per problem, samples arrive in the
    alternating CoT-first order used by full sampling."""
    source = SyntheticSource(world, seed=seed, temp0_mode=temp0_mode)
    out: List[Sample] = []
    for sp in world.problems:
        for i in range(n_per_modality):
            for modality in (Modality.COT, Modality.POT):
                temperature = 0.0 if i == 0 else 0.7
                out.append(source.next_sample(sp.spec, modality, temperature))
    return out

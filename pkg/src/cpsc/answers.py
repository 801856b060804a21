"""Answer extraction, normalization, and equivalence for CoT/PoT samples.

Everything downstream (vote counting, agreement tests, scoring) operates on
the canonical ``AnswerKey`` values produced here, never on raw strings.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Context, Decimal, InvalidOperation, ROUND_HALF_EVEN
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

# Numeric answers are bucketed to 6 significant digits (round half to even)
# so near-equal renderings ("20", "20.0", "65.46000000000001") share one key
# and equality stays transitive.
SIGNIFICANT_DIGITS = 6
_CTX = Context(prec=SIGNIFICANT_DIGITS, rounding=ROUND_HALF_EVEN)

_FRACTION_RE = re.compile(r"[+-]?\d+\s*/\s*\d+")
_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d{3}(?:\D|$))")
_FRAC_TEX_RE = re.compile(r"\\[dt]?frac\{([^{}]+)\}\{([^{}]+)\}")
_TEXT_TEX_RE = re.compile(r"\\(?:textbf|text|mbox|mathrm)\{([^{}]*)\}")
_SIGN_CURRENCY_RE = re.compile(r"([+-]?)\s*[$€£¢₹]\s*")
_WS_RE = re.compile(r"\s+")

_CURRENCY_GLYPHS = "$€£¢₹"
_TRAILING_UNITS = {
    "dollars", "dollar", "cents", "cent", "usd",
    "pounds", "pound", "euros", "euro",
    "percent", "points", "point",
    "billion", "billions", "million", "millions", "thousand", "thousands",
}


class Modality(str, Enum):
    COT = "cot"
    POT = "pot"

    @property
    def opposite(self) -> "Modality":
        return Modality.POT if self is Modality.COT else Modality.COT


@dataclass(frozen=True)
class AnswerKey:
    """Canonical answer: a numeric bucket (Decimal) or normalized text."""

    kind: str  # "numeric" | "text"
    value: Union[Decimal, str]

    def render(self) -> str:
        if self.kind == "numeric":
            return _render_decimal(self.value)
        return str(self.value)

    def to_json(self) -> Dict[str, str]:
        return {"kind": self.kind, "value": self.render()}

    @classmethod
    def from_json(cls, obj: Dict[str, str]) -> "AnswerKey":
        if obj["kind"] == "numeric":
            return numeric_key(obj["value"])
        return text_key(obj["value"])


@dataclass(frozen=True)
class Invalid:
    """Marker for samples that produced no usable answer."""

    reason: str


def numeric_key(value: Union[int, float, str, Decimal, Fraction]) -> AnswerKey:
    """Bucket a numeric value into its canonical 6-significant-digit key."""
    if isinstance(value, Fraction):
        d = _CTX.divide(Decimal(value.numerator), Decimal(value.denominator))
    elif isinstance(value, float):
        d = _CTX.plus(Decimal(repr(value)))
    elif isinstance(value, (int, Decimal)):
        d = _CTX.plus(Decimal(value))
    else:
        d = _CTX.plus(Decimal(str(value).strip()))
    if not d.is_finite():
        raise ValueError(f"non-finite numeric answer: {value!r}")
    if d == 0:
        d = Decimal(0)  # collapse signed zero
    return AnswerKey("numeric", d)


def text_key(value: str) -> AnswerKey:
    t = _WS_RE.sub(" ", value.casefold()).strip()
    if not t:
        raise ValueError("empty text answer")
    return AnswerKey("text", t)


def _render_decimal(d: Decimal) -> str:
    d = d.normalize()
    if d == 0:
        return "0"
    if -27 <= d.adjusted() <= 27:
        return format(d, "f")
    return str(d)


def _braces_balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        if ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def _strip_wrappers(s: str) -> str:
    s = s.strip()
    changed = True
    while changed and s:
        changed = False
        for open_, close in (("$", "$"), (r"\(", r"\)"), (r"\[", r"\]")):
            if len(s) > len(open_) + len(close) and s.startswith(open_) and s.endswith(close):
                s = s[len(open_):-len(close)].strip()
                changed = True
        for cmd in (r"\boxed{", r"\textbf{", r"\text{", r"\mbox{", r"\mathrm{"):
            if s.startswith(cmd) and s.endswith("}") and _braces_balanced(s[len(cmd):-1]):
                s = s[len(cmd):-1].strip()
                changed = True
    s = _TEXT_TEX_RE.sub(r"\1", s)
    s = _FRAC_TEX_RE.sub(r"\1/\2", s)
    s = s.replace(r"\!", "").replace(r"\,", " ").replace(r"\;", " ")
    s = s.replace(r"\$", "$").replace(r"\%", "%")
    return s.strip()


def _strip_units(s: str) -> str:
    s = s.strip()
    m = _SIGN_CURRENCY_RE.match(s)
    if m:
        s = m.group(1) + s[m.end():]
    while s and (s[-1] in _CURRENCY_GLYPHS or s[-1] == "%"):
        s = s[:-1].rstrip()
    parts = s.split()
    while len(parts) > 1 and parts[-1].casefold() in _TRAILING_UNITS:
        parts.pop()
    return " ".join(parts)


def normalize_answer(raw: Optional[str]) -> Optional[AnswerKey]:
    """Map a raw answer string to its canonical key.

    Strips currency symbols, percent signs, digit-grouping commas, trailing
    unit words, and common LaTeX wrappers. The remainder becomes a numeric
    bucket when it parses as a number or an integer fraction (evaluated
    exactly), otherwise case-folded whitespace-collapsed text. Returns None
    when nothing usable remains; callers treat that as Invalid.
    """
    if raw is None:
        return None
    s = _strip_wrappers(raw)
    s = _strip_units(s)
    s = _WS_RE.sub(" ", s).strip()
    candidate = _THOUSANDS_RE.sub("", s)
    if _FRACTION_RE.fullmatch(candidate):
        num, den = candidate.split("/")
        if int(den) != 0:
            return numeric_key(Fraction(int(num), int(den)))
    try:
        return numeric_key(candidate)
    except (InvalidOperation, ValueError, ArithmeticError):
        pass
    target = s if s else raw
    t = _WS_RE.sub(" ", target.casefold()).strip()
    if not t:
        return None
    return AnswerKey("text", t)


_BOXED_CMD = "\\boxed"


def extract_boxed(text: str) -> Optional[str]:
    """Contents of the last well-formed ``\\boxed{...}`` in text, else None."""
    starts = [m.start() for m in re.finditer(re.escape(_BOXED_CMD), text)]
    for start in reversed(starts):
        i = start + len(_BOXED_CMD)
        while i < len(text) and text[i].isspace():
            i += 1
        if i >= len(text) or text[i] != "{":
            continue
        depth, j = 1, i + 1
        while j < len(text) and depth:
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
            j += 1
        if depth == 0:
            return text[i + 1:j - 1]
    return None


def extract_cot_answer(raw_text: str) -> Union[AnswerKey, Invalid]:
    """Pull the final boxed answer out of a chain-of-thought completion."""
    content = extract_boxed(raw_text or "")
    if content is None:
        return Invalid("no boxed answer")
    key = normalize_answer(content)
    if key is None:
        return Invalid("empty answer")
    return key


@dataclass(frozen=True)
class ExecutionResult:
    """One program execution as reported by the executor wire protocol."""

    id: int
    status: str  # "ok" | "error" | "timeout"
    ans_repr: Optional[str] = None
    stdout: str = ""
    error_message: Optional[str] = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "ans_repr": self.ans_repr,
            "stdout": self.stdout,
            "error_message": self.error_message,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExecutionResult":
        return cls(
            id=obj["id"],
            status=obj["status"],
            ans_repr=obj.get("ans_repr"),
            stdout=obj.get("stdout", "") or "",
            error_message=obj.get("error_message"),
        )


def extract_pot_answer(result: ExecutionResult) -> Union[AnswerKey, Invalid]:
    """Map an ExecutionResult to a canonical answer (normalization is host-side)."""
    if result.status == "timeout":
        return Invalid("timeout")
    if result.status != "ok":
        if result.error_message == "ans_undefined":
            return Invalid("ans_undefined")
        return Invalid("execution_error")
    key = normalize_answer(result.ans_repr or "")
    if key is None:
        return Invalid("empty answer")
    return key


def answers_equal(a: Optional[AnswerKey], b: Optional[AnswerKey]) -> bool:
    """Canonical equality. Mismatched kinds never match; None never matches."""
    if a is None or b is None:
        return False
    return a == b


@dataclass(frozen=True)
class Sample:
    """One model sample, already reduced to its canonical answer (or Invalid)."""

    problem_id: str
    modality: Modality
    index: int
    temperature: float
    raw_text: str
    answer: Optional[AnswerKey] = None
    invalid_reason: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.answer is not None

    def to_json(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "modality": self.modality.value,
            "index": self.index,
            "temperature": self.temperature,
            "raw_text": self.raw_text,
            "answer": self.answer.to_json() if self.answer is not None else None,
            "invalid_reason": self.invalid_reason,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Sample":
        answer = obj.get("answer")
        return cls(
            problem_id=obj["problem_id"],
            modality=Modality(obj["modality"]),
            index=obj["index"],
            temperature=obj["temperature"],
            raw_text=obj.get("raw_text", ""),
            answer=AnswerKey.from_json(answer) if answer is not None else None,
            invalid_reason=obj.get("invalid_reason"),
        )


def make_sample(
    problem_id: str,
    modality: Modality,
    index: int,
    temperature: float,
    raw_text: str,
    extracted: Union[AnswerKey, Invalid],
) -> Sample:
    if isinstance(extracted, Invalid):
        return Sample(problem_id, modality, index, temperature, raw_text,
                      answer=None, invalid_reason=extracted.reason)
    return Sample(problem_id, modality, index, temperature, raw_text, answer=extracted)


class FrequencyTable:
    """Per-modality vote counts over canonical answers, with arrival order."""

    def __init__(self) -> None:
        self.counts: Dict[Modality, Dict[AnswerKey, int]] = {
            Modality.COT: {},
            Modality.POT: {},
        }
        self.first_answer: Dict[Modality, Optional[AnswerKey]] = {
            Modality.COT: None,
            Modality.POT: None,
        }
        self._first_seen: Dict[AnswerKey, int] = {}
        self._valid_steps = 0

    def add(self, sample: Sample) -> None:
        """Count a valid sample; invalid samples are ignored entirely."""
        if sample.answer is None:
            return
        key = sample.answer
        per_mod = self.counts[sample.modality]
        per_mod[key] = per_mod.get(key, 0) + 1
        if key not in self._first_seen:
            self._first_seen[key] = self._valid_steps
        if sample.index == 0:
            self.first_answer[sample.modality] = key
        self._valid_steps += 1

    def count(self, modality: Modality, key: AnswerKey) -> int:
        return self.counts[modality].get(key, 0)

    def total(self, key: AnswerKey) -> int:
        return self.count(Modality.COT, key) + self.count(Modality.POT, key)

    def keys(self) -> List[AnswerKey]:
        """All keys in first-seen order."""
        return sorted(self._first_seen, key=self._first_seen.__getitem__)

    def first_seen(self, key: AnswerKey) -> int:
        return self._first_seen[key]

    def valid_count(self, modality: Optional[Modality] = None) -> int:
        if modality is None:
            return self._valid_steps
        return sum(self.counts[modality].values())

    def top_two_counts(self) -> Tuple[int, int]:
        """Combined vote counts of the two most voted answers (v2=0 if <2 keys)."""
        totals = sorted((self.total(k) for k in self._first_seen), reverse=True)
        v1 = totals[0] if totals else 0
        v2 = totals[1] if len(totals) > 1 else 0
        return v1, v2

    @classmethod
    def from_samples(cls, samples: List[Sample]) -> "FrequencyTable":
        table = cls()
        for s in samples:
            table.add(s)
        return table

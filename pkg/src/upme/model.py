"""Canonical domain types shared by every other module.

Owns identifier discipline and the canonical model ordering: every score or
weight vector in the package is aligned to the lexicographic order of model
names, so vectors stay comparable across runs and resumes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Literal

from .errors import DuplicateModelError, InvalidInputError

RECORD_SCHEMA_VERSION = 1

Side = Literal["a", "b"]


class Verdict(str, Enum):
    """Outcome of one pairwise judge call."""

    WIN_A = "win_a"
    WIN_B = "win_b"
    TIE = "tie"

    def flipped(self) -> "Verdict":
        """The same verdict with the A/B labels swapped."""
        if self is Verdict.WIN_A:
            return Verdict.WIN_B
        if self is Verdict.WIN_B:
            return Verdict.WIN_A
        return Verdict.TIE


@dataclass(frozen=True, order=True)
class ModelId:
    """A pool member: unique short name plus its position in canonical order."""

    name: str
    pool_index: int = -1


@dataclass(frozen=True)
class ImageRef:
    """Content-addressed handle on one image; bytes are resolved by backends."""

    image_id: str
    uri: str
    content_hash: str


@dataclass(frozen=True)
class GeneratedQuestion:
    image_id: str
    reviewer: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise InvalidInputError("question text must be nonempty")


@dataclass(frozen=True)
class CandidateAnswer:
    image_id: str
    question_text: str
    candidate: str
    text: str
    token_count: int
    char_length: int

    def __post_init__(self):
        if not self.text:
            raise InvalidInputError("answer text must be nonempty")
        if self.token_count < 1:
            raise InvalidInputError("token_count must be >= 1 for nonempty text")
        if self.char_length != len(self.text):
            raise InvalidInputError("char_length must equal len(text)")


@dataclass(frozen=True)
class RecordFlags:
    """Failure annotations on one judgment record.

    ``failed`` marks transport failures: the record is a placeholder and is
    excluded from score aggregation, baselines, and bias statistics.
    ``parse_failure`` marks judge outputs with no verdict marker after one
    retry: the verdict fell back to Tie, the record stays in score
    aggregation but is excluded from bias statistics.
    """

    failed: bool = False
    parse_failure: bool = False
    error: str = ""


@dataclass(frozen=True)
class JudgmentRecord:
    """One triad outcome: reviewer judged candidate_a vs candidate_b on an image.

    ``candidate_a``/``candidate_b`` are in canonical order (a < b by name);
    ``presentation_swapped`` records whether the judge prompt showed them in
    the reverse order. Raw judge outputs are retained verbatim. ``ts`` comes
    from the run's clock (logical on deterministic runs, wall otherwise).
    """

    record_id: str
    iteration: int
    image_id: str
    reviewer: str
    candidate_a: str
    candidate_b: str
    question: GeneratedQuestion
    answer_a: CandidateAnswer
    answer_b: CandidateAnswer
    verdict_correct: Verdict
    verdict_visual: Verdict
    clip_a: float
    clip_b: float
    s_vl_a: float
    s_vl_b: float
    raw_judge_correct: str
    raw_judge_visual: str
    presentation_swapped: bool
    ts: float
    flags: RecordFlags = field(default_factory=RecordFlags)

    def __post_init__(self):
        if self.reviewer in (self.candidate_a, self.candidate_b):
            raise InvalidInputError(
                f"reviewer {self.reviewer!r} cannot judge a pair it belongs to"
            )
        if self.candidate_a == self.candidate_b:
            raise InvalidInputError("candidates must differ")
        for v in (self.clip_a, self.clip_b):
            if not -1.0 <= v <= 1.0:
                raise InvalidInputError(f"clip score {v} outside [-1, 1]")
        for v in (self.s_vl_a, self.s_vl_b):
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"s_vl score {v} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": RECORD_SCHEMA_VERSION,
            "record_id": self.record_id,
            "iteration": self.iteration,
            "image_id": self.image_id,
            "reviewer": self.reviewer,
            "candidate_a": self.candidate_a,
            "candidate_b": self.candidate_b,
            "question": {
                "image_id": self.question.image_id,
                "reviewer": self.question.reviewer,
                "text": self.question.text,
            },
            "answer_a": _answer_to_dict(self.answer_a),
            "answer_b": _answer_to_dict(self.answer_b),
            "verdict_correct": self.verdict_correct.value,
            "verdict_visual": self.verdict_visual.value,
            "clip_a": self.clip_a,
            "clip_b": self.clip_b,
            "s_vl_a": self.s_vl_a,
            "s_vl_b": self.s_vl_b,
            "raw_judge_correct": self.raw_judge_correct,
            "raw_judge_visual": self.raw_judge_visual,
            "presentation_swapped": self.presentation_swapped,
            "ts": self.ts,
            "flags": {
                "failed": self.flags.failed,
                "parse_failure": self.flags.parse_failure,
                "error": self.flags.error,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @staticmethod
    def from_dict(data: dict[str, Any]) -> "JudgmentRecord":
        q = data["question"]
        return JudgmentRecord(
            record_id=data["record_id"],
            iteration=data["iteration"],
            image_id=data["image_id"],
            reviewer=data["reviewer"],
            candidate_a=data["candidate_a"],
            candidate_b=data["candidate_b"],
            question=GeneratedQuestion(q["image_id"], q["reviewer"], q["text"]),
            answer_a=_answer_from_dict(data["answer_a"]),
            answer_b=_answer_from_dict(data["answer_b"]),
            verdict_correct=Verdict(data["verdict_correct"]),
            verdict_visual=Verdict(data["verdict_visual"]),
            clip_a=data["clip_a"],
            clip_b=data["clip_b"],
            s_vl_a=data["s_vl_a"],
            s_vl_b=data["s_vl_b"],
            raw_judge_correct=data["raw_judge_correct"],
            raw_judge_visual=data["raw_judge_visual"],
            presentation_swapped=data["presentation_swapped"],
            ts=data["ts"],
            flags=RecordFlags(
                failed=data["flags"]["failed"],
                parse_failure=data["flags"]["parse_failure"],
                error=data["flags"]["error"],
            ),
        )

    @staticmethod
    def from_json(line: str) -> "JudgmentRecord":
        return JudgmentRecord.from_dict(json.loads(line))


def _answer_to_dict(ans: CandidateAnswer) -> dict[str, Any]:
    return {
        "image_id": ans.image_id,
        "question_text": ans.question_text,
        "candidate": ans.candidate,
        "text": ans.text,
        "token_count": ans.token_count,
        "char_length": ans.char_length,
    }


def _answer_from_dict(data: dict[str, Any]) -> CandidateAnswer:
    return CandidateAnswer(
        image_id=data["image_id"],
        question_text=data["question_text"],
        candidate=data["candidate"],
        text=data["text"],
        token_count=data["token_count"],
        char_length=data["char_length"],
    )


def canonical_order(pool: Iterable[str | ModelId]) -> list[ModelId]:
    """Assign pool indices by lexicographic name order.

    Deterministic across runs and resumes regardless of how the pool was
    declared. Raises DuplicateModelError on repeated names.
    """
    names = [m.name if isinstance(m, ModelId) else m for m in pool]
    if not names:
        raise InvalidInputError("pool must be nonempty")
    seen = set()
    for name in names:
        if name in seen:
            raise DuplicateModelError(f"duplicate model name {name!r}")
        seen.add(name)
    return [ModelId(name=n, pool_index=i) for i, n in enumerate(sorted(names))]


def record_id_for(iteration: int) -> str:
    return f"r{iteration:06d}"

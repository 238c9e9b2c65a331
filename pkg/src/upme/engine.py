"""Peer-review orchestration.

Enumerates (image, reviewer, candidate pair) triads, drives question
generation, answering, and the two judge calls through the gateway, scores
each judgment, and emits records in deterministic plan order regardless of
completion order.
"""

from __future__ import annotations

import itertools
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .backends import BackendGateway
from .embedding import EmbeddingProvider
from .errors import InvalidInputError, PoolTooSmallError, ThresholdAbortError
from .images import ImageStore
from .model import (
    CandidateAnswer,
    GeneratedQuestion,
    ImageRef,
    JudgmentRecord,
    RecordFlags,
    Verdict,
    record_id_for,
)
from .prompts import JUDGE_CORRECT, JUDGE_VISUAL
from .scoring import CLIP_TIE_EPSILON, ScoreWeights, clip_correlation, score_pair
from .seeding import derive_bernoulli

logger = logging.getLogger(__name__)

PLACEHOLDER_TEXT = "[unavailable: tuple failed]"


@dataclass(frozen=True)
class TriadTuple:
    image_id: str
    reviewer: str
    candidate_a: str
    candidate_b: str

    def __post_init__(self):
        if self.reviewer in (self.candidate_a, self.candidate_b):
            raise InvalidInputError("reviewer cannot be a candidate of its own triad")
        if not self.candidate_a < self.candidate_b:
            raise InvalidInputError("candidates must be in canonical (a < b) order")


@dataclass(frozen=True)
class TriadPlan:
    tuples: tuple[TriadTuple, ...]

    def __len__(self) -> int:
        return len(self.tuples)

    def __post_init__(self):
        if len(set(self.tuples)) != len(self.tuples):
            raise InvalidInputError("triad plan contains duplicate tuples")


def enumerate_triads(pool: Sequence[str], image_ids: Sequence[str]) -> TriadPlan:
    """Full enumeration: every image x candidate pair x eligible reviewer.

    Deterministic (image, pair, reviewer) order; n * C(m,2) * (m-2) tuples.
    """
    names = sorted(pool)
    if len(names) != len(set(names)):
        raise InvalidInputError("pool names must be unique")
    if len(names) < 3:
        raise PoolTooSmallError(
            f"need at least 3 models for peer review, got {len(names)}"
        )
    if not image_ids:
        raise InvalidInputError("need at least one image")
    tuples = [
        TriadTuple(image_id=img, reviewer=r, candidate_a=a, candidate_b=b)
        for img in image_ids
        for a, b in itertools.combinations(names, 2)
        for r in names
        if r != a and r != b
    ]
    return TriadPlan(tuples=tuple(tuples))


def sample_triads(plan: TriadPlan, fraction: float, seed: int) -> TriadPlan:
    """Random subsample for large pools; keeps the deterministic plan order."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError("sample fraction must be in (0, 1]")
    if fraction == 1.0:
        return plan
    k = max(1, round(fraction * len(plan)))
    rng = random.Random(seed)
    picked = sorted(rng.sample(range(len(plan)), k))
    return TriadPlan(tuples=tuple(plan.tuples[i] for i in picked))


@dataclass
class RunContext:
    gateway: BackendGateway
    provider: EmbeddingProvider
    images: dict[str, ImageRef]
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    clip_epsilon: float = CLIP_TIE_EPSILON
    global_seed: int = 0
    clock: Callable[[int], float] = lambda iteration: float(iteration)
    failure_threshold: float = 0.2
    max_workers: int = 4
    image_store: ImageStore | None = None

    def __post_init__(self):
        if self.image_store is None:
            self.image_store = self.gateway.images


def run_review(
    plan: TriadPlan,
    ctx: RunContext,
    sink: Callable[[JudgmentRecord], None] | None = None,
    done: dict[int, JudgmentRecord] | None = None,
) -> list[JudgmentRecord]:
    """Execute the plan and return one record per tuple, in plan order.

    Tuples run concurrently under the gateway's per-backend cap; records are
    buffered and handed to ``sink`` strictly in plan order, so the transcript
    file is always a clean prefix of the full run. ``done`` carries records
    from an interrupted run; their tuples are skipped and their outputs are
    preloaded into the caches, which keeps resumed runs identical to
    uninterrupted ones.

    Individual tuple failures are recorded with the failed flag; the run
    aborts once the failed fraction exceeds ``ctx.failure_threshold``.
    """
    done = done or {}
    if done:
        ctx.gateway.preload_from_records(list(done.values()))
    records: list[JudgmentRecord] = []
    failures = sum(1 for r in done.values() if r.flags.failed)
    allowed_failures = ctx.failure_threshold * len(plan)

    def execute(iteration: int, triad: TriadTuple) -> JudgmentRecord:
        try:
            return _run_triad(iteration, triad, ctx)
        except Exception as exc:
            logger.warning("triad %d (%s) failed: %s", iteration, triad, exc)
            return _failed_record(iteration, triad, ctx, exc)

    with ThreadPoolExecutor(max_workers=ctx.max_workers) as pool:
        futures = {
            i: pool.submit(execute, i, triad)
            for i, triad in enumerate(plan.tuples)
            if i not in done
        }
        for i in range(len(plan.tuples)):
            record = done[i] if i in done else futures[i].result()
            if i not in done:
                if record.flags.failed:
                    failures += 1
                if sink is not None:
                    sink(record)
            records.append(record)
            if failures > allowed_failures:
                for fut in futures.values():
                    fut.cancel()
                raise ThresholdAbortError(
                    f"{failures}/{len(plan)} tuples failed, over the "
                    f"{ctx.failure_threshold:.0%} threshold"
                )
    return records


def _run_triad(iteration: int, triad: TriadTuple, ctx: RunContext) -> JudgmentRecord:
    image = ctx.images[triad.image_id]
    question = ctx.gateway.generate_question(triad.reviewer, image)
    answer_a = ctx.gateway.answer_question(triad.candidate_a, image, question)
    answer_b = ctx.gateway.answer_question(triad.candidate_b, image, question)

    swapped = derive_bernoulli(
        0.5,
        ctx.global_seed, "presentation", triad.image_id, triad.reviewer,
        triad.candidate_a, triad.candidate_b,
    )
    first, second = (answer_b, answer_a) if swapped else (answer_a, answer_b)

    v_correct, raw_correct, pf_correct = ctx.gateway.judge_pair(
        triad.reviewer, JUDGE_CORRECT, image, question, first, second
    )
    v_visual, raw_visual, pf_visual = ctx.gateway.judge_pair(
        triad.reviewer, JUDGE_VISUAL, image, question, first, second
    )
    if swapped:
        v_correct = v_correct.flipped()
        v_visual = v_visual.flipped()

    image_bytes = ctx.image_store.load(image)
    clip_a = clip_correlation(image, answer_a, ctx.provider, image_bytes)
    clip_b = clip_correlation(image, answer_b, ctx.provider, image_bytes)
    _, _, s_vl_a, s_vl_b = score_pair(
        v_correct, v_visual, clip_a, clip_b, ctx.weights, ctx.clip_epsilon
    )

    return JudgmentRecord(
        record_id=record_id_for(iteration),
        iteration=iteration,
        image_id=triad.image_id,
        reviewer=triad.reviewer,
        candidate_a=triad.candidate_a,
        candidate_b=triad.candidate_b,
        question=question,
        answer_a=answer_a,
        answer_b=answer_b,
        verdict_correct=v_correct,
        verdict_visual=v_visual,
        clip_a=clip_a,
        clip_b=clip_b,
        s_vl_a=s_vl_a,
        s_vl_b=s_vl_b,
        raw_judge_correct=raw_correct,
        raw_judge_visual=raw_visual,
        presentation_swapped=swapped,
        ts=ctx.clock(iteration),
        flags=RecordFlags(parse_failure=pf_correct or pf_visual),
    )


def _failed_record(
    iteration: int, triad: TriadTuple, ctx: RunContext, exc: Exception
) -> JudgmentRecord:
    question = GeneratedQuestion(
        image_id=triad.image_id, reviewer=triad.reviewer, text=PLACEHOLDER_TEXT
    )

    def placeholder(candidate: str) -> CandidateAnswer:
        return CandidateAnswer(
            image_id=triad.image_id,
            question_text=PLACEHOLDER_TEXT,
            candidate=candidate,
            text=PLACEHOLDER_TEXT,
            token_count=1,
            char_length=len(PLACEHOLDER_TEXT),
        )

    return JudgmentRecord(
        record_id=record_id_for(iteration),
        iteration=iteration,
        image_id=triad.image_id,
        reviewer=triad.reviewer,
        candidate_a=triad.candidate_a,
        candidate_b=triad.candidate_b,
        question=question,
        answer_a=placeholder(triad.candidate_a),
        answer_b=placeholder(triad.candidate_b),
        verdict_correct=Verdict.TIE,
        verdict_visual=Verdict.TIE,
        clip_a=0.0,
        clip_b=0.0,
        s_vl_a=0.5,
        s_vl_b=0.5,
        raw_judge_correct="",
        raw_judge_visual="",
        presentation_swapped=False,
        ts=ctx.clock(iteration),
        flags=RecordFlags(failed=True, error=f"{type(exc).__name__}: {exc}"),
    )


def answers_for_verbosity(
    records: Sequence[JudgmentRecord],
) -> list[tuple[int, int, Verdict]]:
    """(char_length_a, char_length_b, correctness verdict) per usable record."""
    return [
        (r.answer_a.char_length, r.answer_b.char_length, r.verdict_correct)
        for r in records
        if not (r.flags.failed or r.flags.parse_failure)
    ]

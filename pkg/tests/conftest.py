from __future__ import annotations

import pytest

from upme.model import (
    CandidateAnswer,
    GeneratedQuestion,
    JudgmentRecord,
    RecordFlags,
    Verdict,
    record_id_for,
)
from upme.scoring import ScoreWeights, score_pair


def make_record(
    iteration: int,
    image_id: str,
    reviewer: str,
    candidate_a: str,
    candidate_b: str,
    verdict_correct: Verdict,
    verdict_visual: Verdict | None = None,
    clip_a: float = 0.30,
    clip_b: float = 0.10,
    weights: ScoreWeights | None = None,
    answer_len_a: int = 40,
    answer_len_b: int = 40,
    flags: RecordFlags | None = None,
) -> JudgmentRecord:
    """Hand-built judgment record with consistent derived scores."""
    weights = weights or ScoreWeights()
    verdict_visual = verdict_visual or verdict_correct
    question = GeneratedQuestion(image_id, reviewer, f"what is in {image_id}?")

    def answer(candidate: str, length: int) -> CandidateAnswer:
        text = (f"answer from {candidate} " * (length // 20 + 1))[:length].rstrip()
        return CandidateAnswer(
            image_id=image_id,
            question_text=question.text,
            candidate=candidate,
            text=text,
            token_count=max(1, len(text.split())),
            char_length=len(text),
        )

    _, _, s_vl_a, s_vl_b = score_pair(
        verdict_correct, verdict_visual, clip_a, clip_b, weights
    )
    return JudgmentRecord(
        record_id=record_id_for(iteration),
        iteration=iteration,
        image_id=image_id,
        reviewer=reviewer,
        candidate_a=candidate_a,
        candidate_b=candidate_b,
        question=question,
        answer_a=answer(candidate_a, answer_len_a),
        answer_b=answer(candidate_b, answer_len_b),
        verdict_correct=verdict_correct,
        verdict_visual=verdict_visual,
        clip_a=clip_a,
        clip_b=clip_b,
        s_vl_a=s_vl_a,
        s_vl_b=s_vl_b,
        raw_judge_correct=f"deliberation... [[{'A' if verdict_correct is Verdict.WIN_A else 'B' if verdict_correct is Verdict.WIN_B else 'C'}]]",
        raw_judge_visual="deliberation... [[C]]",
        presentation_swapped=False,
        ts=float(iteration),
        flags=flags or RecordFlags(),
    )


@pytest.fixture(scope="session")
def small_synthetic_run():
    """6 synthetic models x 3 images = 180 records; shared across tests."""
    from upme.simulate import run_synthetic_review

    return run_synthetic_review(n_images=3, global_seed=11)

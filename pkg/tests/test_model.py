from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upme.errors import DuplicateModelError, InvalidInputError
from upme.model import (
    CandidateAnswer,
    GeneratedQuestion,
    JudgmentRecord,
    RecordFlags,
    Verdict,
    canonical_order,
)
from upme.scoring import ScoreWeights, recombine_residual, score_pair

from conftest import make_record


def test_canonical_order_lexicographic():
    ordered = canonical_order({"b", "a", "c"})
    assert [m.name for m in ordered] == ["a", "b", "c"]
    assert [m.pool_index for m in ordered] == [0, 1, 2]


def test_canonical_order_singleton():
    assert [m.name for m in canonical_order(["x"])] == ["x"]


def test_canonical_order_duplicate_name():
    with pytest.raises(DuplicateModelError):
        canonical_order(["a", "b", "a"])


def test_canonical_order_empty_pool():
    with pytest.raises(InvalidInputError):
        canonical_order([])


def test_question_requires_text():
    with pytest.raises(InvalidInputError):
        GeneratedQuestion("img", "rev", "")


def test_answer_invariants():
    with pytest.raises(InvalidInputError):
        CandidateAnswer("img", "q", "m", "", token_count=1, char_length=0)
    with pytest.raises(InvalidInputError):
        CandidateAnswer("img", "q", "m", "hi", token_count=0, char_length=2)
    with pytest.raises(InvalidInputError):
        CandidateAnswer("img", "q", "m", "hi", token_count=1, char_length=5)


def test_record_rejects_self_review():
    with pytest.raises(InvalidInputError):
        make_record(0, "img", "a", "a", "b", Verdict.TIE)


def test_record_round_trip_identity():
    rec = make_record(3, "img-000", "c", "a", "b", Verdict.WIN_A, Verdict.TIE)
    assert JudgmentRecord.from_json(rec.to_json()) == rec


_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
)


@given(
    image=_text,
    q_text=_text,
    a_text=_text,
    b_text=_text,
    vc=st.sampled_from(list(Verdict)),
    vv=st.sampled_from(list(Verdict)),
    clip_a=st.floats(-1.0, 1.0),
    clip_b=st.floats(-1.0, 1.0),
    swapped=st.booleans(),
    parse_failure=st.booleans(),
    ts=st.floats(0, 2e9, allow_nan=False),
)
@settings(max_examples=150, deadline=None)
def test_record_round_trip_property(
    image, q_text, a_text, b_text, vc, vv, clip_a, clip_b, swapped, parse_failure, ts
):
    question = GeneratedQuestion(image, "rev", q_text)
    weights = ScoreWeights()
    _, _, s_a, s_b = score_pair(vc, vv, clip_a, clip_b, weights)
    rec = JudgmentRecord(
        record_id="r000007",
        iteration=7,
        image_id=image,
        reviewer="rev",
        candidate_a="a",
        candidate_b="b",
        question=question,
        answer_a=CandidateAnswer(image, q_text, "a", a_text, max(1, len(a_text.split())), len(a_text)),
        answer_b=CandidateAnswer(image, q_text, "b", b_text, max(1, len(b_text.split())), len(b_text)),
        verdict_correct=vc,
        verdict_visual=vv,
        clip_a=clip_a,
        clip_b=clip_b,
        s_vl_a=s_a,
        s_vl_b=s_b,
        raw_judge_correct="raw [[A]]",
        raw_judge_visual="raw [[C]]",
        presentation_swapped=swapped,
        ts=ts,
        flags=RecordFlags(parse_failure=parse_failure),
    )
    assert JudgmentRecord.from_json(rec.to_json()) == rec
    # stored pair scores recompute from components within 1e-12
    assert recombine_residual(rec, weights) < 1e-12


def test_verdict_flip():
    assert Verdict.WIN_A.flipped() is Verdict.WIN_B
    assert Verdict.WIN_B.flipped() is Verdict.WIN_A
    assert Verdict.TIE.flipped() is Verdict.TIE

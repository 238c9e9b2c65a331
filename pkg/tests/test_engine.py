from __future__ import annotations

import pytest

from upme.backends import BackendGateway, BackendKind, ModelProfile, TransportPolicy
from upme.embedding import StubEmbeddingProvider
from upme.engine import (
    RunContext,
    TriadPlan,
    TriadTuple,
    answers_for_verbosity,
    enumerate_triads,
    run_review,
    sample_triads,
)
from upme.errors import InvalidInputError, PoolTooSmallError, ThresholdAbortError
from upme.images import synthetic_image_set
from upme.model import Verdict
from upme.simulate import run_synthetic_review, synthetic_pool


def test_enumerate_counts_paper_configuration():
    plan = enumerate_triads([f"m{i}" for i in range(6)], [f"img-{i}" for i in range(25)])
    assert len(plan) == 25 * 15 * 4 == 1500


def test_enumerate_minimal_pool():
    plan = enumerate_triads(["a", "b", "c"], ["img"])
    assert len(plan) == 3
    assert {(t.reviewer, t.candidate_a, t.candidate_b) for t in plan.tuples} == {
        ("c", "a", "b"),
        ("b", "a", "c"),
        ("a", "b", "c"),
    }


def test_enumerate_pool_too_small():
    with pytest.raises(PoolTooSmallError):
        enumerate_triads(["a", "b"], ["img"])


def test_enumerate_order_is_image_pair_reviewer():
    plan = enumerate_triads(["a", "b", "c", "d"], ["i0", "i1"])
    tuples = plan.tuples
    assert len(tuples) == 2 * 6 * 2
    assert tuples[0].image_id == "i0"
    assert tuples[len(tuples) // 2].image_id == "i1"
    # within one image, pairs iterate lexicographically
    first_image = [t for t in tuples if t.image_id == "i0"]
    pairs = [(t.candidate_a, t.candidate_b) for t in first_image]
    assert pairs == sorted(pairs, key=lambda p: (p[0], p[1]))


def test_triad_tuple_invariants():
    with pytest.raises(InvalidInputError):
        TriadTuple("img", "a", "a", "b")
    with pytest.raises(InvalidInputError):
        TriadTuple("img", "c", "b", "a")
    with pytest.raises(InvalidInputError):
        TriadPlan((TriadTuple("i", "c", "a", "b"), TriadTuple("i", "c", "a", "b")))


def test_sample_triads_fraction():
    plan = enumerate_triads(["a", "b", "c", "d"], [f"i{i}" for i in range(10)])
    sampled = sample_triads(plan, 0.25, seed=3)
    assert len(sampled) == round(0.25 * len(plan))
    assert sample_triads(plan, 1.0, seed=3) is plan
    again = sample_triads(plan, 0.25, seed=3)
    assert sampled.tuples == again.tuples
    positions = {plan.tuples.index(t) for t in sampled.tuples}
    assert sorted(positions) == [plan.tuples.index(t) for t in sampled.tuples]


def test_run_review_deterministic_and_complete(small_synthetic_run):
    run2 = run_synthetic_review(n_images=3, global_seed=11)
    assert len(small_synthetic_run.records) == 3 * 15 * 4
    assert [r.to_json() for r in small_synthetic_run.records] == [
        r.to_json() for r in run2.records
    ]
    for i, rec in enumerate(small_synthetic_run.records):
        assert rec.iteration == i
        assert rec.reviewer not in (rec.candidate_a, rec.candidate_b)


def test_run_review_question_cache_consistency(small_synthetic_run):
    questions = {}
    for rec in small_synthetic_run.records:
        key = (rec.reviewer, rec.image_id)
        questions.setdefault(key, rec.question.text)
        assert rec.question.text == questions[key]


def test_run_review_concurrent_matches_sequential():
    seq = run_synthetic_review(n_images=2, global_seed=5, max_workers=1)
    par = run_synthetic_review(n_images=2, global_seed=5, max_workers=8)
    assert [r.to_json() for r in seq.records] == [r.to_json() for r in par.records]


def test_run_review_resume_contract(small_synthetic_run):
    """Interrupting after k records and resuming matches the full run."""
    full = small_synthetic_run.records
    for k in (0, 1, 97, len(full) - 1):
        resumed = _rerun_with_done(k, full)
        assert [r.to_json() for r in resumed] == [r.to_json() for r in full]


def _rerun_with_done(k, full_records):
    from upme.engine import enumerate_triads, run_review
    from upme.scoring import ScoreWeights

    profiles = synthetic_pool([0.95, 0.85, 0.75, 0.65, 0.55, 0.45])
    provider = StubEmbeddingProvider()
    gateway = BackendGateway(profiles, global_seed=11, tokenizer=provider.tokenize)
    images = {ref.image_id: ref for ref in synthetic_image_set(3)}
    plan = enumerate_triads(list(profiles), sorted(images))
    ctx = RunContext(
        gateway=gateway, provider=provider, images=images,
        weights=ScoreWeights(), global_seed=11, max_workers=1,
    )
    done = {r.iteration: r for r in full_records[:k]}
    return run_review(plan, ctx, done=done)


def _pool_with_broken_candidate(threshold: float):
    profiles = synthetic_pool([0.9, 0.7, 0.5])
    profiles["broken"] = ModelProfile(
        name="broken",
        kind=BackendKind.OPENAI_COMPATIBLE,
        endpoint="http://127.0.0.1:9",
        transport=TransportPolicy(retries=0, backoff_base=0.0, timeout=0.2),
    )
    provider = StubEmbeddingProvider()
    gateway = BackendGateway(
        profiles, global_seed=2, tokenizer=provider.tokenize, sleeper=lambda s: None
    )
    images = {ref.image_id: ref for ref in synthetic_image_set(2)}
    plan = enumerate_triads(list(profiles), sorted(images))
    from upme.scoring import ScoreWeights

    ctx = RunContext(
        gateway=gateway, provider=provider, images=images,
        weights=ScoreWeights(), global_seed=2,
        failure_threshold=threshold, max_workers=2,
    )
    return plan, ctx


def test_unreachable_backend_flags_its_tuples_only():
    plan, ctx = _pool_with_broken_candidate(threshold=1.0)
    records = run_review(plan, ctx)
    assert len(records) == len(plan)
    for rec in records:
        touches_broken = "broken" in (rec.reviewer, rec.candidate_a, rec.candidate_b)
        assert rec.flags.failed == touches_broken
        if rec.flags.failed:
            assert rec.verdict_correct is Verdict.TIE
            assert rec.s_vl_a == rec.s_vl_b == 0.5


def test_threshold_abort():
    plan, ctx = _pool_with_broken_candidate(threshold=0.2)
    with pytest.raises(ThresholdAbortError):
        run_review(plan, ctx)


def test_answers_for_verbosity_projection(small_synthetic_run):
    rows = answers_for_verbosity(small_synthetic_run.records)
    assert len(rows) == len(small_synthetic_run.records)  # no flagged records here
    for (len_a, len_b, verdict), rec in zip(rows, small_synthetic_run.records):
        assert len_a == rec.answer_a.char_length
        assert len_b == rec.answer_b.char_length
        assert verdict is rec.verdict_correct


def test_answers_for_verbosity_empty_and_flagged():
    assert answers_for_verbosity([]) == []
    plan, ctx = _pool_with_broken_candidate(threshold=1.0)
    records = run_review(plan, ctx)
    rows = answers_for_verbosity(records)
    assert len(rows) == sum(1 for r in records if not r.flags.failed)


def test_verbose_models_produce_longer_answers():
    terse = run_synthetic_review(
        abilities=[0.9, 0.7, 0.5], n_images=2, global_seed=3, verbosity=[0.2, 0.2, 0.2]
    )
    verbose = run_synthetic_review(
        abilities=[0.9, 0.7, 0.5], n_images=2, global_seed=3, verbosity=[6.0, 6.0, 6.0]
    )
    mean_terse = sum(r.answer_a.char_length for r in terse.records) / len(terse.records)
    mean_verbose = sum(r.answer_a.char_length for r in verbose.records) / len(verbose.records)
    assert mean_verbose > 2 * mean_terse

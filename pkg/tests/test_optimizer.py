from __future__ import annotations

import numpy as np
import pytest

from upme.errors import (
    DegenerateWeightsError,
    DimensionError,
    InsufficientDataError,
    InvalidInputError,
    MissingReferenceError,
)
from upme.model import RecordFlags, Verdict
from upme.optimizer import (
    PRESET_CONSISTENT,
    PRESET_REVERSE,
    PRESET_UNIFORM,
    ConvergenceTrace,
    OptimizerConfig,
    UpmeRanker,
    estimate_scores,
    fixed_weight_scores,
    mse_loss,
    optimize,
    preset_weights,
)

from conftest import make_record


def _two_reviewer_transcript():
    """Model 'm' judged twice: s_vl 1.0 from r1, s_vl 0.5 from r2.

    Built so every model appears as a candidate at least once.
    order: [m, other, r1, r2]; names sorted: m < other < r1 < r2.
    """
    records = [
        # r1 judges (m, other): m wins everything -> s_vl_m = 1.0
        make_record(0, "i0", "r1", "m", "other", Verdict.WIN_A, Verdict.WIN_A,
                    clip_a=0.5, clip_b=0.1),
        # r2 judges (m, other): all ties -> s_vl_m = 0.5
        make_record(1, "i1", "r2", "m", "other", Verdict.TIE, Verdict.TIE,
                    clip_a=0.3, clip_b=0.3),
        # cover r1, r2 as candidates so validation passes
        make_record(2, "i2", "m", "r1", "r2", Verdict.TIE, Verdict.TIE,
                    clip_a=0.2, clip_b=0.2),
    ]
    return records


def test_estimate_scores_weighted_mean_hand_value():
    records = _two_reviewer_transcript()
    order = ["m", "other", "r1", "r2"]
    weights = {"m": 0.5, "other": 0.5, "r1": 0.8, "r2": 0.4}
    w = np.array([weights[n] for n in order])
    scores = estimate_scores(records, w, order)
    # (1.0*0.8 + 0.5*0.4) / (0.8 + 0.4) = 0.8333...
    assert scores[order.index("m")] == pytest.approx((0.8 + 0.2) / 1.2, abs=1e-12)
    assert scores[order.index("m")] == pytest.approx(0.8333333333, abs=1e-9)


def test_estimate_scores_uniform_all_ties():
    records = [
        make_record(0, "i0", "c", "a", "b", Verdict.TIE, Verdict.TIE, clip_a=0.2, clip_b=0.2),
        make_record(1, "i1", "a", "b", "c", Verdict.TIE, Verdict.TIE, clip_a=0.2, clip_b=0.2),
        make_record(2, "i2", "b", "a", "c", Verdict.TIE, Verdict.TIE, clip_a=0.2, clip_b=0.2),
    ]
    scores = estimate_scores(records, np.ones(3), ["a", "b", "c"])
    assert np.allclose(scores, 0.5)


def test_estimate_scores_all_ones_is_plain_mean():
    records = _two_reviewer_transcript()
    order = ["m", "other", "r1", "r2"]
    scores = estimate_scores(records, np.ones(4), order)
    assert scores[0] == pytest.approx((1.0 + 0.5) / 2)


def test_estimate_scores_scale_invariance():
    records = _two_reviewer_transcript()
    order = ["m", "other", "r1", "r2"]
    w = np.array([0.5, 0.5, 0.8, 0.4])
    base = estimate_scores(records, w, order)
    # scaling all weights by a positive constant leaves the ratio form unchanged
    scaled = estimate_scores(records, np.clip(w * 0.5, 0, 1), order)
    assert np.allclose(base, scaled, atol=1e-15)


def test_estimate_scores_rejects_degenerate_weights():
    records = _two_reviewer_transcript()
    with pytest.raises(DegenerateWeightsError):
        estimate_scores(records, np.zeros(4), ["m", "other", "r1", "r2"])


def test_estimate_scores_model_without_judgments():
    records = [make_record(0, "i0", "c", "a", "b", Verdict.TIE)]
    with pytest.raises(InsufficientDataError):
        estimate_scores(records, np.ones(3), ["a", "b", "c"])


def test_estimate_scores_skips_failed_records():
    records = _two_reviewer_transcript()
    records.append(
        make_record(3, "i3", "r1", "m", "other", Verdict.WIN_B,
                    flags=RecordFlags(failed=True, error="boom"))
    )
    order = ["m", "other", "r1", "r2"]
    with_failed = estimate_scores(records, np.ones(4), order)
    without = estimate_scores(records[:3], np.ones(4), order)
    assert np.allclose(with_failed, without)


def test_mse_loss_values():
    assert mse_loss([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert mse_loss([0.8, 0.4], [0.6, 0.6]) == pytest.approx(0.04, abs=1e-15)
    assert mse_loss([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        mse_loss([0.1], [0.1, 0.2])


def test_optimizer_config_validation():
    with pytest.raises(InvalidInputError):
        OptimizerConfig(alpha_ema=0.0)
    with pytest.raises(InvalidInputError):
        OptimizerConfig(beta_damping=1.5)
    with pytest.raises(InvalidInputError):
        OptimizerConfig(max_epochs=0)
    with pytest.raises(InvalidInputError):
        OptimizerConfig(tol=0.0)


def test_optimize_constant_map_reaches_fixed_point():
    # all ties everywhere: estimate_scores returns 0.5 for any weights,
    # so weights must converge to 0.5 and the loss to ~0
    records = [
        make_record(0, "i0", "c", "a", "b", Verdict.TIE, Verdict.TIE, clip_a=0.2, clip_b=0.2),
        make_record(1, "i1", "a", "b", "c", Verdict.TIE, Verdict.TIE, clip_a=0.2, clip_b=0.2),
        make_record(2, "i2", "b", "a", "c", Verdict.TIE, Verdict.TIE, clip_a=0.2, clip_b=0.2),
    ]
    scores, weights, trace = optimize(records, OptimizerConfig(max_epochs=60, tol=1e-9))
    assert np.allclose(scores, 0.5, atol=1e-6)
    assert np.allclose(weights, 0.5, atol=1e-6)
    assert trace.converged
    assert trace.losses[-1] < 1e-10


def test_optimize_deterministic_trace(small_synthetic_run):
    records = small_synthetic_run.records
    _, _, t1 = optimize(records)
    _, _, t2 = optimize(records)
    assert t1.losses == t2.losses
    assert all(np.array_equal(a, b) for a, b in zip(t1.weights, t2.weights))
    assert t1.to_csv() == t2.to_csv()


def test_optimize_trace_length_and_bounds(small_synthetic_run):
    cfg = OptimizerConfig()
    scores, weights, trace = optimize(small_synthetic_run.records, cfg)
    assert len(trace) <= cfg.max_epochs + 1
    for vec in (scores, weights):
        assert np.all(vec >= 0.0) and np.all(vec <= 1.0)


def test_optimize_explicit_init_vector(small_synthetic_run):
    cfg = OptimizerConfig(init_weights=[0.9, 0.1, 0.5, 0.5, 0.3, 0.7])
    scores, weights, trace = optimize(small_synthetic_run.records, cfg)
    assert trace.converged
    # fixed point is init-independent up to tolerance
    s2, w2, _ = optimize(small_synthetic_run.records, OptimizerConfig())
    assert np.allclose(scores, s2, atol=5e-3)


def test_trace_csv_layout(small_synthetic_run):
    _, _, trace = optimize(small_synthetic_run.records)
    text = trace.to_csv()
    header = text.splitlines()[0].split(",")
    m = len(trace.model_names)
    assert header[:2] == ["epoch", "loss"]
    assert header[2:2 + m] == [f"w_{n}" for n in trace.model_names]
    assert header[2 + m:] == [f"g_{n}" for n in trace.model_names]
    assert len(text.splitlines()) == len(trace) + 1


# --- fixed-weight presets -------------------------------------------------------

def test_preset_weights_ladders():
    order = ["a", "b", "c", "d", "e", "f"]
    ranking = ["f", "e", "d", "c", "b", "a"]  # f best
    w = preset_weights(PRESET_CONSISTENT, order, ranking)
    assert np.allclose(w, [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    r = preset_weights(PRESET_REVERSE, order, ranking)
    assert np.allclose(r, [1.0, 0.8, 0.6, 0.4, 0.2, 0.0])
    u = preset_weights(PRESET_UNIFORM, order, None)
    assert np.allclose(u, 1.0)


def test_reverse_is_consistent_with_inverted_ranking():
    order = ["a", "b", "c", "d"]
    ranking = ["c", "a", "d", "b"]
    rev = preset_weights(PRESET_REVERSE, order, ranking)
    inv = preset_weights(PRESET_CONSISTENT, order, list(reversed(ranking)))
    assert np.allclose(rev, inv)


def test_uniform_preset_equals_all_ones_estimate():
    records = _two_reviewer_transcript()
    order = ["m", "other", "r1", "r2"]
    assert np.allclose(
        fixed_weight_scores(records, PRESET_UNIFORM),
        estimate_scores(records, np.ones(4), order),
    )


def test_presets_require_reference():
    records = _two_reviewer_transcript()
    with pytest.raises(MissingReferenceError):
        fixed_weight_scores(records, PRESET_CONSISTENT)
    with pytest.raises(MissingReferenceError):
        fixed_weight_scores(records, PRESET_REVERSE, ["m", "other"])  # not a permutation


# --- estimator wrapper ----------------------------------------------------------

def test_upme_ranker_estimator_api(small_synthetic_run):
    ranker = UpmeRanker(max_epochs=30)
    assert ranker.get_params()["alpha_ema"] == 0.2
    fitted = ranker.fit(small_synthetic_run.records)
    assert fitted is ranker
    assert len(ranker.scores_) == 6
    assert ranker.model_names_ == sorted(small_synthetic_run.names)
    assert set(ranker.ranking_) == set(ranker.model_names_)
    assert ranker.converged_ == ranker.trace_.converged


def test_upme_ranker_sklearn_clone(small_synthetic_run):
    from sklearn.base import clone

    ranker = UpmeRanker(alpha_ema=0.3, tol=1e-5)
    cloned = clone(ranker)
    assert cloned.get_params() == ranker.get_params()

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upme.errors import (
    AnnotationLinkError,
    DegenerateTableError,
    DimensionError,
    InsufficientDataError,
    UndefinedCorrelationError,
)
from upme.metrics import (
    AnnotationTruth,
    HumanAnnotation,
    average_ranks,
    bias_test,
    bias_test_from_table,
    chi_square_2x2,
    human_alignment,
    judge_accuracy,
    load_annotations,
    load_reference_scores,
    pearson,
    permutation_entropy,
    spearman,
    verbosity_selections,
)
from upme.model import Verdict

from conftest import make_record


# --- independent brute-force oracles (kept free of numpy on purpose) ---------

def pearson_oracle(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    num = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    dx = math.fsum((a - mx) ** 2 for a in x)
    dy = math.fsum((b - my) ** 2 for b in y)
    return num / math.sqrt(dx * dy)


def ranks_oracle(x):
    # average rank: 1 + count(smaller) + count(equal among others)/2
    return [
        1.0
        + sum(1 for b in x if b < a)
        + sum(1 for j, b in enumerate(x) if b == a and j != i) / 2.0
        for i, a in enumerate(x)
    ]


def spearman_oracle(x, y):
    return pearson_oracle(ranks_oracle(x), ranks_oracle(y))


# --- pearson ------------------------------------------------------------------

def test_pearson_affine_relation():
    x = [1.0, 2.0, 5.0, 9.0]
    assert pearson(x, [3 * v + 2 for v in x]) == pytest.approx(1.0, abs=1e-12)


def test_pearson_negation():
    x = [1.0, 2.0, 5.0, 9.0]
    assert pearson(x, [-v for v in x]) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_hand_value():
    # sum dx*dy = 4, sum dx^2 = sum dy^2 = 5 -> 0.8
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)


def test_pearson_constant_input_undefined():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_pearson_length_mismatch():
    with pytest.raises(DimensionError):
        pearson([1, 2], [1, 2, 3])


# --- spearman -----------------------------------------------------------------

def test_spearman_monotone_transform_invariance():
    x = [0.3, 1.7, 2.0, 5.5, 9.1]
    y = [math.exp(v) for v in x]
    assert spearman(x, y) == pytest.approx(1.0, abs=1e-12)


def test_spearman_reversed():
    x = [1.0, 2.0, 3.0, 4.0]
    assert spearman(x, list(reversed(x))) == pytest.approx(-1.0, abs=1e-12)


def test_spearman_with_ties_hand_value():
    # ranks y = (1.5, 1.5, 3) -> pearson((1,2,3),(1.5,1.5,3)) = sqrt(3)/2
    got = spearman([1, 2, 3], [2, 2, 3])
    assert got == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    assert got == pytest.approx(0.866, abs=5e-4)


def test_average_ranks_tie_handling():
    assert list(average_ranks([2, 2, 3])) == [1.5, 1.5, 3.0]
    assert list(average_ranks([5, 1, 5, 5])) == [3.0, 1.0, 3.0, 3.0]


def test_rank_correlations_match_bruteforce_oracle():
    rng = np.random.default_rng(42)
    for _ in range(1000):
        n = int(rng.integers(4, 9))
        x = rng.normal(size=n).tolist()
        y = rng.normal(size=n).tolist()
        assert pearson(x, y) == pytest.approx(pearson_oracle(x, y), abs=1e-12)
        assert spearman(x, y) == pytest.approx(spearman_oracle(x, y), abs=1e-12)


@given(
    x=st.lists(st.integers(0, 5), min_size=4, max_size=9),
    y=st.lists(st.integers(0, 5), min_size=4, max_size=9),
)
@settings(max_examples=200)
def test_spearman_ties_match_oracle(x, y):
    n = min(len(x), len(y))
    x, y = [float(v) for v in x[:n]], [float(v) for v in y[:n]]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert spearman(x, y) == pytest.approx(spearman_oracle(x, y), abs=1e-12)


# --- permutation entropy --------------------------------------------------------

def test_permutation_entropy_monotone_is_zero():
    assert permutation_entropy([1, 2, 3, 4, 5]) == 0.0


def test_permutation_entropy_three_distinct_patterns():
    # windows (2,1,3),(1,3,5),(3,5,4) -> three distinct patterns -> ln 3
    assert permutation_entropy([2, 1, 3, 5, 4]) == pytest.approx(math.log(3), abs=1e-12)


def test_permutation_entropy_pattern_multiset():
    # windows (1,3,2),(3,2,5),(2,5,4): patterns (0,2,1) x2 and (1,0,2) x1
    expected = math.log(3) - (2.0 / 3.0) * math.log(2)
    assert permutation_entropy([1, 3, 2, 5, 4]) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.6365141682948129, abs=1e-12)


def test_permutation_entropy_bounds_and_errors():
    with pytest.raises(InsufficientDataError):
        permutation_entropy([1, 2], order=3)
    values = [3, 1, 4, 1, 5, 9, 2, 6]
    h = permutation_entropy(values)
    assert 0.0 <= h <= math.log(math.factorial(3)) + 1e-12


@given(x=st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=30))
@settings(max_examples=200)
def test_permutation_entropy_range_property(x):
    h = permutation_entropy(x)
    assert 0.0 <= h <= math.log(6) + 1e-9


# --- chi-square / bias tests -----------------------------------------------------

def test_chi_square_closed_form():
    # 60 * (20*20 - 10*10)^2 / 30^4 = 20/3
    chi2, p = chi_square_2x2([[20, 10], [10, 20]])
    assert chi2 == pytest.approx(60 * (400 - 100) ** 2 / 30**4, abs=1e-12)
    assert chi2 == pytest.approx(6.6667, abs=1e-3)
    assert 0.0 <= p <= 1.0


def test_chi_square_independence_is_zero():
    chi2, p = chi_square_2x2([[10, 10], [10, 10]])
    assert chi2 == 0.0
    assert p == pytest.approx(1.0)


def test_chi_square_p_value_matches_erfc_oracle():
    chi2, p = chi_square_2x2([[25, 15], [10, 30]])
    assert p == pytest.approx(math.erfc(math.sqrt(chi2 / 2)), abs=1e-15)


def test_chi_square_zero_margin():
    with pytest.raises(DegenerateTableError):
        chi_square_2x2([[0, 0], [10, 20]])
    with pytest.raises(DegenerateTableError):
        chi_square_2x2([[5, 0], [10, 0]])


def test_bias_test_from_selections():
    selections = (
        [("verbose", False)] * 20 + [("verbose", True)] * 10
        + [("other", False)] * 10 + [("other", True)] * 20
    )
    result = bias_test(selections)
    assert result.contingency == ((20, 10), (10, 20))
    assert result.chi_square == pytest.approx(20 / 3, abs=1e-12)
    assert result.phi == pytest.approx(1 / 3, abs=1e-4)
    assert result.n == 60


def test_bias_test_phi_identity_randomized():
    rng = np.random.default_rng(7)
    for _ in range(200):
        table = rng.integers(1, 60, size=(2, 2))
        result = bias_test_from_table(table)
        assert result.phi**2 * result.n == pytest.approx(
            result.chi_square, rel=1e-12, abs=1e-15
        )


def test_bias_test_empty_selection():
    with pytest.raises(DegenerateTableError):
        bias_test([])


# --- judge accuracy / human alignment ----------------------------------------

class FixedTruth:
    def __init__(self, verdict):
        self.verdict = verdict

    def true_verdict(self, record, kind):
        return self.verdict


def test_judge_accuracy_ratio():
    records = [
        make_record(i, f"img-{i}", "r", "a", "b",
                    Verdict.WIN_A if i < 7 else Verdict.WIN_B)
        for i in range(10)
    ]
    acc = judge_accuracy(records, FixedTruth(Verdict.WIN_A))
    assert acc["correct"]["r"] == pytest.approx(0.7)


def test_judge_accuracy_excludes_flagged(caplog):
    from upme.model import RecordFlags

    records = [
        make_record(0, "i0", "r", "a", "b", Verdict.WIN_A),
        make_record(1, "i1", "r", "a", "b", Verdict.WIN_B,
                    flags=RecordFlags(parse_failure=True)),
    ]
    acc = judge_accuracy(records, FixedTruth(Verdict.WIN_A))
    assert acc["correct"]["r"] == 1.0


def test_human_alignment_rates():
    records = [make_record(i, f"img-{i}", "r", "a", "b", Verdict.WIN_A) for i in range(10)]
    annotations = [
        HumanAnnotation(
            record_id=rec.record_id,
            human_choice=Verdict.WIN_A if i < 7 else Verdict.WIN_B,
            agrees_with_judge=i < 8,
        )
        for i, rec in enumerate(records)
    ]
    agreement, consistency = human_alignment(records, annotations)
    assert agreement == pytest.approx(80.0)
    assert consistency == pytest.approx(70.0)


def test_human_alignment_empty_is_error():
    records = [make_record(0, "img", "r", "a", "b", Verdict.TIE)]
    with pytest.raises(InsufficientDataError):
        human_alignment(records, [])


def test_human_alignment_unresolvable_record():
    records = [make_record(0, "img", "r", "a", "b", Verdict.TIE)]
    ann = [HumanAnnotation("r999999", Verdict.TIE, True)]
    with pytest.raises(AnnotationLinkError):
        human_alignment(records, ann)


def test_verbosity_selections_categories():
    records = [
        # judge picked the longer answer (b) and was wrong
        make_record(0, "i0", "r", "a", "b", Verdict.WIN_B,
                    answer_len_a=120, answer_len_b=480),
        # judge picked the shorter answer (a) and was right
        make_record(1, "i1", "r", "a", "b", Verdict.WIN_A,
                    answer_len_a=120, answer_len_b=480),
        # tie verdict: excluded
        make_record(2, "i2", "r", "a", "b", Verdict.TIE,
                    answer_len_a=120, answer_len_b=480),
        # equal lengths: excluded
        make_record(3, "i3", "r", "a", "b", Verdict.WIN_A),
    ]
    sel = verbosity_selections(records, FixedTruth(Verdict.WIN_A))
    assert sel == [("verbose", False), ("other", True)]


def test_annotation_truth_only_covers_correctness():
    rec = make_record(0, "img", "r", "a", "b", Verdict.WIN_A)
    truth = AnnotationTruth([HumanAnnotation(rec.record_id, Verdict.WIN_A, True)])
    assert truth.true_verdict(rec, "correct") is Verdict.WIN_A
    assert truth.true_verdict(rec, "visual") is None


# --- file loaders -------------------------------------------------------------

def test_load_reference_scores(tmp_path):
    path = tmp_path / "ref.tsv"
    path.write_text("# model score\nalpha 0.71\nbeta 0.62\n", encoding="utf-8")
    ref = load_reference_scores(path)
    assert ref.names == ("alpha", "beta")
    assert ref.values == (0.71, 0.62)
    aligned = ref.aligned_to(["beta", "alpha"])
    assert list(aligned) == [0.62, 0.71]


def test_load_annotations(tmp_path):
    path = tmp_path / "ann.jsonl"
    path.write_text(
        '{"record_id": "r000000", "human_choice": "win_a", "agrees_with_judge": true}\n',
        encoding="utf-8",
    )
    anns = load_annotations(path)
    assert anns == [HumanAnnotation("r000000", Verdict.WIN_A, True)]

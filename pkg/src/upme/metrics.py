"""Statistics battery: rank correlations, permutation entropy, bias tests,
judge accuracy, and human agreement rates.

Correlations and the chi-square statistic are implemented from their
definitions (the test suite checks them against independent brute-force
oracles); the chi-square p-value for one degree of freedom has the closed
form erfc(sqrt(x/2)).
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AnnotationLinkError,
    DegenerateTableError,
    DimensionError,
    InsufficientDataError,
    InvalidInputError,
    UndefinedCorrelationError,
)
from .model import JudgmentRecord, Verdict

logger = logging.getLogger(__name__)

VERBOSE = "verbose"
SELF = "self"
OTHER = "other"


@dataclass(frozen=True)
class ReferenceScores:
    """External per-model scores used only for evaluation, never optimization."""

    names: tuple[str, ...]
    values: tuple[float, ...]
    source: str = "reference"

    def aligned_to(self, order: Sequence[str]) -> np.ndarray:
        by_name = dict(zip(self.names, self.values))
        missing = [n for n in order if n not in by_name]
        if missing:
            raise InvalidInputError(f"reference scores missing models: {missing}")
        return np.array([by_name[n] for n in order], dtype=float)


@dataclass(frozen=True)
class HumanAnnotation:
    record_id: str
    human_choice: Verdict
    agrees_with_judge: bool


@dataclass(frozen=True)
class BiasTestResult:
    chi_square: float
    p_value: float
    phi: float
    contingency: tuple[tuple[int, int], tuple[int, int]]

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.contingency)


def _as_float_array(x: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    return arr


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation of two equal-length lists."""
    ax, ay = _as_float_array(x, "x"), _as_float_array(y, "y")
    if ax.shape != ay.shape:
        raise DimensionError(f"length mismatch: {ax.shape[0]} vs {ay.shape[0]}")
    if ax.shape[0] < 2:
        raise UndefinedCorrelationError("need at least two points")
    dx = ax - ax.mean()
    dy = ay - ay.mean()
    denom = math.sqrt(float(np.dot(dx, dx)) * float(np.dot(dy, dy)))
    if denom == 0.0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    return float(np.dot(dx, dy)) / denom


def average_ranks(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    arr = _as_float_array(x, "x")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation: pearson of the average-rank vectors."""
    ax, ay = _as_float_array(x, "x"), _as_float_array(y, "y")
    if ax.shape != ay.shape:
        raise DimensionError(f"length mismatch: {ax.shape[0]} vs {ay.shape[0]}")
    return pearson(average_ranks(ax), average_ranks(ay))


def ordinal_pattern(window: Sequence[float]) -> tuple[int, ...]:
    """Permutation sorting the window ascending; ties keep the earlier index first."""
    return tuple(
        int(i) for i in sorted(range(len(window)), key=lambda i: (window[i], i))
    )


def permutation_entropy(x: Sequence[float], order: int = 3) -> float:
    """Shannon entropy (natural log) of ordinal patterns over sliding windows.

    Zero for a monotone list; ln(order!) is the ceiling.
    """
    if order < 2:
        raise InvalidInputError("order must be >= 2")
    arr = _as_float_array(x, "x")
    if len(arr) < order:
        raise InsufficientDataError(
            f"need at least {order} values, got {len(arr)}"
        )
    counts = Counter(
        ordinal_pattern(arr[i : i + order]) for i in range(len(arr) - order + 1)
    )
    total = sum(counts.values())
    return -sum((c / total) * math.log(c / total) for c in counts.values())


def chi_square_2x2(table: Sequence[Sequence[int]]) -> tuple[float, float]:
    """Pearson chi-square (no continuity correction) and its 1-dof p-value."""
    t = np.asarray(table, dtype=float)
    if t.shape != (2, 2) or np.any(t < 0):
        raise InvalidInputError("contingency table must be 2x2 and nonnegative")
    n = t.sum()
    if n <= 0:
        raise DegenerateTableError("empty contingency table")
    row = t.sum(axis=1)
    col = t.sum(axis=0)
    if np.any(row == 0) or np.any(col == 0):
        raise DegenerateTableError(f"zero margin in contingency table {t.tolist()}")
    det = t[0, 0] * t[1, 1] - t[0, 1] * t[1, 0]
    chi2 = n * det * det / (row[0] * row[1] * col[0] * col[1])
    p = math.erfc(math.sqrt(chi2 / 2.0))
    return float(chi2), float(p)


def bias_test(selections: Iterable[tuple[str, bool]]) -> BiasTestResult:
    """Chi-square independence test between picking the biased option and
    being wrong.

    Each selection is (category, correct) where category is "verbose"/"self"
    for the biased option and "other" otherwise; pass one bias type per call.
    Rows: biased vs other selection. Columns: incorrect vs correct judgment.
    """
    table = [[0, 0], [0, 0]]
    n = 0
    for category, correct in selections:
        if category not in (VERBOSE, SELF, OTHER):
            raise InvalidInputError(f"unknown selection category {category!r}")
        row = 0 if category != OTHER else 1
        col = 0 if not correct else 1
        table[row][col] += 1
        n += 1
    if n < 1:
        raise DegenerateTableError("no selections supplied")
    chi2, p = chi_square_2x2(table)
    phi = math.sqrt(chi2 / n)
    return BiasTestResult(
        chi_square=chi2,
        p_value=p,
        phi=phi,
        contingency=((table[0][0], table[0][1]), (table[1][0], table[1][1])),
    )


def bias_test_from_table(table: Sequence[Sequence[int]]) -> BiasTestResult:
    """Same statistic computed from an already-built 2x2 table."""
    chi2, p = chi_square_2x2(table)
    n = int(sum(sum(row) for row in table))
    return BiasTestResult(
        chi_square=chi2,
        p_value=p,
        phi=math.sqrt(chi2 / n),
        contingency=((int(table[0][0]), int(table[0][1])), (int(table[1][0]), int(table[1][1]))),
    )


def judge_accuracy(
    records: Sequence[JudgmentRecord],
    truth: "TruthSource",
) -> dict[str, dict[str, float]]:
    """Fraction of each reviewer's verdicts matching the truth source.

    Reported separately for the correctness and visual templates as
    {"correct": {reviewer: acc}, "visual": {reviewer: acc}}. Reviewers with
    zero usable judgments are excluded with a warning.
    """
    hits: dict[str, Counter] = {"correct": Counter(), "visual": Counter()}
    totals: dict[str, Counter] = {"correct": Counter(), "visual": Counter()}
    reviewers = set()
    for rec in records:
        reviewers.add(rec.reviewer)
        if rec.flags.failed or rec.flags.parse_failure:
            continue
        true_correct = truth.true_verdict(rec, "correct")
        true_visual = truth.true_verdict(rec, "visual")
        if true_correct is not None:
            totals["correct"][rec.reviewer] += 1
            hits["correct"][rec.reviewer] += int(rec.verdict_correct is true_correct)
        if true_visual is not None:
            totals["visual"][rec.reviewer] += 1
            hits["visual"][rec.reviewer] += int(rec.verdict_visual is true_visual)
    out: dict[str, dict[str, float]] = {"correct": {}, "visual": {}}
    for kind in ("correct", "visual"):
        for reviewer in sorted(reviewers):
            if totals[kind][reviewer] == 0:
                logger.warning(
                    "reviewer %s has no usable %s judgments; excluded", reviewer, kind
                )
                continue
            out[kind][reviewer] = hits[kind][reviewer] / totals[kind][reviewer]
    return out


class TruthSource:
    """Interface: where the 'right' verdict for a record comes from."""

    def true_verdict(self, record: JudgmentRecord, kind: str) -> Verdict | None:
        raise NotImplementedError


class AnnotationTruth(TruthSource):
    """Human Task-1 choices as truth (correctness template only)."""

    def __init__(self, annotations: Iterable[HumanAnnotation]):
        self._by_id = {a.record_id: a for a in annotations}

    def true_verdict(self, record: JudgmentRecord, kind: str) -> Verdict | None:
        if kind != "correct":
            return None
        ann = self._by_id.get(record.record_id)
        return ann.human_choice if ann else None


def human_alignment(
    records: Sequence[JudgmentRecord],
    annotations: Sequence[HumanAnnotation],
) -> tuple[float, float]:
    """(agreement %, consistency %) of judge verdicts against annotations.

    Agreement is the share of Task-2 'agree' flags; consistency is the share
    of Task-1 choices matching the judge's correctness verdict.
    """
    if not annotations:
        raise InsufficientDataError("no annotations supplied; absence is not disagreement")
    by_id = {r.record_id: r for r in records}
    agree = 0
    match = 0
    for ann in annotations:
        rec = by_id.get(ann.record_id)
        if rec is None:
            raise AnnotationLinkError(f"annotation references unknown record {ann.record_id!r}")
        agree += int(ann.agrees_with_judge)
        match += int(ann.human_choice is rec.verdict_correct)
    n = len(annotations)
    return 100.0 * agree / n, 100.0 * match / n


def verbosity_selections(
    records: Sequence[JudgmentRecord],
    truth: TruthSource,
) -> list[tuple[str, bool]]:
    """Per-record (category, correct) pairs for the verbosity bias test.

    The verbose option is the answer with strictly more tokens (characters
    break token ties); records with tied lengths, tie verdicts, or failure
    flags contribute nothing.
    """
    out = []
    for rec in records:
        if rec.flags.failed or rec.flags.parse_failure:
            continue
        if rec.verdict_correct is Verdict.TIE:
            continue
        key_a = (rec.answer_a.token_count, rec.answer_a.char_length)
        key_b = (rec.answer_b.token_count, rec.answer_b.char_length)
        if key_a == key_b:
            continue
        verbose_side = "a" if key_a > key_b else "b"
        picked_side = "a" if rec.verdict_correct is Verdict.WIN_A else "b"
        category = VERBOSE if picked_side == verbose_side else OTHER
        true_v = truth.true_verdict(rec, "correct")
        if true_v is None:
            continue
        out.append((category, rec.verdict_correct is true_v))
    return out


def load_reference_scores(path: str | Path) -> ReferenceScores:
    """Two-column table (model name, score); '#' comments and blanks ignored."""
    names: list[str] = []
    values: list[float] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise InvalidInputError(f"expected 'name score' per line, got {line!r}")
        names.append(parts[0])
        values.append(float(parts[1]))
    if not names:
        raise InvalidInputError(f"no reference scores in {path}")
    return ReferenceScores(tuple(names), tuple(values), source=str(path))


def load_annotations(path: str | Path) -> list[HumanAnnotation]:
    """Line-delimited JSON: {record_id, human_choice, agrees_with_judge}."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        data = json.loads(line)
        out.append(
            HumanAnnotation(
                record_id=data["record_id"],
                human_choice=Verdict(data["human_choice"]),
                agrees_with_judge=bool(data["agrees_with_judge"]),
            )
        )
    return out

"""Comparison aggregators over the same transcript: uniform-weight peer
review, majority vote, and rating vote. All three read correctness verdicts
only, so they reproduce the unoptimized method rows on synthetic pools.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .model import JudgmentRecord, Side, Verdict
from .optimizer import estimate_scores
from .scoring import score_correct
from .validation import check_records


def _correctness_score(record: JudgmentRecord, side: Side) -> float:
    return score_correct(record.verdict_correct, side)


def peer_review_baseline(records: Sequence[JudgmentRecord]) -> np.ndarray:
    """Unweighted mean of correctness scores per model (the Peer Review row)."""
    _, names = check_records(records)
    return estimate_scores(
        records, np.ones(len(names)), names, score_of=_correctness_score
    )


def majority_vote(records: Sequence[JudgmentRecord]) -> np.ndarray:
    """Collapse each (image, pair) to its reviewer-majority winner, then
    average the collapsed outcomes per model.

    Win counts for each side ignore tie verdicts; an even split (including
    all ties) scores 0.5 for both candidates.
    """
    usable, names = check_records(records)
    votes: dict[tuple[str, str, str], list[Verdict]] = defaultdict(list)
    for rec in usable:
        votes[(rec.image_id, rec.candidate_a, rec.candidate_b)].append(rec.verdict_correct)

    index = {n: i for i, n in enumerate(names)}
    total = np.zeros(len(names))
    count = np.zeros(len(names))
    for (_, cand_a, cand_b), verdicts in votes.items():
        wins_a = sum(v is Verdict.WIN_A for v in verdicts)
        wins_b = sum(v is Verdict.WIN_B for v in verdicts)
        if wins_a > wins_b:
            score_a, score_b = 1.0, 0.0
        elif wins_b > wins_a:
            score_a, score_b = 0.0, 1.0
        else:
            score_a = score_b = 0.5
        total[index[cand_a]] += score_a
        total[index[cand_b]] += score_b
        count[index[cand_a]] += 1
        count[index[cand_b]] += 1
    return total / count


def rating_vote(records: Sequence[JudgmentRecord]) -> np.ndarray:
    """Points per verdict (win 2, tie 1, loss 0) summed over all reviewers,
    normalized by 2 x appearances into [0, 1]."""
    usable, names = check_records(records)
    index = {n: i for i, n in enumerate(names)}
    points = np.zeros(len(names))
    appearances = np.zeros(len(names))
    for rec in usable:
        pts_a = 2.0 * score_correct(rec.verdict_correct, "a")
        pts_b = 2.0 * score_correct(rec.verdict_correct, "b")
        points[index[rec.candidate_a]] += pts_a
        points[index[rec.candidate_b]] += pts_b
        appearances[index[rec.candidate_a]] += 1
        appearances[index[rec.candidate_b]] += 1
    return points / (2.0 * appearances)


class _TranscriptAggregator(BaseEstimator):
    """fit(records) -> model_names_, scores_, ranking_."""

    def _aggregate(self, records: Sequence[JudgmentRecord]) -> np.ndarray:
        raise NotImplementedError

    def fit(self, records: Sequence[JudgmentRecord], y=None):
        _, names = check_records(records)
        self.model_names_ = list(names)
        self.scores_ = self._aggregate(records)
        return self

    @property
    def ranking_(self) -> list[str]:
        order = np.argsort(-self.scores_, kind="stable")
        return [self.model_names_[i] for i in order]


class PeerReviewBaseline(_TranscriptAggregator):
    def _aggregate(self, records):
        return peer_review_baseline(records)


class MajorityVoteBaseline(_TranscriptAggregator):
    def _aggregate(self, records):
        return majority_vote(records)


class RatingVoteBaseline(_TranscriptAggregator):
    def _aggregate(self, records):
        return rating_vote(records)

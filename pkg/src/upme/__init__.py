"""Peer-review evaluation of vision-language model pools.

Models in a pool take turns generating questions about images, answering
each other's questions, and judging answer pairs; judgments are scored on
correctness, visual understanding, and image-text correlation; per-model
confidence weights are then optimized until they agree with the estimated
scores. The transcript of judgments is append-only and replayable, and every
aggregate is a pure function of it.
"""

from __future__ import annotations

from .backends import (
    BackendGateway,
    BackendKind,
    ModelProfile,
    SyntheticAbility,
    SyntheticTruth,
)
from .baselines import (
    MajorityVoteBaseline,
    PeerReviewBaseline,
    RatingVoteBaseline,
    majority_vote,
    peer_review_baseline,
    rating_vote,
)
from .embedding import HttpEmbeddingProvider, StubEmbeddingProvider, make_provider
from .engine import RunContext, TriadPlan, answers_for_verbosity, enumerate_triads, run_review
from .metrics import (
    BiasTestResult,
    HumanAnnotation,
    ReferenceScores,
    bias_test,
    human_alignment,
    judge_accuracy,
    pearson,
    permutation_entropy,
    spearman,
)
from .model import (
    CandidateAnswer,
    GeneratedQuestion,
    ImageRef,
    JudgmentRecord,
    ModelId,
    Verdict,
    canonical_order,
)
from .optimizer import (
    ConvergenceTrace,
    OptimizerConfig,
    UpmeRanker,
    estimate_scores,
    fixed_weight_scores,
    mse_loss,
    optimize,
)
from .prompts import PromptTemplate, default_template, parse_verdict, render_prompt
from .scoring import (
    ComponentScores,
    ScoreWeights,
    clip_correlation,
    clip_pairwise,
    combine,
    score_correct,
    score_pair,
    score_visual,
    segment_starts,
)
from .transcript import TranscriptWriter, load_transcript

__version__ = "0.1.0"

__all__ = [
    "BackendGateway",
    "BackendKind",
    "BiasTestResult",
    "CandidateAnswer",
    "ComponentScores",
    "ConvergenceTrace",
    "GeneratedQuestion",
    "HttpEmbeddingProvider",
    "HumanAnnotation",
    "ImageRef",
    "JudgmentRecord",
    "MajorityVoteBaseline",
    "ModelId",
    "ModelProfile",
    "OptimizerConfig",
    "PeerReviewBaseline",
    "PromptTemplate",
    "RatingVoteBaseline",
    "ReferenceScores",
    "RunContext",
    "ScoreWeights",
    "StubEmbeddingProvider",
    "SyntheticAbility",
    "SyntheticTruth",
    "TranscriptWriter",
    "TriadPlan",
    "UpmeRanker",
    "Verdict",
    "answers_for_verbosity",
    "bias_test",
    "canonical_order",
    "clip_correlation",
    "clip_pairwise",
    "combine",
    "default_template",
    "enumerate_triads",
    "estimate_scores",
    "fixed_weight_scores",
    "human_alignment",
    "judge_accuracy",
    "load_transcript",
    "majority_vote",
    "make_provider",
    "mse_loss",
    "optimize",
    "parse_verdict",
    "pearson",
    "peer_review_baseline",
    "permutation_entropy",
    "rating_vote",
    "render_prompt",
    "run_review",
    "score_correct",
    "score_pair",
    "score_visual",
    "segment_starts",
    "spearman",
]

"""Vision-language judgment scoring.

Combines three pairwise criteria into one score per candidate: correctness
(judge verdict), visual understanding (judge verdict under the visual
rubric), and image-text correlation (averaged cosine similarity over
77-token windows, converted to a pairwise {0, 0.5, 1} outcome).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import EmbeddingProvider
from .errors import InvalidInputError
from .model import CandidateAnswer, ImageRef, Side, Verdict

logger = logging.getLogger(__name__)

SEGMENT_TOKENS = 77
SEGMENT_COUNT = 5
CLIP_TIE_EPSILON = 0.005

DEFAULT_GAMMAS = (0.4, 0.4, 0.2)


@dataclass(frozen=True)
class ScoreWeights:
    """Criterion weights (correctness, visual, clip); normalized to sum 1."""

    gamma1: float = DEFAULT_GAMMAS[0]
    gamma2: float = DEFAULT_GAMMAS[1]
    gamma3: float = DEFAULT_GAMMAS[2]

    @staticmethod
    def from_raw(gamma1: float, gamma2: float, gamma3: float) -> "ScoreWeights":
        """Normalize nonnegative weights; warn when they did not sum to 1."""
        raw = (gamma1, gamma2, gamma3)
        if any(g < 0 for g in raw):
            raise InvalidInputError(f"criterion weights must be >= 0, got {raw}")
        total = sum(raw)
        if total <= 0:
            raise InvalidInputError("criterion weights must not all be zero")
        if abs(total - 1.0) > 1e-9:
            logger.warning("criterion weights %s sum to %g; normalizing", raw, total)
        return ScoreWeights(gamma1 / total, gamma2 / total, gamma3 / total)

    def __post_init__(self):
        total = self.gamma1 + self.gamma2 + self.gamma3
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(
                f"criterion weights must sum to 1 (got {total}); use ScoreWeights.from_raw"
            )


@dataclass(frozen=True)
class ComponentScores:
    """Per-candidate criterion scores feeding the weighted combination."""

    s_correct: float
    s_visual: float
    s_clip_raw: float
    s_clip_pair: float


def score_correct(verdict: Verdict, side: Side) -> float:
    """1 if this side won the correctness verdict, 0.5 on a tie, else 0."""
    if verdict is Verdict.TIE:
        return 0.5
    won = (verdict is Verdict.WIN_A) == (side == "a")
    return 1.0 if won else 0.0


def score_visual(verdict: Verdict, side: Side) -> float:
    """Same win/tie/loss mapping, for the visual-understanding verdict."""
    return score_correct(verdict, side)


def segment_starts(n_tokens: int) -> list[int]:
    """Starting token indices of the windows covering a text of n_tokens.

    One window when the text fits the 77-token limit; otherwise five starts
    spread evenly over [0, n-77] (floor rounding, duplicates removed), so
    consecutive windows overlap and every token is covered.
    """
    if n_tokens < 1:
        raise InvalidInputError(f"token count must be >= 1, got {n_tokens}")
    if n_tokens <= SEGMENT_TOKENS:
        return [0]
    span = n_tokens - SEGMENT_TOKENS
    starts = [span * k // (SEGMENT_COUNT - 1) for k in range(SEGMENT_COUNT)]
    deduped = []
    for s in starts:
        if not deduped or s != deduped[-1]:
            deduped.append(s)
    return deduped


def segment_texts(text: str, n_tokens: int) -> list[str]:
    """Slice text into the windows given by segment_starts.

    The provider contract only reports a token count, so token window
    [s, s+77) is mapped to the proportional character range. Both the stub
    and the sidecar apply this exact rule, which is what makes primary-side
    and server-side similarity agree.
    """
    starts = segment_starts(n_tokens)
    length = len(text)
    segments = []
    for s in starts:
        end_tok = min(s + SEGMENT_TOKENS, n_tokens)
        lo = round(s * length / n_tokens)
        hi = round(end_tok * length / n_tokens)
        segments.append(text[lo:max(hi, lo + 1)])
    return segments


def clip_correlation(
    image: ImageRef,
    answer: CandidateAnswer,
    provider: EmbeddingProvider,
    image_bytes: bytes,
) -> float:
    """Mean cosine similarity between the image and each answer window."""
    if not answer.text:
        raise InvalidInputError("answer text must be nonempty")
    n_tokens = provider.tokenize(answer.text)
    segments = segment_texts(answer.text, n_tokens)
    text_vecs = provider.embed_text(segments)
    image_vec = provider.embed_image(image_bytes)
    sims = [float(np.dot(image_vec, v)) for v in text_vecs]
    return float(np.mean(sims))


def clip_pairwise(clip_a: float, clip_b: float, epsilon: float = CLIP_TIE_EPSILON) -> tuple[float, float]:
    """Convert two raw cosines to the pairwise {0, 0.5, 1} scale.

    Differences within epsilon count as a tie so embedding noise does not
    manufacture winners.
    """
    if epsilon < 0:
        raise InvalidInputError("epsilon must be >= 0")
    if clip_a > clip_b + epsilon:
        return 1.0, 0.0
    if clip_b > clip_a + epsilon:
        return 0.0, 1.0
    return 0.5, 0.5


def combine(components: ComponentScores, weights: ScoreWeights) -> float:
    """Weighted sum of the three pairwise criteria."""
    return (
        weights.gamma1 * components.s_correct
        + weights.gamma2 * components.s_visual
        + weights.gamma3 * components.s_clip_pair
    )


def score_pair(
    verdict_correct: Verdict,
    verdict_visual: Verdict,
    clip_a: float,
    clip_b: float,
    weights: ScoreWeights,
    epsilon: float = CLIP_TIE_EPSILON,
) -> tuple[ComponentScores, ComponentScores, float, float]:
    """Score both candidates of one judgment.

    Returns (components_a, components_b, s_vl_a, s_vl_b) with
    s_vl_b = 1 - s_vl_a, so the pair is complementary by construction and not
    merely up to rounding.
    """
    pair_a, pair_b = clip_pairwise(clip_a, clip_b, epsilon)
    comp_a = ComponentScores(
        s_correct=score_correct(verdict_correct, "a"),
        s_visual=score_visual(verdict_visual, "a"),
        s_clip_raw=clip_a,
        s_clip_pair=pair_a,
    )
    comp_b = ComponentScores(
        s_correct=score_correct(verdict_correct, "b"),
        s_visual=score_visual(verdict_visual, "b"),
        s_clip_raw=clip_b,
        s_clip_pair=pair_b,
    )
    s_a = combine(comp_a, weights)
    return comp_a, comp_b, s_a, 1.0 - s_a


def components_from_record(record, side: Side, epsilon: float = CLIP_TIE_EPSILON) -> ComponentScores:
    """Rebuild one side's component scores from a stored judgment record."""
    pair_a, pair_b = clip_pairwise(record.clip_a, record.clip_b, epsilon)
    if side == "a":
        clip_raw, clip_pair = record.clip_a, pair_a
    else:
        clip_raw, clip_pair = record.clip_b, pair_b
    return ComponentScores(
        s_correct=score_correct(record.verdict_correct, side),
        s_visual=score_visual(record.verdict_visual, side),
        s_clip_raw=clip_raw,
        s_clip_pair=clip_pair,
    )


def recombine_residual(record, weights: ScoreWeights, epsilon: float = CLIP_TIE_EPSILON) -> float:
    """Largest deviation between stored s_vl values and their recomputation."""
    ra = abs(combine(components_from_record(record, "a", epsilon), weights) - record.s_vl_a)
    rb = abs(combine(components_from_record(record, "b", epsilon), weights) - record.s_vl_b)
    return max(ra, rb)

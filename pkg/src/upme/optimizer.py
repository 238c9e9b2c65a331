"""Confidence-weight optimization over a judgment transcript.

Estimated scores are weight-normalized means of each model's received
judgment scores; the optimization loop alternates score estimation with a
damped weight update toward the EMA-smoothed scores until the weights stop
moving. At the fixed point, weights and estimated scores coincide.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    DegenerateWeightsError,
    DimensionError,
    InvalidInputError,
    MissingReferenceError,
    NumericalError,
)
from .model import JudgmentRecord
from .validation import check_records, check_unit_interval_vector

PRESET_CONSISTENT = "consistent"
PRESET_UNIFORM = "uniform"
PRESET_REVERSE = "reverse"


@dataclass(frozen=True)
class OptimizerConfig:
    alpha_ema: float = 0.2
    beta_damping: float = 0.3
    max_epochs: int = 30
    tol: float = 1e-4
    init_weights: str | Sequence[float] = "uniform"

    def __post_init__(self):
        if not 0.0 < self.alpha_ema <= 1.0:
            raise InvalidInputError("alpha_ema must be in (0, 1]")
        if not 0.0 < self.beta_damping <= 1.0:
            raise InvalidInputError("beta_damping must be in (0, 1]")
        if self.max_epochs < 1:
            raise InvalidInputError("max_epochs must be >= 1")
        if self.tol <= 0:
            raise InvalidInputError("tol must be positive")


@dataclass
class ConvergenceTrace:
    """Per-epoch loss, weights, and smoothed scores for one optimization."""

    model_names: list[str]
    losses: list[float] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    scores: list[np.ndarray] = field(default_factory=list)
    converged: bool = False

    def append(self, loss: float, w: np.ndarray, s: np.ndarray) -> None:
        self.losses.append(float(loss))
        self.weights.append(w.copy())
        self.scores.append(s.copy())

    def __len__(self) -> int:
        return len(self.losses)

    def to_csv(self, path: str | Path | None = None) -> str:
        """epoch, loss, then weight and score columns in canonical order."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = (
            ["epoch", "loss"]
            + [f"w_{n}" for n in self.model_names]
            + [f"g_{n}" for n in self.model_names]
        )
        writer.writerow(header)
        for epoch, (loss, w, s) in enumerate(zip(self.losses, self.weights, self.scores)):
            writer.writerow(
                [epoch, repr(loss)] + [repr(float(v)) for v in w] + [repr(float(v)) for v in s]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _candidate_arrays_scored(
    records: Sequence[JudgmentRecord], order: Sequence[str], score_of
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    index = {name: i for i, name in enumerate(order)}
    cand = np.empty(2 * len(records), dtype=int)
    rev = np.empty(2 * len(records), dtype=int)
    val = np.empty(2 * len(records), dtype=float)
    for k, rec in enumerate(records):
        cand[2 * k] = index[rec.candidate_a]
        cand[2 * k + 1] = index[rec.candidate_b]
        rev[2 * k] = rev[2 * k + 1] = index[rec.reviewer]
        if score_of is None:
            val[2 * k], val[2 * k + 1] = rec.s_vl_a, rec.s_vl_b
        else:
            val[2 * k], val[2 * k + 1] = score_of(rec, "a"), score_of(rec, "b")
    return cand, rev, val


def _weighted_means(
    cand: np.ndarray, rev: np.ndarray, val: np.ndarray, w: np.ndarray, m: int,
    order: Sequence[str],
) -> np.ndarray:
    if not np.any(w > 0):
        raise DegenerateWeightsError("all confidence weights are zero")
    wr = w[rev]
    num = np.bincount(cand, weights=val * wr, minlength=m)
    den = np.bincount(cand, weights=wr, minlength=m)
    if np.any(den == 0):
        silent = [order[i] for i in np.nonzero(den == 0)[0]]
        raise DegenerateWeightsError(
            f"zero total reviewer weight for models {silent}; scores undefined"
        )
    return num / den


def estimate_scores(
    records: Sequence[JudgmentRecord],
    weights: Sequence[float],
    order: Sequence[str] | None = None,
    score_of=None,
) -> np.ndarray:
    """Weight-normalized mean of each model's received judgment scores.

    For model j: sum of (score for j in record) * w_reviewer over usable
    records with j as a candidate, divided by the sum of those reviewer
    weights. Normalization keeps scores on [0, 1] and makes the result
    invariant to rescaling all weights by a positive constant.

    ``score_of(record, side)`` overrides the per-record score (default: the
    stored s_vl values); baselines use it to aggregate correctness only.
    """
    usable, names = check_records(records)
    if order is None:
        order = names
    m = len(order)
    w = check_unit_interval_vector(weights, None, "weights") if score_of is None else np.asarray(weights, dtype=float)
    if w.shape[0] != m:
        raise DimensionError(f"weights length {w.shape[0]} != pool size {m}")
    cand, rev, val = _candidate_arrays_scored(usable, order, score_of)
    return _weighted_means(cand, rev, val, w, m, order)


def mse_loss(scores: Sequence[float], weights: Sequence[float]) -> float:
    """Mean squared disagreement between estimated scores and weights."""
    g = np.asarray(scores, dtype=float)
    w = np.asarray(weights, dtype=float)
    if g.shape != w.shape:
        raise DimensionError(f"length mismatch: {g.shape} vs {w.shape}")
    d = g - w
    return float(np.dot(d, d) / g.shape[0])


def _initial_weights(cfg: OptimizerConfig, m: int) -> np.ndarray:
    if isinstance(cfg.init_weights, str):
        if cfg.init_weights != "uniform":
            raise InvalidInputError(f"unknown init_weights preset {cfg.init_weights!r}")
        return np.full(m, 0.5)
    return check_unit_interval_vector(cfg.init_weights, m, "init_weights").copy()


def optimize(
    records: Sequence[JudgmentRecord],
    cfg: OptimizerConfig = OptimizerConfig(),
) -> tuple[np.ndarray, np.ndarray, ConvergenceTrace]:
    """Run the weight/score consistency loop to a fixed point.

    Each epoch re-estimates scores under the current weights, smooths them
    with an EMA, and moves the weights a damped step toward the smoothed
    scores (clamped to [0, 1]). Stops when the largest weight change drops
    below ``tol`` or after ``max_epochs`` epochs. Returns the final smoothed
    scores, final weights, and the full per-epoch trace.
    """
    usable, names = check_records(records)
    m = len(names)
    trace = ConvergenceTrace(model_names=list(names))
    cand, rev, val = _candidate_arrays_scored(usable, names, None)

    w = _initial_weights(cfg, m)
    smoothed = _weighted_means(cand, rev, val, w, m, names)
    trace.append(mse_loss(smoothed, w), w, smoothed)

    for _ in range(cfg.max_epochs):
        w_next = np.clip((1.0 - cfg.beta_damping) * w + cfg.beta_damping * smoothed, 0.0, 1.0)
        scores = _weighted_means(cand, rev, val, w_next, m, names)
        smoothed = (1.0 - cfg.alpha_ema) * smoothed + cfg.alpha_ema * scores
        if not (np.all(np.isfinite(w_next)) and np.all(np.isfinite(smoothed))):
            raise NumericalError("non-finite value during optimization", trace=trace)
        step = float(np.max(np.abs(w_next - w)))
        w = w_next
        trace.append(mse_loss(smoothed, w), w, smoothed)
        if step < cfg.tol:
            trace.converged = True
            break
    return smoothed, w, trace


def preset_weights(preset: str, order: Sequence[str], reference_ranking: Sequence[str] | None) -> np.ndarray:
    """Weight vector for a named preset, aligned to ``order``.

    Consistent: descending 1, 1-1/(m-1), ..., 0 by reference rank (best model
    first in ``reference_ranking``). Reverse: the same ladder ascending.
    Uniform: all ones, no reference needed.
    """
    m = len(order)
    if preset == PRESET_UNIFORM:
        return np.ones(m)
    if preset not in (PRESET_CONSISTENT, PRESET_REVERSE):
        raise InvalidInputError(f"unknown weight preset {preset!r}")
    if reference_ranking is None:
        raise MissingReferenceError(f"preset {preset!r} needs a reference ranking")
    if sorted(reference_ranking) != sorted(order):
        raise MissingReferenceError(
            "reference ranking must be a permutation of the pool"
        )
    if m < 2:
        raise InvalidInputError("presets need at least two models")
    step = 1.0 / (m - 1)
    ladder = {name: 1.0 - rank * step for rank, name in enumerate(reference_ranking)}
    w = np.array([ladder[name] for name in order])
    return w if preset == PRESET_CONSISTENT else 1.0 - w


def fixed_weight_scores(
    records: Sequence[JudgmentRecord],
    preset: str,
    reference_ranking: Sequence[str] | None = None,
) -> np.ndarray:
    """One estimate_scores pass under a fixed preset weight vector."""
    _, names = check_records(records)
    w = preset_weights(preset, names, reference_ranking)
    return estimate_scores(records, w, names)


class UpmeRanker(BaseEstimator):
    """Estimator wrapper around the consistency-optimization loop.

    fit(records) learns per-model scores and confidence weights from a list
    of judgment records; attributes follow the fitted-suffix convention:

        model_names_   canonical model order
        scores_        final EMA-smoothed estimated scores
        weights_       final confidence weights
        trace_         full ConvergenceTrace
        n_epochs_      trace length minus one
        converged_     whether the tol criterion was met
        ranking_       model names sorted by score, best first
    """

    def __init__(
        self,
        alpha_ema: float = 0.2,
        beta_damping: float = 0.3,
        max_epochs: int = 30,
        tol: float = 1e-4,
        init_weights: str | Sequence[float] = "uniform",
    ):
        self.alpha_ema = alpha_ema
        self.beta_damping = beta_damping
        self.max_epochs = max_epochs
        self.tol = tol
        self.init_weights = init_weights

    def _config(self) -> OptimizerConfig:
        return OptimizerConfig(
            alpha_ema=self.alpha_ema,
            beta_damping=self.beta_damping,
            max_epochs=self.max_epochs,
            tol=self.tol,
            init_weights=self.init_weights,
        )

    def fit(self, records: Sequence[JudgmentRecord], y=None):
        _, names = check_records(records)
        scores, weights, trace = optimize(records, self._config())
        self.model_names_ = list(names)
        self.scores_ = scores
        self.weights_ = weights
        self.trace_ = trace
        self.n_epochs_ = len(trace) - 1
        self.converged_ = trace.converged
        return self

    @property
    def ranking_(self) -> list[str]:
        order = np.argsort(-self.scores_, kind="stable")
        return [self.model_names_[i] for i in order]

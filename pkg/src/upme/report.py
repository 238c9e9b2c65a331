"""Evaluation report: rankings per method plus the metrics battery.

Everything here is a pure function of the transcript (and the optional
reference scores / annotations), so regenerating a report from a run
directory reproduces it byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import majority_vote, peer_review_baseline, rating_vote
from .errors import DegenerateTableError, UpmeError
from .metrics import (
    AnnotationTruth,
    HumanAnnotation,
    ReferenceScores,
    TruthSource,
    bias_test,
    human_alignment,
    judge_accuracy,
    pearson,
    permutation_entropy,
    spearman,
    verbosity_selections,
)
from .model import JudgmentRecord
from .optimizer import (
    PRESET_CONSISTENT,
    PRESET_REVERSE,
    PRESET_UNIFORM,
    OptimizerConfig,
    fixed_weight_scores,
    optimize,
)
from .validation import check_records

REPORT_SCHEMA_VERSION = 1


def _ranking(names: Sequence[str], scores: np.ndarray) -> list[str]:
    order = np.argsort(-np.asarray(scores), kind="stable")
    return [names[i] for i in order]


def _scores_dict(names: Sequence[str], scores: np.ndarray) -> dict[str, float]:
    return {n: float(s) for n, s in zip(names, scores)}


def _metric_block(scores: np.ndarray, reference: np.ndarray, ref_order: np.ndarray) -> dict:
    ordered = np.asarray(scores)[ref_order]
    return {
        "pearson": pearson(scores, reference),
        "spearman": spearman(scores, reference),
        "permutation_entropy": permutation_entropy(ordered),
    }


def build_report(
    records: Sequence[JudgmentRecord],
    optimizer_config: OptimizerConfig | None = None,
    reference: ReferenceScores | None = None,
    annotations: Sequence[HumanAnnotation] | None = None,
    truth: TruthSource | None = None,
) -> dict:
    """Assemble the full evaluation report as a JSON-ready dict.

    The correlation/entropy block appears only when reference scores are
    given (entropy is measured on the score list ordered by the reference,
    so it needs one); bias and judge-accuracy blocks appear only when a
    truth source or annotations exist.
    """
    usable, names = check_records(records)
    cfg = optimizer_config or OptimizerConfig()

    scores, weights, trace = optimize(records, cfg)
    methods: dict[str, dict] = {
        "upme": {
            "scores": _scores_dict(names, scores),
            "weights": _scores_dict(names, weights),
            "ranking": _ranking(names, scores),
            "epochs": len(trace) - 1,
            "converged": trace.converged,
            "final_loss": trace.losses[-1],
        },
        "peer_review": {},
        "majority_vote": {},
        "rating_vote": {},
    }
    for label, fn in (
        ("peer_review", peer_review_baseline),
        ("majority_vote", majority_vote),
        ("rating_vote", rating_vote),
    ):
        vec = fn(records)
        methods[label] = {"scores": _scores_dict(names, vec), "ranking": _ranking(names, vec)}

    report = {
        "schema": REPORT_SCHEMA_VERSION,
        "pool": list(names),
        "record_count": len(records),
        "usable_record_count": len(usable),
        "parse_failure_count": sum(1 for r in records if r.flags.parse_failure),
        "failed_count": sum(1 for r in records if r.flags.failed),
        "optimizer": {
            "alpha_ema": cfg.alpha_ema,
            "beta_damping": cfg.beta_damping,
            "max_epochs": cfg.max_epochs,
            "tol": cfg.tol,
        },
        "methods": methods,
    }

    if reference is not None:
        ref = reference.aligned_to(names)
        ref_order = np.argsort(-ref, kind="stable")
        ref_ranking = [names[i] for i in ref_order]
        metrics = {
            label: _metric_block(np.array(list(block["scores"].values())), ref, ref_order)
            for label, block in methods.items()
        }
        for preset in (PRESET_CONSISTENT, PRESET_UNIFORM, PRESET_REVERSE):
            vec = fixed_weight_scores(records, preset, ref_ranking)
            metrics[f"preset_{preset}"] = _metric_block(vec, ref, ref_order)
            methods[f"preset_{preset}"] = {
                "scores": _scores_dict(names, vec),
                "ranking": _ranking(names, vec),
            }
        report["metrics"] = {
            "reference_source": reference.source,
            "reference_scores": _scores_dict(names, ref),
            "per_method": metrics,
        }

    if truth is not None:
        report["judge_accuracy"] = {
            kind: {k: float(v) for k, v in accs.items()}
            for kind, accs in judge_accuracy(records, truth).items()
        }
        try:
            bias = bias_test(verbosity_selections(records, truth))
            report["bias"] = {
                "verbosity": {
                    "chi_square": bias.chi_square,
                    "p_value": bias.p_value,
                    "phi": bias.phi,
                    "contingency": [list(row) for row in bias.contingency],
                    "n": bias.n,
                }
            }
        except (DegenerateTableError, UpmeError) as exc:
            report["bias"] = {"verbosity": {"available": False, "reason": str(exc)}}

    if annotations:
        agreement, consistency = human_alignment(records, annotations)
        report["human_alignment"] = {
            "agreement_pct": agreement,
            "consistency_pct": consistency,
            "n_annotations": len(annotations),
        }

    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_report(report: dict, path: str | Path) -> None:
    Path(path).write_text(report_to_json(report), encoding="utf-8")

"""Synthetic-pool studies: convergence sweeps, ranking recovery, and the
sample-size curve. These drive the whole pipeline end to end with synthetic
backends and the stub embedding provider, so they run anywhere in seconds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backends import BackendGateway, BackendKind, ModelProfile, SyntheticAbility, SyntheticTruth
from .baselines import peer_review_baseline
from .embedding import StubEmbeddingProvider
from .engine import RunContext, TriadPlan, enumerate_triads, run_review
from .errors import InvalidInputError
from .images import synthetic_image_set
from .metrics import spearman
from .model import JudgmentRecord
from .optimizer import (
    PRESET_CONSISTENT,
    PRESET_REVERSE,
    PRESET_UNIFORM,
    OptimizerConfig,
    fixed_weight_scores,
    optimize,
)
from .scoring import ScoreWeights

logger = logging.getLogger(__name__)

DEFAULT_ABILITIES = (0.95, 0.85, 0.75, 0.65, 0.55, 0.45)


def synthetic_pool(
    abilities: Sequence[float],
    verbosity: Sequence[float] | None = None,
    name_prefix: str = "syn",
) -> dict[str, ModelProfile]:
    """Profiles syn-0..syn-(m-1) with judge skill tied to answer skill."""
    if verbosity is None:
        verbosity = [1.0] * len(abilities)
    if len(verbosity) != len(abilities):
        raise InvalidInputError("verbosity list must match abilities")
    profiles = {}
    for i, (skill, verb) in enumerate(zip(abilities, verbosity)):
        name = f"{name_prefix}-{i}"
        profiles[name] = ModelProfile(
            name=name,
            kind=BackendKind.SYNTHETIC,
            ability=SyntheticAbility(
                answer_skill=skill, judge_skill=skill,
                verbosity_factor=verb, rng_seed=i + 1,
            ),
        )
    return profiles


@dataclass
class SyntheticRun:
    records: list[JudgmentRecord]
    profiles: dict[str, ModelProfile]
    names: list[str]
    abilities_by_name: dict[str, float]
    global_seed: int

    def truth(self) -> SyntheticTruth:
        return SyntheticTruth(self.profiles, self.global_seed)

    def latent(self) -> np.ndarray:
        return np.array([self.abilities_by_name[n] for n in self.names])

    def reference_ranking(self) -> list[str]:
        return sorted(self.names, key=lambda n: -self.abilities_by_name[n])


def run_synthetic_review(
    abilities: Sequence[float] = DEFAULT_ABILITIES,
    n_images: int = 25,
    global_seed: int = 1,
    verbosity: Sequence[float] | None = None,
    gamma: ScoreWeights | None = None,
    max_workers: int = 1,
    plan: TriadPlan | None = None,
) -> SyntheticRun:
    """Full enumeration peer review over a synthetic pool; fully deterministic."""
    profiles = synthetic_pool(abilities, verbosity)
    provider = StubEmbeddingProvider()
    gateway = BackendGateway(
        profiles, global_seed=global_seed, tokenizer=provider.tokenize
    )
    images = {ref.image_id: ref for ref in synthetic_image_set(n_images)}
    if plan is None:
        plan = enumerate_triads(list(profiles), sorted(images))
    ctx = RunContext(
        gateway=gateway,
        provider=provider,
        images=images,
        weights=gamma or ScoreWeights(),
        global_seed=global_seed,
        max_workers=max_workers,
    )
    records = run_review(plan, ctx)
    names = sorted(profiles)
    return SyntheticRun(
        records=records,
        profiles=profiles,
        names=names,
        abilities_by_name={n: profiles[n].ability.answer_skill for n in names},
        global_seed=global_seed,
    )


def convergence_study(
    abilities: Sequence[float] = DEFAULT_ABILITIES,
    n_images: int = 25,
    n_inits: int = 64,
    transcript_seed: int = 1,
    cfg: OptimizerConfig | None = None,
    records: Sequence[JudgmentRecord] | None = None,
) -> list[dict]:
    """Optimize one synthetic transcript from many random weight inits.

    Returns one row per init: epochs, convergence flag, final loss, and the
    largest uphill loss step after epoch 2 (0 means monotone).
    """
    base = cfg or OptimizerConfig()
    if records is None:
        records = run_synthetic_review(abilities, n_images, transcript_seed).records
    rows = []
    for init_seed in range(n_inits):
        rng = np.random.default_rng(init_seed)
        init = rng.uniform(0.0, 1.0, size=len(abilities))
        run_cfg = OptimizerConfig(
            alpha_ema=base.alpha_ema,
            beta_damping=base.beta_damping,
            max_epochs=base.max_epochs,
            tol=base.tol,
            init_weights=init,
        )
        scores, weights, trace = optimize(records, run_cfg)
        losses = np.array(trace.losses)
        uphill = 0.0
        if len(losses) > 3:
            uphill = float(np.max(np.diff(losses[2:]), initial=0.0))
        rows.append(
            {
                "init_seed": init_seed,
                "epochs": len(trace) - 1,
                "converged": trace.converged,
                "final_loss": float(losses[-1]),
                "max_uphill_after_2": uphill,
            }
        )
    return rows


def ranking_recovery_study(
    abilities: Sequence[float] = DEFAULT_ABILITIES,
    n_images: int = 25,
    seeds: Sequence[int] = tuple(range(1, 21)),
    cfg: OptimizerConfig | None = None,
) -> list[dict]:
    """Spearman(estimated scores, latent abilities) per seed and method."""
    rows = []
    for seed in seeds:
        run = run_synthetic_review(abilities, n_images, global_seed=seed)
        latent = run.latent()
        ref_ranking = run.reference_ranking()
        scores, _, trace = optimize(run.records, cfg or OptimizerConfig())
        row = {
            "seed": seed,
            "converged": trace.converged,
            "spearman_upme": spearman(scores, latent),
            "spearman_peer_review": spearman(peer_review_baseline(run.records), latent),
        }
        for preset in (PRESET_CONSISTENT, PRESET_UNIFORM, PRESET_REVERSE):
            vec = fixed_weight_scores(run.records, preset, ref_ranking)
            row[f"spearman_{preset}"] = spearman(vec, latent)
        rows.append(row)
    return rows


def sample_size_study(
    abilities: Sequence[float] = DEFAULT_ABILITIES,
    sizes: Sequence[int] = (5, 10, 15, 20, 25, 50, 100),
    seeds: Sequence[int] = tuple(range(1, 21)),
    cfg: OptimizerConfig | None = None,
) -> list[dict]:
    """Ranking recovery vs. image count.

    One full run at max(sizes) per seed; smaller sizes reuse its records
    filtered to the first n images, which is exactly the run that a smaller
    image set would have produced (all draws are content-addressed) and
    gives common random numbers across sizes.
    """
    sizes = sorted(sizes)
    top = sizes[-1]
    prefix_ids = [f"img-{i:03d}" for i in range(top)]
    rows = []
    for seed in seeds:
        run = run_synthetic_review(abilities, top, global_seed=seed)
        latent = run.latent()
        for size in sizes:
            keep = set(prefix_ids[:size])
            subset = [r for r in run.records if r.image_id in keep]
            scores, _, _ = optimize(subset, cfg or OptimizerConfig())
            rows.append(
                {
                    "size": size,
                    "seed": seed,
                    "spearman_upme": spearman(scores, latent),
                }
            )
    return rows


def mean_by(rows: Sequence[dict], group_key: str, value_key: str) -> dict:
    """Group rows by one key and average another."""
    groups: dict = {}
    for row in rows:
        groups.setdefault(row[group_key], []).append(row[value_key])
    return {k: float(np.mean(v)) for k, v in sorted(groups.items())}

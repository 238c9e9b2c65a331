"""Command-line surface: upme run | resume | report | simulate.

Exit codes: 0 success, 1 unexpected error, 2 invalid configuration,
3 backend/embedding failure, 4 failure-threshold abort, 5 refused resume
(config hash mismatch).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from .backends import BackendGateway, BackendKind, SyntheticTruth
from .config import RunConfig, load_config, parse_config_text, parse_kv_text
from .embedding import make_provider
from .engine import RunContext, enumerate_triads, run_review, sample_triads
from .errors import (
    BackendError,
    ConfigError,
    EmbeddingError,
    RefusedConfigMismatch,
    ThresholdAbortError,
    UpmeError,
)
from .metrics import load_annotations, load_reference_scores
from .optimizer import optimize
from .report import build_report, write_report
from .simulate import (
    DEFAULT_ABILITIES,
    convergence_study,
    mean_by,
    ranking_recovery_study,
    sample_size_study,
)
from .transcript import TranscriptWriter, load_transcript, truncate_to_records

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_THRESHOLD = 4
EXIT_CONFIG_MISMATCH = 5

SNAPSHOT_NAME = "config.upme"
HASH_NAME = "config.sha256"
TRANSCRIPT_NAME = "transcript.jsonl"
TRACE_NAME = "trace.csv"
REPORT_NAME = "report.json"


def _effective_config_text(config_path: Path, seed: int | None, sample_fraction: float | None) -> str:
    """CLI overrides become trailing lines; later keys win in the parser."""
    text = config_path.read_text(encoding="utf-8")
    extra = []
    if seed is not None:
        extra.append(f"seed = {seed}")
    if sample_fraction is not None:
        extra.append(f"sample_fraction = {sample_fraction}")
    if extra:
        text = text.rstrip("\n") + "\n" + "\n".join(extra) + "\n"
    return text


def _resolve_run_dir(config: RunConfig, cli_run_dir: str | None, config_path: Path) -> Path:
    if cli_run_dir:
        return Path(cli_run_dir)
    kv = parse_kv_text(config.raw_text)
    if "output_dir" in kv:
        out = Path(kv["output_dir"])
        return out if out.is_absolute() else config_path.parent / out
    raise ConfigError("no run directory: set output_dir in the config or pass --run-dir")


def _build_context(config: RunConfig, replay_records=None) -> tuple[RunContext, object]:
    provider = make_provider(config.embedding_provider)
    gateway = BackendGateway(
        config.profiles,
        global_seed=config.seed,
        tokenizer=provider.tokenize,
        replay_records=replay_records,
    )
    clock = (lambda i: float(i)) if config.uses_logical_clock() else (lambda i: time.time())
    ctx = RunContext(
        gateway=gateway,
        provider=provider,
        images={ref.image_id: ref for ref in config.images},
        weights=config.gamma,
        clip_epsilon=config.clip_epsilon,
        global_seed=config.seed,
        clock=clock,
        failure_threshold=config.failure_threshold,
        max_workers=config.max_workers,
    )
    return ctx, provider


def _load_replay_records(config: RunConfig):
    sources = {
        p.replay_source for p in config.profiles.values() if p.kind is BackendKind.REPLAY
    }
    if not sources:
        return None
    if len(sources) > 1:
        raise ConfigError("all replay models must share one replay_source transcript")
    source = sources.pop()
    path = Path(source)
    if not path.is_absolute():
        path = Path(config.source_path).parent / path
    return load_transcript(path)


def _plan_for(config: RunConfig):
    plan = enumerate_triads(list(config.profiles), [ref.image_id for ref in config.images])
    if config.sample_fraction < 1.0:
        plan = sample_triads(plan, config.sample_fraction, config.seed)
    return plan


def _synthetic_truth(config: RunConfig):
    if all(p.kind is BackendKind.SYNTHETIC for p in config.profiles.values()):
        return SyntheticTruth(config.profiles, config.seed)
    return None


def _finalize(config: RunConfig, records, run_dir: Path, reference=None, annotations=None) -> None:
    _, _, trace = optimize(records, config.optimizer)
    trace.to_csv(run_dir / TRACE_NAME)
    report = build_report(
        records,
        optimizer_config=config.optimizer,
        reference=reference,
        annotations=annotations,
        truth=_synthetic_truth(config),
    )
    write_report(report, run_dir / REPORT_NAME)
    upme = report["methods"]["upme"]
    print(f"pool: {', '.join(report['pool'])}")
    print(f"records: {report['usable_record_count']}/{report['record_count']} usable")
    print(f"upme ranking: {' > '.join(upme['ranking'])}")
    print(
        f"converged: {upme['converged']} after {upme['epochs']} epochs "
        f"(final loss {upme['final_loss']:.3g})"
    )


def cmd_run(args) -> int:
    config_path = Path(args.config)
    text = _effective_config_text(config_path, args.seed, args.sample_fraction)
    config = parse_config_text(text, source_path=str(config_path), base_dir=config_path.parent)
    run_dir = _resolve_run_dir(config, args.run_dir, config_path)
    run_dir.mkdir(parents=True, exist_ok=True)

    transcript_path = run_dir / TRANSCRIPT_NAME
    if transcript_path.exists():
        raise ConfigError(
            f"{transcript_path} already exists; use 'upme resume' to continue it"
        )
    (run_dir / SNAPSHOT_NAME).write_text(config.raw_text, encoding="utf-8")
    (run_dir / HASH_NAME).write_text(config.config_hash() + "\n", encoding="utf-8")

    ctx, _ = _build_context(config, _load_replay_records(config))
    plan = _plan_for(config)
    logger.info("running %d triads over %d images", len(plan), len(config.images))
    with TranscriptWriter(transcript_path) as writer:
        records = run_review(plan, ctx, sink=writer.append)
    _finalize(config, records, run_dir)
    return EXIT_OK


def _load_run_dir(run_dir: Path) -> RunConfig:
    snapshot = run_dir / SNAPSHOT_NAME
    hash_file = run_dir / HASH_NAME
    if not snapshot.exists() or not hash_file.exists():
        raise ConfigError(f"{run_dir} is not a run directory (missing config snapshot)")
    text = snapshot.read_text(encoding="utf-8")
    expected = hash_file.read_text(encoding="utf-8").strip()
    actual = hashlib.sha256(text.encode("utf-8")).hexdigest()
    if actual != expected:
        raise RefusedConfigMismatch(
            f"config snapshot in {run_dir} was altered (hash {actual[:12]} != stored {expected[:12]})"
        )
    return parse_config_text(text, source_path=str(snapshot), base_dir=run_dir)


def cmd_resume(args) -> int:
    run_dir = Path(args.run_dir)
    config = _load_run_dir(run_dir)
    transcript_path = run_dir / TRANSCRIPT_NAME
    done_records = (
        load_transcript(transcript_path, tolerate_partial_tail=True)
        if transcript_path.exists()
        else []
    )
    truncate_to_records(transcript_path, done_records)
    plan = _plan_for(config)
    done = {r.iteration: r for r in done_records}
    unexpected = [i for i in done if i >= len(plan)]
    if unexpected:
        raise ConfigError(
            f"transcript has records beyond the plan ({unexpected[:3]}...); wrong run dir?"
        )
    remaining = len(plan) - len(done)
    logger.info("resuming: %d of %d triads already recorded", len(done), len(plan))
    if remaining == 0:
        print(f"run already complete ({len(plan)} records); refreshing outputs")
    ctx, _ = _build_context(config, _load_replay_records(config))
    with TranscriptWriter(transcript_path) as writer:
        records = run_review(plan, ctx, sink=writer.append, done=done)
    _finalize(config, records, run_dir)
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    config = _load_run_dir(run_dir)
    records = load_transcript(run_dir / TRANSCRIPT_NAME)
    reference = load_reference_scores(args.reference) if args.reference else None
    annotations = load_annotations(args.annotations) if args.annotations else None
    _finalize(config, records, run_dir, reference=reference, annotations=annotations)
    return EXIT_OK


def _parse_seed_list(value: str) -> list[int]:
    value = value.strip()
    if ":" in value:
        lo, hi = value.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(v.strip()) for v in value.split(",") if v.strip()]


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
            )


def cmd_simulate(args) -> int:
    scenario_path = Path(args.scenario)
    kv = parse_kv_text(scenario_path.read_text(encoding="utf-8"))
    kind = kv.get("scenario")
    if kind not in ("convergence", "ranking_recovery", "sample_size"):
        raise ConfigError(
            f"scenario must be convergence/ranking_recovery/sample_size, got {kind!r}"
        )
    abilities = (
        [float(v) for v in kv["abilities"].split(",")]
        if "abilities" in kv
        else list(DEFAULT_ABILITIES)
    )
    out_dir = Path(args.run_dir) if args.run_dir else scenario_path.parent / f"simulate-{kind}"
    out_dir.mkdir(parents=True, exist_ok=True)

    if kind == "convergence":
        rows = convergence_study(
            abilities=abilities,
            n_images=int(kv.get("images", 25)),
            n_inits=int(kv.get("inits", 64)),
            transcript_seed=int(kv.get("transcript_seed", 1)),
        )
        summary = {
            "scenario": kind,
            "runs": len(rows),
            "all_converged": all(r["converged"] for r in rows),
            "max_epochs": max(r["epochs"] for r in rows),
            "max_uphill_after_2": max(r["max_uphill_after_2"] for r in rows),
        }
    elif kind == "ranking_recovery":
        rows = ranking_recovery_study(
            abilities=abilities,
            n_images=int(kv.get("images", 25)),
            seeds=_parse_seed_list(kv.get("seeds", "1:20")),
        )
        summary = {
            "scenario": kind,
            "runs": len(rows),
            "mean_spearman": {
                key.removeprefix("spearman_"): float(sum(r[key] for r in rows) / len(rows))
                for key in rows[0]
                if key.startswith("spearman_")
            },
        }
    else:
        sizes = [int(v) for v in kv.get("sizes", "5,10,15,20,25,50,100").split(",")]
        rows = sample_size_study(
            abilities=abilities,
            sizes=sizes,
            seeds=_parse_seed_list(kv.get("seeds", "1:20")),
        )
        summary = {
            "scenario": kind,
            "runs": len(rows),
            "mean_spearman_by_size": mean_by(rows, "size", "spearman_upme"),
        }

    _write_csv(out_dir / f"{kind}.csv", rows)
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="upme",
        description="Peer-review evaluation of vision-language model pools",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured review run")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--run-dir", help="output directory (overrides output_dir)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--sample-fraction", type=float, help="random triad subsample")
    p_run.set_defaults(func=cmd_run)

    p_resume = sub.add_parser("resume", help="complete a partial run")
    p_resume.add_argument("--run-dir", required=True)
    p_resume.set_defaults(func=cmd_resume)

    p_report = sub.add_parser("report", help="recompute outputs from a transcript")
    p_report.add_argument("--run-dir", required=True)
    p_report.add_argument("--reference", help="two-column model/score table")
    p_report.add_argument("--annotations", help="line-delimited human annotations")
    p_report.set_defaults(func=cmd_report)

    p_sim = sub.add_parser("simulate", help="run synthetic-pool scenario studies")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--run-dir", help="output directory for CSV/JSON results")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except RefusedConfigMismatch as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG_MISMATCH
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (BackendError, EmbeddingError) as exc:
        logger.error("%s", exc)
        return EXIT_BACKEND
    except ThresholdAbortError as exc:
        logger.error("%s", exc)
        return EXIT_THRESHOLD
    except UpmeError as exc:
        logger.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

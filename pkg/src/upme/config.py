"""Declarative run configuration.

A run is described by a single flat key=value text file (dotted keys group
model and optimizer settings); secrets stay in environment variables. The
loader validates every module precondition before any network call.

Schema (see the shipped demo config for a working example):

    seed = 42                      global seed; all substreams derive from it
    images.synthetic = 25          or images.dir = <path> / images.manifest = <jsonl>
    gamma = 0.4, 0.4, 0.2          criterion weights; normalized with a warning
    clip_epsilon = 0.005           tie band on raw cosines
    embedding_provider = stub      or the sidecar base URL (http://host:port)
    clock = auto                   auto | logical | wall
    failure_threshold = 0.2        abort when this fraction of tuples fails
    max_workers = 4                concurrent triads
    sample_fraction = 1.0          random triad subsample for large pools
    optimizer.alpha_ema = 0.2
    optimizer.beta_damping = 0.3
    optimizer.max_epochs = 30
    optimizer.tol = 1e-4
    model.<name>.kind = synthetic  openai | anthropic | gemini | synthetic | replay
    model.<name>.answer_skill = 0.95     synthetic only
    model.<name>.judge_skill = 0.95      synthetic only
    model.<name>.verbosity = 1.0         synthetic only
    model.<name>.seed = 1                synthetic only
    model.<name>.endpoint = https://...  live kinds
    model.<name>.model = gpt-4o          wire model id (defaults to <name>)
    model.<name>.api_key_env = VAR       defaults to UPME_API_KEY_<NAME>
    model.<name>.replay_source = transcript.jsonl   replay only
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .backends import BackendKind, ModelProfile, SyntheticAbility
from .errors import ConfigError, InvalidInputError
from .images import content_hash, file_image_ref, synthetic_image_set
from .model import ImageRef, canonical_order
from .optimizer import OptimizerConfig
from .scoring import CLIP_TIE_EPSILON, ScoreWeights

LIVE_KINDS = (
    BackendKind.OPENAI_COMPATIBLE,
    BackendKind.ANTHROPIC_STYLE,
    BackendKind.GEMINI_STYLE,
)


@dataclass
class RunConfig:
    seed: int
    profiles: dict[str, ModelProfile]
    images: list[ImageRef]
    gamma: ScoreWeights
    optimizer: OptimizerConfig
    embedding_provider: str = "stub"
    clip_epsilon: float = CLIP_TIE_EPSILON
    clock: str = "auto"
    failure_threshold: float = 0.2
    max_workers: int = 4
    sample_fraction: float = 1.0
    raw_text: str = ""
    source_path: str = ""
    pool_order: list[str] = field(default_factory=list)

    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_text.encode("utf-8")).hexdigest()

    def uses_logical_clock(self) -> bool:
        if self.clock == "logical":
            return True
        if self.clock == "wall":
            return False
        return all(
            p.kind in (BackendKind.SYNTHETIC, BackendKind.REPLAY)
            for p in self.profiles.values()
        )


def parse_kv_text(text: str) -> dict[str, str]:
    """Flat key = value lines; '#' starts a comment; later keys override."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _as_float(kv: dict[str, str], key: str, default: float) -> float:
    try:
        return float(kv.get(key, default))
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {kv[key]!r}") from exc


def _as_int(kv: dict[str, str], key: str, default: int) -> int:
    try:
        return int(kv.get(key, default))
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {kv[key]!r}") from exc


def _float_list(value: str) -> list[float]:
    return [float(part.strip()) for part in value.split(",") if part.strip()]


def _parse_models(kv: dict[str, str]) -> dict[str, ModelProfile]:
    grouped: dict[str, dict[str, str]] = {}
    for key, value in kv.items():
        if not key.startswith("model."):
            continue
        parts = key.split(".")
        if len(parts) != 3:
            raise ConfigError(f"model keys look like model.<name>.<field>, got {key!r}")
        grouped.setdefault(parts[1], {})[parts[2]] = value

    profiles: dict[str, ModelProfile] = {}
    for name, fields in grouped.items():
        if "kind" not in fields:
            raise ConfigError(f"model.{name}.kind is required")
        try:
            kind = BackendKind(fields["kind"])
        except ValueError as exc:
            raise ConfigError(
                f"model.{name}.kind must be one of "
                f"{[k.value for k in BackendKind]}, got {fields['kind']!r}"
            ) from exc
        ability = None
        if kind is BackendKind.SYNTHETIC:
            try:
                ability = SyntheticAbility(
                    answer_skill=float(fields.get("answer_skill", 0.5)),
                    judge_skill=float(fields.get("judge_skill", 0.5)),
                    verbosity_factor=float(fields.get("verbosity", 1.0)),
                    rng_seed=int(fields.get("seed", 0)),
                )
            except (ValueError, InvalidInputError) as exc:
                raise ConfigError(f"model.{name}: {exc}") from exc
        profiles[name] = ModelProfile(
            name=name,
            kind=kind,
            endpoint=fields.get("endpoint", ""),
            model=fields.get("model", ""),
            api_key_env=fields.get("api_key_env", ""),
            ability=ability,
            replay_source=fields.get("replay_source", ""),
        )
    return profiles


def _parse_images(kv: dict[str, str], base_dir: Path) -> list[ImageRef]:
    specs = [k for k in ("images.synthetic", "images.dir", "images.manifest") if k in kv]
    if len(specs) != 1:
        raise ConfigError(
            "exactly one of images.synthetic / images.dir / images.manifest is required"
        )
    key = specs[0]
    if key == "images.synthetic":
        n = _as_int(kv, key, 0)
        if n < 1:
            raise ConfigError("images.synthetic must be >= 1")
        return synthetic_image_set(n)
    if key == "images.dir":
        directory = (base_dir / kv[key]).resolve() if not os.path.isabs(kv[key]) else Path(kv[key])
        if not directory.is_dir():
            raise ConfigError(f"images.dir {directory} is not a directory")
        paths = sorted(p for p in directory.iterdir() if p.is_file())
        if not paths:
            raise ConfigError(f"images.dir {directory} contains no files")
        return [file_image_ref(p) for p in paths]
    manifest = (base_dir / kv[key]).resolve() if not os.path.isabs(kv[key]) else Path(kv[key])
    refs = []
    for line in manifest.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        entry = json.loads(line)
        uri = entry["uri"]
        digest = entry.get("content_hash")
        if digest is None:
            path = Path(uri) if os.path.isabs(uri) else manifest.parent / uri
            digest = content_hash(path.read_bytes())
            uri = str(path)
        refs.append(ImageRef(image_id=entry["image_id"], uri=uri, content_hash=digest))
    if not refs:
        raise ConfigError(f"manifest {manifest} lists no images")
    return refs


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a run configuration file (fail fast, no network)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config_text(text, source_path=str(path), base_dir=path.parent)


def parse_config_text(text: str, source_path: str = "<inline>", base_dir: Path | None = None) -> RunConfig:
    kv = parse_kv_text(text)
    base_dir = base_dir or Path.cwd()

    profiles = _parse_models(kv)
    if len(profiles) < 3:
        raise ConfigError(f"need at least 3 models, got {len(profiles)}")
    pool_order = [m.name for m in canonical_order(profiles)]

    for name, profile in profiles.items():
        if profile.kind in LIVE_KINDS:
            if not profile.endpoint:
                raise ConfigError(f"model.{name}.endpoint is required for live backends")
            env = profile.api_key_env or profile.default_key_env()
            if not os.environ.get(env):
                raise ConfigError(
                    f"missing credential env var {env} for live model {name}"
                )
        if profile.kind is BackendKind.REPLAY and not profile.replay_source:
            raise ConfigError(f"model.{name}.replay_source is required for replay backends")

    gamma_raw = _float_list(kv.get("gamma", "0.4, 0.4, 0.2"))
    if len(gamma_raw) != 3:
        raise ConfigError(f"gamma needs exactly three weights, got {gamma_raw}")
    try:
        gamma = ScoreWeights.from_raw(*gamma_raw)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        optimizer = OptimizerConfig(
            alpha_ema=_as_float(kv, "optimizer.alpha_ema", 0.2),
            beta_damping=_as_float(kv, "optimizer.beta_damping", 0.3),
            max_epochs=_as_int(kv, "optimizer.max_epochs", 30),
            tol=_as_float(kv, "optimizer.tol", 1e-4),
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc

    provider = kv.get("embedding_provider", "stub")
    if provider != "stub" and not provider.startswith(("http://", "https://")):
        raise ConfigError(
            f"embedding_provider must be 'stub' or an http(s) URL, got {provider!r}"
        )

    clock = kv.get("clock", "auto")
    if clock not in ("auto", "logical", "wall"):
        raise ConfigError(f"clock must be auto/logical/wall, got {clock!r}")

    failure_threshold = _as_float(kv, "failure_threshold", 0.2)
    if not 0.0 <= failure_threshold <= 1.0:
        raise ConfigError("failure_threshold must lie in [0, 1]")

    sample_fraction = _as_float(kv, "sample_fraction", 1.0)
    if not 0.0 < sample_fraction <= 1.0:
        raise ConfigError("sample_fraction must lie in (0, 1]")

    max_workers = _as_int(kv, "max_workers", 4)
    if max_workers < 1:
        raise ConfigError("max_workers must be >= 1")

    return RunConfig(
        seed=_as_int(kv, "seed", 0),
        profiles=profiles,
        images=_parse_images(kv, base_dir),
        gamma=gamma,
        optimizer=optimizer,
        embedding_provider=provider,
        clip_epsilon=_as_float(kv, "clip_epsilon", CLIP_TIE_EPSILON),
        clock=clock,
        failure_threshold=failure_threshold,
        max_workers=max_workers,
        sample_fraction=sample_fraction,
        raw_text=text,
        source_path=source_path,
        pool_order=pool_order,
    )

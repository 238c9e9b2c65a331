"""Uniform interface to model backends.

Three families sit behind one gateway: live HTTP chat APIs (OpenAI,
Anthropic, and Gemini wire styles), a statistical synthetic backend for
desk-scale validation, and a replay backend that serves a stored transcript
verbatim. The gateway owns prompt rendering, verdict parsing, retry policy,
per-model caches, and the in-flight cap per backend.
"""

from __future__ import annotations

import base64
import hashlib
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Sequence

from .errors import BackendError, ConfigError, EmptyResponseError, InvalidInputError, JudgeParseError
from .images import ImageStore
from .model import CandidateAnswer, GeneratedQuestion, ImageRef, Verdict
from .prompts import (
    ANSWER_GEN,
    JUDGE_CORRECT,
    JUDGE_VISUAL,
    QUESTION_GEN,
    PromptTemplate,
    default_template,
    parse_verdict,
    render_prompt,
)
from .seeding import derive_bernoulli, derive_choice, derive_hex, derive_u64

if TYPE_CHECKING:
    from .model import JudgmentRecord

logger = logging.getLogger(__name__)

API_KEY_ENV_PREFIX = "UPME_API_KEY_"


class BackendKind(str, Enum):
    OPENAI_COMPATIBLE = "openai"
    ANTHROPIC_STYLE = "anthropic"
    GEMINI_STYLE = "gemini"
    SYNTHETIC = "synthetic"
    REPLAY = "replay"


@dataclass(frozen=True)
class SyntheticAbility:
    """Latent skill knobs for one synthetic pool member."""

    answer_skill: float = 0.5
    judge_skill: float = 0.5
    verbosity_factor: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("answer_skill", "judge_skill"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        if self.verbosity_factor < 0:
            raise InvalidInputError("verbosity_factor must be >= 0")


@dataclass(frozen=True)
class TransportPolicy:
    retries: int = 3
    backoff_base: float = 1.0
    timeout: float = 120.0


@dataclass(frozen=True)
class ModelProfile:
    """One pool member's identity and backend binding."""

    name: str
    kind: BackendKind
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""
    ability: SyntheticAbility | None = None
    replay_source: str = ""
    transport: TransportPolicy = field(default_factory=TransportPolicy)

    def default_key_env(self) -> str:
        slug = "".join(c if c.isalnum() else "_" for c in self.name).upper()
        return API_KEY_ENV_PREFIX + slug


def api_key_for(profile: ModelProfile) -> str:
    env = profile.api_key_env or profile.default_key_env()
    key = os.environ.get(env)
    if not key:
        raise ConfigError(f"missing credential env var {env} for model {profile.name}")
    return key


def _image_media_type(data: bytes) -> str:
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "image/png"
    if data[:3] == b"\xff\xd8\xff":
        return "image/jpeg"
    return "application/octet-stream"


# --- chat backends ---------------------------------------------------------


class ChatBackend:
    """One completion call; the gateway handles retries and parsing."""

    def complete(self, prompt: str, image_bytes: bytes, context: dict) -> str:
        raise NotImplementedError


class OpenAiCompatibleBackend(ChatBackend):
    """messages array with a base64 data-URI image part."""

    def __init__(self, profile: ModelProfile, session=None):
        import requests

        self.profile = profile
        self._session = session or requests.Session()

    def complete(self, prompt: str, image_bytes: bytes, context: dict) -> str:
        media = _image_media_type(image_bytes)
        data_uri = f"data:{media};base64," + base64.b64encode(image_bytes).decode("ascii")
        payload = {
            "model": self.profile.model or self.profile.name,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "text", "text": prompt},
                        {"type": "image_url", "image_url": {"url": data_uri}},
                    ],
                }
            ],
        }
        resp = self._session.post(
            self.profile.endpoint.rstrip("/") + "/chat/completions",
            json=payload,
            headers={"Authorization": f"Bearer {api_key_for(self.profile)}"},
            timeout=self.profile.transport.timeout,
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


class AnthropicStyleBackend(ChatBackend):
    def __init__(self, profile: ModelProfile, session=None):
        import requests

        self.profile = profile
        self._session = session or requests.Session()

    def complete(self, prompt: str, image_bytes: bytes, context: dict) -> str:
        payload = {
            "model": self.profile.model or self.profile.name,
            "max_tokens": 1024,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {
                            "type": "image",
                            "source": {
                                "type": "base64",
                                "media_type": _image_media_type(image_bytes),
                                "data": base64.b64encode(image_bytes).decode("ascii"),
                            },
                        },
                        {"type": "text", "text": prompt},
                    ],
                }
            ],
        }
        resp = self._session.post(
            self.profile.endpoint.rstrip("/") + "/v1/messages",
            json=payload,
            headers={
                "x-api-key": api_key_for(self.profile),
                "anthropic-version": "2023-06-01",
            },
            timeout=self.profile.transport.timeout,
        )
        resp.raise_for_status()
        return "".join(
            block.get("text", "") for block in resp.json()["content"]
        )


class GeminiStyleBackend(ChatBackend):
    def __init__(self, profile: ModelProfile, session=None):
        import requests

        self.profile = profile
        self._session = session or requests.Session()

    def complete(self, prompt: str, image_bytes: bytes, context: dict) -> str:
        model = self.profile.model or self.profile.name
        url = (
            self.profile.endpoint.rstrip("/")
            + f"/v1beta/models/{model}:generateContent"
        )
        payload = {
            "contents": [
                {
                    "parts": [
                        {"text": prompt},
                        {
                            "inline_data": {
                                "mime_type": _image_media_type(image_bytes),
                                "data": base64.b64encode(image_bytes).decode("ascii"),
                            }
                        },
                    ]
                }
            ]
        }
        resp = self._session.post(
            url,
            json=payload,
            params={"key": api_key_for(self.profile)},
            timeout=self.profile.transport.timeout,
        )
        resp.raise_for_status()
        parts = resp.json()["candidates"][0]["content"]["parts"]
        return "".join(p.get("text", "") for p in parts)


# --- synthetic side channel ------------------------------------------------

_PAD_WORDS = (
    "indeed", "overall", "notably", "furthermore", "broadly", "clearly",
    "arguably", "likewise", "moreover", "certainly", "plainly", "roughly",
)


def synthetic_answer_flags(
    global_seed: int,
    ability: SyntheticAbility,
    candidate: str,
    image_id: str,
    question_text: str,
) -> tuple[bool, bool]:
    """Latent (correct, visual_good) flags for one synthetic answer.

    Content-addressed: recomputable by the synthetic judge and by the test
    oracle without any shared mutable state.
    """
    correct = derive_bernoulli(
        ability.answer_skill,
        global_seed, "answer-correct", ability.rng_seed, candidate, image_id, question_text,
    )
    visual = derive_bernoulli(
        ability.answer_skill,
        global_seed, "answer-visual", ability.rng_seed, candidate, image_id, question_text,
    )
    return correct, visual


def _truth_verdict(flag_first: bool, flag_second: bool) -> Verdict:
    if flag_first and not flag_second:
        return Verdict.WIN_A
    if flag_second and not flag_first:
        return Verdict.WIN_B
    return Verdict.TIE


class SyntheticBackend(ChatBackend):
    """Statistical stand-in for a vision-language model.

    Answers carry hidden Bernoulli(answer_skill) quality flags; judgments
    match the flag-implied truth with probability 0.5 + 0.5 * judge_skill and
    otherwise pick uniformly between the two wrong options. Everything is a
    pure function of (global seed, model seed, content), so runs, resumes,
    and replays agree bit for bit.
    """

    def __init__(self, profile: ModelProfile, global_seed: int):
        if profile.ability is None:
            raise ConfigError(f"synthetic model {profile.name} needs ability parameters")
        self.profile = profile
        self.ability = profile.ability
        self.global_seed = global_seed

    def complete(self, prompt: str, image_bytes: bytes, context: dict) -> str:
        purpose = context["purpose"]
        if purpose == QUESTION_GEN:
            return self._question(context)
        if purpose == ANSWER_GEN:
            return self._answer(context)
        if purpose in (JUDGE_CORRECT, JUDGE_VISUAL):
            return self._judge(purpose, context)
        raise BackendError(f"synthetic backend cannot serve purpose {purpose!r}")

    def _question(self, ctx: dict) -> str:
        image_id = ctx["image_id"]
        tag = derive_hex(self.global_seed, "question", self.ability.rng_seed, self.profile.name, image_id)[:8]
        return (
            f"Considering image {image_id}, what is the most prominent "
            f"element and what is it doing? (probe {tag})"
        )

    def _answer(self, ctx: dict) -> str:
        image_id, question = ctx["image_id"], ctx["question_text"]
        tag = derive_hex(
            self.global_seed, "answer-text", self.ability.rng_seed, self.profile.name, image_id, question
        )
        base = (
            f"The image {image_id} mainly shows subject {tag[:6]}; "
            f"it appears {tag[6:10]} and is positioned near {tag[10:14]}."
        )
        n_pad = int(round(self.ability.verbosity_factor * (8 + derive_u64(
            self.global_seed, "answer-pad", self.ability.rng_seed, self.profile.name, image_id, question
        ) % 12)))
        pad = [
            _PAD_WORDS[derive_choice(len(_PAD_WORDS), self.global_seed, "pad-word",
                                     self.profile.name, image_id, question, i)]
            for i in range(n_pad)
        ]
        return base + (" " + " ".join(pad) + "." if pad else "")

    def _judge(self, template_id: str, ctx: dict) -> str:
        image_id, question = ctx["image_id"], ctx["question_text"]
        first, second = ctx["first_candidate"], ctx["second_candidate"]
        flag_pos = 0 if template_id == JUDGE_CORRECT else 1
        truth = _truth_verdict(
            ctx["first_flags"][flag_pos], ctx["second_flags"][flag_pos]
        )
        p_correct = 0.5 + 0.5 * self.ability.judge_skill
        faithful = derive_bernoulli(
            p_correct,
            self.global_seed, "judge", self.ability.rng_seed, self.profile.name,
            template_id, image_id, question, first, second,
        )
        if faithful:
            verdict = truth
        else:
            wrong = [v for v in (Verdict.WIN_A, Verdict.WIN_B, Verdict.TIE) if v is not truth]
            pick = derive_choice(
                2,
                self.global_seed, "judge-wrong", self.ability.rng_seed, self.profile.name,
                template_id, image_id, question, first, second,
            )
            verdict = wrong[pick]
        marker = {Verdict.WIN_A: "[[A]]", Verdict.WIN_B: "[[B]]", Verdict.TIE: "[[C]]"}[verdict]
        dimension = "correctness" if template_id == JUDGE_CORRECT else "visual understanding"
        return (
            f"Synthetic comparison of both responses on {dimension} "
            f"for {image_id}. Final verdict: {marker}"
        )


class ReplayBackend(ChatBackend):
    """Serves questions, answers, and raw judge outputs from a stored transcript."""

    def __init__(self, profile: ModelProfile, records: Sequence["JudgmentRecord"]):
        self.profile = profile
        self._questions: dict[tuple[str, str], str] = {}
        self._answers: dict[tuple[str, str, str], str] = {}
        self._raw: dict[tuple[str, str, str, str, str], str] = {}
        for rec in records:
            self._questions[(rec.reviewer, rec.image_id)] = rec.question.text
            for ans in (rec.answer_a, rec.answer_b):
                self._answers[(ans.candidate, ans.image_id, ans.question_text)] = ans.text
            key = (rec.reviewer, rec.image_id, rec.candidate_a, rec.candidate_b)
            self._raw[key + (JUDGE_CORRECT,)] = rec.raw_judge_correct
            self._raw[key + (JUDGE_VISUAL,)] = rec.raw_judge_visual

    def complete(self, prompt: str, image_bytes: bytes, context: dict) -> str:
        purpose = context["purpose"]
        image_id = context["image_id"]
        if purpose == QUESTION_GEN:
            out = self._questions.get((self.profile.name, image_id))
        elif purpose == ANSWER_GEN:
            out = self._answers.get(
                (self.profile.name, image_id, context["question_text"])
            )
        else:
            out = self._raw.get(
                (self.profile.name, image_id, context["candidate_a"], context["candidate_b"], purpose)
            )
        if out is None:
            raise BackendError(
                f"replay transcript has no {purpose} entry for {self.profile.name} on {image_id}"
            )
        return out


def make_backend(
    profile: ModelProfile,
    global_seed: int,
    replay_records: Sequence["JudgmentRecord"] | None = None,
) -> ChatBackend:
    if profile.kind is BackendKind.SYNTHETIC:
        return SyntheticBackend(profile, global_seed)
    if profile.kind is BackendKind.REPLAY:
        if replay_records is None:
            raise ConfigError(f"replay model {profile.name} needs a source transcript")
        return ReplayBackend(profile, replay_records)
    if profile.kind is BackendKind.OPENAI_COMPATIBLE:
        return OpenAiCompatibleBackend(profile)
    if profile.kind is BackendKind.ANTHROPIC_STYLE:
        return AnthropicStyleBackend(profile)
    if profile.kind is BackendKind.GEMINI_STYLE:
        return GeminiStyleBackend(profile)
    raise ConfigError(f"unknown backend kind {profile.kind}")


# --- gateway ---------------------------------------------------------------


class BackendGateway:
    """Prompt rendering, retries, caching, and verdict parsing over backends.

    Thread-safe: caches are lock-guarded and each backend carries a semaphore
    capping concurrent in-flight requests.
    """

    def __init__(
        self,
        profiles: dict[str, ModelProfile],
        global_seed: int = 0,
        templates: dict[str, PromptTemplate] | None = None,
        tokenizer: Callable[[str], int] | None = None,
        image_store: ImageStore | None = None,
        max_inflight_per_backend: int = 4,
        replay_records: Sequence["JudgmentRecord"] | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.profiles = profiles
        self.global_seed = global_seed
        self.templates = dict(templates or {})
        for tid in (QUESTION_GEN, ANSWER_GEN, JUDGE_CORRECT, JUDGE_VISUAL):
            self.templates.setdefault(tid, default_template(tid))
        self.tokenizer = tokenizer or (lambda text: max(1, len(text.split())))
        self.images = image_store or ImageStore()
        self._backends = {
            name: make_backend(p, global_seed, replay_records)
            for name, p in profiles.items()
        }
        self._inflight = {
            name: threading.Semaphore(max_inflight_per_backend) for name in profiles
        }
        self._sleep = sleeper
        self._lock = threading.Lock()
        self._question_cache: dict[tuple[str, str], GeneratedQuestion] = {}
        self._answer_cache: dict[tuple[str, str, str], CandidateAnswer] = {}

    def preload_from_records(self, records: Sequence["JudgmentRecord"]) -> None:
        """Seed caches from an existing transcript (the resume path)."""
        with self._lock:
            for rec in records:
                if rec.flags.failed:
                    continue
                self._question_cache.setdefault(
                    (rec.reviewer, rec.image_id), rec.question
                )
                for ans in (rec.answer_a, rec.answer_b):
                    self._answer_cache.setdefault(
                        (ans.candidate, ans.image_id, _question_hash(ans.question_text)), ans
                    )

    def _call(self, model: str, prompt: str, image: ImageRef, context: dict) -> str:
        backend = self._backends[model]
        policy = self.profiles[model].transport
        image_bytes = self.images.load(image)
        last_error: Exception | None = None
        for attempt in range(policy.retries + 1):
            try:
                with self._inflight[model]:
                    out = backend.complete(prompt, image_bytes, context)
                if not out or not out.strip():
                    raise EmptyResponseError(f"empty response from {model}")
                return out
            except (BackendError, ConfigError):
                raise
            except Exception as exc:
                last_error = exc
                if attempt < policy.retries:
                    delay = policy.backoff_base * (2**attempt)
                    logger.warning(
                        "backend %s failed (attempt %d/%d): %s; retrying in %.1fs",
                        model, attempt + 1, policy.retries + 1, exc, delay,
                    )
                    self._sleep(delay)
        raise BackendError(
            f"backend {model} failed after {policy.retries + 1} attempts: {last_error}"
        ) from last_error

    def generate_question(self, reviewer: str, image: ImageRef) -> GeneratedQuestion:
        """Ask the reviewer for a question about the image; cached per pair."""
        key = (reviewer, image.image_id)
        with self._lock:
            cached = self._question_cache.get(key)
        if cached is not None:
            return cached
        prompt = render_prompt(self.templates[QUESTION_GEN])
        text = self._call(
            reviewer, prompt, image,
            {"purpose": QUESTION_GEN, "image_id": image.image_id},
        ).strip()
        question = GeneratedQuestion(image_id=image.image_id, reviewer=reviewer, text=text)
        with self._lock:
            return self._question_cache.setdefault(key, question)

    def answer_question(
        self, candidate: str, image: ImageRef, question: GeneratedQuestion
    ) -> CandidateAnswer:
        """Candidate answers the reviewer's question; cached per question hash."""
        if question.image_id != image.image_id:
            raise InvalidInputError("question does not belong to this image")
        key = (candidate, image.image_id, _question_hash(question.text))
        with self._lock:
            cached = self._answer_cache.get(key)
        if cached is not None:
            return cached
        prompt = render_prompt(self.templates[ANSWER_GEN], question=question.text)
        text = self._call(
            candidate, prompt, image,
            {
                "purpose": ANSWER_GEN,
                "image_id": image.image_id,
                "question_text": question.text,
            },
        ).strip()
        answer = CandidateAnswer(
            image_id=image.image_id,
            question_text=question.text,
            candidate=candidate,
            text=text,
            token_count=self.tokenizer(text),
            char_length=len(text),
        )
        with self._lock:
            return self._answer_cache.setdefault(key, answer)

    def judge_pair(
        self,
        reviewer: str,
        template_id: str,
        image: ImageRef,
        question: GeneratedQuestion,
        first: CandidateAnswer,
        second: CandidateAnswer,
    ) -> tuple[Verdict, str, bool]:
        """One judge call in presentation order (first shown as assistant A).

        Returns (verdict, raw output, parse_failed). An unparseable output is
        retried once; the second failure records a Tie with the flag set so
        downstream aggregation stays total.
        """
        if template_id not in (JUDGE_CORRECT, JUDGE_VISUAL):
            raise InvalidInputError(f"not a judge template: {template_id!r}")
        if reviewer in (first.candidate, second.candidate):
            raise InvalidInputError(f"reviewer {reviewer} cannot judge its own answer")
        prompt = render_prompt(
            self.templates[template_id],
            question=question.text,
            Answer_a=first.text,
            Answer_b=second.text,
        )
        context = {
            "purpose": template_id,
            "image_id": image.image_id,
            "question_text": question.text,
            "first_candidate": first.candidate,
            "second_candidate": second.candidate,
            "candidate_a": min(first.candidate, second.candidate),
            "candidate_b": max(first.candidate, second.candidate),
        }
        if isinstance(self._backends[reviewer], SyntheticBackend):
            context["first_flags"] = self._flags_for(first)
            context["second_flags"] = self._flags_for(second)
        raw = self._call(reviewer, prompt, image, context)
        try:
            return parse_verdict(raw), raw, False
        except JudgeParseError:
            logger.warning("unparseable judge output from %s; retrying once", reviewer)
        raw = self._call(reviewer, prompt, image, context)
        try:
            return parse_verdict(raw), raw, False
        except JudgeParseError:
            logger.warning(
                "judge output from %s unparseable after retry; recording tie", reviewer
            )
            return Verdict.TIE, raw, True

    def _flags_for(self, answer: CandidateAnswer) -> tuple[bool, bool]:
        profile = self.profiles.get(answer.candidate)
        if profile is None or profile.ability is None:
            # Mixed pool: a synthetic judge scoring a non-synthetic answer
            # falls back to neutral flags, making truth a coin-flip tie.
            return True, True
        return synthetic_answer_flags(
            self.global_seed, profile.ability, answer.candidate,
            answer.image_id, answer.question_text,
        )


def _question_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class SyntheticTruth:
    """Truth source backed by the synthetic side channel."""

    def __init__(self, profiles: dict[str, ModelProfile], global_seed: int):
        self.profiles = profiles
        self.global_seed = global_seed

    def _flags(self, candidate: str, image_id: str, question_text: str) -> tuple[bool, bool]:
        profile = self.profiles[candidate]
        if profile.ability is None:
            raise InvalidInputError(f"model {candidate} has no synthetic side channel")
        return synthetic_answer_flags(
            self.global_seed, profile.ability, candidate, image_id, question_text
        )

    def true_verdict(self, record: "JudgmentRecord", kind: str) -> Verdict | None:
        pos = 0 if kind == "correct" else 1
        fa = self._flags(record.candidate_a, record.image_id, record.question.text)[pos]
        fb = self._flags(record.candidate_b, record.image_id, record.question.text)[pos]
        return _truth_verdict(fa, fb)

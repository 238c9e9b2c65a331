"""Embedding provider contract, the deterministic stub, and the HTTP client.

Providers expose three calls: ``tokenize(text) -> count``,
``embed_text(segments) -> unit vectors`` and ``embed_image(bytes) -> unit
vector``. The stub is pure hash arithmetic (no semantics) and exists so the
whole primary pipeline runs deterministically with no network; the HTTP
client speaks the sidecar's JSON contract.
"""

from __future__ import annotations

import base64
from typing import Protocol, Sequence

import numpy as np

from .errors import EmbeddingError
from .seeding import derive_u64

STUB_DIM = 64


class EmbeddingProvider(Protocol):
    def tokenize(self, text: str) -> int: ...

    def embed_text(self, segments: Sequence[str]) -> list[np.ndarray]: ...

    def embed_image(self, image_bytes: bytes) -> np.ndarray: ...


def _hash_unit_vector(domain: str, payload: object) -> np.ndarray:
    rng = np.random.default_rng(derive_u64("stub-embed", domain, payload))
    v = rng.standard_normal(STUB_DIM)
    return v / np.linalg.norm(v)


class StubEmbeddingProvider:
    """Hash-based unit vectors: bit-for-bit reproducible, no model, no I/O."""

    model_tag = "stub-hash-v1"

    def tokenize(self, text: str) -> int:
        return max(1, len(text.split()))

    def embed_text(self, segments: Sequence[str]) -> list[np.ndarray]:
        return [_hash_unit_vector("text", seg) for seg in segments]

    def embed_image(self, image_bytes: bytes) -> np.ndarray:
        return _hash_unit_vector("image", image_bytes.hex())


class HttpEmbeddingProvider:
    """Client for the sidecar's /tokenize, /embed_text, /embed_image endpoints."""

    def __init__(self, base_url: str, timeout: float = 60.0, session=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._session.post(
                f"{self.base_url}{path}", json=payload, timeout=self.timeout
            )
        except Exception as exc:
            raise EmbeddingError(f"embedding provider unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise EmbeddingError(
                f"embedding provider returned {resp.status_code} for {path}: {resp.text[:200]}"
            )
        return resp.json()

    def tokenize(self, text: str) -> int:
        return int(self._post("/tokenize", {"text": text})["count"])

    def embed_text(self, segments: Sequence[str]) -> list[np.ndarray]:
        data = self._post("/embed_text", {"texts": list(segments)})
        return [np.asarray(v, dtype=float) for v in data["vectors"]]

    def embed_image(self, image_bytes: bytes) -> np.ndarray:
        b64 = base64.b64encode(image_bytes).decode("ascii")
        data = self._post("/embed_image", {"image_b64": b64})
        return np.asarray(data["vectors"][0], dtype=float)

    def health(self) -> dict:
        import requests

        try:
            resp = self._session.get(f"{self.base_url}/health", timeout=self.timeout)
        except requests.RequestException as exc:
            raise EmbeddingError(f"embedding provider unreachable: {exc}") from exc
        return {"status_code": resp.status_code, **resp.json()}


def make_provider(spec: str) -> EmbeddingProvider:
    """Build a provider from a config value: "stub" or an http(s) base URL."""
    if spec == "stub":
        return StubEmbeddingProvider()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpEmbeddingProvider(spec)
    raise EmbeddingError(f"unknown embedding provider spec {spec!r}")

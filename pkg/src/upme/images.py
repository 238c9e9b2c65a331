"""Image references and byte resolution.

Images are opaque content-addressed blobs here: no decoding, no pixels.
Synthetic image ids resolve to deterministic bytes so desk-scale runs need
no files on disk.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import InvalidInputError
from .model import ImageRef

SYNTHETIC_SCHEME = "synthetic:"


def synthetic_image_bytes(image_id: str) -> bytes:
    seed = hashlib.blake2b(image_id.encode("utf-8"), digest_size=32).digest()
    return b"synthetic-image/" + image_id.encode("utf-8") + b"/" + seed.hex().encode()


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def synthetic_image_ref(image_id: str) -> ImageRef:
    data = synthetic_image_bytes(image_id)
    return ImageRef(
        image_id=image_id,
        uri=SYNTHETIC_SCHEME + image_id,
        content_hash=content_hash(data),
    )


def synthetic_image_set(n: int, prefix: str = "img") -> list[ImageRef]:
    if n < 1:
        raise InvalidInputError("need at least one image")
    return [synthetic_image_ref(f"{prefix}-{i:03d}") for i in range(n)]


def file_image_ref(path: str | Path, image_id: str | None = None) -> ImageRef:
    p = Path(path)
    data = p.read_bytes()
    return ImageRef(
        image_id=image_id or p.stem,
        uri=str(p),
        content_hash=content_hash(data),
    )


class ImageStore:
    """Resolves and caches image bytes; verifies the content hash on load."""

    def __init__(self):
        self._cache: dict[str, bytes] = {}

    def load(self, ref: ImageRef) -> bytes:
        cached = self._cache.get(ref.image_id)
        if cached is not None:
            return cached
        if ref.uri.startswith(SYNTHETIC_SCHEME):
            data = synthetic_image_bytes(ref.uri[len(SYNTHETIC_SCHEME):])
        elif ref.uri.startswith("http://") or ref.uri.startswith("https://"):
            import requests

            resp = requests.get(ref.uri, timeout=60)
            resp.raise_for_status()
            data = resp.content
        else:
            data = Path(ref.uri).read_bytes()
        digest = content_hash(data)
        if digest != ref.content_hash:
            raise InvalidInputError(
                f"content hash mismatch for {ref.image_id}: expected {ref.content_hash[:12]}, got {digest[:12]}"
            )
        self._cache[ref.image_id] = data
        return data

"""Content-addressed randomness.

Every stochastic choice in a run is a pure function of the global seed, a
named substream, and the content it concerns (image id, model name, question
text, ...). Nothing depends on call order, so concurrent execution, resume,
and replay all see identical draws.
"""

from __future__ import annotations

import hashlib


def derive_bytes(*parts: object) -> bytes:
    """16-byte digest of the joined parts, with unambiguous framing."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        token = str(part).encode("utf-8")
        h.update(len(token).to_bytes(4, "big"))
        h.update(token)
    return h.digest()


def derive_u64(*parts: object) -> int:
    return int.from_bytes(derive_bytes(*parts)[:8], "big")


def derive_uniform(*parts: object) -> float:
    """Uniform in [0, 1), 53 bits of entropy."""
    return (derive_u64(*parts) >> 11) / float(1 << 53)


def derive_bernoulli(p: float, *parts: object) -> bool:
    return derive_uniform(*parts) < p


def derive_choice(options: int, *parts: object) -> int:
    """Index in [0, options), close enough to uniform for small option counts."""
    return derive_u64(*parts) % options


def derive_hex(*parts: object) -> str:
    return derive_bytes(*parts).hex()

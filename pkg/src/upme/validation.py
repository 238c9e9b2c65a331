"""Input-validation helpers shared by the estimator-style aggregators."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, InsufficientDataError, InvalidInputError
from .model import JudgmentRecord, canonical_order


def check_unit_interval_vector(values, length: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float array; every entry must be finite and in [0, 1]."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError(f"{name} entries must lie in [0, 1]")
    return arr


def scoreable_records(records: Iterable[JudgmentRecord]) -> list[JudgmentRecord]:
    """Records usable for score aggregation: transport failures dropped."""
    return [r for r in records if not r.flags.failed]


def pool_names(records: Sequence[JudgmentRecord]) -> list[str]:
    """Canonically ordered names of every model seen in the records."""
    names: set[str] = set()
    for r in records:
        names.add(r.reviewer)
        names.add(r.candidate_a)
        names.add(r.candidate_b)
    return [m.name for m in canonical_order(names)]


def check_records(records: Sequence[JudgmentRecord]) -> tuple[list[JudgmentRecord], list[str]]:
    """Validate a transcript for aggregation.

    Returns (usable records, canonical model names). Every model must appear
    as a candidate in at least one usable record.
    """
    if not records:
        raise InsufficientDataError("transcript is empty")
    usable = scoreable_records(records)
    if not usable:
        raise InsufficientDataError("every record carries the failed flag")
    names = pool_names(records)
    judged = {r.candidate_a for r in usable} | {r.candidate_b for r in usable}
    missing = [n for n in names if n not in judged]
    if missing:
        raise InsufficientDataError(
            f"models with zero usable judgments as candidate: {missing}"
        )
    return usable, names

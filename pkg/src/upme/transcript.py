"""Append-only JSONL transcript persistence.

One judgment record per line, schema-versioned, flushed after every append
so a killed run leaves a loadable prefix. The transcript is the unit of
determinism: scoring, optimization, baselines, and metrics all read it and
nothing else.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable

from .model import JudgmentRecord


class TranscriptWriter:
    """Serialized appender; one writer per run directory."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, record: JudgmentRecord) -> None:
        self._fh.write(record.to_json() + "\n")
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TranscriptWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def load_transcript(path: str | Path, tolerate_partial_tail: bool = False) -> list[JudgmentRecord]:
    """Read all records; optionally drop a trailing half-written line.

    With ``tolerate_partial_tail`` (the resume path) a final line that is
    unterminated or unparseable is discarded; damage anywhere else is still
    an error.
    """
    raw = Path(path).read_text(encoding="utf-8")
    records: list[JudgmentRecord] = []
    lines = raw.split("\n")
    trailing = lines.pop() if lines else ""
    if trailing and not tolerate_partial_tail:
        raise ValueError(f"transcript {path} ends with an unterminated line")
    for lineno, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(JudgmentRecord.from_json(line))
        except Exception as exc:
            if tolerate_partial_tail and lineno == len(lines) - 1:
                break
            raise ValueError(f"bad transcript line {lineno + 1} in {path}: {exc}") from exc
    return records


def truncate_to_records(path: str | Path, records: Iterable[JudgmentRecord]) -> None:
    """Rewrite the file to exactly these records (used to drop a torn tail)."""
    tmp = Path(path).with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")
    os.replace(tmp, path)

"""Line-delimited JSON helpers used by every file interface."""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator
from pathlib import Path
from typing import Any


def iter_jsonl(text: str) -> Iterator[tuple[int, Any]]:
    """Yield (1-based line number, decoded object) for each non-blank line."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        yield lineno, json.loads(line)


def read_jsonl(path: str | Path) -> list[Any]:
    return [obj for _, obj in iter_jsonl(Path(path).read_text(encoding="utf-8"))]


def dump_jsonl(records: Iterable[Any]) -> str:
    return "".join(json.dumps(rec, ensure_ascii=False) + "\n" for rec in records)


def write_jsonl(path: str | Path, records: Iterable[Any]) -> int:
    """Write records one per line; returns the number of records written."""
    lines = [json.dumps(rec, ensure_ascii=False) for rec in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return len(lines)

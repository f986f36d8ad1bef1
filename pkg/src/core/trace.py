# -*- coding: utf-8 -*-
"""
Trace Log
=========

Append-only, line-delimited event records:

    <tick> <seq> <kind> <src> <dst> [key=value ...]

Keys are sorted, values contain no whitespace, absent endpoints print as
"-". UTF-8 with LF endings, so two runs can be compared byte for byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional

from src.utils.encoding import read_text_safely, save_text_safely

_UNSAFE = re.compile(r"\s+")


def _value(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (list, tuple, set, frozenset)):
        return ",".join(str(x) for x in sorted(v)) or "-"
    text = str(v)
    return _UNSAFE.sub("_", text) if text else "-"


@dataclass(frozen=True)
class TraceRecord:
    tick: int
    seq: int
    kind: str
    src: Optional[int] = None
    dst: Optional[int] = None
    detail: Dict[str, Any] = field(default_factory=dict)

    def format(self) -> str:
        head = f"{self.tick} {self.seq} {self.kind} {'-' if self.src is None else self.src} " \
               f"{'-' if self.dst is None else self.dst}"
        if not self.detail:
            return head
        pairs = " ".join(f"{k}={_value(self.detail[k])}" for k in sorted(self.detail))
        return f"{head} {pairs}"

    @classmethod
    def parse(cls, line: str) -> "TraceRecord":
        parts = line.rstrip("\n").split(" ")
        if len(parts) < 5:
            raise ValueError(f"not a trace record: {line!r}")
        tick, seq, kind, src, dst = parts[:5]
        detail = dict(p.split("=", 1) for p in parts[5:] if "=" in p)
        return cls(int(tick), int(seq), kind,
                   None if src == "-" else int(src),
                   None if dst == "-" else int(dst),
                   detail)


class Trace:
    """In-memory trace; the world appends, the CLI writes it out."""

    def __init__(self):
        self.records: List[TraceRecord] = []

    def append(self, tick: int, seq: int, kind: str, src: Optional[int] = None,
               dst: Optional[int] = None, **detail: Any) -> TraceRecord:
        record = TraceRecord(tick, seq, kind, src, dst, detail)
        self.records.append(record)
        return record

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of_kind(self, kind: str) -> List[TraceRecord]:
        return [r for r in self.records if r.kind == kind]

    def render(self) -> str:
        return "".join(r.format() + "\n" for r in self.records)

    def write(self, path: Path) -> bool:
        return save_text_safely(Path(path), self.render(), encoding="utf-8")


def read_trace(path: Path) -> List[TraceRecord]:
    text = read_text_safely(Path(path))
    if text is None:
        raise FileNotFoundError(f"cannot read trace {path}")
    return parse_lines(text.splitlines())


def parse_lines(lines: Iterable[str]) -> List[TraceRecord]:
    return [TraceRecord.parse(line) for line in lines if line.strip()]

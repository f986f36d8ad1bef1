# -*- coding: utf-8 -*-
"""
stegmesh Trace Summary Module
=============================

Summarises an existing trace without re-running the scenario.
Shows WHAT happened and WHEN: records by kind, tick span, drops by reason,
update fanouts by cause and per-CH link churn.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

from src.core.trace import TraceRecord, read_trace

logger = logging.getLogger(__name__)


@dataclass
class TraceSummary:
    """Aggregate view over a list of trace records."""
    records: int = 0
    first_tick: Optional[int] = None
    last_tick: Optional[int] = None
    events: int = 0
    by_kind: Counter = field(default_factory=Counter)
    drops: Counter = field(default_factory=Counter)
    fanouts: Counter = field(default_factory=Counter)
    links_up: Counter = field(default_factory=Counter)
    links_down: Counter = field(default_factory=Counter)
    quiescence_tick: Optional[int] = None

    @property
    def tick_span(self) -> int:
        if self.first_tick is None:
            return 0
        return self.last_tick - self.first_tick

    def lines(self) -> List[str]:
        out = [
            f"records: {self.records} ({self.events} executed events)",
            f"ticks: {self.first_tick if self.first_tick is not None else '-'}.."
            f"{self.last_tick if self.last_tick is not None else '-'}",
            f"quiescent at: {self.quiescence_tick if self.quiescence_tick is not None else '-'}",
            "by kind:",
        ]
        out += [f"  {kind:<18} {n}" for kind, n in sorted(self.by_kind.items())]
        if self.drops:
            out.append("drops:")
            out += [f"  {reason:<18} {n}" for reason, n in sorted(self.drops.items())]
        if self.fanouts:
            out.append("update fanouts:")
            out += [f"  {reason:<18} {n}" for reason, n in sorted(self.fanouts.items())]
        churn = sorted(set(self.links_up) | set(self.links_down))
        if churn:
            out.append("link churn (up/down):")
            out += [f"  CH {node:<15} {self.links_up[node]}/{self.links_down[node]}" for node in churn]
        return out


def summarize(records: Iterable[TraceRecord]) -> TraceSummary:
    summary = TraceSummary()
    seen_events = set()
    for r in records:
        summary.records += 1
        summary.by_kind[r.kind] += 1
        if summary.first_tick is None:
            summary.first_tick = r.tick
        summary.last_tick = r.tick
        if r.seq:
            seen_events.add(r.seq)
        if r.kind == "drop":
            summary.drops[str(r.detail.get("reason", "-"))] += 1
        elif r.kind == "fanout":
            summary.fanouts[str(r.detail.get("reason", "-"))] += 1
        elif r.kind == "link_up" and r.src is not None:
            summary.links_up[r.src] += 1
        elif r.kind == "link_down" and r.src is not None:
            summary.links_down[r.src] += 1
        elif r.kind == "quiescent":
            summary.quiescence_tick = r.tick
    summary.events = len(seen_events)
    return summary


def summarize_file(path: Union[str, Path]) -> TraceSummary:
    records = read_trace(Path(path))
    logger.info("read %d trace records from %s", len(records), path)
    return summarize(records)


def kind_counts(records: Iterable[TraceRecord]) -> Dict[str, int]:
    return dict(Counter(r.kind for r in records))

"""Run report for a stegmesh simulation.

Collects the final routing tables, message counts, data delivery, adversary
outcomes and message conservation of one run and emits them as a JSON
document with sorted keys, so two runs with the same scenario and seed
produce byte-identical reports.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional


@dataclass
class RunReport:
    seed: int = 0
    scenario: str = ''
    scenario_digest: str = ''
    final_tick: int = 0
    executed_events: int = 0
    quiescence_tick: Optional[int] = None
    routing_tables: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    steg_links: Dict[str, List[int]] = field(default_factory=dict)
    message_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    data: Dict[str, Any] = field(default_factory=dict)
    intra: Dict[str, int] = field(default_factory=dict)
    adversary: Dict[str, Any] = field(default_factory=dict)
    conservation: Dict[str, int] = field(default_factory=dict)
    gateways: Dict[str, List[int]] = field(default_factory=dict)
    clusters: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    @property
    def conserved(self) -> bool:
        c = self.conservation
        if not c:
            return True
        return c.get('emitted', 0) == c.get('delivered', 0) + c.get('dropped', 0) + c.get('pending', 0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'scenario': self.scenario,
            'scenario_digest': self.scenario_digest,
            'final_tick': self.final_tick,
            'executed_events': self.executed_events,
            'quiescence_tick': self.quiescence_tick,
            'routing_tables': self.routing_tables,
            'steg_links': self.steg_links,
            'message_counts': self.message_counts,
            'data': self.data,
            'intra': self.intra,
            'adversary': self.adversary,
            'conservation': self.conservation,
            'gateways': self.gateways,
            'clusters': self.clusters,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + '\n'

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "RunReport":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def write(self, path: str) -> bool:
        from src.utils.encoding import save_text_safely
        return save_text_safely(Path(path), self.to_json(), encoding='utf-8')

    def summary(self) -> List[str]:
        """Short human-readable lines for the console."""
        lines = [
            f"scenario {self.scenario} seed {self.seed}: {self.executed_events} events, "
            f"final tick {self.final_tick}",
            "quiescent at tick %s" % self.quiescence_tick if self.quiescence_tick is not None
            else "not quiescent",
        ]
        links = sum(len(v) for v in self.steg_links.values()) // 2
        lines.append(f"{len(self.routing_tables)} cluster heads, {links} steg-links")
        if self.data.get('sent'):
            lines.append(f"data: {self.data['delivered']}/{self.data['sent']} delivered, "
                         f"{self.data['no_path']} without a path")
        if self.adversary.get('eavesdroppers'):
            lines.append(f"adversary: {self.adversary['captured']} captured, "
                         f"{self.adversary['unauthorized_recoveries']} unauthorized recoveries")
        if not self.conserved:
            lines.append(f"message conservation violated: {self.conservation}")
        return lines

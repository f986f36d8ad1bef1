# -*- coding: utf-8 -*-
"""
stegmesh Verification Module
============================

Runs a scenario to quiescence and checks the result against independent
oracles before anyone trusts its numbers.

Checks:
1. dv_oracle        every routing cost equals the Dijkstra oracle exactly
2. loop_freedom     next-hop pointers reach every routable destination
3. codec_roundtrip  randomized cover/uncover sweep plus a false-accept scan
4. walk_anonymity   no discovery walk carries its origin id in the clear
5. adversary        no unauthorized plaintext recovery by eavesdroppers
6. conservation     emitted == delivered + dropped + pending
7. discovery        every CH pair mutually routable (INFO only)
"""

import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

from src.core.codec import StegCodec
from src.core.constants import DEFAULT_RUN_LIMIT
from src.core.domain import MessageKind, MethodRegistry, ProtocolMessage
from src.core.report import RunReport
from src.core.scenario import ScenarioSpec
from src.core.world import World, build_world, follow_next_hops, oracle_shortest_paths, run_until
from src.utils.rng import SplitMix64, derive_stream

CODEC_SWEEP = 2_000
FALSE_ACCEPT_SWEEP = 5_000
STREAM_VERIFY = 9


class CheckStatus(Enum):
    """Outcome of a single check."""
    PASS = "pass"
    FAIL = "fail"
    INFO = "info"


@dataclass
class CheckResult:
    name: str
    status: CheckStatus
    message: str
    counterexample: Optional[str] = None

    def __str__(self) -> str:
        line = f"{self.status.value.upper():<4}  {self.name}: {self.message}"
        if self.counterexample:
            line += f"\n      first counterexample: {self.counterexample}"
        return line


@dataclass
class VerifyReport:
    """All check results for one (scenario, seed)."""
    scenario: str
    seed: int
    results: List[CheckResult] = field(default_factory=list)
    run: Optional[RunReport] = None

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if r.status is CheckStatus.FAIL]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = [str(r) for r in self.results]
        lines.append(f"{len(self.results) - len(self.failures)}/{len(self.results)} checks without failure "
                     f"for {self.scenario} seed {self.seed}")
        return "\n".join(lines)


class Verifier:
    """
    Runs a scenario once with a wire observer attached, then evaluates
    each check against the final world.
    """

    def __init__(self, spec: ScenarioSpec, seed: int, limit: int = DEFAULT_RUN_LIMIT,
                 codec_sweep: int = CODEC_SWEEP, false_accept_sweep: int = FALSE_ACCEPT_SWEEP):
        self.logger = logging.getLogger(__name__)
        self.spec = spec
        self.seed = seed
        self.limit = limit
        self.codec_sweep = codec_sweep
        self.false_accept_sweep = false_accept_sweep
        self._walk_origins: Dict[bytes, int] = {}
        self._walk_leaks: List[Tuple[int, int]] = []

    def _observe(self, msg: ProtocolMessage, walk_hops: int) -> None:
        if msg.kind is not MessageKind.RANDOM_WALK_DISCOVERY:
            return
        if walk_hops == 0:
            self._walk_origins[msg.payload] = msg.transport_sender
        origin = self._walk_origins.get(msg.payload, msg.transport_sender)
        if struct.pack(">Q", origin) in msg.to_wire():
            self._walk_leaks.append((origin, msg.receiver))

    def run(self) -> VerifyReport:
        world = build_world(self.spec, self.seed)
        world.observers.append(self._observe)
        run = run_until(world, self.limit)
        report = VerifyReport(self.spec.name, self.seed, run=run)

        checks: List[Callable[[World, RunReport], CheckResult]] = [
            self.check_quiescence,
            self.check_dv_oracle,
            self.check_loop_freedom,
            self.check_codec_roundtrip,
            self.check_walk_anonymity,
            self.check_adversary,
            self.check_conservation,
            self.check_discovery,
        ]
        for check in checks:
            result = check(world, run)
            self.logger.debug("%s -> %s", result.name, result.status.value)
            report.results.append(result)
        return report

    # ── checks ──

    def check_quiescence(self, world: World, run: RunReport) -> CheckResult:
        if run.quiescence_tick is None:
            return CheckResult("quiescence", CheckStatus.FAIL,
                               f"no quiescence within {self.limit} ticks")
        return CheckResult("quiescence", CheckStatus.PASS, f"quiescent at tick {run.quiescence_tick}")

    def check_dv_oracle(self, world: World, run: RunReport) -> CheckResult:
        oracle = oracle_shortest_paths(world)
        compared = 0
        for (src, dst), expected in sorted(oracle.items()):
            entry = world.engines[src].routing_table.get(dst)
            actual = entry.metric if entry is not None else None
            compared += 1
            if not expected.is_reachable:
                if actual is not None and actual.is_reachable:
                    return CheckResult("dv_oracle", CheckStatus.FAIL, "route to an unreachable destination",
                                       f"{src}->{dst}: table {actual}, oracle INF")
                continue
            if actual is None or actual.cost != expected.cost:
                return CheckResult("dv_oracle", CheckStatus.FAIL, "cost differs from the oracle",
                                   f"{src}->{dst}: table {actual if actual is not None else 'missing'}, "
                                   f"oracle {expected}")
        return CheckResult("dv_oracle", CheckStatus.PASS, f"{compared} (src, dst) pairs exact")

    def check_loop_freedom(self, world: World, run: RunReport) -> CheckResult:
        walked = 0
        for src, engine in world.engines.items():
            for dst, entry in sorted(engine.routing_table.items()):
                if dst == src or not entry.is_reachable or dst not in world.engines:
                    continue
                walked += 1
                if follow_next_hops(world, src, dst) is None:
                    return CheckResult("loop_freedom", CheckStatus.FAIL, "next-hop walk failed",
                                       f"{src}->{dst} via {entry.next_hop}")
        return CheckResult("loop_freedom", CheckStatus.PASS, f"{walked} next-hop walks reach their destination")

    def check_codec_roundtrip(self, world: World, run: RunReport) -> CheckResult:
        return codec_sweep(self.spec.registry, derive_stream(self.seed, STREAM_VERIFY),
                           self.codec_sweep, self.false_accept_sweep)

    def check_walk_anonymity(self, world: World, run: RunReport) -> CheckResult:
        walks = run.message_counts.get(MessageKind.RANDOM_WALK_DISCOVERY.value, {}).get("sent", 0)
        if self._walk_leaks:
            origin, receiver = self._walk_leaks[0]
            return CheckResult("walk_anonymity", CheckStatus.FAIL, "origin id visible in a walk",
                               f"origin {origin} in a walk delivered to {receiver}")
        return CheckResult("walk_anonymity", CheckStatus.PASS, f"{walks} walk wire forms scanned")

    def check_adversary(self, world: World, run: RunReport) -> CheckResult:
        adv = run.adversary
        if adv.get("unauthorized_recoveries", 0):
            bad = next(c for c in world.captures if c.recovered and not c.authorized)
            return CheckResult("adversary", CheckStatus.FAIL, "unauthorized plaintext recovery",
                               f"node {bad.node} at tick {bad.tick} ({bad.sender}->{bad.receiver})")
        return CheckResult("adversary", CheckStatus.PASS,
                           f"{adv.get('intra_captured', 0)} intra-cluster captures, "
                           f"{adv.get('recovered', 0)} authorized recoveries")

    def check_conservation(self, world: World, run: RunReport) -> CheckResult:
        c = run.conservation
        if not run.conserved:
            return CheckResult("conservation", CheckStatus.FAIL, "message counts do not balance",
                               f"emitted {c['emitted']} != delivered {c['delivered']} + dropped "
                               f"{c['dropped']} + pending {c['pending']}")
        return CheckResult("conservation", CheckStatus.PASS,
                           f"{c.get('emitted', 0)} emitted, {c.get('pending', 0)} pending")

    def check_discovery(self, world: World, run: RunReport) -> CheckResult:
        engines = world.engines
        missing = [(u, v) for u in engines for v in engines
                   if u < v and not (_routable(world, u, v) and _routable(world, v, u))]
        pairs = len(engines) * (len(engines) - 1) // 2
        if missing:
            u, v = missing[0]
            return CheckResult("discovery", CheckStatus.INFO,
                               f"{pairs - len(missing)}/{pairs} CH pairs mutually routable",
                               f"{u} <-> {v} isolated")
        return CheckResult("discovery", CheckStatus.INFO, f"all {pairs} CH pairs mutually routable")


def _routable(world: World, src: int, dst: int) -> bool:
    entry = world.engines[src].routing_table.get(dst)
    return entry is not None and entry.is_reachable


def codec_sweep(registry: MethodRegistry, rng: SplitMix64, rounds: int, false_accept_rounds: int,
                codec: Optional[StegCodec] = None) -> CheckResult:
    """Randomized round-trips over every registered method, keyed and unkeyed."""
    codec = codec or StegCodec(registry)
    methods = [m.id for m in registry]
    for i in range(rounds):
        method = rng.choice(methods)
        payload = rng.random_bytes(rng.uniform_int(0, 64))
        key = rng.random_bytes(32) if rng.coin(500_000) else None
        carrier = codec.make_carrier_for(method, len(payload) + rng.uniform_int(0, 8), rng)
        try:
            envelope = codec.cover(payload, method, carrier, key)
        except Exception as e:
            return CheckResult("codec_roundtrip", CheckStatus.FAIL, "cover raised",
                               f"round {i} method {method}: {e}")
        if len(envelope.carrier) != len(carrier):
            return CheckResult("codec_roundtrip", CheckStatus.FAIL, "carrier length changed",
                               f"round {i} method {method}: {len(carrier)} -> {len(envelope.carrier)}")
        back = codec.uncover(envelope.carrier.data, method, key)
        if back != payload:
            return CheckResult("codec_roundtrip", CheckStatus.FAIL, "payload not recovered",
                               f"round {i} method {method} payload {payload.hex() or '-'}")

    for i in range(false_accept_rounds):
        noise = rng.random_bytes(rng.uniform_int(32, 256))
        found = codec.find_steg_msg(noise, methods)
        if found is not None:
            return CheckResult("codec_roundtrip", CheckStatus.FAIL, "random carrier accepted",
                               f"noise round {i} decoded as method {found[0]}")
    return CheckResult("codec_roundtrip", CheckStatus.PASS,
                       f"{rounds} round-trips bit-exact, 0/{false_accept_rounds} false accepts")


def verify_scenario(spec: ScenarioSpec, seed: int, limit: int = DEFAULT_RUN_LIMIT) -> VerifyReport:
    return Verifier(spec, seed, limit).run()

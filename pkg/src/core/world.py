# -*- coding: utf-8 -*-
"""
Discrete-Event World
====================

Deterministic simulator around the CH engines: topology, a single
(tick, seq)-ordered event queue, per-link delivery delays, fault injection,
member key handling, the eavesdropper model, trace logging and quiescence
detection.

Underlay vs overlay
-------------------
Random walks, key deliveries and intra-cluster traffic travel on the
underlay. Everything else travels between CHs on the steg-link overlay with
the link's frozen delay (or the underlay distance when no link exists yet).
"""

from __future__ import annotations

import heapq
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from src.core.cluster_crypto import (
    ClusterKey,
    ClusterState,
    admit_member,
    elect_gateways,
    evict_member,
    get_cipher,
    make_nonce,
    new_cluster,
)
from src.core.constants import (
    ADVERSARY_GUESSES,
    CLUSTER_KEY_LEN,
    MICRO,
    QUIESCENCE_FACTOR,
    STREAM_ADVERSARY,
    STREAM_CLUSTER_KEYS,
    STREAM_ENGINE,
    WALK_HOP_LIMIT,
)
from src.core.domain import (
    MessageKind,
    Metric,
    NodeId,
    NodeRole,
    ProtocolMessage,
    format_micro,
    link_cost,
    round_half_up,
)
from src.core.engine import (
    ChState,
    RemovalEvidence,
    TimerKind,
    add_steg_link,
    detect_malicious_removal,
    forward_random_walk,
    init_ch,
    on_timer,
    originate_data,
    receive,
)
from src.core.exceptions import CryptoError, EmptyQueue, NotAMember, SimulationError, UnknownTarget
from src.core.messages import IntraClusterPayload, KeyDeliveryPayload, decode_or_none
from src.core.report import RunReport
from src.core.routing import NoPathFound
from src.core.scenario import EventKind, FaultKind, FaultSpec, NodeSpec, ScenarioSpec, ScheduledEvent
from src.core.trace import Trace
from src.utils.rng import SplitMix64, derive_stream

logger = logging.getLogger(__name__)

UNDERLAY_KINDS = frozenset({MessageKind.RANDOM_WALK_DISCOVERY, MessageKind.KEY_DELIVERY,
                            MessageKind.INTRA_CLUSTER})

# payload traffic a run must not stop on while in flight
TRAFFIC_KINDS = frozenset({MessageKind.DATA, MessageKind.KEY_DELIVERY, MessageKind.INTRA_CLUSTER})


class EventType(Enum):
    DELIVER = "deliver"
    TIMER = "timer"
    FAULT = "fault"
    EVIDENCE = "evidence"
    ADMIT = "admit"
    SEND = "send"
    INTRA = "intra"
    EVICT = "evict"
    QUIESCE_CHECK = "quiesce_check"


SCRIPTED = frozenset({EventType.FAULT, EventType.EVIDENCE, EventType.ADMIT, EventType.SEND,
                      EventType.INTRA, EventType.EVICT})


@dataclass(frozen=True)
class Event:
    type: EventType
    node: Optional[NodeId] = None
    message: Optional[ProtocolMessage] = None
    timer: Optional[TimerKind] = None
    fault: Optional[FaultSpec] = None
    scripted: Optional[ScheduledEvent] = None
    evidence: Optional[RemovalEvidence] = None
    hops: int = 0     # underlay hops a walk has taken on arrival


def _is_traffic(event: Event) -> bool:
    return event.type is EventType.DELIVER and event.message.kind in TRAFFIC_KINDS


@dataclass
class MemberState:
    cluster_id: int
    keys: Dict[int, ClusterKey] = field(default_factory=dict)
    nonce_counter: int = 0
    evicted: bool = False

    @property
    def current_key(self) -> Optional[ClusterKey]:
        return self.keys[max(self.keys)] if self.keys else None


@dataclass
class NodeRecord:
    spec: NodeSpec
    rng: SplitMix64
    active: bool = True
    engine: Optional[ChState] = None
    member: Optional[MemberState] = None
    cluster: Optional[ClusterState] = None       # held by the CH only

    @property
    def role(self) -> NodeRole:
        return self.spec.role


@dataclass
class Capture:
    tick: int
    node: NodeId
    kind: str
    sender: NodeId
    receiver: NodeId
    recovered: bool = False
    authorized: bool = False


class World:
    """Simulation state plus the step / run loop."""

    def __init__(self, spec: ScenarioSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.clock = 0
        self._seq = 0
        self.queue: List[Tuple[int, int, Event]] = []
        self.nodes: Dict[NodeId, NodeRecord] = {}
        self.underlay: Dict[NodeId, Dict[NodeId, int]] = {}
        self.cut: Set[FrozenSet[NodeId]] = set()
        self.silenced: Set[NodeId] = set()
        self.eavesdroppers: Set[NodeId] = set()
        self.gateways: Dict[NodeId, FrozenSet[int]] = {}
        self.cipher = get_cipher(spec.cipher)
        self.trace = Trace()
        self.executed = 0
        self.scripted_pending = 0
        self.traffic_pending = 0
        self.last_change = 0
        self.armed = False
        self.quiescence_tick: Optional[int] = None
        self.sent: Counter = Counter()
        self.delivered: Counter = Counter()
        self.dropped: Counter = Counter()
        self.walks_forwarded = 0
        self.data = Counter()
        self.intra = Counter()
        self.captures: List[Capture] = []
        self.metrics_rows: List[Dict[str, int]] = []
        self.observers: List[Callable[[ProtocolMessage, int], None]] = []   # (message, walk hops)
        self._distances: Dict[NodeId, Dict[NodeId, int]] = {}
        self._key_rng = derive_stream(seed, STREAM_CLUSTER_KEYS)
        self._adversary_rng = derive_stream(seed, STREAM_ADVERSARY)
        self.window = QUIESCENCE_FACTOR * spec.engine.routing_update_period

    # ── queue ──

    def enqueue(self, tick: int, event: Event) -> int:
        self._seq += 1
        heapq.heappush(self.queue, (tick, self._seq, event))
        if event.type in SCRIPTED:
            self.scripted_pending += 1
        elif _is_traffic(event):
            self.traffic_pending += 1
        return self._seq

    def record(self, seq: int, kind: str, src: Optional[int] = None, dst: Optional[int] = None, **detail: Any):
        return self.trace.append(self.clock, seq, kind, src, dst, **detail)

    # ── topology ──

    def is_active(self, node: NodeId) -> bool:
        rec = self.nodes.get(node)
        return rec is not None and rec.active and node not in self.silenced

    def underlay_distance(self, src: NodeId, dst: NodeId) -> Optional[int]:
        """Shortest underlay delay avoiding cut edges; None when unreachable."""
        if src == dst:
            return 0
        if src not in self._distances:
            dist = {src: 0}
            heap = [(0, src)]
            while heap:
                d, u = heapq.heappop(heap)
                if d > dist.get(u, d):
                    continue
                for v, w in sorted(self.underlay.get(u, {}).items()):
                    if frozenset((u, v)) in self.cut:
                        continue
                    nd = d + w
                    if nd < dist.get(v, nd + 1):
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
            self._distances[src] = dist
        return self._distances[src].get(dst)

    def _invalidate_distances(self) -> None:
        self._distances.clear()

    def probe_for(self, node: NodeId) -> Callable[[NodeId], Optional[int]]:
        """Delay a new link from `node` would get; None for a cut or unreachable pair."""
        def probe(peer: NodeId) -> Optional[int]:
            if frozenset((node, peer)) in self.cut:
                return None
            distance = self.underlay_distance(node, peer)
            return None if distance is None else max(1, distance)
        return probe

    def agents_of(self, node: NodeId) -> Tuple[NodeId, ...]:
        """Underlay neighbours that take part in random walks: CHs and elected GWs."""
        out = []
        for v in sorted(self.underlay.get(node, {})):
            rec = self.nodes[v]
            if not rec.active or frozenset((node, v)) in self.cut:
                continue
            if rec.role is NodeRole.CLUSTER_HEAD or v in self.gateways:
                out.append(v)
        return tuple(out)

    def quiet_window(self) -> int:
        """3 update periods, stretched to cover an update round trip on the slowest link."""
        delays = [link.delay for engine in self.engines.values() for link in engine.neighbour_table.values()]
        return max(self.window, 2 * max(delays, default=0))

    def _refresh_agents(self) -> None:
        for nid, rec in self.nodes.items():
            if rec.engine is not None:
                rec.engine.agents = self.agents_of(nid)

    def head_of(self, cluster_id: int) -> Optional[NodeRecord]:
        for rec in self.nodes.values():
            if rec.role is NodeRole.CLUSTER_HEAD and rec.spec.cluster == cluster_id:
                return rec
        return None

    @property
    def engines(self) -> Dict[NodeId, ChState]:
        return {nid: rec.engine for nid, rec in sorted(self.nodes.items())
                if rec.engine is not None and self.is_active(nid)}

    # ── message plumbing ──

    def _delay(self, msg: ProtocolMessage) -> Optional[int]:
        s, r = msg.transport_sender, msg.receiver
        if msg.kind in UNDERLAY_KINDS:
            direct = self.underlay.get(s, {}).get(r)
            return direct if direct is not None else self.underlay_distance(s, r)
        sender = self.nodes[s].engine
        link = sender.neighbour_table.get(r) if sender is not None else None
        if link is not None:
            return link.delay
        return self.underlay_distance(s, r)

    def dispatch(self, seq: int, messages: Iterable[ProtocolMessage], walk_hops: int = 0) -> None:
        for msg in messages:
            self.sent[msg.kind.value] += 1
            hops = 0
            if msg.kind is MessageKind.RANDOM_WALK_DISCOVERY:
                hops = walk_hops + 1
                if walk_hops:
                    self.walks_forwarded += 1
            for observe in self.observers:
                observe(msg, walk_hops)
            if msg.kind is MessageKind.RANDOM_WALK_DISCOVERY:
                if hops > WALK_HOP_LIMIT:
                    self._drop(seq, msg, "hop_limit")
                    continue
            if msg.receiver not in self.nodes:
                self._drop(seq, msg, "unknown_receiver")
                continue
            delay = self._delay(msg)
            if delay is None:
                self._drop(seq, msg, "no_route")
                continue
            self.enqueue(self.clock + max(1, delay), Event(EventType.DELIVER, msg.receiver, message=msg, hops=hops))

    def _drop(self, seq: int, msg: ProtocolMessage, reason: str, primary: bool = False) -> None:
        self.dropped[msg.kind.value] += 1
        self.record(seq, "drop", msg.transport_sender, msg.receiver, msg=msg.kind.value, reason=reason,
                    phase="deliver" if primary else "send")

    def _drain(self, seq: int, node: NodeId) -> None:
        engine = self.nodes[node].engine
        if engine is None:
            return
        for label, detail in engine.drain_journal():
            detail = dict(detail)
            peer = detail.pop("peer", None)
            if label in ("table_changed", "link_up", "link_down"):
                self.last_change = self.clock
                self.armed = True
                if self.quiescence_tick is not None:
                    self.quiescence_tick = None
            self.record(seq, label, node, peer, **detail)

    # ── construction ──

    def _activate_ch(self, rec: NodeRecord, now: int) -> None:
        nid = rec.spec.id
        rec.engine = init_ch(nid, rec.spec.profile, self.spec.engine_for(rec.spec), now)
        if rec.cluster is None:
            rec.cluster = new_cluster(rec.spec.cluster, nid, self._key_rng)
        rec.engine.agents = self.agents_of(nid)

    def _arm_timers(self, nid: NodeId) -> None:
        engine = self.nodes[nid].engine
        for kind in TimerKind:
            self.enqueue(engine.timers[kind], Event(EventType.TIMER, nid, timer=kind))

    def _elect(self) -> None:
        cluster_of = {nid: rec.spec.cluster for nid, rec in self.nodes.items()}
        border = []
        for nid, rec in sorted(self.nodes.items()):
            if rec.role is NodeRole.GATEWAY and rec.active and rec.spec.trust is not None:
                border.append((nid, rec.spec.trust))
        elected = elect_gateways(border, self.spec.gateway_threshold)
        self.gateways = {
            g: frozenset(cluster_of[v] for v in self.underlay.get(g, {}) if cluster_of[v] != cluster_of[g])
            for g in sorted(elected)
        }

    def _install_key(self, member: NodeId, record: KeyDeliveryPayload) -> None:
        state = self.nodes[member].member
        if state is None or state.cluster_id != record.cluster_id:
            return
        state.keys[record.key_id] = ClusterKey(record.key_id, record.key)
        state.evicted = False


def build_world(spec: ScenarioSpec, seed: int) -> World:
    world = World(spec, seed)
    for n in spec.nodes:
        world.nodes[n.id] = NodeRecord(n, derive_stream(seed, n.id, STREAM_ENGINE), active=not n.dormant)
        world.underlay.setdefault(n.id, {})
        if n.role is not NodeRole.CLUSTER_HEAD:
            world.nodes[n.id].member = MemberState(n.cluster)
    for e in spec.edges:
        world.underlay[e.a][e.b] = e.delay
        world.underlay[e.b][e.a] = e.delay

    world._elect()
    world.record(0, "world", name=spec.name, seed=seed, digest=spec.digest, nodes=len(spec.nodes))
    for nid, rec in sorted(world.nodes.items()):
        world.record(0, "node", nid, None, role=rec.role.value, cluster=rec.spec.cluster,
                     profile=sorted(rec.spec.profile), active=rec.active)
    for g, adjacent in world.gateways.items():
        world.record(0, "gateway", g, None, adjacent=sorted(adjacent))

    for nid, rec in sorted(world.nodes.items()):
        if rec.role is NodeRole.CLUSTER_HEAD and rec.active:
            world._activate_ch(rec, 0)

    for link in spec.steg_links:
        a, b = world.nodes[link.a], world.nodes[link.b]
        if not (a.active and b.active):
            continue
        for local, peer in ((a, b), (b, a)):
            add_steg_link(local.engine, peer.spec.id, link.methods, link.delay, 0,
                          capacity=link.capacity, grace=link.delay)
            local.engine.peer_profiles[peer.spec.id] = frozenset(peer.spec.profile)
    for nid in sorted(world.nodes):
        world._drain(0, nid)

    # initial keys travel over the trusted CH-member edge before the first tick
    for nid, rec in sorted(world.nodes.items()):
        if rec.cluster is None:
            continue
        world.record(0, "cluster", nid, None, cluster=rec.spec.cluster, key_id=rec.cluster.key.key_id)
        for member in sorted(m.id for m in spec.nodes if m.cluster == rec.spec.cluster
                             and m.role is not NodeRole.CLUSTER_HEAD and world.nodes[m.id].active):
            rec.cluster, delivery = admit_member(rec.cluster, member)
            world._install_key(member, KeyDeliveryPayload.decode(delivery.payload))
            world.record(0, "key_delivery", nid, member, key_id=rec.cluster.key.key_id)

    for nid, rec in sorted(world.nodes.items()):
        if rec.engine is not None:
            world._arm_timers(nid)
    for ev in spec.events:
        world.enqueue(ev.at, Event(EventType.FAULT if ev.kind is EventKind.FAULT else EventType(ev.kind.value),
                                   node=ev.node, fault=ev.fault, scripted=ev))
    world.enqueue(spec.engine.routing_update_period, Event(EventType.QUIESCE_CHECK))
    world.last_change = 0
    world.armed = False
    logger.info("world built: %d nodes, %d CHs, %d gateways, seed %d",
                len(world.nodes), len(world.engines), len(world.gateways), seed)
    return world


# ────────────────────────── Stepping ──────────────────────────

def step(world: World) -> Tuple[World, Event]:
    if not world.queue:
        raise EmptyQueue("no pending events")
    tick, seq, event = heapq.heappop(world.queue)
    world.clock = tick
    world.executed += 1
    if event.type in SCRIPTED:
        world.scripted_pending -= 1
    elif _is_traffic(event):
        world.traffic_pending -= 1
    _HANDLERS[event.type](world, seq, event)
    return world, event


def _on_timer(world: World, seq: int, ev: Event) -> None:
    rec = world.nodes[ev.node]
    if rec.engine is None or not world.is_active(ev.node) or rec.engine.timers.get(ev.timer) != world.clock:
        world.record(seq, "timer", ev.node, None, timer=ev.timer.value, skipped=True)
        return
    world.record(seq, "timer", ev.node, None, timer=ev.timer.value)
    _, out = on_timer(rec.engine, ev.timer, world.clock, rec.rng)
    world._drain(seq, ev.node)
    world.dispatch(seq, out)
    world.enqueue(rec.engine.timers[ev.timer], Event(EventType.TIMER, ev.node, timer=ev.timer))


def _overhear(world: World, seq: int, msg: ProtocolMessage) -> None:
    s, r = msg.transport_sender, msg.receiver
    for e in sorted(world.eavesdroppers):
        if not world.is_active(e):
            continue
        near = e in (s, r) or s in world.underlay.get(e, {}) or r in world.underlay.get(e, {})
        if not near:
            continue
        capture = Capture(world.clock, e, msg.kind.value, s, r)
        if msg.kind is MessageKind.INTRA_CLUSTER:
            record = decode_or_none(IntraClusterPayload, msg.payload)
            if record is not None:
                capture.recovered, capture.authorized = _attack(world, e, record)
        world.captures.append(capture)
        world.record(seq, "overheard", e, None, msg=msg.kind.value, recovered=capture.recovered)


def _attack(world: World, eavesdropper: NodeId, record: IntraClusterPayload) -> Tuple[bool, bool]:
    """Try every key the adversary holds plus a few guesses."""
    member = world.nodes[eavesdropper].member
    held = list(member.keys.values()) if member is not None and member.cluster_id == record.cluster_id else []
    guesses = [world._adversary_rng.random_bytes(CLUSTER_KEY_LEN) for _ in range(ADVERSARY_GUESSES)]
    head = world.head_of(record.cluster_id)
    authorized = (head is not None and head.cluster is not None and eavesdropper in head.cluster.members)
    for key in held + guesses:
        try:
            world.cipher.open(record.ciphertext, key)
            return True, authorized
        except CryptoError:
            continue
    return False, authorized


def _on_deliver(world: World, seq: int, ev: Event) -> None:
    msg = ev.message
    r = msg.receiver
    if frozenset((msg.transport_sender, r)) in world.cut:
        world._drop(seq, msg, "link_cut", primary=True)
        return
    if not world.is_active(r):
        world._drop(seq, msg, "silenced" if r in world.silenced else "inactive", primary=True)
        return

    world.delivered[msg.kind.value] += 1
    world.record(seq, "deliver", msg.transport_sender, r, msg=msg.kind.value, bytes=len(msg.payload))
    _overhear(world, seq, msg)
    rec = world.nodes[r]

    if msg.kind is MessageKind.KEY_DELIVERY:
        record = decode_or_none(KeyDeliveryPayload, msg.payload)
        if record is not None and record.member == r:
            world._install_key(r, record)
        return

    if rec.engine is not None:
        if msg.kind is MessageKind.INTRA_CLUSTER:
            _open_at_head(world, seq, rec, msg)
            return
        _, reaction = receive(rec.engine, msg, world.clock, rec.rng, world.probe_for(r))
        world._drain(seq, r)
        if reaction.delivered is not None:
            world.data["delivered"] += 1
            world.record(seq, "data_delivered", reaction.delivered.origin, r, data_id=reaction.delivered.data_id)
        world.dispatch(seq, reaction.outbound, ev.hops)
        return

    if msg.kind is MessageKind.RANDOM_WALK_DISCOVERY and r in world.gateways:
        out = forward_random_walk(msg, r, world.agents_of(r), world.spec.engine.forward_probability, rec.rng)
        world.dispatch(seq, out, ev.hops)


def _open_at_head(world: World, seq: int, rec: NodeRecord, msg: ProtocolMessage) -> None:
    record = decode_or_none(IntraClusterPayload, msg.payload)
    ok = False
    if record is not None and rec.cluster is not None and record.cluster_id == rec.cluster.cluster_id:
        try:
            world.cipher.open(record.ciphertext, rec.cluster.key)
            ok = True
        except CryptoError:
            ok = False
    world.intra["opened" if ok else "rejected"] += 1
    world.record(seq, "intra_open", msg.transport_sender, rec.spec.id, ok=ok)


def _on_fault(world: World, seq: int, ev: Event) -> None:
    fault = ev.fault
    for target in (fault.node, fault.a, fault.b):
        if target is not None and target not in world.nodes:
            raise UnknownTarget(f"fault {fault.kind.value} targets unknown node {target}")
    world.record(seq, "fault", fault.node if fault.node is not None else fault.a,
                 fault.b, fault=fault.kind.value)

    if fault.kind is FaultKind.LINK_CUT:
        world.cut.add(frozenset((fault.a, fault.b)))
        world._invalidate_distances()
        world._refresh_agents()
    elif fault.kind is FaultKind.EAVESDROPPER:
        world.eavesdroppers.add(fault.node)
    else:
        node = fault.node
        former = set()
        if fault.kind is FaultKind.MALICIOUS_CH_REMOVAL:
            gone = world.nodes[node].engine
            former = set(gone.neighbour_table) if gone is not None else set()
            for nid, engine in world.engines.items():
                if node in engine.neighbour_table:
                    former.add(nid)
        world.silenced.add(node)
        world._invalidate_distances()
        for nid in sorted(former):
            if world.is_active(nid):
                world.enqueue(world.clock + 1, Event(EventType.EVIDENCE, nid,
                                                     evidence=RemovalEvidence(node, world.clock)))


def _on_evidence(world: World, seq: int, ev: Event) -> None:
    rec = world.nodes[ev.node]
    world.record(seq, "evidence", ev.node, ev.evidence.removed_ch, observed_at=ev.evidence.observed_at)
    if rec.engine is None or not world.is_active(ev.node):
        return
    _, out = detect_malicious_removal(rec.engine, ev.evidence, world.clock, rec.rng)
    world._drain(seq, ev.node)
    world.dispatch(seq, out)


def _on_admit(world: World, seq: int, ev: Event) -> None:
    rec = world.nodes[ev.node]
    world.record(seq, "admit", ev.node, None, role=rec.role.value, cluster=rec.spec.cluster)
    if rec.active:
        return
    rec.active = True
    world._invalidate_distances()
    if rec.role is NodeRole.CLUSTER_HEAD:
        world._activate_ch(rec, world.clock)
        world._arm_timers(ev.node)
        members = [m.id for m in world.spec.nodes if m.cluster == rec.spec.cluster
                   and m.role is not NodeRole.CLUSTER_HEAD and world.nodes[m.id].active]
        for m in sorted(members):
            _admit_to_cluster(world, seq, rec, m)
    else:
        head = world.head_of(rec.spec.cluster)
        if head is not None and head.active and head.cluster is not None:
            _admit_to_cluster(world, seq, head, ev.node)
        if rec.role is NodeRole.GATEWAY:
            world._elect()
    world._refresh_agents()


def _admit_to_cluster(world: World, seq: int, head: NodeRecord, member: NodeId) -> None:
    if member in head.cluster.members:
        return
    head.cluster, delivery = admit_member(head.cluster, member)
    world.dispatch(seq, [delivery])


def _on_send(world: World, seq: int, ev: Event) -> None:
    job = ev.scripted
    world.data["sent"] += 1
    world.record(seq, "send", job.src, job.dst, bytes=len(job.body))
    rec = world.nodes[job.src]
    if rec.engine is None or not world.is_active(job.src):
        world.data["no_path"] += 1
        world.record(seq, "no_path", job.src, job.dst, reason="sender_inactive")
        return
    data_id = int(world.data["sent"])
    _, outcome, out = originate_data(rec.engine, job.dst, data_id, job.body, rec.rng)
    if isinstance(outcome, NoPathFound):
        world.data["no_path"] += 1
        world.record(seq, "no_path", job.src, job.dst)
        return
    if job.dst == job.src:
        world.data["delivered"] += 1
        world.record(seq, "data_delivered", job.src, job.dst, data_id=data_id)
    world.dispatch(seq, out)


def _on_intra(world: World, seq: int, ev: Event) -> None:
    job = ev.scripted
    rec = world.nodes[job.node]
    world.record(seq, "intra", job.node, None, bytes=len(job.body))
    member = rec.member
    head = world.head_of(rec.spec.cluster)
    if member is None or member.current_key is None or head is None or not world.is_active(job.node):
        world.record(seq, "discard", job.node, None, reason="no_key")
        return
    nonce = make_nonce(job.node, member.nonce_counter)
    member.nonce_counter += 1
    ct = world.cipher.seal(job.body, member.current_key, nonce)
    msg = ProtocolMessage(MessageKind.INTRA_CLUSTER, job.node, head.spec.id,
                          IntraClusterPayload(member.cluster_id, ct).encode(), covered=False)
    world.intra["sealed"] += 1
    world.dispatch(seq, [msg])


def _on_evict(world: World, seq: int, ev: Event) -> None:
    rec = world.nodes[ev.node]
    head = world.head_of(rec.spec.cluster)
    world.record(seq, "evict", head.spec.id if head else None, ev.node)
    if head is None or head.cluster is None:
        return
    try:
        head.cluster, deliveries = evict_member(head.cluster, ev.node, world._key_rng, world.spec.rekey_on_evict)
    except NotAMember:
        world.record(seq, "discard", head.spec.id, ev.node, reason="not_a_member")
        return
    if rec.member is not None:
        rec.member.evicted = True
    world.record(seq, "rekey", head.spec.id, None, key_id=head.cluster.key.key_id)
    world.dispatch(seq, deliveries)


def _on_quiesce_check(world: World, seq: int, ev: Event) -> None:
    quiet = world.clock - world.last_change
    world.record(seq, "quiesce_check", quiet=quiet)
    world.metrics_rows.append(metrics_row(world))
    if world.armed and quiet >= world.quiet_window() and world.quiescence_tick is None:
        world.quiescence_tick = world.clock
        world.record(seq, "quiescent", since=world.last_change)
    if not world.armed and world.clock >= _first_walk_due(world):
        world.armed = True
        world.last_change = world.clock
    world.enqueue(world.clock + world.spec.engine.routing_update_period, Event(EventType.QUIESCE_CHECK))


def _first_walk_due(world: World) -> int:
    dues = [rec.engine.config.random_walk_period for rec in world.nodes.values() if rec.engine is not None]
    return min(dues) if dues else 0


_HANDLERS = {
    EventType.DELIVER: _on_deliver,
    EventType.TIMER: _on_timer,
    EventType.FAULT: _on_fault,
    EventType.EVIDENCE: _on_evidence,
    EventType.ADMIT: _on_admit,
    EventType.SEND: _on_send,
    EventType.INTRA: _on_intra,
    EventType.EVICT: _on_evict,
    EventType.QUIESCE_CHECK: _on_quiesce_check,
}


def inject_fault(world: World, fault: FaultSpec, at: int) -> World:
    if at < world.clock:
        raise SimulationError(f"cannot inject a fault at {at}, clock is already {world.clock}")
    for target in (fault.node, fault.a, fault.b):
        if target is not None and target not in world.nodes:
            raise UnknownTarget(f"fault {fault.kind.value} targets unknown node {target}")
    world.enqueue(at, Event(EventType.FAULT, fault.node, fault=fault))
    return world


def run_until(world: World, limit: int, stop_at_quiescence: bool = True) -> RunReport:
    """Step while the next event is due at or before `limit`.

    With `stop_at_quiescence` the run ends once routing is quiet, no scripted
    event is left and no data, key or intra-cluster message is in flight.
    """
    while world.queue and world.queue[0][0] <= limit:
        step(world)
        if (stop_at_quiescence and world.quiescence_tick is not None
                and world.scripted_pending == 0 and world.traffic_pending == 0):
            break
    return build_report(world)


# ────────────────────────── Oracles & reporting ──────────────────────────

def oracle_shortest_paths(world: World) -> Dict[Tuple[NodeId, NodeId], Metric]:
    """All-pairs least cost over the current steg-link graph, by Dijkstra.

    An edge u->v counts only while both ends hold each other as neighbours,
    weighted by u's own link cost.
    """
    engines = world.engines
    graph: Dict[NodeId, List[Tuple[NodeId, Metric]]] = {u: [] for u in engines}
    for u, eng in engines.items():
        for v, link in sorted(eng.neighbour_table.items()):
            if v in engines and u in engines[v].neighbour_table:
                graph[u].append((v, link_cost(link, eng.config.weights)))

    out: Dict[Tuple[NodeId, NodeId], Metric] = {}
    for src in engines:
        best: Dict[NodeId, Metric] = {src: Metric(0, 0)}
        heap = [(0, 0, src)]
        while heap:
            cost, hops, u = heapq.heappop(heap)
            if (cost, hops) > (best[u].cost, best[u].hop_count):
                continue
            for v, w in graph[u]:
                cand = Metric(cost, hops) + w
                cur = best.get(v)
                if cand.is_reachable and (cur is None or (cand.cost, cand.hop_count) < (cur.cost, cur.hop_count)):
                    best[v] = cand
                    heapq.heappush(heap, (cand.cost, cand.hop_count, v))
        for dst in engines:
            out[(src, dst)] = best.get(dst, Metric.infinite())
    return out


def follow_next_hops(world: World, src: NodeId, dst: NodeId) -> Optional[List[NodeId]]:
    """Walk next-hop pointers; None on a loop, a dead end or an overlong path."""
    engines = world.engines
    path, node = [src], src
    while node != dst:
        engine = engines.get(node)
        entry = engine.routing_table.get(dst) if engine else None
        if entry is None or not entry.is_reachable:
            return None
        node = entry.next_hop
        if node in path or len(path) > len(engines):
            return None
        path.append(node)
    return path


def metrics_row(world: World) -> Dict[str, int]:
    engines = world.engines
    pairs = {frozenset((u, v)) for u, eng in engines.items() for v in eng.neighbour_table}
    entries = sum(1 for u, eng in engines.items() for d, e in eng.routing_table.items() if d != u and e.is_reachable)
    return {
        "tick": world.clock,
        "ch_count": len(engines),
        "steglink_count": len(pairs),
        "routing_entries": entries,
        "updates_sent": world.sent[MessageKind.ROUTING_UPDATE.value],
        "hellos_sent": world.sent[MessageKind.HELLO.value],
        "walks_forwarded": world.walks_forwarded,
        "data_delivered": world.data["delivered"],
    }


def _table_snapshot(engine: ChState) -> Dict[str, Any]:
    return {
        str(dest): {
            "next_hop": entry.next_hop,
            "cost": str(entry.metric),
            "hops": entry.metric.hop_count,
            "methods": sorted(entry.method_set),
        }
        for dest, entry in sorted(engine.routing_table.items())
    }


def build_report(world: World) -> RunReport:
    sent = int(world.data["sent"])
    ratio = None
    if sent:
        ratio = format_micro(round_half_up(Fraction(int(world.data["delivered"]) * MICRO, sent)))
    pending = sum(1 for _, _, ev in world.queue if ev.type is EventType.DELIVER)
    recoveries = [c for c in world.captures if c.recovered]
    clusters = {}
    for nid, rec in sorted(world.nodes.items()):
        if rec.cluster is not None:
            clusters[str(rec.cluster.cluster_id)] = {
                "head": nid,
                "members": sorted(rec.cluster.members),
                "key_id": rec.cluster.key.key_id,
            }
    return RunReport(
        seed=world.seed,
        scenario=world.spec.name,
        scenario_digest=world.spec.digest,
        final_tick=world.clock,
        executed_events=world.executed,
        quiescence_tick=world.quiescence_tick,
        routing_tables={str(n): _table_snapshot(e) for n, e in world.engines.items()},
        steg_links={str(n): sorted(e.neighbour_table) for n, e in world.engines.items()},
        message_counts={
            kind.value: {"sent": world.sent[kind.value], "delivered": world.delivered[kind.value],
                         "dropped": world.dropped[kind.value]}
            for kind in MessageKind
        },
        data={"sent": sent, "delivered": int(world.data["delivered"]),
              "no_path": int(world.data["no_path"]), "delivery_ratio": ratio},
        intra={k: int(world.intra[k]) for k in ("sealed", "opened", "rejected")},
        adversary={
            "eavesdroppers": sorted(world.eavesdroppers),
            "captured": len(world.captures),
            "intra_captured": sum(1 for c in world.captures if c.kind == MessageKind.INTRA_CLUSTER.value),
            "recovered": len(recoveries),
            "unauthorized_recoveries": sum(1 for c in recoveries if not c.authorized),
        },
        conservation={
            "emitted": sum(world.sent.values()),
            "delivered": sum(world.delivered.values()),
            "dropped": sum(world.dropped.values()),
            "pending": pending,
        },
        gateways={str(g): sorted(adj) for g, adj in world.gateways.items()},
        clusters=clusters,
    )

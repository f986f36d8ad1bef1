# -*- coding: utf-8 -*-
"""
Cluster-Head Protocol Engine
============================

The per-CH state machine: jittered periodic timers, random-walk discovery,
hello liveness, full-table routing updates, neighbour expiry, the triggered
update on detected malicious removal and the Create_steg_link relay.

Main loop of a CH, as driven by the simulator:

    random walk timer   -> sendRandomWalk to one random agent
    routing timer       -> sendRoutingUpdate (entire table, per neighbour)
    hello timer         -> sendHello to every neighbour
    expiry scan         -> drop silent neighbours, one update fanout
    walk received       -> findStegMsg / uncover / isNewEntry / forwardRandomWalk
    update received     -> updateMyRoutes, fanout if anything changed

Transitions mutate the given `ChState` in place and return it together with
the outbound messages. Callers that need to replay a transition keep a deep
copy. Derived facts worth tracing (link up/down, drops, fanouts, table
changes) are appended to `state.journal`, which the simulator drains.
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from src.core.codec import StegCodec
from src.core.constants import (
    DATA_TTL,
    DEFAULT_FORWARD_PROBABILITY,
    DEFAULT_HELLO_PERIOD,
    DEFAULT_HELLO_TIMEOUT,
    DEFAULT_RANDOM_WALK_PERIOD,
    DEFAULT_RELAY_DEPTH,
    DEFAULT_ROUTING_UPDATE_PERIOD,
    MICRO,
    STALE_ROUTE_FACTOR,
)
from src.core.domain import (
    CapabilityProfile,
    MessageKind,
    MethodRegistry,
    MetricWeights,
    NodeId,
    ProtocolMessage,
    StegLink,
    capability_intersection,
    describe_methods,
    link_cost,
)
from src.core.exceptions import ConfigError, EmptyProfile, TimerNotDue
from src.core.messages import (
    HELLO_ACK,
    HELLO_OFFER,
    Beacon,
    CreateStegLinkRequest,
    DataPayload,
    HelloPayload,
    RoutingAdvert,
    decode_or_none,
)
from src.core.routing import (
    NoPathFound,
    RouteEntry,
    SendOutcome,
    Sent,
    advertise,
    expire_stale,
    invalidate_via,
    merge_routing_update,
    prune_invalid,
    self_route,
    send_data,
)
from src.utils.rng import SplitMix64

logger = logging.getLogger(__name__)

Outbound = List[ProtocolMessage]
Probe = Callable[[NodeId], Optional[int]]


class TimerKind(Enum):
    RANDOM_WALK = "random_walk"
    ROUTING_UPDATE = "routing_update"
    HELLO = "hello"
    EXPIRY_SCAN = "expiry_scan"


# ────────────────────────── Configuration ──────────────────────────

@dataclass(frozen=True)
class EngineConfig:
    random_walk_period: int = DEFAULT_RANDOM_WALK_PERIOD
    routing_update_period: int = DEFAULT_ROUTING_UPDATE_PERIOD
    hello_period: int = DEFAULT_HELLO_PERIOD
    fluctuation_rw: int = 0
    fluctuation_ru: int = 0
    fluctuation_h: int = 0
    hello_timeout: int = DEFAULT_HELLO_TIMEOUT
    forward_probability: int = DEFAULT_FORWARD_PROBABILITY   # micro-units
    weights: MetricWeights = field(default_factory=MetricWeights)
    relay_depth: int = DEFAULT_RELAY_DEPTH
    expiry_scan_period: Optional[int] = None                 # defaults to hello_period
    discovery_method: Optional[int] = None
    registry: MethodRegistry = field(default_factory=lambda: MethodRegistry.uniform(range(8)))

    def __post_init__(self):
        periods = {
            "random_walk_period": self.random_walk_period,
            "routing_update_period": self.routing_update_period,
            "hello_period": self.hello_period,
            "expiry_scan_period": self.scan_period,
        }
        for name, value in periods.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        for name in ("fluctuation_rw", "fluctuation_ru", "fluctuation_h"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.hello_timeout <= self.hello_period:
            raise ConfigError(
                f"hello_timeout ({self.hello_timeout}) must exceed hello_period ({self.hello_period})"
            )
        if not 0 <= self.forward_probability <= MICRO:
            raise ConfigError("forward_probability must lie in [0, 1]")
        if self.relay_depth < 0:
            raise ConfigError("relay_depth must be >= 0")
        if self.discovery_method is not None and self.discovery_method not in self.registry:
            raise ConfigError(f"discovery_method {self.discovery_method} is not registered")

    @property
    def scan_period(self) -> int:
        return self.expiry_scan_period if self.expiry_scan_period is not None else self.hello_period

    @property
    def stale_window(self) -> int:
        return STALE_ROUTE_FACTOR * self.routing_update_period

    def period_of(self, kind: TimerKind) -> Tuple[int, int]:
        return {
            TimerKind.RANDOM_WALK: (self.random_walk_period, self.fluctuation_rw),
            TimerKind.ROUTING_UPDATE: (self.routing_update_period, self.fluctuation_ru),
            TimerKind.HELLO: (self.hello_period, self.fluctuation_h),
            TimerKind.EXPIRY_SCAN: (self.scan_period, 0),
        }[kind]


# ────────────────────────── State ──────────────────────────

@dataclass
class ChState:
    self_id: NodeId
    profile: CapabilityProfile
    config: EngineConfig
    neighbour_table: Dict[NodeId, StegLink] = field(default_factory=dict)
    routing_table: Dict[NodeId, RouteEntry] = field(default_factory=dict)
    adverts: Dict[NodeId, Dict[NodeId, Any]] = field(default_factory=dict)   # last advert per neighbour
    timers: Dict[TimerKind, int] = field(default_factory=dict)
    known_beacons: Set[Tuple[NodeId, FrozenSet[int]]] = field(default_factory=set)
    peer_profiles: Dict[NodeId, FrozenSet[int]] = field(default_factory=dict)
    incompatible: Dict[NodeId, FrozenSet[int]] = field(default_factory=dict)
    pending_offers: Dict[NodeId, FrozenSet[int]] = field(default_factory=dict)
    live_from: Dict[NodeId, int] = field(default_factory=dict)     # hello timing starts here for new links
    agents: Tuple[NodeId, ...] = ()          # underlay CH/GW neighbours, set by the world
    journal: List[Tuple[str, Dict[str, Any]]] = field(default_factory=list)

    def note(self, label: str, **detail: Any) -> None:
        self.journal.append((label, detail))

    def drain_journal(self) -> List[Tuple[str, Dict[str, Any]]]:
        out, self.journal = self.journal, []
        return out

    @property
    def codec(self) -> StegCodec:
        return StegCodec(self.config.registry)

    def decode_methods(self) -> List[int]:
        methods = set(self.profile.methods)
        if self.config.discovery_method is not None:
            methods.add(self.config.discovery_method)
        return sorted(methods)

    def common_methods(self, other: Iterable[int]) -> FrozenSet[int]:
        common = capability_intersection(self.profile, frozenset(other))
        if self.config.discovery_method is not None:
            common = common - {self.config.discovery_method}
        return common


def init_ch(self_id: NodeId, profile, config: EngineConfig, now: int = 0) -> ChState:
    profile = profile if isinstance(profile, CapabilityProfile) else CapabilityProfile(frozenset(profile))
    if not profile.methods:
        raise EmptyProfile(f"CH {self_id} has an empty capability profile")
    for m in profile:
        config.registry.get(m)
    state = ChState(self_id, profile, config)
    state.routing_table[self_id] = self_route(self_id, profile.methods, now)
    for kind in TimerKind:
        state.timers[kind] = now + config.period_of(kind)[0]
    return state


# ────────────────────────── Helpers ──────────────────────────

def _cover(state: ChState, kind: MessageKind, receiver: NodeId, record: bytes,
           method: int, rng: SplitMix64) -> ProtocolMessage:
    codec = state.codec
    carrier = codec.make_carrier_for(method, len(record), rng)
    envelope = codec.cover(record, method, carrier)
    return ProtocolMessage(kind, state.self_id, receiver, envelope.carrier.data, covered=True)


def _uncover(state: ChState, msg: ProtocolMessage) -> Optional[bytes]:
    found = state.codec.find_steg_msg(msg.payload, state.decode_methods())
    return found[1] if found else None


def _neighbour_digest(state: ChState) -> int:
    ids = b"".join(struct.pack(">Q", n) for n in sorted(state.neighbour_table))
    return zlib.crc32(ids) & 0xFFFFFFFF


def add_steg_link(state: ChState, peer: NodeId, methods: FrozenSet[int], delay: int, now: int,
                  capacity: Optional[int] = None, grace: int = 0) -> StegLink:
    """Install a link and the direct route over it.

    `grace` postpones hello timing until the peer's side can answer.
    """
    capacity = capacity if capacity is not None else state.config.registry.capacity_of(methods)
    link = StegLink(state.self_id, peer, methods, capacity, max(1, delay), last_hello=now)
    state.neighbour_table[peer] = link
    state.incompatible.pop(peer, None)
    state.pending_offers.pop(peer, None)
    if grace:
        state.live_from[peer] = now + grace
    else:
        state.live_from.pop(peer, None)
    current = state.routing_table.get(peer)
    direct = RouteEntry(peer, peer, link_cost(link, state.config.weights), link.methods, now)
    if current is None or not current.is_reachable or direct.metric.cost <= current.metric.cost:
        state.routing_table[peer] = direct
        state.note("table_changed", reason="link_up")
    state.note("link_up", peer=peer, methods=describe_methods(methods), delay=link.delay,
               capacity=link.capacity)
    logger.debug("CH %s: steg-link to %s over {%s}", state.self_id, peer, describe_methods(methods))
    return link


def routing_fanout(state: ChState, rng: SplitMix64, reason: str) -> Outbound:
    """sendRoutingUpdate: the entire table to every neighbour, then prune."""
    record = RoutingAdvert(state.self_id, advertise(state.routing_table)).encode()
    out = [
        _cover(state, MessageKind.ROUTING_UPDATE, n, record, link.preferred_method, rng)
        for n, link in sorted(state.neighbour_table.items())
    ]
    state.routing_table = prune_invalid(state.routing_table)
    state.note("fanout", reason=reason, count=len(out))
    return out


def forward_random_walk(msg: ProtocolMessage, self_id: NodeId, agents: Iterable[NodeId],
                        forward_probability: int, rng: SplitMix64) -> Outbound:
    """Pass the envelope on, unmodified, to one random agent with probability pf."""
    agents = sorted(agents)
    if not agents or not rng.coin(forward_probability):
        return []
    target = rng.choice(agents)
    return [ProtocolMessage(MessageKind.RANDOM_WALK_DISCOVERY, self_id, target, msg.payload, covered=True)]


# ────────────────────────── Timers ──────────────────────────

def on_timer(state: ChState, kind: TimerKind, now: int, rng: SplitMix64) -> Tuple[ChState, Outbound]:
    due = state.timers.get(kind)
    if due is None or due > now:
        raise TimerNotDue(f"CH {state.self_id}: {kind.value} due at {due}, now {now}")

    out: Outbound = []
    if kind is TimerKind.RANDOM_WALK:
        out = send_random_walk(state, rng)
    elif kind is TimerKind.ROUTING_UPDATE:
        out = routing_fanout(state, rng, "periodic")
    elif kind is TimerKind.HELLO:
        out = send_hello(state, rng)
    else:
        state, out = expire_neighbours(state, now, rng)

    period, fluctuation = state.config.period_of(kind)
    jitter = rng.uniform_int(0, fluctuation) if fluctuation else 0
    state.timers[kind] = now + period + jitter
    return state, out


def send_random_walk(state: ChState, rng: SplitMix64) -> Outbound:
    if not state.agents:
        return []
    method = state.config.discovery_method
    if method is None:
        method = min(state.profile.methods)
    record = Beacon(state.self_id, state.profile.methods).encode()
    target = rng.choice(sorted(state.agents))
    return [_cover(state, MessageKind.RANDOM_WALK_DISCOVERY, target, record, method, rng)]


def send_hello(state: ChState, rng: SplitMix64) -> Outbound:
    record = HelloPayload(state.self_id, _neighbour_digest(state)).encode()
    return [
        _cover(state, MessageKind.HELLO, n, record, link.preferred_method, rng)
        for n, link in sorted(state.neighbour_table.items())
    ]


def _send_offer(state: ChState, peer: NodeId, common: FrozenSet[int], rng: SplitMix64) -> ProtocolMessage:
    record = HelloPayload(state.self_id, _neighbour_digest(state), HELLO_OFFER, state.profile.methods).encode()
    state.note("offer", peer=peer, methods=describe_methods(common))
    return _cover(state, MessageKind.HELLO, peer, record, min(common), rng)


# ────────────────────────── Discovery ──────────────────────────

def _probe(probe: Optional[Probe], peer: NodeId) -> Optional[int]:
    """Underlay delay to `peer`; None when the pair cannot talk."""
    return probe(peer) if probe else 1


def handle_random_walk(state: ChState, msg: ProtocolMessage, now: int, rng: SplitMix64,
                       probe: Optional[Probe] = None) -> Tuple[ChState, Outbound]:
    out: Outbound = []
    beacon = decode_or_none(Beacon, _uncover(state, msg))

    if beacon is not None and beacon.address != state.self_id:
        entry = (beacon.address, frozenset(beacon.channels))
        if entry not in state.known_beacons:
            state.known_beacons.add(entry)
            state.peer_profiles[beacon.address] = frozenset(beacon.channels)
            if beacon.address not in state.neighbour_table:
                out.extend(_on_new_ch(state, beacon, now, rng, probe))
    elif beacon is None:
        state.note("walk_opaque")

    out.extend(forward_random_walk(msg, state.self_id, state.agents, state.config.forward_probability, rng))
    return state, out


def _on_new_ch(state: ChState, beacon: Beacon, now: int, rng: SplitMix64,
               probe: Optional[Probe]) -> Outbound:
    common = state.common_methods(beacon.channels)
    if common:
        delay = _probe(probe, beacon.address)
        if delay is None:
            state.note("discard", reason="unreachable", peer=beacon.address)
            return []
        add_steg_link(state, beacon.address, common, delay, now, grace=2 * delay)
        state.pending_offers[beacon.address] = common
        offer = _send_offer(state, beacon.address, common, rng)
        return [offer] + routing_fanout(state, rng, "discovery")

    state.incompatible[beacon.address] = frozenset(beacon.channels)
    state.note("incompatible", peer=beacon.address, channels=describe_methods(beacon.channels))
    request = CreateStegLinkRequest(beacon.address, frozenset(beacon.channels), 0, (state.self_id,))
    targets = [n for n in sorted(state.neighbour_table)
               if state.peer_profiles.get(n, frozenset()) & frozenset(beacon.channels)]
    if not targets:
        targets = sorted(state.neighbour_table)
    return [_relay_message(state, n, request, rng) for n in targets]


def _relay_message(state: ChState, neighbour: NodeId, request: CreateStegLinkRequest,
                   rng: SplitMix64) -> ProtocolMessage:
    link = state.neighbour_table[neighbour]
    return _cover(state, MessageKind.CREATE_STEG_LINK, neighbour, request.encode(), link.preferred_method, rng)


def relay_create_steg_link(state: ChState, request: CreateStegLinkRequest, now: int,
                           rng: SplitMix64) -> Tuple[ChState, Outbound]:
    """Offer a link to the stranded CH, or pass the request on."""
    if request.new_ch == state.self_id or request.new_ch in state.neighbour_table:
        return state, []
    if state.self_id in request.visited:
        state.note("discard", reason="relay_loop", new_ch=request.new_ch)
        return state, []

    common = state.common_methods(request.new_profile)
    if common:
        state.pending_offers[request.new_ch] = common
        state.peer_profiles[request.new_ch] = frozenset(request.new_profile)
        return state, [_send_offer(state, request.new_ch, common, rng)]

    depth = request.depth + 1
    if depth >= state.config.relay_depth:
        state.note("discard", reason="relay_depth", new_ch=request.new_ch)
        return state, []
    onward = CreateStegLinkRequest(request.new_ch, request.new_profile, depth,
                                   request.visited + (state.self_id,))
    targets = [n for n in sorted(state.neighbour_table) if n not in onward.visited]
    state.note("relay", new_ch=request.new_ch, depth=depth, count=len(targets))
    return state, [_relay_message(state, n, onward, rng) for n in targets]


# ────────────────────────── Hellos ──────────────────────────

def handle_hello(state: ChState, hello: HelloPayload, now: int) -> ChState:
    """updateNeighborLastHelloTime; strangers are ignored."""
    link = state.neighbour_table.get(hello.sender)
    if link is not None and link.last_hello != now:
        state.neighbour_table[hello.sender] = StegLink(
            link.local, link.peer, link.methods, link.capacity, link.delay, now)
    return state


def handle_link_offer(state: ChState, hello: HelloPayload, now: int, rng: SplitMix64,
                      probe: Optional[Probe] = None) -> Tuple[ChState, Outbound]:
    common = state.common_methods(hello.profile)
    if not common:
        state.note("discard", reason="offer_incompatible", peer=hello.sender)
        return state, []
    state.peer_profiles[hello.sender] = frozenset(hello.profile)
    if hello.sender in state.neighbour_table:
        handle_hello(state, hello, now)
    else:
        delay = _probe(probe, hello.sender)
        if delay is None:
            state.note("discard", reason="unreachable", peer=hello.sender)
            return state, []
        add_steg_link(state, hello.sender, common, delay, now, grace=2 * delay)
    record = HelloPayload(state.self_id, _neighbour_digest(state), HELLO_ACK, state.profile.methods).encode()
    return state, [_cover(state, MessageKind.HELLO_ACK, hello.sender, record, min(common), rng)]


def handle_link_ack(state: ChState, hello: HelloPayload, now: int,
                    probe: Optional[Probe] = None) -> ChState:
    if hello.sender in state.neighbour_table:
        state.pending_offers.pop(hello.sender, None)
        state.live_from.pop(hello.sender, None)
        return handle_hello(state, hello, now)
    methods = state.pending_offers.get(hello.sender)
    if methods is None:
        state.note("discard", reason="unsolicited_ack", peer=hello.sender)
        return state
    delay = _probe(probe, hello.sender)
    if delay is None:
        state.note("discard", reason="unreachable", peer=hello.sender)
        return state
    add_steg_link(state, hello.sender, methods, delay, now)
    return state


# ────────────────────────── Routing updates ──────────────────────────

def handle_routing_update(state: ChState, update: RoutingAdvert, now: int,
                          rng: SplitMix64) -> Tuple[ChState, Outbound]:
    link = state.neighbour_table.get(update.origin)
    if link is None:
        state.note("discard", reason="update_from_non_neighbour", peer=update.origin)
        return state, []
    state.adverts[update.origin] = {e.destination: e for e in update.entries}
    table, changed = merge_routing_update(state.routing_table, update.origin, link, update.entries,
                                          state.config.weights, now)
    state.routing_table = table
    if not changed:
        return state, []
    state.note("table_changed", reason="update", via=update.origin)
    return state, routing_fanout(state, rng, "update")


def expire_neighbours(state: ChState, now: int, rng: SplitMix64) -> Tuple[ChState, Outbound]:
    timeout = state.config.hello_timeout
    removed = sorted(n for n, link in state.neighbour_table.items()
                     if now - max(link.last_hello, state.live_from.get(n, 0)) > timeout)

    stale = expire_stale(state.routing_table, state.self_id, now, state.config.stale_window)
    if stale != state.routing_table:
        state.routing_table = stale
        state.note("table_changed", reason="stale")

    if not removed:
        return state, []
    for n in removed:
        del state.neighbour_table[n]
        state.adverts.pop(n, None)
        state.live_from.pop(n, None)
        state.note("link_down", peer=n, reason="hello_timeout")
    state.routing_table, _ = invalidate_via(state.routing_table, removed, now)
    state.note("table_changed", reason="expiry")
    logger.debug("CH %s: expired neighbours %s", state.self_id, removed)
    return state, routing_fanout(state, rng, "expiry")


@dataclass(frozen=True)
class RemovalEvidence:
    removed_ch: NodeId
    observed_at: int


def detect_malicious_removal(state: ChState, evidence: RemovalEvidence, now: int,
                             rng: SplitMix64) -> Tuple[ChState, Outbound]:
    """Triggered update: the only out-of-schedule fanout."""
    gone = evidence.removed_ch
    if gone in state.neighbour_table:
        del state.neighbour_table[gone]
        state.note("link_down", peer=gone, reason="malicious_removal")
    state.adverts.pop(gone, None)
    state.pending_offers.pop(gone, None)
    state.live_from.pop(gone, None)
    state.routing_table, changed = invalidate_via(state.routing_table, [gone], now)
    if changed:
        state.note("table_changed", reason="malicious_removal")
    return state, routing_fanout(state, rng, "triggered")


# ────────────────────────── Data ──────────────────────────

def _data_message(state: ChState, outcome: Sent, record: DataPayload, rng: SplitMix64) -> ProtocolMessage:
    return _cover(state, MessageKind.DATA, outcome.path.first_hop, record.encode(), outcome.method, rng)


def originate_data(state: ChState, destination: NodeId, data_id: int, body: bytes,
                   rng: SplitMix64) -> Tuple[ChState, SendOutcome, Outbound]:
    outcome = send_data(state, destination, body)
    if isinstance(outcome, NoPathFound) or destination == state.self_id:
        return state, outcome, []
    record = DataPayload(state.self_id, destination, data_id, DATA_TTL, body)
    return state, outcome, [_data_message(state, outcome, record, rng)]


def handle_data(state: ChState, record: DataPayload,
                rng: SplitMix64) -> Tuple[ChState, Outbound, Optional[DataPayload]]:
    """Deliver locally or forward one hop; returns the record when delivered."""
    if record.destination == state.self_id:
        return state, [], record
    if record.ttl <= 1:
        state.note("discard", reason="ttl", data_id=record.data_id)
        return state, [], None
    outcome = send_data(state, record.destination, record.body)
    if isinstance(outcome, NoPathFound):
        state.note("discard", reason="no_path", data_id=record.data_id)
        return state, [], None
    onward = DataPayload(record.origin, record.destination, record.data_id, record.ttl - 1, record.body)
    return state, [_data_message(state, outcome, onward, rng)], None


# ────────────────────────── Dispatcher ──────────────────────────

@dataclass
class Reaction:
    outbound: Outbound = field(default_factory=list)
    delivered: Optional[DataPayload] = None


def receive(state: ChState, msg: ProtocolMessage, now: int, rng: SplitMix64,
            probe: Optional[Probe] = None) -> Tuple[ChState, Reaction]:
    """Route an arriving covered message to its handler."""
    kind = msg.kind
    if kind is MessageKind.RANDOM_WALK_DISCOVERY:
        state, out = handle_random_walk(state, msg, now, rng, probe)
        return state, Reaction(out)

    payload = _uncover(state, msg)
    if payload is None:
        state.note("discard", reason="undecodable", kind=kind.value)
        return state, Reaction()

    if kind in (MessageKind.HELLO, MessageKind.HELLO_ACK):
        hello = decode_or_none(HelloPayload, payload)
        if hello is None:
            state.note("discard", reason="malformed", kind=kind.value)
            return state, Reaction()
        if hello.is_ack:
            return handle_link_ack(state, hello, now, probe), Reaction()
        if hello.is_offer:
            state, out = handle_link_offer(state, hello, now, rng, probe)
            return state, Reaction(out)
        return handle_hello(state, hello, now), Reaction()

    record_types = {
        MessageKind.ROUTING_UPDATE: RoutingAdvert,
        MessageKind.CREATE_STEG_LINK: CreateStegLinkRequest,
        MessageKind.DATA: DataPayload,
    }
    record_type = record_types.get(kind)
    record = decode_or_none(record_type, payload) if record_type else None
    if record is None:
        state.note("discard", reason="malformed", kind=kind.value)
        return state, Reaction()

    if kind is MessageKind.ROUTING_UPDATE:
        state, out = handle_routing_update(state, record, now, rng)
        return state, Reaction(out)
    if kind is MessageKind.CREATE_STEG_LINK:
        state, out = relay_create_steg_link(state, record, now, rng)
        return state, Reaction(out)
    state, out, delivered = handle_data(state, record, rng)
    return state, Reaction(out, delivered)

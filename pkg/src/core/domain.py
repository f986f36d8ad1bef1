# -*- coding: utf-8 -*-
"""
Domain Model
============

Identifiers, the steganographic capability model, the fixed-point metric and
the message vocabulary shared by every other module.

All metric math is integer micro-units (10^-6). Fractions are rounded once,
half-up, when a link cost is formed; sums of link costs are exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, Iterator, NewType, Optional, Union

from src.core.constants import INFINITY_COST, MAX_HOPS, MAX_METHOD_ID, MICRO
from src.core.exceptions import ConfigError, MetricOverflowError, UnknownMethod

NodeId = NewType("NodeId", int)


class NodeRole(Enum):
    CLUSTER_HEAD = "ch"
    GATEWAY = "gateway"
    MEMBER = "member"


class LayerTag(Enum):
    """Descriptive layer of a steganographic method; also selects its codec."""
    APPLICATION = "application"
    TRANSPORT = "transport"
    DATALINK = "datalink"


# ────────────────────────── Fixed point ──────────────────────────

Number = Union[int, str, Decimal, float]


def to_micro(value: Number) -> int:
    """Convert a decimal quantity to integer micro-units, rounding half-up.

    Floats are routed through their shortest repr so 0.7 means exactly 0.7.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not quantities")
    if isinstance(value, int):
        return value * MICRO
    d = Decimal(repr(value)) if isinstance(value, float) else Decimal(value)
    return int((d * MICRO).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def format_micro(micro: int) -> str:
    """Deterministic decimal string with six places, e.g. 2750000 -> '2.750000'."""
    sign = "-" if micro < 0 else ""
    whole, frac = divmod(abs(micro), MICRO)
    return f"{sign}{whole}.{frac:06d}"


def round_half_up(q: Fraction) -> int:
    """Nearest integer to a non-negative rational, ties away from zero."""
    return (2 * q.numerator + q.denominator) // (2 * q.denominator)


# ────────────────────────── Methods & capabilities ──────────────────────────

@dataclass(frozen=True)
class StegMethod:
    """One entry of the scenario's method registry."""
    id: int
    layer_tag: LayerTag = LayerTag.APPLICATION
    capacity: int = 1   # bits per tick contributed to a link using this method

    def __post_init__(self):
        if not 0 <= self.id <= MAX_METHOD_ID:
            raise ConfigError(f"method id {self.id} outside 0..{MAX_METHOD_ID}")
        if self.capacity < 1:
            raise ConfigError(f"method {self.id}: capacity must be >= 1")


@dataclass(frozen=True)
class MethodRegistry:
    methods: Dict[int, StegMethod] = field(default_factory=dict)

    @classmethod
    def of(cls, methods: Iterable[StegMethod]) -> "MethodRegistry":
        table: Dict[int, StegMethod] = {}
        for m in methods:
            if m.id in table:
                raise ConfigError(f"duplicate method id {m.id}")
            table[m.id] = m
        return cls(dict(sorted(table.items())))

    @classmethod
    def uniform(cls, ids: Iterable[int], layer_tag: LayerTag = LayerTag.APPLICATION) -> "MethodRegistry":
        return cls.of(StegMethod(i, layer_tag) for i in ids)

    def get(self, method_id: int) -> StegMethod:
        try:
            return self.methods[method_id]
        except KeyError:
            raise UnknownMethod(f"method {method_id} is not registered") from None

    def __contains__(self, method_id: object) -> bool:
        return method_id in self.methods

    def __iter__(self) -> Iterator[StegMethod]:
        return iter(self.methods.values())

    def capacity_of(self, method_ids: Iterable[int]) -> int:
        return sum(self.get(m).capacity for m in method_ids)


@dataclass(frozen=True)
class CapabilityProfile:
    """The set of steganographic methods a node supports."""
    methods: FrozenSet[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "methods", frozenset(self.methods))

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.methods))

    def __len__(self) -> int:
        return len(self.methods)

    def __contains__(self, method_id: object) -> bool:
        return method_id in self.methods

    def to_mask(self) -> int:
        mask = 0
        for m in self.methods:
            mask |= 1 << m
        return mask

    @classmethod
    def from_mask(cls, mask: int) -> "CapabilityProfile":
        return cls(frozenset(i for i in range(MAX_METHOD_ID + 1) if mask >> i & 1))


ProfileLike = Union[CapabilityProfile, FrozenSet[int], set]


def _method_set(p: ProfileLike) -> FrozenSet[int]:
    return p.methods if isinstance(p, CapabilityProfile) else frozenset(p)


def capability_intersection(a: ProfileLike, b: ProfileLike) -> FrozenSet[int]:
    """Methods both sides support; empty means no steg-link may form."""
    return _method_set(a) & _method_set(b)


# ────────────────────────── Metric ──────────────────────────

@dataclass(frozen=True)
class MetricWeights:
    """Per-factor weights in micro-units."""
    delay: int = MICRO
    capacity: int = MICRO
    methods: int = MICRO

    def __post_init__(self):
        if min(self.delay, self.capacity, self.methods) < 0:
            raise ConfigError("metric weights must be non-negative")

    @classmethod
    def from_units(cls, delay: Number = 1, capacity: Number = 1, methods: Number = 1) -> "MetricWeights":
        return cls(to_micro(delay), to_micro(capacity), to_micro(methods))


@dataclass(frozen=True, order=True)
class Metric:
    cost: int = 0          # micro-units
    hop_count: int = 0

    @classmethod
    def infinite(cls, hop_count: int = 0) -> "Metric":
        return cls(INFINITY_COST, hop_count)

    @property
    def is_reachable(self) -> bool:
        return self.cost < INFINITY_COST and self.hop_count <= MAX_HOPS

    def __add__(self, other: "Metric") -> "Metric":
        hops = self.hop_count + other.hop_count
        if not (self.is_reachable and other.is_reachable) or hops > MAX_HOPS:
            return Metric(INFINITY_COST, hops)
        return Metric(min(self.cost + other.cost, INFINITY_COST), hops)

    def __str__(self) -> str:
        if not self.is_reachable:
            return "INF"
        return format_micro(self.cost)


def link_cost(link: "StegLink", weights: MetricWeights) -> Metric:
    """w_delay*delay + w_capacity/capacity + w_methods/|methods|, one hop."""
    exact = (
        Fraction(weights.delay * link.delay)
        + Fraction(weights.capacity, link.capacity)
        + Fraction(weights.methods, len(link.methods))
    )
    cost = round_half_up(exact)
    if cost >= INFINITY_COST:
        raise MetricOverflowError(
            f"link {link.local}->{link.peer} costs {format_micro(cost)}, at or above INFINITY_COST"
        )
    return Metric(cost, 1)


# ────────────────────────── Links ──────────────────────────

@dataclass(frozen=True)
class StegLink:
    """Covert link from `local` to `peer` over a negotiated method set."""
    local: NodeId
    peer: NodeId
    methods: FrozenSet[int]
    capacity: int
    delay: int
    last_hello: int = 0

    def __post_init__(self):
        object.__setattr__(self, "methods", frozenset(self.methods))
        if not self.methods:
            raise ConfigError(f"steg-link {self.local}->{self.peer} has no methods")
        if self.capacity < 1 or self.delay < 1:
            raise ConfigError(f"steg-link {self.local}->{self.peer} needs capacity >= 1 and delay >= 1")

    @property
    def preferred_method(self) -> int:
        return min(self.methods)


# ────────────────────────── Messages ──────────────────────────

class MessageKind(Enum):
    RANDOM_WALK_DISCOVERY = "walk"
    HELLO = "hello"
    HELLO_ACK = "hello_ack"
    ROUTING_UPDATE = "update"
    CREATE_STEG_LINK = "create_steg_link"
    DATA = "data"
    KEY_DELIVERY = "key_delivery"
    INTRA_CLUSTER = "intra"


_KIND_TAGS = {kind: i for i, kind in enumerate(MessageKind)}


@dataclass(frozen=True)
class ProtocolMessage:
    """A message handed to the simulator for delivery.

    `payload` is carrier bytes when `covered`, otherwise the raw record
    (key delivery or sealed intra-cluster ciphertext).
    """
    kind: MessageKind
    transport_sender: NodeId
    receiver: NodeId
    payload: bytes
    covered: bool

    def __post_init__(self):
        if self.kind is MessageKind.RANDOM_WALK_DISCOVERY and not self.covered:
            raise ValueError("discovery walks are always covered")

    def to_wire(self) -> bytes:
        """Bytes an observer on the channel sees.

        Discovery walks carry no source field at all.
        """
        tag = bytes([_KIND_TAGS[self.kind]])
        if self.kind is MessageKind.RANDOM_WALK_DISCOVERY:
            return tag + self.payload
        return tag + struct.pack(">Q", self.transport_sender) + self.payload


def describe_methods(methods: Optional[Iterable[int]]) -> str:
    return ",".join(str(m) for m in sorted(methods or ()))

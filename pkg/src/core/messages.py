# -*- coding: utf-8 -*-
"""
Payload Records
===============

Binary records carried inside covered carriers (or raw, for the trusted
intra-cluster edge). All integers are big-endian; method sets travel as a
64-bit mask.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Tuple

from src.core.domain import CapabilityProfile, NodeId

_BEACON = struct.Struct(">QQ")
_HELLO = struct.Struct(">QIBQ")
_ADVERT_HEAD = struct.Struct(">QH")
_ADVERT_ENTRY = struct.Struct(">QQIBQ")
_RELAY_HEAD = struct.Struct(">QQBB")
_DATA_HEAD = struct.Struct(">QQIBH")
_KEY = struct.Struct(">QQI32s")
_INTRA_HEAD = struct.Struct(">Q")

HELLO_OFFER = 0x01
HELLO_ACK = 0x02


def _mask(methods) -> int:
    return CapabilityProfile(frozenset(methods)).to_mask()


def _unmask(mask: int) -> FrozenSet[int]:
    return CapabilityProfile.from_mask(mask).methods


def _unpack(s: struct.Struct, data: bytes, offset: int = 0) -> tuple:
    if len(data) < offset + s.size:
        raise ValueError(f"truncated record: need {offset + s.size} bytes, have {len(data)}")
    return s.unpack_from(data, offset)


@dataclass(frozen=True)
class Beacon:
    """Discovery beacon: the CH address and its steg capabilities."""
    address: NodeId
    channels: FrozenSet[int]

    def encode(self) -> bytes:
        return _BEACON.pack(self.address, _mask(self.channels))

    @classmethod
    def decode(cls, data: bytes) -> "Beacon":
        address, mask = _unpack(_BEACON, data)
        return cls(NodeId(address), _unmask(mask))


@dataclass(frozen=True)
class HelloPayload:
    sender: NodeId
    digest: int = 0                       # CRC of the sender's neighbour ids; carried, unused
    flags: int = 0
    profile: FrozenSet[int] = frozenset()  # only meaningful on offers

    @property
    def is_offer(self) -> bool:
        return bool(self.flags & HELLO_OFFER)

    @property
    def is_ack(self) -> bool:
        return bool(self.flags & HELLO_ACK)

    def encode(self) -> bytes:
        return _HELLO.pack(self.sender, self.digest, self.flags, _mask(self.profile))

    @classmethod
    def decode(cls, data: bytes) -> "HelloPayload":
        sender, digest, flags, mask = _unpack(_HELLO, data)
        return cls(NodeId(sender), digest, flags, _unmask(mask))


@dataclass(frozen=True)
class AdvertisedRoute:
    destination: NodeId
    next_hop: NodeId
    cost: int
    hop_count: int
    methods: FrozenSet[int]


@dataclass(frozen=True)
class RoutingAdvert:
    """The entire routing table of `origin`."""
    origin: NodeId
    entries: Tuple[AdvertisedRoute, ...] = ()

    def encode(self) -> bytes:
        out = bytearray(_ADVERT_HEAD.pack(self.origin, len(self.entries)))
        for e in self.entries:
            out += _ADVERT_ENTRY.pack(e.destination, e.next_hop, e.cost, min(e.hop_count, 255), _mask(e.methods))
        return bytes(out)

    @classmethod
    def decode(cls, data: bytes) -> "RoutingAdvert":
        origin, count = _unpack(_ADVERT_HEAD, data)
        entries: List[AdvertisedRoute] = []
        offset = _ADVERT_HEAD.size
        for _ in range(count):
            dest, hop, cost, hops, mask = _unpack(_ADVERT_ENTRY, data, offset)
            entries.append(AdvertisedRoute(NodeId(dest), NodeId(hop), cost, hops, _unmask(mask)))
            offset += _ADVERT_ENTRY.size
        return cls(NodeId(origin), tuple(entries))


@dataclass(frozen=True)
class CreateStegLinkRequest:
    new_ch: NodeId
    new_profile: FrozenSet[int]
    depth: int = 0
    visited: Tuple[NodeId, ...] = ()

    def encode(self) -> bytes:
        head = _RELAY_HEAD.pack(self.new_ch, _mask(self.new_profile), self.depth, len(self.visited))
        return head + b"".join(struct.pack(">Q", v) for v in self.visited)

    @classmethod
    def decode(cls, data: bytes) -> "CreateStegLinkRequest":
        new_ch, mask, depth, count = _unpack(_RELAY_HEAD, data)
        if len(data) < _RELAY_HEAD.size + 8 * count:
            raise ValueError("truncated visited list")
        visited = struct.unpack_from(f">{count}Q", data, _RELAY_HEAD.size)
        return cls(NodeId(new_ch), _unmask(mask), depth, tuple(NodeId(v) for v in visited))


@dataclass(frozen=True)
class DataPayload:
    origin: NodeId
    destination: NodeId
    data_id: int
    ttl: int
    body: bytes = b""

    def encode(self) -> bytes:
        return _DATA_HEAD.pack(self.origin, self.destination, self.data_id, self.ttl, len(self.body)) + self.body

    @classmethod
    def decode(cls, data: bytes) -> "DataPayload":
        origin, dest, data_id, ttl, length = _unpack(_DATA_HEAD, data)
        body = data[_DATA_HEAD.size:_DATA_HEAD.size + length]
        if len(body) != length:
            raise ValueError("truncated data body")
        return cls(NodeId(origin), NodeId(dest), data_id, ttl, body)


@dataclass(frozen=True)
class KeyDeliveryPayload:
    cluster_id: int
    member: NodeId
    key_id: int
    key: bytes = field(repr=False, default=b"")

    def encode(self) -> bytes:
        return _KEY.pack(self.cluster_id, self.member, self.key_id, self.key)

    @classmethod
    def decode(cls, data: bytes) -> "KeyDeliveryPayload":
        cluster_id, member, key_id, key = _unpack(_KEY, data)
        return cls(cluster_id, NodeId(member), key_id, key)


@dataclass(frozen=True)
class IntraClusterPayload:
    cluster_id: int
    ciphertext: bytes

    def encode(self) -> bytes:
        return _INTRA_HEAD.pack(self.cluster_id) + self.ciphertext

    @classmethod
    def decode(cls, data: bytes) -> "IntraClusterPayload":
        (cluster_id,) = _unpack(_INTRA_HEAD, data)
        return cls(cluster_id, data[_INTRA_HEAD.size:])


def decode_or_none(record_type, data: Optional[bytes]):
    if data is None:
        return None
    try:
        return record_type.decode(data)
    except (ValueError, struct.error):
        return None

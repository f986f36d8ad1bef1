# -*- coding: utf-8 -*-
"""
Intra-Cluster Security
======================

Cluster-wide symmetric keys, their trusted delivery to members, sealing of
intra-cluster traffic and trust-thresholded gateway election.

Two cipher modes:

1. **SplitMix** (no external deps, default):
   - ciphertext = nonce(8) || payload XOR keystream(key, nonce) || tag(4)
   - tag = CRC-32(nonce || plaintext), u32 big-endian
   - Deterministic simulation stand-in; NOT cryptographically secure

2. **AES-GCM** (requires ``cryptography`` package):
   - ciphertext = nonce(8) || AES-256-GCM(key, nonce || 0x00000000, payload)
   - For deployments that want a real AEAD behind the same contract
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Protocol, Tuple, Union

from src.core.constants import CLUSTER_KEY_LEN, MICRO, NONCE_LEN, TAG_LEN
from src.core.domain import MessageKind, NodeId, ProtocolMessage, to_micro
from src.core.exceptions import AlreadyMember, ConfigError, IntegrityFailure, NotAMember
from src.core.messages import KeyDeliveryPayload
from src.utils.rng import SplitMix64, keystream, xor_bytes

logger = logging.getLogger(__name__)


# ────────────────────────── Keys & trust ──────────────────────────

@dataclass(frozen=True)
class ClusterKey:
    key_id: int
    secret: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.secret) != CLUSTER_KEY_LEN:
            raise ConfigError(f"cluster key must be {CLUSTER_KEY_LEN} bytes")


@dataclass(frozen=True, order=True)
class TrustValue:
    """Fixed-point trust in [0, 1], micro-unit resolution."""
    value: int = 0

    def __post_init__(self):
        if not 0 <= self.value <= MICRO:
            raise ConfigError(f"trust {self.value} outside [0, {MICRO}] micro-units")

    @classmethod
    def of(cls, value) -> "TrustValue":
        return cls(to_micro(value))


def generate_cluster_key(rng: SplitMix64, prev_id: int = 0) -> ClusterKey:
    return ClusterKey(prev_id + 1, rng.random_bytes(CLUSTER_KEY_LEN))


def elect_gateways(border_nodes: Iterable[Tuple[NodeId, TrustValue]], threshold: TrustValue) -> FrozenSet[NodeId]:
    """Border nodes trusted enough to hold gateway status."""
    return frozenset(node for node, trust in border_nodes if trust >= threshold)


# ────────────────────────── Cluster membership ──────────────────────────

@dataclass(frozen=True)
class ClusterPolicy:
    gateway_threshold: TrustValue = TrustValue(MICRO // 2)
    rekey_on_evict: bool = True


@dataclass(frozen=True)
class ClusterState:
    cluster_id: int
    head: NodeId
    key: ClusterKey
    members: FrozenSet[NodeId] = frozenset()
    key_history: Tuple[int, ...] = ()   # retired key ids, oldest first


def new_cluster(cluster_id: int, head: NodeId, rng: SplitMix64) -> ClusterState:
    return ClusterState(cluster_id, head, generate_cluster_key(rng, 0))


def key_delivery(state: ClusterState, member: NodeId) -> ProtocolMessage:
    """Trusted CH -> member delivery of the current key (never covered)."""
    record = KeyDeliveryPayload(state.cluster_id, member, state.key.key_id, state.key.secret)
    return ProtocolMessage(MessageKind.KEY_DELIVERY, state.head, member, record.encode(), covered=False)


def admit_member(state: ClusterState, node: NodeId) -> Tuple[ClusterState, ProtocolMessage]:
    if node in state.members:
        raise AlreadyMember(f"node {node} is already a member of cluster {state.cluster_id}")
    state = replace(state, members=state.members | {node})
    logger.debug("cluster %s admitted %s under key_id %d", state.cluster_id, node, state.key.key_id)
    return state, key_delivery(state, node)


def rekey(state: ClusterState, rng: SplitMix64) -> Tuple[ClusterState, List[ProtocolMessage]]:
    new_key = generate_cluster_key(rng, state.key.key_id)
    state = replace(state, key=new_key, key_history=state.key_history + (state.key.key_id,))
    return state, [key_delivery(state, m) for m in sorted(state.members)]


def evict_member(state: ClusterState, node: NodeId, rng: SplitMix64,
                 rekey_on_evict: bool = True) -> Tuple[ClusterState, List[ProtocolMessage]]:
    """Remove `node`; by default re-key and hand the new key to everyone left."""
    if node not in state.members:
        raise NotAMember(f"node {node} is not a member of cluster {state.cluster_id}")
    state = replace(state, members=state.members - {node})
    if not rekey_on_evict:
        return state, []
    state, deliveries = rekey(state, rng)
    logger.info("cluster %s evicted %s, re-keyed to key_id %d", state.cluster_id, node, state.key.key_id)
    return state, deliveries


# ────────────────────────── Ciphers ──────────────────────────

KeyLike = Union[ClusterKey, bytes]


def _secret(key: KeyLike) -> bytes:
    return key.secret if isinstance(key, ClusterKey) else bytes(key)


def make_nonce(sender: NodeId, counter: int) -> bytes:
    """Per-sender nonce: low 32 bits of the sender id, then a 32-bit counter."""
    return struct.pack(">II", sender & 0xFFFFFFFF, counter & 0xFFFFFFFF)


def _tag(nonce: bytes, plaintext: bytes) -> bytes:
    return struct.pack(">I", zlib.crc32(nonce + plaintext) & 0xFFFFFFFF)


def seal_intra(payload: bytes, key: KeyLike, nonce: bytes) -> bytes:
    if len(nonce) != NONCE_LEN:
        raise ValueError(f"nonce must be {NONCE_LEN} bytes")
    body = xor_bytes(payload, keystream(_secret(key), nonce, len(payload)))
    return nonce + body + _tag(nonce, payload)


def open_intra(ct: bytes, key: KeyLike) -> bytes:
    if len(ct) < NONCE_LEN + TAG_LEN:
        raise IntegrityFailure("ciphertext shorter than nonce and tag")
    nonce, body, tag = ct[:NONCE_LEN], ct[NONCE_LEN:-TAG_LEN], ct[-TAG_LEN:]
    plaintext = xor_bytes(body, keystream(_secret(key), nonce, len(body)))
    if _tag(nonce, plaintext) != tag:
        raise IntegrityFailure("integrity tag mismatch")
    return plaintext


class IntraClusterCipher(Protocol):
    name: str

    def seal(self, payload: bytes, key: KeyLike, nonce: bytes) -> bytes: ...

    def open(self, ct: bytes, key: KeyLike) -> bytes: ...


class SplitMixCipher:
    name = "splitmix"

    def seal(self, payload: bytes, key: KeyLike, nonce: bytes) -> bytes:
        return seal_intra(payload, key, nonce)

    def open(self, ct: bytes, key: KeyLike) -> bytes:
        return open_intra(ct, key)


def is_cryptography_available() -> bool:
    """Check if the ``cryptography`` package is installed."""
    try:
        import cryptography  # noqa: F401
        return True
    except ImportError:
        return False


class AesGcmCipher:
    """AES-256-GCM behind the intra-cluster contract.

    Raises:
        ImportError: if ``cryptography`` is not installed.
    """

    name = "aes-gcm"

    def __init__(self):
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM
        self._aead = AESGCM

    def seal(self, payload: bytes, key: KeyLike, nonce: bytes) -> bytes:
        if len(nonce) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes")
        return nonce + self._aead(_secret(key)).encrypt(nonce + b"\0" * 4, payload, None)

    def open(self, ct: bytes, key: KeyLike) -> bytes:
        from cryptography.exceptions import InvalidTag
        if len(ct) < NONCE_LEN + 16:
            raise IntegrityFailure("ciphertext shorter than nonce and tag")
        nonce = ct[:NONCE_LEN]
        try:
            return self._aead(_secret(key)).decrypt(nonce + b"\0" * 4, ct[NONCE_LEN:], None)
        except InvalidTag:
            raise IntegrityFailure("AES-GCM tag mismatch") from None


_CIPHERS: Dict[str, type] = {"splitmix": SplitMixCipher, "aes-gcm": AesGcmCipher}


def get_cipher(name: str = "splitmix") -> IntraClusterCipher:
    if name not in _CIPHERS:
        raise ConfigError(f"unknown intra-cluster cipher '{name}'")
    if name == AesGcmCipher.name and not is_cryptography_available():
        raise ConfigError("cipher 'aes-gcm' needs the cryptography package")
    return _CIPHERS[name]()

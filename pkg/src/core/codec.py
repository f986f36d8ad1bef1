# -*- coding: utf-8 -*-
"""
Covert Channel Codecs
=====================

Embedding and extraction for the two reference carriers. Byte layouts are
documented with test vectors in docs/CODEC.md.

HeaderField (Transport / DataLink methods)
    bytes 0..7      untouched header prefix
    bytes 8..11     payload length, u32 big-endian      ┐
    bytes 12..15    CRC-32(method_id || payload)         ├ whitened options region
    bytes 16..      payload                              ┘
    minimal size    max(32, 16 + L)

PayloadLowBits (Application methods)
    LSB of byte i               bit i of the payload (MSB-first per byte)
    LSBs of bytes n-64..n-33    payload length, u32 big-endian
    LSBs of bytes n-32..n-1     CRC-32(method_id || payload)
    minimal size                8*L + 64

The method id is never written in the clear: receivers trial-decode in
ascending id order and the checksum binds the method.
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from src.core.constants import (
    HEADER_MIN_CARRIER,
    HEADER_OPTIONS_OFFSET,
    HEADER_PREAMBLE_LEN,
    LOWBITS_TRAILER_LEN,
)
from src.core.domain import CapabilityProfile, LayerTag, MethodRegistry
from src.core.exceptions import CarrierKindMismatch, CarrierTooSmall
from src.utils.rng import SplitMix64, keystream, xor_bytes

logger = logging.getLogger(__name__)


class CarrierKind(Enum):
    HEADER_FIELD = "header_field"
    PAYLOAD_LOW_BITS = "payload_low_bits"


@dataclass(frozen=True)
class CoverCarrier:
    data: bytes
    kind: CarrierKind

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class StegEnvelope:
    carrier: CoverCarrier
    method: int   # sender-side bookkeeping only; never part of the bytes


def checksum(method_id: int, payload: bytes) -> int:
    """CRC-32 (reflected 0x04C11DB7, init/xorout 0xFFFFFFFF) over id || payload."""
    return zlib.crc32(bytes([method_id]) + payload) & 0xFFFFFFFF


def min_carrier_size(kind: CarrierKind, payload_len: int) -> int:
    if payload_len < 0:
        raise ValueError("payload length must be >= 0")
    if kind is CarrierKind.HEADER_FIELD:
        return max(HEADER_MIN_CARRIER, HEADER_OPTIONS_OFFSET + HEADER_PREAMBLE_LEN + payload_len)
    return 8 * payload_len + LOWBITS_TRAILER_LEN


def make_carrier(kind: CarrierKind, min_payload: int, rng: SplitMix64) -> CoverCarrier:
    """Innocuous stand-in traffic of the minimal size for `min_payload` bytes."""
    return CoverCarrier(rng.random_bytes(min_carrier_size(kind, min_payload)), kind)


def _whitening(method_id: int, key: Optional[bytes], length: int) -> bytes:
    return keystream(key or b"", b"HF" + bytes([method_id]), length)


def _link_stream(method_id: int, key: bytes, length: int) -> bytes:
    return keystream(key, b"LB" + bytes([method_id]), length)


def _bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))


def _set_lsbs(arr: np.ndarray, start: int, bits: np.ndarray) -> None:
    arr[start:start + len(bits)] = (arr[start:start + len(bits)] & 0xFE) | bits


def _read_lsbs(arr: np.ndarray, start: int, count: int) -> bytes:
    return np.packbits(arr[start:start + count] & 1).tobytes()


class StegCodec:
    """Cover / uncover primitives bound to a method registry."""

    def __init__(self, registry: MethodRegistry):
        self.registry = registry

    def kind_of(self, method_id: int) -> CarrierKind:
        layer = self.registry.get(method_id).layer_tag
        if layer is LayerTag.APPLICATION:
            return CarrierKind.PAYLOAD_LOW_BITS
        return CarrierKind.HEADER_FIELD

    def make_carrier_for(self, method_id: int, payload_len: int, rng: SplitMix64) -> CoverCarrier:
        return make_carrier(self.kind_of(method_id), payload_len, rng)

    # ── embedding ──

    def cover(self, payload: bytes, method_id: int, carrier: CoverCarrier,
              key: Optional[bytes] = None) -> StegEnvelope:
        kind = self.kind_of(method_id)
        if carrier.kind is not kind:
            raise CarrierKindMismatch(
                f"method {method_id} embeds into {kind.value}, got a {carrier.kind.value} carrier"
            )
        needed = min_carrier_size(kind, len(payload))
        if len(carrier) < needed:
            raise CarrierTooSmall(f"{len(payload)}-byte payload needs {needed} carrier bytes, got {len(carrier)}")

        crc = checksum(method_id, payload)
        if kind is CarrierKind.HEADER_FIELD:
            region = struct.pack(">II", len(payload), crc) + payload
            region = xor_bytes(region, _whitening(method_id, key, len(region)))
            out = bytearray(carrier.data)
            out[HEADER_OPTIONS_OFFSET:HEADER_OPTIONS_OFFSET + len(region)] = region
            data = bytes(out)
        else:
            body = xor_bytes(payload, _link_stream(method_id, key, len(payload))) if key else payload
            arr = np.frombuffer(carrier.data, dtype=np.uint8).copy()
            n = len(arr)
            _set_lsbs(arr, 0, _bits(body))
            _set_lsbs(arr, n - LOWBITS_TRAILER_LEN, _bits(struct.pack(">I", len(payload))))
            _set_lsbs(arr, n - LOWBITS_TRAILER_LEN // 2, _bits(struct.pack(">I", crc)))
            data = arr.tobytes()
        return StegEnvelope(CoverCarrier(data, kind), method_id)

    # ── extraction ──

    def uncover(self, data: bytes, method_id: int, key: Optional[bytes] = None) -> Optional[bytes]:
        """Payload if `method_id` (and key) validates on these bytes, else None."""
        if self.kind_of(method_id) is CarrierKind.HEADER_FIELD:
            return self._uncover_header(data, method_id, key)
        return self._uncover_lowbits(data, method_id, key)

    def _uncover_header(self, data: bytes, method_id: int, key: Optional[bytes]) -> Optional[bytes]:
        if len(data) < HEADER_MIN_CARRIER:
            return None
        region = data[HEADER_OPTIONS_OFFSET:]
        stream = _whitening(method_id, key, len(region))
        length, crc = struct.unpack(">II", xor_bytes(region[:HEADER_PREAMBLE_LEN], stream))
        if HEADER_PREAMBLE_LEN + length > len(region):
            return None
        end = HEADER_PREAMBLE_LEN + length
        payload = xor_bytes(region[HEADER_PREAMBLE_LEN:end], stream[HEADER_PREAMBLE_LEN:end])
        return payload if checksum(method_id, payload) == crc else None

    def _uncover_lowbits(self, data: bytes, method_id: int, key: Optional[bytes]) -> Optional[bytes]:
        n = len(data)
        if n < LOWBITS_TRAILER_LEN:
            return None
        arr = np.frombuffer(data, dtype=np.uint8)
        (length,) = struct.unpack(">I", _read_lsbs(arr, n - LOWBITS_TRAILER_LEN, 32))
        if 8 * length > n - LOWBITS_TRAILER_LEN:
            return None
        (crc,) = struct.unpack(">I", _read_lsbs(arr, n - LOWBITS_TRAILER_LEN // 2, 32))
        body = _read_lsbs(arr, 0, 8 * length)
        payload = xor_bytes(body, _link_stream(method_id, key, length)) if key else body
        return payload if checksum(method_id, payload) == crc else None

    def find_steg_msg(self, received: Union[bytes, CoverCarrier],
                      profile: Union[CapabilityProfile, Iterable[int]],
                      key: Optional[bytes] = None) -> Optional[Tuple[int, bytes]]:
        """Trial-decode with each capable method in ascending id order."""
        data = received.data if isinstance(received, CoverCarrier) else received
        methods = profile if isinstance(profile, CapabilityProfile) else sorted(set(profile))
        for method_id in methods:
            if method_id not in self.registry:
                continue
            payload = self.uncover(data, method_id, key)
            if payload is not None:
                return method_id, payload
        logger.debug("no method of %s validates a %d-byte carrier", list(methods), len(data))
        return None


# ────────────────────────── Functional API ──────────────────────────

def cover(payload: bytes, method_id: int, carrier: CoverCarrier, key: Optional[bytes] = None,
          *, registry: MethodRegistry) -> StegEnvelope:
    return StegCodec(registry).cover(payload, method_id, carrier, key)


def find_steg_msg(received: Union[bytes, CoverCarrier], profile: Union[CapabilityProfile, Iterable[int]],
                  key: Optional[bytes] = None, *, registry: MethodRegistry) -> Optional[Tuple[int, bytes]]:
    return StegCodec(registry).find_steg_msg(received, profile, key)

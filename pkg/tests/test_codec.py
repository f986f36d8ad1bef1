import struct
import zlib

import numpy as np
import pytest

from src.core.codec import (
    CarrierKind,
    CoverCarrier,
    StegCodec,
    checksum,
    cover,
    find_steg_msg,
    make_carrier,
    min_carrier_size,
)
from src.core.exceptions import CarrierKindMismatch, CarrierTooSmall
from src.core.messages import Beacon
from src.utils.rng import SplitMix64

PAYLOAD = b"\xde\xad\xbe\xef"


@pytest.fixture
def codec(registry):
    return StegCodec(registry)


def test_lowbits_vector_in_zero_carrier(codec):
    carrier = CoverCarrier(bytes(96), CarrierKind.PAYLOAD_LOW_BITS)
    data = codec.cover(PAYLOAD, 0, carrier).carrier.data

    assert len(data) == 96
    assert set(data) <= {0, 1}
    bits = np.array(list(data), dtype=np.uint8)
    assert np.packbits(bits[:32]).tobytes() == PAYLOAD
    assert data[0] == 1 and data[2] == 0 and data[31] == 1
    assert [i for i in range(32, 64) if data[i]] == [61]
    assert np.packbits(bits[64:]).tobytes() == struct.pack(">I", zlib.crc32(b"\x00" + PAYLOAD))

    assert codec.uncover(data, 0) == PAYLOAD
    assert all(codec.uncover(data, m) is None for m in (1, 2, 3))


def test_checksum_binds_method():
    assert checksum(0, PAYLOAD) == zlib.crc32(b"\x00" + PAYLOAD)
    assert checksum(0, PAYLOAD) != checksum(1, PAYLOAD)


@pytest.mark.parametrize("kind, length, expected", [
    (CarrierKind.PAYLOAD_LOW_BITS, 4, 96),
    (CarrierKind.PAYLOAD_LOW_BITS, 0, 64),
    (CarrierKind.HEADER_FIELD, 4, 32),
    (CarrierKind.HEADER_FIELD, 40, 56),
])
def test_min_carrier_size(kind, length, expected):
    assert min_carrier_size(kind, length) == expected


def test_header_field_leaves_prefix_and_length(codec, rng):
    carrier = make_carrier(CarrierKind.HEADER_FIELD, 40, rng)
    carrier = CoverCarrier(carrier.data + b"tail", carrier.kind)
    data = codec.cover(PAYLOAD, 4, carrier).carrier.data
    assert len(data) == len(carrier)
    assert data[:8] == carrier.data[:8]
    assert data.endswith(b"tail")
    assert PAYLOAD not in data
    assert codec.uncover(data, 4) == PAYLOAD
    assert codec.uncover(data, 5) is None


def test_lowbits_only_touches_lsbs(codec, rng):
    carrier = make_carrier(CarrierKind.PAYLOAD_LOW_BITS, 10, rng)
    data = codec.cover(b"0123456789", 2, carrier).carrier.data
    assert all((a ^ b) <= 1 for a, b in zip(data, carrier.data))


def test_carrier_too_small(codec):
    with pytest.raises(CarrierTooSmall):
        codec.cover(PAYLOAD, 0, CoverCarrier(bytes(95), CarrierKind.PAYLOAD_LOW_BITS))
    with pytest.raises(CarrierTooSmall):
        codec.cover(bytes(17), 4, CoverCarrier(bytes(32), CarrierKind.HEADER_FIELD))


def test_carrier_kind_mismatch(codec):
    with pytest.raises(CarrierKindMismatch):
        codec.cover(PAYLOAD, 4, CoverCarrier(bytes(96), CarrierKind.PAYLOAD_LOW_BITS))


def test_link_key_required(codec, rng):
    key = rng.random_bytes(32)
    for method in (1, 5):
        carrier = codec.make_carrier_for(method, len(PAYLOAD), rng)
        data = codec.cover(PAYLOAD, method, carrier, key).carrier.data
        assert codec.uncover(data, method, key) == PAYLOAD
        assert codec.uncover(data, method) is None
        assert codec.uncover(data, method, rng.random_bytes(32)) is None


def test_find_steg_msg_tries_ascending(codec, rng):
    carrier = codec.make_carrier_for(3, len(PAYLOAD), rng)
    data = codec.cover(PAYLOAD, 3, carrier).carrier.data
    assert codec.find_steg_msg(data, [6, 3, 0]) == (3, PAYLOAD)
    assert codec.find_steg_msg(data, [0, 1]) is None


def test_functional_api(registry, rng):
    carrier = make_carrier(CarrierKind.HEADER_FIELD, 4, rng)
    envelope = cover(PAYLOAD, 6, carrier, registry=registry)
    assert find_steg_msg(envelope.carrier, {6}, registry=registry) == (6, PAYLOAD)


def test_randomized_roundtrips(codec, registry):
    rng = SplitMix64(99)
    methods = [m.id for m in registry]
    for _ in range(500):
        method = rng.choice(methods)
        payload = rng.random_bytes(rng.uniform_int(0, 48))
        key = rng.random_bytes(32) if rng.coin(500_000) else None
        carrier = codec.make_carrier_for(method, len(payload) + rng.uniform_int(0, 5), rng)
        data = codec.cover(payload, method, carrier, key).carrier.data
        assert len(data) == len(carrier)
        assert codec.uncover(data, method, key) == payload


def test_random_carriers_never_validate(codec, registry):
    rng = SplitMix64(7)
    methods = [m.id for m in registry]
    for _ in range(2000):
        assert codec.find_steg_msg(rng.random_bytes(rng.uniform_int(32, 200)), methods) is None


def test_beacon_address_not_visible(codec, rng):
    record = Beacon(0x0102030405060708, frozenset({1, 2})).encode()
    for method in (0, 4):
        data = codec.cover(record, method, codec.make_carrier_for(method, len(record), rng)).carrier.data
        assert bytes.fromhex("0102030405060708") not in data

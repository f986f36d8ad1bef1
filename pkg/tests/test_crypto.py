import logging

import pytest

from src.core.cluster_crypto import (
    AesGcmCipher,
    ClusterKey,
    SplitMixCipher,
    TrustValue,
    admit_member,
    elect_gateways,
    evict_member,
    generate_cluster_key,
    get_cipher,
    is_cryptography_available,
    make_nonce,
    new_cluster,
    open_intra,
    rekey,
    seal_intra,
)
from src.core.domain import MessageKind
from src.core.exceptions import AlreadyMember, ConfigError, IntegrityFailure, NotAMember
from src.core.messages import KeyDeliveryPayload
from src.utils.logger import KeyMaterialFilter
from src.utils.rng import SplitMix64


@pytest.fixture
def key(rng):
    return generate_cluster_key(rng)


def test_seal_open_roundtrip(key):
    nonce = make_nonce(11, 0)
    ct = seal_intra(b"status report", key, nonce)
    assert len(ct) == 8 + len(b"status report") + 4
    assert ct[:8] == nonce
    assert open_intra(ct, key) == b"status report"


def test_open_with_wrong_key_fails(key, rng):
    ct = seal_intra(b"status report", key, make_nonce(11, 0))
    other = generate_cluster_key(rng)
    with pytest.raises(IntegrityFailure):
        open_intra(ct, other)


@pytest.mark.parametrize("mutate", [
    lambda ct: ct[:-1],
    lambda ct: ct[:5],
    lambda ct: ct[:9] + bytes([ct[9] ^ 0x01]) + ct[10:],
    lambda ct: bytes([ct[0] ^ 0x80]) + ct[1:],
])
def test_tampering_detected(key, mutate):
    ct = seal_intra(b"status report", key, make_nonce(11, 3))
    with pytest.raises(IntegrityFailure):
        open_intra(mutate(ct), key)


def test_empty_payload(key):
    ct = seal_intra(b"", key, make_nonce(1, 1))
    assert open_intra(ct, key) == b""


def test_nonce_layout():
    assert make_nonce(0x1_0000_0005, 7) == bytes.fromhex("0000000500000007")


def test_cluster_key_length():
    with pytest.raises(ConfigError):
        ClusterKey(1, b"short")


def test_trust_bounds():
    assert TrustValue.of("0.8").value == 800_000
    with pytest.raises(ConfigError):
        TrustValue(1_000_001)


def test_elect_gateways_threshold():
    border = [(12, TrustValue.of("0.8")), (13, TrustValue.of("0.5")), (14, TrustValue.of("0.49"))]
    assert elect_gateways(border, TrustValue.of("0.5")) == {12, 13}


def test_admit_delivers_current_key(rng):
    cluster = new_cluster(1, 100, rng)
    cluster, msg = admit_member(cluster, 11)
    assert cluster.members == {11}
    assert msg.kind is MessageKind.KEY_DELIVERY and not msg.covered
    record = KeyDeliveryPayload.decode(msg.payload)
    assert (record.cluster_id, record.member, record.key_id) == (1, 11, 1)
    assert record.key == cluster.key.secret
    with pytest.raises(AlreadyMember):
        admit_member(cluster, 11)


def test_evict_rekeys_remaining_members(rng):
    cluster = new_cluster(1, 100, rng)
    for m in (11, 12, 13):
        cluster, _ = admit_member(cluster, m)
    old = cluster.key
    cluster, deliveries = evict_member(cluster, 12, rng)
    assert cluster.members == {11, 13}
    assert cluster.key.key_id == old.key_id + 1
    assert cluster.key.secret != old.secret
    assert cluster.key_history == (old.key_id,)
    assert sorted(m.receiver for m in deliveries) == [11, 13]

    # the evicted member only holds the old key
    ct = seal_intra(b"after", cluster.key, make_nonce(11, 0))
    with pytest.raises(IntegrityFailure):
        open_intra(ct, old)


def test_evict_without_rekey(rng):
    cluster, _ = admit_member(new_cluster(1, 100, rng), 11)
    cluster, deliveries = evict_member(cluster, 11, rng, rekey_on_evict=False)
    assert deliveries == [] and cluster.key.key_id == 1
    with pytest.raises(NotAMember):
        evict_member(cluster, 11, rng)


def test_rekey_delivers_to_all(rng):
    cluster = new_cluster(2, 200, rng)
    for m in (21, 22):
        cluster, _ = admit_member(cluster, m)
    cluster, deliveries = rekey(cluster, rng)
    assert [KeyDeliveryPayload.decode(d.payload).key_id for d in deliveries] == [2, 2]


def test_adversary_guesses_never_open(key):
    guesser = SplitMix64(5)
    cipher = SplitMixCipher()
    for counter in range(200):
        ct = cipher.seal(b"intra %d" % counter, key, make_nonce(11, counter))
        for _ in range(4):
            with pytest.raises(IntegrityFailure):
                cipher.open(ct, guesser.random_bytes(32))


def test_get_cipher():
    assert get_cipher("splitmix").name == "splitmix"
    with pytest.raises(ConfigError):
        get_cipher("rot13")


def test_aes_gcm_needs_cryptography(monkeypatch):
    monkeypatch.setattr("src.core.cluster_crypto.is_cryptography_available", lambda: False)
    with pytest.raises(ConfigError, match="cryptography"):
        get_cipher("aes-gcm")


@pytest.mark.skipif(not is_cryptography_available(), reason="cryptography not installed")
def test_aes_gcm_contract(key, rng):
    cipher = AesGcmCipher()
    ct = cipher.seal(b"status report", key, make_nonce(11, 0))
    assert cipher.open(ct, key) == b"status report"
    with pytest.raises(IntegrityFailure):
        cipher.open(ct, generate_cluster_key(rng))
    with pytest.raises(IntegrityFailure):
        cipher.open(ct[:-1], key)


def test_key_material_masked_in_logs():
    record = logging.LogRecord("src.core", logging.DEBUG, __file__, 1, "installed key=%s", ("ab" * 32,), None)
    KeyMaterialFilter().filter(record)
    assert "ab" * 32 not in record.getMessage()
    assert "***MASKED***" in record.getMessage()

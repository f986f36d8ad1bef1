import pytest

from src.core.domain import MessageKind, ProtocolMessage
from src.core.engine import (
    EngineConfig,
    RemovalEvidence,
    TimerKind,
    add_steg_link,
    detect_malicious_removal,
    expire_neighbours,
    forward_random_walk,
    handle_data,
    handle_link_ack,
    handle_routing_update,
    init_ch,
    on_timer,
    originate_data,
    receive,
    relay_create_steg_link,
)
from src.core.exceptions import ConfigError, EmptyProfile, TimerNotDue, UnknownMethod
from src.core.messages import (
    HELLO_ACK,
    AdvertisedRoute,
    CreateStegLinkRequest,
    DataPayload,
    HelloPayload,
    RoutingAdvert,
)
from src.core.routing import NoPathFound
from src.utils.rng import SplitMix64


def labels(state):
    return [label for label, _ in state.drain_journal()]


def test_init_rejects_empty_or_unknown_profile(config):
    with pytest.raises(EmptyProfile):
        init_ch(1, frozenset(), config)
    with pytest.raises(UnknownMethod):
        init_ch(1, frozenset({42}), config)


def test_init_self_route_and_timers(make_ch):
    state = make_ch(1, {1, 2})
    assert state.routing_table[1].metric.cost == 0
    assert state.timers[TimerKind.RANDOM_WALK] == 50
    assert state.timers[TimerKind.ROUTING_UPDATE] == 10


@pytest.mark.parametrize("kwargs", [
    {"hello_period": 0},
    {"hello_timeout": 10},
    {"forward_probability": 1_000_001},
    {"fluctuation_rw": -1},
    {"discovery_method": 40},
])
def test_config_validation(registry, kwargs):
    with pytest.raises(ConfigError):
        EngineConfig(registry=registry, **kwargs)


def test_timer_not_due(make_ch, rng):
    state = make_ch(1, {1})
    with pytest.raises(TimerNotDue):
        on_timer(state, TimerKind.HELLO, 9, rng)


def test_timer_jitter_bounds(make_ch):
    rng = SplitMix64(5)
    state = make_ch(1, {1}, fluctuation_ru=4)
    seen = set()
    now = 10
    for _ in range(200):
        state, _ = on_timer(state, TimerKind.ROUTING_UPDATE, now, rng)
        delta = state.timers[TimerKind.ROUTING_UPDATE] - now
        assert 10 <= delta <= 14
        seen.add(delta)
        now += delta
    assert seen == {10, 11, 12, 13, 14}


def test_walk_timer_without_agents_is_silent(make_ch, rng):
    state = make_ch(1, {1})
    state, out = on_timer(state, TimerKind.RANDOM_WALK, 50, rng)
    assert out == []
    assert state.timers[TimerKind.RANDOM_WALK] == 100


def _walk_from(state, rng, target):
    state.agents = (target,)
    _, out = on_timer(state, TimerKind.RANDOM_WALK, state.timers[TimerKind.RANDOM_WALK], rng)
    assert len(out) == 1 and out[0].kind is MessageKind.RANDOM_WALK_DISCOVERY
    return out[0]


def test_compatible_walk_creates_link_both_ways(make_ch, rng):
    a = make_ch(1, {1, 3})
    b = make_ch(2, {1, 2})
    walk = _walk_from(a, rng, 2)

    b, reaction = receive(b, walk, 50, rng, probe=lambda peer: 2)
    assert b.neighbour_table[1].methods == {1}
    assert b.neighbour_table[1].delay == 2
    assert [m.kind for m in reaction.outbound] == [MessageKind.HELLO, MessageKind.ROUTING_UPDATE]
    assert "link_up" in labels(b)

    offer = reaction.outbound[0]
    a, reaction = receive(a, offer, 52, rng)
    assert 2 in a.neighbour_table
    assert [m.kind for m in reaction.outbound] == [MessageKind.HELLO_ACK]

    b, reaction = receive(b, reaction.outbound[0], 54, rng)
    assert b.neighbour_table[1].last_hello == 54
    assert reaction.outbound == []
    assert b.live_from == {} and b.pending_offers == {}


def test_repeated_beacon_is_not_new(make_ch, rng):
    a, b = make_ch(1, {1}), make_ch(2, {1})
    walk = _walk_from(a, rng, 2)
    b, first = receive(b, walk, 50, rng)
    b, second = receive(b, walk, 51, rng)
    assert first.outbound and second.outbound == []


def test_walk_without_readable_method_is_opaque(make_ch, rng):
    a, b = make_ch(1, {0}), make_ch(2, {1})
    b, reaction = receive(b, _walk_from(a, rng, 2), 50, rng)
    assert reaction.outbound == [] and b.neighbour_table == {}
    assert labels(b) == ["walk_opaque"]


def test_incompatible_walk_asks_neighbours_to_relay(make_ch, rng):
    a = make_ch(1, {1}, discovery_method=0)
    c = make_ch(3, {3, 2}, discovery_method=0)
    add_steg_link(c, 4, frozenset({2}), 1, 0)
    c.peer_profiles[4] = frozenset({1, 2})
    c, reaction = receive(c, _walk_from(a, rng, 3), 50, rng)
    assert c.incompatible == {1: frozenset({1})}
    assert [(m.kind, m.receiver) for m in reaction.outbound] == [(MessageKind.CREATE_STEG_LINK, 4)]


def test_relay_offers_when_compatible(make_ch, rng):
    b = make_ch(4, {1, 2})
    request = CreateStegLinkRequest(1, frozenset({1}), 0, (3,))
    b, out = relay_create_steg_link(b, request, 60, rng)
    assert b.pending_offers == {1: frozenset({1})}
    assert [m.kind for m in out] == [MessageKind.HELLO]


def test_relay_stops_at_depth_and_loops(make_ch, rng):
    b = make_ch(4, {2}, relay_depth=1)
    add_steg_link(b, 5, frozenset({2}), 1, 0)
    b.drain_journal()
    _, out = relay_create_steg_link(b, CreateStegLinkRequest(1, frozenset({1}), 0, (3,)), 60, rng)
    assert out == []
    _, out = relay_create_steg_link(b, CreateStegLinkRequest(1, frozenset({1}), 0, (3, 4)), 60, rng)
    assert out == []
    reasons = [d["reason"] for label, d in b.drain_journal() if label == "discard"]
    assert reasons == ["relay_depth", "relay_loop"]


def test_unsolicited_ack_discarded(make_ch, rng):
    state = make_ch(1, {1})
    handle_link_ack(state, HelloPayload(9, 0, HELLO_ACK, frozenset({1})), 5)
    assert state.neighbour_table == {}


def test_update_from_non_neighbour_discarded(make_ch, rng):
    state = make_ch(1, {1})
    state, out = handle_routing_update(state, RoutingAdvert(9, ()), 5, rng)
    assert out == [] and labels(state) == ["discard"]


def test_changed_update_triggers_one_fanout(make_ch, rng):
    state = make_ch(1, {1})
    add_steg_link(state, 2, frozenset({1}), 1, 0)
    add_steg_link(state, 5, frozenset({1}), 1, 0)
    state.drain_journal()
    advert = RoutingAdvert(2, (AdvertisedRoute(2, 2, 0, 0, frozenset({1})),
                                AdvertisedRoute(3, 3, 1_000_000, 1, frozenset({1}))))
    state, out = handle_routing_update(state, advert, 5, rng)
    assert sorted(m.receiver for m in out) == [2, 5]
    assert state.routing_table[3].next_hop == 2
    state, again = handle_routing_update(state, advert, 6, rng)
    assert again == []


def test_expiry_drops_silent_neighbours_with_one_fanout(make_ch, rng):
    state = make_ch(1, {1})
    add_steg_link(state, 2, frozenset({1}), 1, 0)
    add_steg_link(state, 4, frozenset({1}), 1, 0)
    add_steg_link(state, 5, frozenset({1}), 1, 30)
    state.drain_journal()
    state, out = expire_neighbours(state, 36, rng)
    assert set(state.neighbour_table) == {5}
    assert [m.receiver for m in out] == [5]
    journal = state.drain_journal()
    assert [d["peer"] for label, d in journal if label == "link_down"] == [2, 4]
    assert sum(1 for label, _ in journal if label == "fanout") == 1
    assert 2 not in state.routing_table and 4 not in state.routing_table


def test_no_expiry_inside_timeout(make_ch, rng):
    state = make_ch(1, {1})
    add_steg_link(state, 2, frozenset({1}), 1, 0)
    state, out = expire_neighbours(state, 35, rng)
    assert 2 in state.neighbour_table and out == []


def test_malicious_removal_triggers_update(make_ch, rng):
    state = make_ch(1, {1})
    add_steg_link(state, 2, frozenset({1}), 1, 0)
    add_steg_link(state, 5, frozenset({1}), 1, 0)
    state.drain_journal()
    state, out = detect_malicious_removal(state, RemovalEvidence(2, 100), 100, rng)
    assert 2 not in state.neighbour_table
    assert [m.receiver for m in out] == [5]
    fanouts = [d["reason"] for label, d in state.drain_journal() if label == "fanout"]
    assert fanouts == ["triggered"]


def test_forward_random_walk(rng):
    walk = ProtocolMessage(MessageKind.RANDOM_WALK_DISCOVERY, 1, 2, b"carrier", covered=True)
    assert forward_random_walk(walk, 2, [3, 4], 0, rng) == []
    assert forward_random_walk(walk, 2, [], 1_000_000, rng) == []
    out = forward_random_walk(walk, 2, [4, 3], 1_000_000, rng)
    assert len(out) == 1
    assert out[0].payload == b"carrier" and out[0].receiver in (3, 4) and out[0].transport_sender == 2


def test_data_ttl_and_delivery(make_ch, rng):
    state = make_ch(1, {1})
    add_steg_link(state, 2, frozenset({1}), 1, 0)
    state, out, delivered = handle_data(state, DataPayload(7, 1, 1, 5, b"hi"), rng)
    assert delivered.body == b"hi" and out == []
    state, out, delivered = handle_data(state, DataPayload(7, 2, 2, 1, b"hi"), rng)
    assert delivered is None and out == []
    state, out, _ = handle_data(state, DataPayload(7, 2, 3, 5, b"hi"), rng)
    assert [(m.kind, m.receiver) for m in out] == [(MessageKind.DATA, 2)]


def test_originate_without_route(make_ch, rng):
    state, outcome, out = originate_data(make_ch(1, {1}), 3, 1, b"x", rng)
    assert isinstance(outcome, NoPathFound) and out == []


def test_garbage_is_discarded(make_ch, rng):
    state = make_ch(1, {1})
    msg = ProtocolMessage(MessageKind.ROUTING_UPDATE, 2, 1, bytes(100), covered=True)
    state, reaction = receive(state, msg, 5, rng)
    assert reaction.outbound == [] and labels(state) == ["discard"]


def test_offered_link_waits_for_the_ack_round_trip(make_ch, rng):
    a, b = make_ch(1, {1, 3}), make_ch(2, {1, 2})
    b, _ = receive(b, _walk_from(a, rng, 2), 50, rng, probe=lambda peer: 19)
    assert b.live_from == {1: 88}
    b, out = expire_neighbours(b, 86, rng)
    assert 1 in b.neighbour_table and out == []
    b, _ = expire_neighbours(b, 124, rng)
    assert 1 not in b.neighbour_table and b.live_from == {}
    # a late ack brings the offered link back
    handle_link_ack(b, HelloPayload(1, 0, HELLO_ACK, frozenset({1, 3})), 125, probe=lambda peer: 19)
    assert b.neighbour_table[1].last_hello == 125
    assert b.neighbour_table[1].methods == {1}


def test_offer_receiver_gets_the_same_grace(make_ch, rng):
    a, b = make_ch(1, {1, 3}), make_ch(2, {1, 2})
    b, reaction = receive(b, _walk_from(a, rng, 2), 50, rng, probe=lambda peer: 8)
    a, _ = receive(a, reaction.outbound[0], 58, rng, probe=lambda peer: 8)
    assert a.live_from == {2: 74}
    a, _ = expire_neighbours(a, 100, rng)
    assert 2 in a.neighbour_table


def test_unreachable_peer_gets_no_link(make_ch, rng):
    a, b = make_ch(1, {1}), make_ch(2, {1})
    b, reaction = receive(b, _walk_from(a, rng, 2), 50, rng, probe=lambda peer: None)
    assert b.neighbour_table == {} and reaction.outbound == []
    assert labels(b) == ["discard"]

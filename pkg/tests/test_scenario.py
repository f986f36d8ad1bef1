import pytest

from src.core.domain import LayerTag, NodeRole
from src.core.exceptions import ParseError, ValidationError
from src.core.scenario import EventKind, FaultKind, canonical_document, load_scenario


def test_line_of_3(load):
    spec = load("line_of_3")
    assert spec.name == "line_of_3"
    assert [n.id for n in spec.cluster_heads] == [1, 2, 3]
    assert [(s.a, s.b, s.capacity, s.delay, set(s.methods)) for s in spec.steg_links] == [
        (1, 2, 1, 1, {1}), (2, 3, 2, 2, {2})]
    assert spec.edges[1].delay == 2
    assert spec.engine.forward_probability == 700_000
    assert len(spec.digest) == 64


def test_two_clusters(load):
    spec = load("two_clusters")
    assert spec.engine.discovery_method == 7
    assert spec.registry.get(1).layer_tag is LayerTag.TRANSPORT
    assert spec.node(12).role is NodeRole.GATEWAY and spec.node(12).trust.value == 800_000
    assert spec.node(11).profile == frozenset()
    assert [e.kind for e in spec.events] == [EventKind.FAULT, EventKind.SEND, EventKind.INTRA,
                                             EventKind.EVICT, EventKind.INTRA]
    assert spec.events[0].fault.kind is FaultKind.EAVESDROPPER
    assert spec.events[1].body == b"hello over the covert path"


def test_figure6_overrides(load):
    spec = load("figure6")
    ch1 = spec.node(1)
    assert spec.engine_for(ch1).forward_probability == 0
    assert spec.engine_for(ch1).random_walk_period == 100_000
    assert spec.engine_for(spec.node(3)).random_walk_period == 50


def test_defaults_applied(scenario_text, minimal_text):
    spec = scenario_text(minimal_text)
    assert spec.engine.routing_update_period == 10
    assert spec.engine.hello_timeout == 35
    assert spec.gateway_threshold.value == 500_000
    assert spec.cipher == "splitmix" and spec.rekey_on_evict
    # capacity given, methods default to the common profile subset
    assert spec.steg_links[0].methods == frozenset({1})


def test_digest_ignores_layout(scenario_text, minimal_text):
    reordered = minimal_text.replace("edges: [[1, 2], [2, 3]]", "edges: [[3, 2], [2, 1]]")
    assert scenario_text(minimal_text).digest == scenario_text(reordered).digest
    changed = minimal_text.replace("delay: 1}", "delay: 4}", 1)
    assert scenario_text(minimal_text).digest != scenario_text(changed).digest


def test_canonical_document_sorted(scenario_text, minimal_text):
    doc = canonical_document(scenario_text(minimal_text))
    assert [n["id"] for n in doc["nodes"]] == [1, 2, 3]
    assert doc["edges"] == [[1, 2, 1], [2, 3, 1]]


def test_parse_error_has_position(scenario_text):
    with pytest.raises(ParseError) as info:
        scenario_text("name: x\nnodes: [\n  {id: 1\n")
    assert info.value.line > 0 and info.value.column > 0


@pytest.mark.parametrize("old, new, field_path", [
    ("profile: [0, 1]}", "profile: []}", "nodes[0].profile"),
    ("profile: [0, 1]}", "profile: [0, 9]}", "nodes[0].profile[1]"),
    ("{id: 2, role: ch", "{id: 1, role: ch", "nodes[1].id"),
    ("role: ch, cluster: 3", "role: router, cluster: 3", "nodes[2].role"),
    ("cluster: 3", "cluster: 2", "nodes[2].cluster"),
    ("edges: [[1, 2], [2, 3]]", "edges: [[1, 2], [2, 7]]", "edges[1].b"),
    ("edges: [[1, 2], [2, 3]]", "edges: [[1, 2], [2, 2]]", "edges[1]"),
    ("{a: 1, b: 2, capacity: 1, delay: 1}", "{a: 1, b: 3, capacity: 1, delay: 1}", "steg_links[0].methods"),
    ("{a: 1, b: 2, capacity: 1, delay: 1}", "{a: 1, b: 2, capacity: 0, delay: 1}", "steg_links[0].capacity"),
    ("name: inline", "name: inline\ncolour: red", "colour"),
    ("name: inline", "name: inline\nengine: {hello_timeout: 5}", "engine"),
    ("name: inline", "name: inline\ncipher: rot13", "cipher"),
])
def test_validation_names_field(scenario_text, minimal_text, old, new, field_path):
    assert old in minimal_text
    with pytest.raises(ValidationError) as info:
        scenario_text(minimal_text.replace(old, new, 1))
    assert info.value.field_path == field_path


@pytest.mark.parametrize("event, field_path", [
    ("{at: 0, send: {from: 1, to: 2}}", "events[0].at"),
    ("{at: 5}", "events[0]"),
    ("{at: 5, fault: meteor, node: 1}", "events[0].fault"),
    ("{at: 5, fault: link_cut, a: 1}", "events[0].b"),
    ("{at: 5, admit: 2}", "events[0].admit"),
    ("{at: 5, evict: 1}", "events[0].evict"),
])
def test_event_validation(scenario_text, minimal_text, event, field_path):
    with pytest.raises(ValidationError) as info:
        scenario_text(minimal_text + f"events:\n  - {event}\n")
    assert info.value.field_path == field_path


def test_gateway_needs_border_and_trust(scenario_text):
    base = """
methods: [0]
nodes:
  - {id: 1, role: ch, cluster: 1, profile: [0]}
  - {id: 2, role: gateway, cluster: 1, profile: [0]%s}
edges: [[1, 2]]
"""
    with pytest.raises(ValidationError) as info:
        scenario_text(base % "")
    assert info.value.field_path == "nodes[1].trust"
    with pytest.raises(ValidationError) as info:
        scenario_text(base % ", trust: 0.9")
    assert info.value.field_path == "nodes[1].role"


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError):
        load_scenario(tmp_path / "absent.scn")


def test_bom_tolerated(tmp_path, minimal_text):
    path = tmp_path / "bom.scn"
    path.write_bytes(b"\xef\xbb\xbf" + minimal_text.encode("utf-8"))
    assert load_scenario(path).name == "inline"

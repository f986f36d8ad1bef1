# -*- coding: utf-8 -*-
"""
Scenario Loader
===============

Reads a ``.scn`` scenario (YAML, schema in docs/SCENARIO.md), applies every
default explicitly and validates the whole document before any world is
built. Errors name the offending field with a path such as
``nodes[2].profile`` or ``events[0].node``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple, Union

import yaml

from src.core.cluster_crypto import TrustValue
from src.core.constants import MAX_METHOD_ID
from src.core.domain import LayerTag, MethodRegistry, MetricWeights, NodeId, NodeRole, StegMethod, to_micro
from src.core.engine import EngineConfig
from src.core.exceptions import ConfigError, ParseError, ValidationError
from src.utils.encoding import read_text_safely

logger = logging.getLogger(__name__)


class FaultKind(Enum):
    BENIGN_CH_DEPARTURE = "benign_departure"
    MALICIOUS_CH_REMOVAL = "malicious_removal"
    LINK_CUT = "link_cut"
    EAVESDROPPER = "eavesdropper"


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    node: Optional[NodeId] = None
    a: Optional[NodeId] = None
    b: Optional[NodeId] = None


class EventKind(Enum):
    FAULT = "fault"
    ADMIT = "admit"
    SEND = "send"
    INTRA = "intra"
    EVICT = "evict"


@dataclass(frozen=True)
class ScheduledEvent:
    at: int
    kind: EventKind
    fault: Optional[FaultSpec] = None
    node: Optional[NodeId] = None          # admit / evict / intra sender
    src: Optional[NodeId] = None           # send
    dst: Optional[NodeId] = None           # send
    body: bytes = b""


@dataclass(frozen=True)
class NodeSpec:
    id: NodeId
    role: NodeRole
    cluster: int
    profile: FrozenSet[int] = frozenset()
    trust: Optional[TrustValue] = None
    dormant: bool = False
    overrides: Tuple[Tuple[str, Any], ...] = ()


@dataclass(frozen=True)
class EdgeSpec:
    a: NodeId
    b: NodeId
    delay: int = 1


@dataclass(frozen=True)
class StegLinkSpec:
    a: NodeId
    b: NodeId
    capacity: int
    delay: int
    methods: FrozenSet[int] = frozenset()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    registry: MethodRegistry
    engine: EngineConfig
    nodes: Tuple[NodeSpec, ...]
    edges: Tuple[EdgeSpec, ...] = ()
    steg_links: Tuple[StegLinkSpec, ...] = ()
    events: Tuple[ScheduledEvent, ...] = ()
    gateway_threshold: TrustValue = TrustValue(500_000)
    cipher: str = "splitmix"
    rekey_on_evict: bool = True
    digest: str = ""

    def node(self, node_id: NodeId) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def engine_for(self, node: NodeSpec) -> EngineConfig:
        return replace(self.engine, **dict(node.overrides)) if node.overrides else self.engine

    @property
    def cluster_heads(self) -> List[NodeSpec]:
        return [n for n in self.nodes if n.role is NodeRole.CLUSTER_HEAD]


# ────────────────────────── Parsing ──────────────────────────

_LAYERS = {t.value: t for t in LayerTag}
_ROLES = {"ch": NodeRole.CLUSTER_HEAD, "cluster_head": NodeRole.CLUSTER_HEAD,
          "gateway": NodeRole.GATEWAY, "gw": NodeRole.GATEWAY, "member": NodeRole.MEMBER}
_FAULTS = {k.value: k for k in FaultKind}
_TICK_FIELDS = ("random_walk_period", "routing_update_period", "hello_period", "fluctuation_rw",
                "fluctuation_ru", "fluctuation_h", "hello_timeout", "relay_depth", "expiry_scan_period")
_OVERRIDABLE = _TICK_FIELDS + ("forward_probability",)


def _int(value: Any, path: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(path, f"must be >= {minimum}")
    return value


def _micro(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ValidationError(path, f"expected a decimal number, got {value!r}")
    try:
        return to_micro(value)
    except (ArithmeticError, ValueError):
        raise ValidationError(path, f"not a decimal number: {value!r}") from None


def _mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ValidationError(path, "expected a mapping")
    return value


def _list(value: Any, path: str) -> List[Any]:
    if value is None:
        return []
    if not isinstance(value, list):
        raise ValidationError(path, "expected a list")
    return value


def _unknown_keys(doc: Mapping[str, Any], allowed: Tuple[str, ...], path: str) -> None:
    for key in doc:
        if key not in allowed:
            raise ValidationError(f"{path}.{key}" if path else str(key), "unknown field")


def _methods(value: Any, path: str, registry: MethodRegistry) -> FrozenSet[int]:
    out = set()
    for i, m in enumerate(_list(value, path)):
        m = _int(m, f"{path}[{i}]", 0)
        if m not in registry:
            raise ValidationError(f"{path}[{i}]", f"unknown method id {m}")
        out.add(m)
    return frozenset(out)


def _parse_registry(doc: Any) -> MethodRegistry:
    items = _list(doc, "methods")
    if not items:
        raise ValidationError("methods", "at least one method is required")
    methods, seen = [], set()
    for i, raw in enumerate(items):
        path = f"methods[{i}]"
        if isinstance(raw, int) and not isinstance(raw, bool):
            raw = {"id": raw}
        raw = _mapping(raw, path)
        _unknown_keys(raw, ("id", "layer", "capacity"), path)
        if "id" not in raw:
            raise ValidationError(f"{path}.id", "required")
        mid = _int(raw["id"], f"{path}.id", 0)
        if mid > MAX_METHOD_ID:
            raise ValidationError(f"{path}.id", f"must be <= {MAX_METHOD_ID}")
        if mid in seen:
            raise ValidationError(f"{path}.id", f"duplicate method id {mid}")
        seen.add(mid)
        layer = raw.get("layer", "application")
        if layer not in _LAYERS:
            raise ValidationError(f"{path}.layer", f"one of {sorted(_LAYERS)}")
        methods.append(StegMethod(mid, _LAYERS[layer], _int(raw.get("capacity", 1), f"{path}.capacity", 1)))
    return MethodRegistry.of(methods)


def _parse_engine(doc: Any, registry: MethodRegistry, weights: MetricWeights,
                  discovery_method: Optional[int]) -> EngineConfig:
    raw = _mapping(doc or {}, "engine")
    _unknown_keys(raw, _OVERRIDABLE, "engine")
    kwargs: Dict[str, Any] = {}
    for name in _TICK_FIELDS:
        if name in raw:
            kwargs[name] = _int(raw[name], f"engine.{name}", 0)
    if "forward_probability" in raw:
        kwargs["forward_probability"] = _micro(raw["forward_probability"], "engine.forward_probability")
    try:
        return EngineConfig(weights=weights, registry=registry, discovery_method=discovery_method, **kwargs)
    except ConfigError as e:
        raise ValidationError("engine", str(e)) from None


def _parse_overrides(raw: Any, path: str, base: EngineConfig) -> Tuple[Tuple[str, Any], ...]:
    raw = _mapping(raw or {}, path)
    _unknown_keys(raw, _OVERRIDABLE, path)
    out = {}
    for name, value in raw.items():
        if name == "forward_probability":
            out[name] = _micro(value, f"{path}.{name}")
        else:
            out[name] = _int(value, f"{path}.{name}", 0)
    try:
        replace(base, **out)
    except ConfigError as e:
        raise ValidationError(path, str(e)) from None
    return tuple(sorted(out.items()))


def _parse_nodes(doc: Any, registry: MethodRegistry, engine: EngineConfig) -> Tuple[NodeSpec, ...]:
    items = _list(doc, "nodes")
    if not items:
        raise ValidationError("nodes", "at least one node is required")
    nodes, seen = [], set()
    for i, raw in enumerate(items):
        path = f"nodes[{i}]"
        raw = _mapping(raw, path)
        _unknown_keys(raw, ("id", "role", "cluster", "profile", "trust", "dormant", "overrides"), path)
        for required in ("id", "role", "cluster"):
            if required not in raw:
                raise ValidationError(f"{path}.{required}", "required")
        nid = _int(raw["id"], f"{path}.id", 0)
        if nid in seen:
            raise ValidationError(f"{path}.id", f"duplicate node id {nid}")
        seen.add(nid)
        role = _ROLES.get(str(raw["role"]).lower())
        if role is None:
            raise ValidationError(f"{path}.role", "one of ch, gateway, member")
        profile = _methods(raw.get("profile"), f"{path}.profile", registry)
        if role is not NodeRole.MEMBER and not profile:
            raise ValidationError(f"{path}.profile", "a non-empty capability profile is required")
        trust = None
        if "trust" in raw:
            micro = _micro(raw["trust"], f"{path}.trust")
            if not 0 <= micro <= 1_000_000:
                raise ValidationError(f"{path}.trust", "must lie in [0, 1]")
            trust = TrustValue(micro)
        if role is NodeRole.GATEWAY and trust is None:
            raise ValidationError(f"{path}.trust", "gateways need a trust value")
        overrides = _parse_overrides(raw.get("overrides"), f"{path}.overrides", engine)
        if overrides and role is not NodeRole.CLUSTER_HEAD:
            raise ValidationError(f"{path}.overrides", "engine overrides apply to cluster heads only")
        nodes.append(NodeSpec(NodeId(nid), role, _int(raw["cluster"], f"{path}.cluster", 0), profile,
                              trust, bool(raw.get("dormant", False)), overrides))
    return tuple(nodes)


def _parse_edges(doc: Any, ids: Mapping[int, NodeSpec]) -> Tuple[EdgeSpec, ...]:
    edges, seen = [], set()
    for i, raw in enumerate(_list(doc, "edges")):
        path = f"edges[{i}]"
        if isinstance(raw, list):
            if len(raw) not in (2, 3):
                raise ValidationError(path, "expected [a, b] or [a, b, delay]")
            raw = {"a": raw[0], "b": raw[1], **({"delay": raw[2]} if len(raw) == 3 else {})}
        raw = _mapping(raw, path)
        _unknown_keys(raw, ("a", "b", "delay"), path)
        a, b = _ref(raw.get("a"), f"{path}.a", ids), _ref(raw.get("b"), f"{path}.b", ids)
        if a == b:
            raise ValidationError(path, "self-loop")
        key = frozenset((a, b))
        if key in seen:
            raise ValidationError(path, f"duplicate edge {a}-{b}")
        seen.add(key)
        edges.append(EdgeSpec(a, b, _int(raw.get("delay", 1), f"{path}.delay", 1)))
    return tuple(edges)


def _ref(value: Any, path: str, ids: Mapping[int, NodeSpec]) -> NodeId:
    if value is None:
        raise ValidationError(path, "required")
    nid = _int(value, path, 0)
    if nid not in ids:
        raise ValidationError(path, f"unknown node id {nid}")
    return NodeId(nid)


def _parse_steg_links(doc: Any, ids: Mapping[int, NodeSpec], registry: MethodRegistry,
                      discovery_method: Optional[int]) -> Tuple[StegLinkSpec, ...]:
    links = []
    for i, raw in enumerate(_list(doc, "steg_links")):
        path = f"steg_links[{i}]"
        raw = _mapping(raw, path)
        _unknown_keys(raw, ("a", "b", "capacity", "delay", "methods"), path)
        a, b = _ref(raw.get("a"), f"{path}.a", ids), _ref(raw.get("b"), f"{path}.b", ids)
        for end, nid in (("a", a), ("b", b)):
            if ids[nid].role is not NodeRole.CLUSTER_HEAD:
                raise ValidationError(f"{path}.{end}", "steg-links join cluster heads")
        common = ids[a].profile & ids[b].profile
        if discovery_method is not None:
            common = common - {discovery_method}
        methods = _methods(raw["methods"], f"{path}.methods", registry) if "methods" in raw else common
        if not methods:
            raise ValidationError(f"{path}.methods", f"nodes {a} and {b} share no steganographic method")
        if not methods <= common:
            raise ValidationError(f"{path}.methods", "methods must be common to both profiles")
        links.append(StegLinkSpec(a, b, _int(raw.get("capacity", registry.capacity_of(methods)),
                                             f"{path}.capacity", 1),
                                  _int(raw.get("delay", 1), f"{path}.delay", 1), methods))
    return tuple(links)


def _parse_event(raw: Any, path: str, ids: Mapping[int, NodeSpec]) -> ScheduledEvent:
    raw = _mapping(raw, path)
    if "at" not in raw:
        raise ValidationError(f"{path}.at", "required")
    at = _int(raw["at"], f"{path}.at", 1)
    kinds = [k for k in EventKind if k.value in raw]
    if len(kinds) != 1:
        raise ValidationError(path, "exactly one of fault, admit, send, intra, evict")
    kind = kinds[0]

    if kind is EventKind.FAULT:
        _unknown_keys(raw, ("at", "fault", "node", "a", "b"), path)
        fk = _FAULTS.get(str(raw["fault"]))
        if fk is None:
            raise ValidationError(f"{path}.fault", f"one of {sorted(_FAULTS)}")
        if fk is FaultKind.LINK_CUT:
            return ScheduledEvent(at, kind, FaultSpec(fk, a=_ref(raw.get("a"), f"{path}.a", ids),
                                                      b=_ref(raw.get("b"), f"{path}.b", ids)))
        node = _ref(raw.get("node"), f"{path}.node", ids)
        if fk is not FaultKind.EAVESDROPPER and ids[node].role is not NodeRole.CLUSTER_HEAD:
            raise ValidationError(f"{path}.node", "departures and removals target cluster heads")
        return ScheduledEvent(at, kind, FaultSpec(fk, node=node))

    _unknown_keys(raw, ("at", kind.value), path)
    body = raw[kind.value]
    if kind is EventKind.ADMIT:
        node = _ref(body, f"{path}.admit", ids)
        if not ids[node].dormant:
            raise ValidationError(f"{path}.admit", f"node {node} is not dormant")
        return ScheduledEvent(at, kind, node=node)
    if kind is EventKind.EVICT:
        node = _ref(body, f"{path}.evict", ids)
        if ids[node].role is NodeRole.CLUSTER_HEAD:
            raise ValidationError(f"{path}.evict", "cluster heads cannot be evicted")
        return ScheduledEvent(at, kind, node=node)

    body = _mapping(body, f"{path}.{kind.value}")
    text = str(body.get("body", "")).encode("utf-8")
    if kind is EventKind.SEND:
        _unknown_keys(body, ("from", "to", "body"), f"{path}.send")
        src = _ref(body.get("from"), f"{path}.send.from", ids)
        dst = _ref(body.get("to"), f"{path}.send.to", ids)
        for end, nid in (("from", src), ("to", dst)):
            if ids[nid].role is not NodeRole.CLUSTER_HEAD:
                raise ValidationError(f"{path}.send.{end}", "data flows between cluster heads")
        return ScheduledEvent(at, kind, src=src, dst=dst, body=text)
    _unknown_keys(body, ("from", "body"), f"{path}.intra")
    node = _ref(body.get("from"), f"{path}.intra.from", ids)
    if ids[node].role is NodeRole.CLUSTER_HEAD:
        raise ValidationError(f"{path}.intra.from", "intra-cluster traffic starts at a member")
    return ScheduledEvent(at, kind, node=node, body=text)


def _check_structure(nodes: Tuple[NodeSpec, ...], edges: Tuple[EdgeSpec, ...]) -> None:
    heads: Dict[int, NodeId] = {}
    for i, n in enumerate(nodes):
        if n.role is NodeRole.CLUSTER_HEAD:
            if n.cluster in heads:
                raise ValidationError(f"nodes[{i}].cluster", f"cluster {n.cluster} already has a head")
            heads[n.cluster] = n.id
    for i, n in enumerate(nodes):
        if n.cluster not in heads:
            raise ValidationError(f"nodes[{i}].cluster", f"cluster {n.cluster} has no cluster head")
    cluster_of = {n.id: n.cluster for n in nodes}
    for i, n in enumerate(nodes):
        if n.role is NodeRole.GATEWAY:
            borders = any(cluster_of[e.b if e.a == n.id else e.a] != n.cluster
                          for e in edges if n.id in (e.a, e.b))
            if not borders:
                raise ValidationError(f"nodes[{i}].role", "a gateway must border another cluster")


# ────────────────────────── Canonical form ──────────────────────────

def canonical_document(spec: ScenarioSpec) -> Dict[str, Any]:
    """Defaults applied, ids sorted; the basis of the scenario digest."""
    engine = {f.name: getattr(spec.engine, f.name) for f in fields(spec.engine)
              if f.name not in ("weights", "registry")}
    return {
        "name": spec.name,
        "methods": [{"id": m.id, "layer": m.layer_tag.value, "capacity": m.capacity} for m in spec.registry],
        "weights": {"delay": spec.engine.weights.delay, "capacity": spec.engine.weights.capacity,
                    "methods": spec.engine.weights.methods},
        "engine": engine,
        "gateway_threshold": spec.gateway_threshold.value,
        "cipher": spec.cipher,
        "rekey_on_evict": spec.rekey_on_evict,
        "nodes": [{"id": n.id, "role": n.role.value, "cluster": n.cluster, "profile": sorted(n.profile),
                   "trust": None if n.trust is None else n.trust.value, "dormant": n.dormant,
                   "overrides": dict(n.overrides)} for n in sorted(spec.nodes, key=lambda n: n.id)],
        "edges": sorted([sorted((e.a, e.b)) + [e.delay] for e in spec.edges]),
        "steg_links": sorted([[*sorted((s.a, s.b)), s.capacity, s.delay, sorted(s.methods)]
                              for s in spec.steg_links]),
        "events": [{"at": e.at, "kind": e.kind.value,
                    "fault": None if e.fault is None else
                    {"kind": e.fault.kind.value, "node": e.fault.node, "a": e.fault.a, "b": e.fault.b},
                    "node": e.node, "src": e.src, "dst": e.dst, "body": e.body.hex()}
                   for e in spec.events],
    }


def scenario_digest(spec: ScenarioSpec) -> str:
    blob = json.dumps(canonical_document(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ────────────────────────── Entry points ──────────────────────────

def parse_scenario(text: str, source: str = "<string>") -> ScenarioSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line, column = (mark.line + 1, mark.column + 1) if mark else (0, 0)
        raise ParseError(f"{source}: {e.problem or 'malformed YAML'}", line, column) from None
    except yaml.YAMLError as e:
        raise ParseError(f"{source}: {e}") from None

    doc = _mapping(doc, "") if doc is not None else {}
    _unknown_keys(doc, ("name", "methods", "discovery_method", "gateway_threshold", "weights", "engine",
                        "cipher", "rekey_on_evict", "nodes", "edges", "steg_links", "events"), "")

    registry = _parse_registry(doc.get("methods"))
    discovery_method = None
    if doc.get("discovery_method") is not None:
        discovery_method = _int(doc["discovery_method"], "discovery_method", 0)
        if discovery_method not in registry:
            raise ValidationError("discovery_method", f"unknown method id {discovery_method}")

    w = _mapping(doc.get("weights") or {}, "weights")
    _unknown_keys(w, ("delay", "capacity", "methods"), "weights")
    weights = MetricWeights(*(_micro(w.get(k, 1), f"weights.{k}") for k in ("delay", "capacity", "methods")))
    if min(weights.delay, weights.capacity, weights.methods) < 0:
        raise ValidationError("weights", "weights must be non-negative")

    engine = _parse_engine(doc.get("engine"), registry, weights, discovery_method)
    nodes = _parse_nodes(doc.get("nodes"), registry, engine)
    ids = {n.id: n for n in nodes}
    edges = _parse_edges(doc.get("edges"), ids)
    _check_structure(nodes, edges)
    steg_links = _parse_steg_links(doc.get("steg_links"), ids, registry, discovery_method)
    events = tuple(_parse_event(raw, f"events[{i}]", ids) for i, raw in enumerate(_list(doc.get("events"), "events")))

    threshold = _micro(doc.get("gateway_threshold", "0.5"), "gateway_threshold")
    if not 0 <= threshold <= 1_000_000:
        raise ValidationError("gateway_threshold", "must lie in [0, 1]")
    cipher = str(doc.get("cipher", "splitmix"))
    if cipher not in ("splitmix", "aes-gcm"):
        raise ValidationError("cipher", "one of splitmix, aes-gcm")

    spec = ScenarioSpec(
        name=str(doc.get("name") or Path(source).stem),
        registry=registry,
        engine=engine,
        nodes=nodes,
        edges=edges,
        steg_links=steg_links,
        events=tuple(sorted(events, key=lambda e: e.at)),
        gateway_threshold=TrustValue(threshold),
        cipher=cipher,
        rekey_on_evict=bool(doc.get("rekey_on_evict", True)),
    )
    return replace(spec, digest=scenario_digest(spec))


def load_scenario(path: Union[str, Path]) -> ScenarioSpec:
    path = Path(path)
    text = read_text_safely(path)
    if text is None:
        raise ValidationError("scenario", f"cannot read {path}")
    spec = parse_scenario(text, str(path))
    logger.info("loaded scenario %s (%d nodes, digest %s)", spec.name, len(spec.nodes), spec.digest[:12])
    return spec

# -*- coding: utf-8 -*-
"""
Distance-Vector Routing
=======================

Table algebra for the per-CH routing table and the path-selection steps
used when sending data:

    merge_routing_update   Bellman-Ford relaxation of a neighbour's full table
    find_paths_match       candidate first-hop paths toward a destination
    calc_metrics_for_paths additive path metric
    choose_best_path       deterministic minimum
    send_data              pick a path (or report that none exists)

Tables are plain dicts of frozen `RouteEntry` values; every function returns a
new dict and leaves its input untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from src.core.constants import INFINITY_COST
from src.core.domain import Metric, MetricWeights, NodeId, StegLink, link_cost
from src.core.exceptions import EmptyPathList
from src.core.messages import AdvertisedRoute

if TYPE_CHECKING:
    from src.core.engine import ChState

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RouteEntry:
    destination: NodeId
    next_hop: NodeId
    metric: Metric
    method_set: FrozenSet[int] = frozenset()
    age: int = 0                  # tick of last refresh
    pending_prune: bool = False   # invalidated; advertise once, then drop

    @property
    def is_reachable(self) -> bool:
        return self.metric.is_reachable

    def advertised(self) -> AdvertisedRoute:
        cost = self.metric.cost if self.is_reachable else INFINITY_COST
        return AdvertisedRoute(self.destination, self.next_hop, cost, self.metric.hop_count, self.method_set)

    def invalidated(self, now: int) -> "RouteEntry":
        return replace(self, metric=Metric.infinite(self.metric.hop_count), age=now, pending_prune=True)


RoutingTable = Dict[NodeId, RouteEntry]
Advert = Union[AdvertisedRoute, RouteEntry]


def self_route(self_id: NodeId, methods: Iterable[int], now: int = 0) -> RouteEntry:
    return RouteEntry(self_id, self_id, Metric(0, 0), frozenset(methods), now)


def _advert_fields(adv: Advert) -> Tuple[NodeId, Metric, FrozenSet[int]]:
    if isinstance(adv, RouteEntry):
        return adv.destination, adv.metric, adv.method_set
    return adv.destination, Metric(adv.cost, adv.hop_count), adv.methods


def candidate_methods(advertised: FrozenSet[int], link: StegLink) -> FrozenSet[int]:
    """Bottleneck method set, falling back to the link's own methods."""
    common = frozenset(advertised) & link.methods
    return common or link.methods


def merge_routing_update(table: Mapping[NodeId, RouteEntry], neighbour: NodeId, neighbour_link: StegLink,
                         advertised: Iterable[Advert], weights: MetricWeights,
                         now: int = 0) -> Tuple[RoutingTable, bool]:
    """Relax `table` against the full table advertised by `neighbour`.

    A candidate is adopted when the destination is new, strictly cheaper, or
    already routed via this neighbour (whose word is always taken). Entries
    routed via the neighbour that it no longer lists at all are invalidated.
    """
    self_id = neighbour_link.local
    hop = link_cost(neighbour_link, weights)
    out: RoutingTable = dict(table)
    changed = False
    listed = set()

    for adv in advertised:
        dest, adv_metric, adv_methods = _advert_fields(adv)
        if dest == self_id:
            continue
        listed.add(dest)
        candidate = adv_metric + hop
        methods = candidate_methods(adv_methods, neighbour_link)
        current = out.get(dest)

        if not candidate.is_reachable:
            if current is not None and current.next_hop == neighbour and current.is_reachable:
                out[dest] = current.invalidated(now)
                changed = True
            continue

        fresh = RouteEntry(dest, neighbour, candidate, methods, now)
        if current is None or not current.is_reachable or candidate.cost < current.metric.cost:
            out[dest] = fresh
            changed = True
        elif current.next_hop == neighbour:
            if current.metric != candidate or current.method_set != methods:
                out[dest] = fresh
                changed = True
            else:
                out[dest] = replace(current, age=now)

    for dest, entry in table.items():
        if dest not in listed and entry.next_hop == neighbour and dest != self_id and entry.is_reachable:
            out[dest] = entry.invalidated(now)
            changed = True

    return out, changed


def invalidate_via(table: Mapping[NodeId, RouteEntry], gone: Iterable[NodeId], now: int) -> Tuple[RoutingTable, bool]:
    """Set every reachable route whose next hop is in `gone` to INFINITY_COST."""
    gone = set(gone)
    out: RoutingTable = dict(table)
    changed = False
    for dest, entry in table.items():
        if entry.is_reachable and (entry.next_hop in gone or dest in gone):
            out[dest] = entry.invalidated(now)
            changed = True
    return out, changed


def expire_stale(table: Mapping[NodeId, RouteEntry], self_id: NodeId, now: int, max_age: int) -> RoutingTable:
    out: RoutingTable = dict(table)
    for dest, entry in table.items():
        if dest != self_id and entry.is_reachable and now - entry.age > max_age:
            logger.debug("route to %s via %s is stale (age %d)", dest, entry.next_hop, now - entry.age)
            out[dest] = entry.invalidated(now)
    return out


def prune_invalid(table: Mapping[NodeId, RouteEntry]) -> RoutingTable:
    return {d: e for d, e in table.items() if not e.pending_prune}


def advertise(table: Mapping[NodeId, RouteEntry]) -> Tuple[AdvertisedRoute, ...]:
    return tuple(table[d].advertised() for d in sorted(table))


# ────────────────────────── Path selection ──────────────────────────

@dataclass(frozen=True)
class Path:
    """A first-hop candidate toward a destination.

    A distance-vector node only knows its own first link; what lies beyond is
    summarised by the neighbour's advertised `tail` metric.
    """
    hops: Tuple[NodeId, ...]
    links: Tuple[StegLink, ...]
    tail: Metric = Metric(0, 0)
    method_set: FrozenSet[int] = frozenset()
    metric: Optional[Metric] = None

    @property
    def first_hop(self) -> NodeId:
        return self.hops[0]


def find_paths_match(table: Mapping[NodeId, RouteEntry], neighbour_table: Mapping[NodeId, StegLink],
                     destination: NodeId, *, self_id: Optional[NodeId] = None,
                     adverts: Optional[Mapping[NodeId, Mapping[NodeId, AdvertisedRoute]]] = None) -> List[Path]:
    entry = table.get(destination)
    if entry is None or not entry.is_reachable:
        return []
    if destination == self_id or (entry.next_hop == destination and entry.metric == Metric(0, 0)):
        return [Path((destination,), (), Metric(0, 0), entry.method_set, Metric(0, 0))]

    adverts = adverts or {}
    paths: List[Path] = []
    for n in sorted(neighbour_table):
        link = neighbour_table[n]
        if n == destination:
            paths.append(Path((n,), (link,), Metric(0, 0), link.methods))
            continue
        adv = adverts.get(n, {}).get(destination)
        if adv is None or adv.cost >= INFINITY_COST or adv.next_hop == link.local:
            continue
        tail = Metric(adv.cost, adv.hop_count)
        if not tail.is_reachable:
            continue
        paths.append(Path((n, destination), (link,), tail, candidate_methods(adv.methods, link)))

    if not paths and entry.next_hop in neighbour_table:
        # table entry not backed by a cached advert (e.g. a bootstrap route)
        link = neighbour_table[entry.next_hop]
        paths.append(Path((entry.next_hop, destination), (link,), Metric(0, max(entry.metric.hop_count - 1, 0)),
                          candidate_methods(entry.method_set, link)))
    return paths


def calc_metrics_for_paths(paths: Iterable[Path], weights: MetricWeights) -> List[Path]:
    out = []
    for p in paths:
        total = p.tail
        for link in p.links:
            total = link_cost(link, weights) + total
        out.append(replace(p, metric=total))
    return out


def _path_key(p: Path):
    m = p.metric if p.metric is not None else Metric.infinite()
    return m.cost, m.hop_count, p.hops


def choose_best_path(paths: Iterable[Path]) -> Path:
    """Minimum cost; ties go to fewer hops, then the lower first-hop id."""
    paths = list(paths)
    if not paths:
        raise EmptyPathList("no candidate paths to choose from")
    return min(paths, key=_path_key)


@dataclass(frozen=True)
class Sent:
    path: Path
    method: int
    metric_evaluated: bool = True


@dataclass(frozen=True)
class NoPathFound:
    destination: NodeId


SendOutcome = Union[Sent, NoPathFound]


def send_data(state: "ChState", destination: NodeId, payload: bytes = b"") -> SendOutcome:
    """Select the steg-path for `payload`; emission is left to the engine."""
    paths = find_paths_match(state.routing_table, state.neighbour_table, destination,
                             self_id=state.self_id, adverts=state.adverts)
    if len(paths) > 1:
        best = choose_best_path(calc_metrics_for_paths(paths, state.config.weights))
        evaluated = True
    elif len(paths) == 1:
        best, evaluated = paths[0], False
    else:
        logger.debug("CH %s: no path to %s", state.self_id, destination)
        return NoPathFound(destination)

    if not best.links:
        return Sent(best, min(best.method_set) if best.method_set else 0, evaluated)
    link = best.links[0]
    usable = best.method_set & link.methods
    return Sent(best, min(usable) if usable else link.preferred_method, evaluated)

"""
Core module for stegmesh
========================
"""

from .domain import (
    CapabilityProfile, MessageKind, MethodRegistry, Metric, MetricWeights, NodeRole, ProtocolMessage,
    StegLink, StegMethod, link_cost,
)
from .codec import StegCodec, cover, find_steg_msg
from .engine import ChState, EngineConfig, TimerKind, init_ch, on_timer, receive
from .routing import RouteEntry, merge_routing_update, send_data
from .scenario import ScenarioSpec, load_scenario, parse_scenario
from .world import World, build_world, inject_fault, oracle_shortest_paths, run_until, step
from .report import RunReport

__all__ = [
    'CapabilityProfile', 'MessageKind', 'MethodRegistry', 'Metric', 'MetricWeights', 'NodeRole',
    'ProtocolMessage', 'StegLink', 'StegMethod', 'link_cost',
    'StegCodec', 'cover', 'find_steg_msg',
    'ChState', 'EngineConfig', 'TimerKind', 'init_ch', 'on_timer', 'receive',
    'RouteEntry', 'merge_routing_update', 'send_data',
    'ScenarioSpec', 'load_scenario', 'parse_scenario',
    'World', 'build_world', 'inject_fault', 'oracle_shortest_paths', 'run_until', 'step',
    'RunReport',
]

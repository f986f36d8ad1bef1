from dataclasses import replace
from pathlib import Path

import pytest

from src.core.domain import LayerTag, MethodRegistry, StegLink, StegMethod
from src.core.engine import EngineConfig, init_ch
from src.core.scenario import load_scenario, parse_scenario
from src.utils.rng import SplitMix64

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def registry():
    """Methods 0-3 application, 4-5 transport, 6 datalink."""
    return MethodRegistry.of(
        [StegMethod(i, LayerTag.APPLICATION) for i in range(4)]
        + [StegMethod(4, LayerTag.TRANSPORT, 2), StegMethod(5, LayerTag.TRANSPORT), StegMethod(6, LayerTag.DATALINK)]
    )


@pytest.fixture
def rng():
    return SplitMix64(2024)


@pytest.fixture
def config(registry):
    return EngineConfig(registry=registry)


@pytest.fixture
def make_ch(config):
    def _make(node_id, profile, **overrides):
        cfg = replace(config, **overrides) if overrides else config
        return init_ch(node_id, frozenset(profile), cfg)
    return _make


@pytest.fixture
def make_link():
    def _make(local, peer, methods=(1,), capacity=1, delay=1, last_hello=0):
        return StegLink(local, peer, frozenset(methods), capacity, delay, last_hello)
    return _make


@pytest.fixture
def scenario_file():
    def _path(name):
        return SCENARIOS / f"{name}.scn"
    return _path


@pytest.fixture
def load():
    def _load(name):
        return load_scenario(SCENARIOS / f"{name}.scn")
    return _load


@pytest.fixture
def scenario_text():
    """Parse an inline YAML scenario."""
    def _parse(text):
        return parse_scenario(text, "inline.scn")
    return _parse


LINE_OF_3 = """
name: inline
methods: [0, 1, 2, 3]
nodes:
  - {id: 1, role: ch, cluster: 1, profile: [0, 1]}
  - {id: 2, role: ch, cluster: 2, profile: [1, 2]}
  - {id: 3, role: ch, cluster: 3, profile: [2, 3]}
edges: [[1, 2], [2, 3]]
steg_links:
  - {a: 1, b: 2, capacity: 1, delay: 1}
  - {a: 2, b: 3, capacity: 1, delay: 1}
"""


@pytest.fixture
def minimal_text():
    return LINE_OF_3

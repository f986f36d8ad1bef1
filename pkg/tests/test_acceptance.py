"""End-to-end runs over the shipped scenarios and seeded random topologies."""
import pytest
import yaml

from src.core.domain import MessageKind
from src.core.scenario import parse_scenario
from src.core.world import build_world, oracle_shortest_paths, run_until, step
from src.tools.verify import CheckStatus, codec_sweep, verify_scenario
from src.utils.rng import SplitMix64

SEEDS = [0, 1, 7, 2024, 2 ** 64 - 1]
LAYERS = ["application"] * 4 + ["transport", "datalink"]


def scenario(doc):
    return parse_scenario(yaml.safe_dump(doc, sort_keys=False), f"{doc['name']}.scn")


def random_topology(seed):
    """3-10 CHs on a connected underlay, delays 1-8, 1-4 methods each out of 6."""
    rng = SplitMix64(seed)
    count = rng.uniform_int(3, 10)
    methods = [{"id": i, "layer": LAYERS[i], "capacity": rng.uniform_int(1, 16)} for i in range(6)]
    nodes = []
    for nid in range(1, count + 1):
        pool = list(range(6))
        profile = []
        for _ in range(rng.uniform_int(1, 4)):
            profile.append(pool.pop(rng.randbelow(len(pool))))
        nodes.append({"id": nid, "role": "ch", "cluster": nid, "profile": sorted(profile)})
    pairs = {}
    for v in range(2, count + 1):
        pairs[(rng.uniform_int(1, v - 1), v)] = rng.uniform_int(1, 8)
    for _ in range(rng.uniform_int(0, count)):
        a, b = sorted((rng.uniform_int(1, count), rng.uniform_int(1, count)))
        if a != b and (a, b) not in pairs:
            pairs[(a, b)] = rng.uniform_int(1, 8)
    edges = [[a, b, d] for (a, b), d in sorted(pairs.items())]
    return scenario({"name": f"random_{seed}", "methods": methods, "nodes": nodes, "edges": edges})


def cluster_heads(count, edges, engine, events=(), links=True, profiles=None):
    nodes = [{"id": i, "role": "ch", "cluster": i, "profile": (profiles or {}).get(i, [1, 2])}
             for i in range(1, count + 1)]
    doc = {"name": "heads", "methods": [0, 1, 2, 3, 4], "engine": engine, "nodes": nodes,
           "edges": [list(e) for e in edges], "events": list(events)}
    if links:
        doc["steg_links"] = [{"a": a, "b": b, "methods": [1]} for a, b, *_ in edges]
    return scenario(doc)


# ──── shipped scenarios ────

@pytest.mark.slow
@pytest.mark.parametrize("name", ["line_of_3", "figure6"])
@pytest.mark.parametrize("seed", SEEDS)
def test_verify_across_seeds(load, name, seed):
    result = verify_scenario(load(name), seed)
    assert result.passed, result.summary()


@pytest.mark.slow
@pytest.mark.parametrize("name", ["line_of_3", "figure6", "two_clusters"])
def test_runs_are_reproducible(load, name):
    outputs = []
    for _ in range(2):
        world = build_world(load(name), 99)
        report = run_until(world, 2000)
        outputs.append((world.trace.render(), report.to_json(), world.metrics_rows))
    assert outputs[0] == outputs[1]
    assert "quiesce_check" in outputs[0][0]


@pytest.mark.slow
@pytest.mark.parametrize("seed", SEEDS)
def test_eviction_locks_out_the_eavesdropper(load, seed):
    report = run_until(build_world(load("two_clusters"), seed), 5000)
    assert report.adversary["unauthorized_recoveries"] == 0
    assert report.adversary["recovered"] <= 1
    assert report.clusters["1"]["key_id"] == 2
    assert report.conserved


# ──── distance vector against the oracle ────

@pytest.mark.slow
@pytest.mark.parametrize("seed", range(200))
def test_random_topology_matches_oracle(seed):
    world = build_world(random_topology(seed), seed)
    report = run_until(world, 20000)
    assert report.quiescence_tick is not None
    for (src, dst), best in oracle_shortest_paths(world).items():
        if src == dst:
            continue
        entry = world.engines[src].routing_table.get(dst)
        if best.is_reachable:
            assert entry is not None and entry.is_reachable, (src, dst)
            assert entry.metric.cost == best.cost, (src, dst, entry.metric, best)
        else:
            assert entry is None or not entry.is_reachable, (src, dst)


# ──── discovery ────

def discovered_everything(seed):
    world = build_world(cluster_heads(
        5, [(1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 5, 3), (5, 1, 1)],
        {"forward_probability": 0.7}, links=False,
        profiles={1: [1, 2], 2: [1, 3], 3: [1, 2, 3], 4: [1], 5: [1, 4]}), seed)
    run_until(world, 10 * 50 - 1, stop_at_quiescence=False)
    engines = world.engines
    return all(
        (entry := engines[a].routing_table.get(b)) is not None and entry.is_reachable
        for a in engines for b in engines if a != b
    )


@pytest.mark.slow
def test_discovery_completes_within_ten_walk_periods():
    complete = sum(discovered_everything(seed) for seed in range(100))
    assert complete >= 95


# ──── faults ────

JITTER = {"hello_timeout": 35, "hello_period": 10, "fluctuation_h": 2, "fluctuation_ru": 2, "fluctuation_rw": 5}


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(50))
def test_link_cut_expires_within_bound(seed):
    cut_at = 200 + seed
    spec = cluster_heads(3, [(1, 2, 1), (2, 3, 1), (1, 3, 1)], JITTER,
                         events=[{"at": cut_at, "fault": "link_cut", "a": 2, "b": 3}])
    world = build_world(spec, seed)
    run_until(world, cut_at + 150, stop_at_quiescence=False)
    bound = cut_at + 35 + 10 + 2
    for node, peer in ((2, 3), (3, 2)):
        downs = [r.tick for r in world.trace.of_kind("link_down") if r.src == node and r.dst == peer]
        assert len(downs) == 1 and cut_at < downs[0] <= bound, (node, downs)
        fanouts = [r.tick for r in world.trace.of_kind("fanout")
                   if r.src == node and r.detail["reason"] == "expiry"]
        assert fanouts == downs
        assert peer not in world.engines[node].neighbour_table


def infinity_tick(fault, seed):
    """First tick by which every remaining CH has dropped its route to CH 2."""
    removed_at = 200 + seed
    spec = cluster_heads(4, [(1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 1, 1)], JITTER,
                         events=[{"at": removed_at, "fault": fault, "node": 2}])
    world = build_world(spec, seed)
    run_until(world, removed_at - 1, stop_at_quiescence=False)
    seen = {}
    while world.queue and len(seen) < 3 and world.queue[0][0] <= removed_at + 300:
        step(world)
        if world.clock < removed_at:
            continue
        for nid, engine in world.engines.items():
            entry = engine.routing_table.get(2)
            if nid not in seen and (entry is None or not entry.is_reachable):
                seen[nid] = world.clock
    assert set(seen) == {1, 3, 4}
    return max(seen.values())


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(50))
def test_triggered_update_beats_hello_timeout(seed):
    assert infinity_tick("malicious_removal", seed) < infinity_tick("benign_departure", seed)


# ──── codec and adversary ────

@pytest.mark.slow
def test_codec_suite_at_full_scale(load):
    result = codec_sweep(load("two_clusters").registry, SplitMix64(6), 10_000, 100_000)
    assert result.status is CheckStatus.PASS, result.counterexample


def eavesdropped_cluster(messages):
    events = [{"at": 100, "fault": "eavesdropper", "node": 21}]
    events += [{"at": 101 + i, "intra": {"from": 11, "body": f"report {i}"}} for i in range(messages)]
    return scenario({
        "name": "eavesdropped",
        "methods": [0, 1],
        "nodes": [
            {"id": 1, "role": "ch", "cluster": 1, "profile": [0, 1]},
            {"id": 11, "role": "member", "cluster": 1},
            {"id": 2, "role": "ch", "cluster": 2, "profile": [0, 1]},
            {"id": 21, "role": "member", "cluster": 2},
        ],
        "edges": [[1, 11], [1, 2], [2, 21], [21, 11]],
        "events": events,
    })


@pytest.mark.slow
def test_outsider_recovers_nothing_from_a_thousand_messages():
    world = build_world(eavesdropped_cluster(1000), 11)
    report = run_until(world, 5000)
    assert report.intra == {"sealed": 1000, "opened": 1000, "rejected": 0}
    assert report.adversary["intra_captured"] >= 1000
    assert report.adversary["recovered"] == 0
    assert all(c.kind != MessageKind.INTRA_CLUSTER.value or not c.recovered for c in world.captures)

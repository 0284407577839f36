import itertools
import random

import pytest

from stagger.engine import uncontrolled_schedule
from stagger.model import InstanceError
from stagger.network import (
    Edge,
    RoadGraph,
    ScenarioParams,
    build_instance,
    contract_graph,
    dijkstra,
    generate_synthetic,
    read_graph,
    shortest_route,
    write_graph,
    write_trips_csv,
)
from stagger.model import read_trips_csv


def path_graph() -> RoadGraph:
    nodes = {0: (0.0, 0.0), 1: (0.0, 1.0), 2: (0.0, 2.0)}
    edges = [
        Edge(id=0, tail=0, head=1, length=3.0),
        Edge(id=1, tail=1, head=2, length=4.0),
    ]
    return RoadGraph(nodes=nodes, edges=edges)


def random_digraph(seed: int, max_nodes: int = 40) -> RoadGraph:
    rng = random.Random(seed)
    n = rng.randint(4, max_nodes)
    nodes = {i: (float(i), 0.0) for i in range(n)}
    edges = []
    order = list(range(n))
    rng.shuffle(order)
    for a, b in zip(order, order[1:]):  # spanning chain keeps it connected
        edges.append(Edge(id=len(edges), tail=a, head=b, length=float(rng.randint(1, 20))))
    for _ in range(rng.randint(n, 3 * n)):
        u, v = rng.randrange(n), rng.randrange(n)
        if u != v:
            edges.append(Edge(id=len(edges), tail=u, head=v, length=float(rng.randint(1, 20))))
    return RoadGraph(nodes=nodes, edges=edges)


def all_pairs(graph: RoadGraph) -> dict[tuple[int, int], float]:
    out = {}
    for s in graph.nodes:
        dist, _, _ = dijkstra(graph, s)
        for t, d in dist.items():
            out[(s, t)] = d
    return out


class TestShortestPaths:
    def test_route_reconstruction(self):
        g = path_graph()
        assert shortest_route(g, 0, 2) == [0, 1]

    def test_unreachable_raises(self):
        g = path_graph()
        with pytest.raises(InstanceError, match="unreachable"):
            shortest_route(g, 2, 0)

    def test_tie_break_prefers_fewer_edges(self):
        # two length-10 paths: direct edge vs two-hop detour
        nodes = {0: (0.0, 0.0), 1: (0.0, 1.0), 2: (0.0, 2.0)}
        edges = [
            Edge(id=0, tail=0, head=1, length=5.0),
            Edge(id=1, tail=1, head=2, length=5.0),
            Edge(id=2, tail=0, head=2, length=10.0),
        ]
        g = RoadGraph(nodes=nodes, edges=edges)
        assert shortest_route(g, 0, 2) == [2]


class TestContraction:
    def test_middle_node_shortcut(self):
        # node 0 sits between 1 and 2; removing it must add a 3+4 shortcut.
        # a one-node budget contracts the lowest-id node among equal scores,
        # which is the middle one here
        nodes = {0: (0.0, 1.0), 1: (0.0, 0.0), 2: (0.0, 2.0)}
        edges = [
            Edge(id=0, tail=1, head=0, length=3.0),
            Edge(id=1, tail=0, head=2, length=4.0),
        ]
        g = RoadGraph(nodes=nodes, edges=edges)
        reduced = contract_graph(g, target_fraction=0.34)
        assert set(reduced.nodes) == {1, 2}
        assert len(reduced.edges) == 1
        sc = reduced.edges[0]
        assert (sc.tail, sc.head, sc.length, sc.shortcut) == (1, 2, 7.0, True)

    def test_no_shortcut_when_witness_exists(self):
        # the detour through the middle node is longer than the direct edge,
        # so contracting it adds nothing
        nodes = {0: (0.0, 1.0), 1: (0.0, 0.0), 2: (0.0, 2.0)}
        edges = [
            Edge(id=0, tail=1, head=0, length=5.0),
            Edge(id=1, tail=0, head=2, length=5.0),
            Edge(id=2, tail=1, head=2, length=6.0),
        ]
        g = RoadGraph(nodes=nodes, edges=edges)
        reduced = contract_graph(g, target_fraction=0.34)
        assert 0 not in reduced.nodes
        assert not any(e.shortcut for e in reduced.edges)
        assert [(e.tail, e.head, e.length) for e in reduced.edges] == [(1, 2, 6.0)]

    def test_distances_preserved_on_random_digraphs(self):
        for seed in range(25):
            g = random_digraph(seed)
            before = all_pairs(g)
            reduced = contract_graph(g, target_fraction=0.4)
            after = all_pairs(reduced)
            for (s, t), d in before.items():
                if s in reduced.nodes and t in reduced.nodes:
                    assert after[(s, t)] == d  # exact, not approximate

    def test_target_fraction_removes_nodes(self):
        g = random_digraph(3, max_nodes=30)
        reduced = contract_graph(g, target_fraction=0.5)
        assert len(reduced.nodes) <= len(g.nodes) - int(0.5 * len(g.nodes)) + 1


class TestGraphIO:
    def test_roundtrip(self, tmp_path):
        g = random_digraph(1)
        write_graph(g, tmp_path / "nodes.csv", tmp_path / "edges.csv")
        again = read_graph(tmp_path / "nodes.csv", tmp_path / "edges.csv")
        assert again.nodes == g.nodes
        assert [(e.tail, e.head, e.length) for e in again.edges] == [
            (e.tail, e.head, e.length) for e in g.edges
        ]


class TestBuildInstance:
    def test_calibration_formulas(self):
        # 333.33 m at 20 km/h is a 60 s arc; capacity 60/15 rounds to 4,
        # slope 0.5 * 60 / 4 = 7.5
        nodes = {0: (0.0, 0.0), 1: (0.0, 1.0)}
        g = RoadGraph(nodes=nodes, edges=[Edge(id=0, tail=0, head=1, length=1000.0 / 3.0)])
        rows = [{"trip_id": "t", "origin": 0, "dest": 1, "release": 0.0}]
        inst = build_instance(g, rows)
        arc = inst.arcs[0]
        assert arc.nominal == pytest.approx(60.0, abs=1e-6)
        assert arc.ttf.pieces[0][1] == 4.0
        assert arc.ttf.pieces[0][0] == pytest.approx(7.5, abs=1e-6)

    def test_capacity_clamped_to_one(self):
        nodes = {0: (0.0, 0.0), 1: (0.0, 1.0)}
        g = RoadGraph(nodes=nodes, edges=[Edge(id=0, tail=0, head=1, length=10.0)])
        rows = [{"trip_id": "t", "origin": 0, "dest": 1, "release": 0.0}]
        inst = build_instance(g, rows)
        assert inst.arcs[0].ttf.pieces[0][1] == 1.0

    def test_high_congestion_divisor_lowers_capacity(self):
        nodes = {0: (0.0, 0.0), 1: (0.0, 1.0)}
        g = RoadGraph(nodes=nodes, edges=[Edge(id=0, tail=0, head=1, length=1000.0)])
        rows = [{"trip_id": "t", "origin": 0, "dest": 1, "release": 0.0}]
        low = build_instance(g, rows, ScenarioParams(capacity_divisor=15.0))
        high = build_instance(g, rows, ScenarioParams(capacity_divisor=30.0))
        assert high.arcs[0].ttf.pieces[0][1] <= low.arcs[0].ttf.pieces[0][1]

    def test_zero_zeta_zero_budgets(self):
        g, rows = generate_synthetic(0, grid_size=3, n_trips=8, horizon_s=60.0)
        inst = build_instance(g, rows, ScenarioParams(stagger_fraction=0.0))
        assert all(t.max_stagger == 0.0 for t in inst.trips)

    def test_stagger_budget_fraction_of_free_flow(self):
        g, rows = generate_synthetic(1, grid_size=3, n_trips=5, horizon_s=60.0)
        inst = build_instance(g, rows, ScenarioParams(stagger_fraction=0.10))
        for trip in inst.trips:
            free = inst.free_flow_time(trip.id)
            assert trip.max_stagger == pytest.approx(0.10 * free)

    def test_uncontrolled_meets_all_deadlines(self):
        for seed in range(5):
            g, rows = generate_synthetic(
                seed, grid_size=4, spacing_m=100.0, n_trips=15, horizon_s=30.0
            )
            inst = build_instance(g, rows)
            sched = uncontrolled_schedule(inst)
            for trip in inst.trips:
                assert sched.arrival(trip.id, inst) <= trip.deadline + 1e-9

    def test_identical_origin_dest_rejected(self):
        g = path_graph()
        rows = [{"trip_id": "t", "origin": 0, "dest": 0, "release": 0.0}]
        with pytest.raises(InstanceError, match="origin equals destination"):
            build_instance(g, rows)

    def test_unreachable_dest_rejected(self):
        g = path_graph()
        rows = [{"trip_id": "t", "origin": 2, "dest": 0, "release": 0.0}]
        with pytest.raises(InstanceError, match="unreachable"):
            build_instance(g, rows)


class TestGenerateSynthetic:
    def test_determinism(self):
        a = generate_synthetic(42)
        b = generate_synthetic(42)
        assert a[0].nodes == b[0].nodes
        assert a[0].edges == b[0].edges
        assert a[1] == b[1]

    def test_unknown_demand_rejected(self):
        with pytest.raises(InstanceError, match="demand"):
            generate_synthetic(0, demand="weird")

    def test_crossing_demand_joins_opposite_quadrants(self):
        k = 6
        g, rows = generate_synthetic(3, grid_size=k, n_trips=30, demand="crossing")
        half = k // 2
        near = {i * k + j for i in range(half) for j in range(half)}
        far = {i * k + j for i in range(half, k) for j in range(half, k)}
        for row in rows:
            ends = {row["origin"], row["dest"]}
            assert ends & near and ends & far

    def test_congested_scenario_has_conflicting_sets(self):
        from stagger.preprocess import preprocess

        g, rows = generate_synthetic(
            0, grid_size=6, spacing_m=100.0, n_trips=14, horizon_s=15.0, demand="crossing"
        )
        inst = build_instance(g, rows)
        _, sets, _, _ = preprocess(inst)
        assert sets

    def test_trips_csv_roundtrip(self, tmp_path):
        _, rows = generate_synthetic(5, n_trips=6)
        path = tmp_path / "trips.csv"
        write_trips_csv(rows, path)
        again = read_trips_csv(path)
        assert [(r["origin"], r["dest"], r["release"]) for r in again] == [
            (r["origin"], r["dest"], r["release"]) for r in rows
        ]

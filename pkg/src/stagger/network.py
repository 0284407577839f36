"""Road-network toolkit: graph I/O, shortest paths, graph contraction, and
calibration of scheduling instances from trip demand.

Contraction removes low-importance nodes in edge-difference order and adds
shortcut edges so that shortest-path distances between all surviving nodes
are preserved exactly.
"""

from __future__ import annotations

import csv
import heapq
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .engine import construct_schedule
from .model import Arc, Instance, InstanceError, Trip, TravelTimeFunction


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    length: float  # metres
    shortcut: bool = False


@dataclass
class RoadGraph:
    nodes: dict[int, tuple[float, float]]  # id -> (lat, lon)
    edges: list[Edge] = field(default_factory=list)

    def out_adjacency(self) -> dict[int, list[Edge]]:
        adj: dict[int, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.edges:
            adj[e.tail].append(e)
        return adj


def read_graph(nodes_path: str | Path, edges_path: str | Path) -> RoadGraph:
    nodes: dict[int, tuple[float, float]] = {}
    with open(nodes_path, newline="") as fh:
        for row in csv.DictReader(fh):
            nodes[int(row["id"])] = (float(row["lat"]), float(row["lon"]))
    edges = []
    with open(edges_path, newline="") as fh:
        for row in csv.DictReader(fh):
            edges.append(
                Edge(
                    id=int(row["id"]),
                    tail=int(row["tail"]),
                    head=int(row["head"]),
                    length=float(row["length_m"]),
                )
            )
    return RoadGraph(nodes=nodes, edges=edges)


def write_graph(graph: RoadGraph, nodes_path: str | Path, edges_path: str | Path):
    with open(nodes_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lat", "lon"])
        for nid in sorted(graph.nodes):
            lat, lon = graph.nodes[nid]
            writer.writerow([nid, repr(lat), repr(lon)])
    with open(edges_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "tail", "head", "length_m"])
        for e in graph.edges:
            writer.writerow([e.id, e.tail, e.head, repr(e.length)])


def dijkstra(graph: RoadGraph, source: int):
    """Single-source shortest paths with deterministic tie-breaking.

    Among equal-length paths the one with fewer edges wins, then the one
    whose predecessor node id is smallest. Returns (dist, hops, pred)
    where pred maps node -> (previous node, edge id).
    """
    adj = graph.out_adjacency()
    dist: dict[int, float] = {source: 0.0}
    hops: dict[int, int] = {source: 0}
    pred: dict[int, tuple[int, int]] = {}
    heap: list[tuple[float, int, int]] = [(0.0, 0, source)]
    done: set[int] = set()
    while heap:
        d, h, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for e in adj[u]:
            v = e.head
            nd, nh = d + e.length, h + 1
            better = v not in dist or nd < dist[v] or (
                nd == dist[v]
                and (nh < hops[v] or (nh == hops[v] and v in pred and u < pred[v][0]))
            )
            if better:
                dist[v], hops[v] = nd, nh
                pred[v] = (u, e.id)
                heapq.heappush(heap, (nd, nh, v))
    return dist, hops, pred


def shortest_route(graph: RoadGraph, source: int, target: int) -> list[int]:
    """Edge ids of the tie-broken shortest path; raises if unreachable."""
    dist, _, pred = dijkstra(graph, source)
    if target not in dist:
        raise InstanceError(f"node {target} unreachable from {source}")
    route: list[int] = []
    v = target
    while v != source:
        u, eid = pred[v]
        route.append(eid)
        v = u
    route.reverse()
    return route


def _witness_exists(
    out_adj: dict[int, dict[int, float]],
    source: int,
    target: int,
    avoid: int,
    limit: float,
    settle_cap: int = 1000,
) -> bool:
    """Bounded Dijkstra: is there a path <= limit avoiding one node?

    An aborted search reports no witness, which only adds a redundant
    shortcut and never breaks distance preservation.
    """
    dist = {source: 0.0}
    heap = [(0.0, source)]
    settled = 0
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, math.inf):
            continue
        if d > limit:
            return False
        if u == target:
            return True
        settled += 1
        if settled > settle_cap:
            return False
        for v, w in out_adj.get(u, {}).items():
            if v == avoid:
                continue
            nd = d + w
            if nd <= limit and nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return False


def contract_graph(
    graph: RoadGraph,
    target_fraction: float | None = 0.25,
    settle_cap: int = 1000,
) -> RoadGraph:
    """Remove nodes in lazily-updated edge-difference order.

    Stops once ``target_fraction`` of the nodes is removed, or, when the
    fraction is None, once no contraction removes more edges than the
    shortcuts it adds. Distances between surviving nodes are exact.
    """
    out_adj: dict[int, dict[int, float]] = {n: {} for n in graph.nodes}
    in_adj: dict[int, dict[int, float]] = {n: {} for n in graph.nodes}
    for e in graph.edges:
        if e.tail == e.head:
            continue
        cur = out_adj[e.tail].get(e.head)
        if cur is None or e.length < cur:
            out_adj[e.tail][e.head] = e.length
            in_adj[e.head][e.tail] = e.length

    def shortcuts_for(v: int) -> list[tuple[int, int, float]]:
        need = []
        for u, lu in in_adj[v].items():
            for w, lw in out_adj[v].items():
                if u == w:
                    continue
                length = lu + lw
                if not _witness_exists(out_adj, u, w, v, length, settle_cap):
                    need.append((u, w, length))
        return need

    def edge_diff(v: int) -> tuple[int, list[tuple[int, int, float]]]:
        need = shortcuts_for(v)
        return len(need) - len(in_adj[v]) - len(out_adj[v]), need

    heap: list[tuple[int, int]] = []
    for v in graph.nodes:
        ed, _ = edge_diff(v)
        heapq.heappush(heap, (ed, v))

    removed: set[int] = set()
    next_edge_id = max((e.id for e in graph.edges), default=-1) + 1
    shortcut_edges: list[Edge] = []
    budget = (
        int(target_fraction * len(graph.nodes)) if target_fraction is not None else None
    )

    while heap:
        if budget is not None and len(removed) >= budget:
            break
        ed, v = heapq.heappop(heap)
        if v in removed:
            continue
        cur_ed, need = edge_diff(v)
        if heap and cur_ed > heap[0][0]:
            heapq.heappush(heap, (cur_ed, v))  # stale key, retry later
            continue
        if budget is None and cur_ed >= 0:
            break
        removed.add(v)
        for u, w, length in need:
            cur = out_adj[u].get(w)
            if cur is None or length < cur:
                out_adj[u][w] = length
                in_adj[w][u] = length
                shortcut_edges.append(
                    Edge(id=next_edge_id, tail=u, head=w, length=length, shortcut=True)
                )
                next_edge_id += 1
        for u in list(in_adj[v]):
            out_adj[u].pop(v, None)
        for w in list(out_adj[v]):
            in_adj[w].pop(v, None)
        out_adj.pop(v)
        in_adj.pop(v)

    nodes = {n: xy for n, xy in graph.nodes.items() if n not in removed}
    edges = [e for e in graph.edges if e.tail in nodes and e.head in nodes]
    # drop shortcuts whose endpoints were contracted later on
    edges += [e for e in shortcut_edges if e.tail in nodes and e.head in nodes]
    return RoadGraph(nodes=nodes, edges=edges)


@dataclass
class ScenarioParams:
    speed_kmh: float = 20.0
    capacity_divisor: float = 15.0  # seconds of nominal time per capacity unit
    slope_factor: float = 0.5
    deadline_quota: float = 0.25
    deadline_offset: float = 30.0
    stagger_fraction: float = 0.10  # zeta


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def build_instance(
    graph: RoadGraph,
    trip_rows: list[dict],
    params: ScenarioParams | None = None,
) -> Instance:
    """Route the demand and calibrate congestion and deadlines.

    Arc capacity grows with nominal travel time, the congestion slope is
    half the per-vehicle nominal share, deadlines add a fixed quota of the
    trip's free-flow time plus an offset on top of its uncontrolled
    arrival, and the stagger budget is a fraction of free-flow time.
    """
    params = params or ScenarioParams()
    speed = params.speed_kmh / 3.6
    if speed <= 0:
        raise InstanceError("speed must be positive")

    route_cache: dict[int, tuple[dict, dict]] = {}
    raw_routes: list[list[int]] = []
    for row in trip_rows:
        o, d = row["origin"], row["dest"]
        if o == d:
            raise InstanceError(f"trip {row['trip_id']}: origin equals destination")
        if o not in route_cache:
            dist, _, pred = dijkstra(graph, o)
            route_cache[o] = (dist, pred)
        dist, pred = route_cache[o]
        if d not in dist:
            raise InstanceError(f"trip {row['trip_id']}: node {d} unreachable from {o}")
        route: list[int] = []
        v = d
        while v != o:
            u, eid = pred[v]
            route.append(eid)
            v = u
        route.reverse()
        raw_routes.append(route)

    used = sorted({eid for route in raw_routes for eid in route})
    edge_by_id = {e.id: e for e in graph.edges}
    remap = {eid: i for i, eid in enumerate(used)}
    arcs = []
    arc_labels = {}
    for eid in used:
        e = edge_by_id[eid]
        nominal = e.length / speed
        cap = max(1, _round_half_up(nominal / params.capacity_divisor))
        slope = params.slope_factor * nominal / cap
        arcs.append(
            Arc(
                id=remap[eid],
                tail=e.tail,
                head=e.head,
                ttf=TravelTimeFunction(nominal, ((slope, float(cap)),)),
            )
        )
        arc_labels[remap[eid]] = str(eid)

    min_nominal = min(a.nominal for a in arcs)
    epsilon = min(0.01, min_nominal / 2)

    horizon = sum(a.nominal + a.ttf.delay(len(trip_rows)) for a in arcs)
    provisional = []
    trip_labels = {}
    for j, (row, route) in enumerate(zip(trip_rows, raw_routes)):
        mapped = tuple(remap[eid] for eid in route)
        free = sum(arcs[a].nominal for a in mapped)
        provisional.append(
            Trip(
                id=j,
                route=mapped,
                release=row["release"],
                deadline=row["release"] + free + horizon,
                max_stagger=0.0,
            )
        )
        trip_labels[j] = str(row["trip_id"])

    probe = Instance(arcs=arcs, trips=provisional, epsilon=epsilon, arc_labels=arc_labels)
    uncontrolled = construct_schedule(probe, [0.0] * len(provisional))

    trips = []
    for j, trip in enumerate(provisional):
        free = sum(arcs[a].nominal for a in trip.route)
        arrival = uncontrolled.arrival(j, probe)
        trips.append(
            Trip(
                id=j,
                route=trip.route,
                release=trip.release,
                deadline=arrival + params.deadline_quota * free + params.deadline_offset,
                max_stagger=params.stagger_fraction * free,
            )
        )
    return Instance(
        arcs=arcs,
        trips=trips,
        epsilon=epsilon,
        arc_labels=arc_labels,
        trip_labels=trip_labels,
    )


def generate_synthetic(
    seed: int,
    grid_size: int = 4,
    spacing_m: float = 500.0,
    diagonal_prob: float = 0.3,
    n_trips: int = 20,
    horizon_s: float = 600.0,
    hotspot_intensity: float = 0.5,
    demand: str = "hotspot",
) -> tuple[RoadGraph, list[dict]]:
    """A seeded grid network with diagonals plus biased demand.

    ``demand="hotspot"`` draws destinations toward the central node;
    ``demand="crossing"`` sends trips between opposite quadrants, which
    yields long routes through the middle of the grid. Demand rows use
    the trip bundle schema, so the output feeds straight into
    ``build_instance``.
    """
    if demand not in ("hotspot", "crossing"):
        raise InstanceError(f"unknown demand pattern {demand!r}")
    rng = random.Random(seed)
    nodes = {}
    for i in range(grid_size):
        for j in range(grid_size):
            nodes[i * grid_size + j] = (i * spacing_m, j * spacing_m)

    edges: list[Edge] = []

    def link(u: int, v: int, base: float):
        length = float(round(base * rng.uniform(0.9, 1.1)))
        edges.append(Edge(id=len(edges), tail=u, head=v, length=length))
        length = float(round(base * rng.uniform(0.9, 1.1)))
        edges.append(Edge(id=len(edges), tail=v, head=u, length=length))

    for i in range(grid_size):
        for j in range(grid_size):
            u = i * grid_size + j
            if j + 1 < grid_size:
                link(u, u + 1, spacing_m)
            if i + 1 < grid_size:
                link(u, u + grid_size, spacing_m)
            if i + 1 < grid_size and j + 1 < grid_size and rng.random() < diagonal_prob:
                link(u, u + grid_size + 1, spacing_m * math.sqrt(2.0))

    hotspot = (grid_size // 2) * grid_size + grid_size // 2
    ids = sorted(nodes)
    half = grid_size // 2
    near = [i * grid_size + j for i in range(half) for j in range(half)]
    far = [i * grid_size + j for i in range(half, grid_size) for j in range(half, grid_size)]
    rows = []
    for k in range(n_trips):
        if demand == "crossing":
            if rng.random() < 0.5:
                origin, dest = rng.choice(near), rng.choice(far)
            else:
                origin, dest = rng.choice(far), rng.choice(near)
        else:
            origin = rng.choice(ids)
            if rng.random() < hotspot_intensity and origin != hotspot:
                dest = hotspot
            else:
                dest = rng.choice([n for n in ids if n != origin])
        rows.append(
            {
                "trip_id": f"t{k}",
                "origin": origin,
                "dest": dest,
                "release": round(rng.uniform(0.0, horizon_s), 1),
            }
        )
    rows.sort(key=lambda r: (r["release"], r["trip_id"]))
    return RoadGraph(nodes=nodes, edges=edges), rows


def write_trips_csv(rows: list[dict], path: str | Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trip_id", "origin_node", "dest_node", "release_s"])
        for row in rows:
            writer.writerow([row["trip_id"], row["origin"], row["dest"], repr(row["release"])])

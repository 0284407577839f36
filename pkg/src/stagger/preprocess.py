"""Bound tightening and model reduction.

Three stages feed the MILP: arc-specific entry/exit windows per trip with
an initial lower bound on the objective, per-arc conflicting sets of trip
pairs, and a multigraph rewrite that confines congestion modeling to one
parallel arc per conflicting set.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import Arc, Instance, TIME_TOL, Trip, TravelTimeFunction
from .engine import construct_schedule


class InfeasibleWindows(Exception):
    """A trip's deadline cannot be met once unavoidable delays are counted."""

    def __init__(self, trips: list[int]):
        super().__init__(f"deadline infeasible for trips {trips}")
        self.trips = trips


@dataclass
class TimeWindows:
    """Per (trip, route position) entry/exit bounds.

    ``earliest_entry`` and ``latest_exit`` are stored; latest entries and
    earliest exits are derived through route continuity. ``min_delay`` is the
    unavoidable delay per position and sums to ``initial_lb``.
    """

    earliest_entry: list[list[float]]
    latest_exit: list[list[float]]
    min_delay: list[list[float]]
    initial_lb: float = 0.0
    passes_run: int = 1

    def latest_entry(self, inst: Instance, r: int, p: int) -> float:
        trip = inst.trips[r]
        if p == 0:
            return trip.release + trip.max_stagger
        return self.latest_exit[r][p - 1]

    def earliest_exit(self, inst: Instance, r: int, p: int) -> float:
        trip = inst.trips[r]
        if p == len(trip.route) - 1:
            return self.earliest_entry[r][p] + inst.arcs[trip.route[p]].nominal
        return self.earliest_entry[r][p + 1]

    def contains(self, inst: Instance, sched, tol: float = TIME_TOL) -> bool:
        """True when every realized entry/exit lies inside the windows."""
        for trip in inst.trips:
            r = trip.id
            for p in range(len(trip.route)):
                x = sched.entries[r][p]
                if x < self.earliest_entry[r][p] - tol:
                    return False
                if x > self.latest_entry(inst, r, p) + tol:
                    return False
                exit_t = sched.exit_time(r, p, inst)
                if exit_t < self.earliest_exit(inst, r, p) - tol:
                    return False
                if exit_t > self.latest_exit[r][p] + tol:
                    return False
        return True

    def dump(self, inst: Instance, path: str | Path):
        data = {
            "initial_lb": self.initial_lb,
            "passes": self.passes_run,
            "trips": [
                {
                    "trip": r,
                    "earliest_entry": self.earliest_entry[r],
                    "latest_exit": self.latest_exit[r],
                    "min_delay": self.min_delay[r],
                }
                for r in range(inst.n_trips)
            ],
        }
        Path(path).write_text(json.dumps(data, indent=2))


def _initialize(inst: Instance) -> TimeWindows:
    e_entry, l_exit, min_d = [], [], []
    for trip in inst.trips:
        n = len(trip.route)
        ee = [0.0] * n
        ee[0] = trip.release
        for p in range(n - 1):
            ee[p + 1] = ee[p] + inst.arcs[trip.route[p]].nominal
        lx = [0.0] * n
        lx[n - 1] = trip.deadline
        for p in range(n - 2, -1, -1):
            lx[p] = lx[p + 1] - inst.arcs[trip.route[p + 1]].nominal
        e_entry.append(ee)
        l_exit.append(lx)
        min_d.append([0.0] * n)
    return TimeWindows(earliest_entry=e_entry, latest_exit=l_exit, min_delay=min_d)


def _run_queue(inst: Instance, tw: TimeWindows, applied: list[list[float]]) -> bool:
    """One queue-driven tightening sweep. Returns True if anything moved."""
    ee, lx = tw.earliest_entry, tw.latest_exit
    heap = [
        (ee[t.id][p], t.id, p)
        for t in inst.trips
        for p in range(len(t.route))
    ]
    heapq.heapify(heap)
    changed = False
    while heap:
        key, r, p = heapq.heappop(heap)
        if key != ee[r][p]:  # stale entry, superseded by a re-insertion
            continue
        trip = inst.trips[r]
        arc_id = trip.route[p]
        arc = inst.arcs[arc_id]
        others = inst.trips_on_arc[arc_id]

        # minimum conflicts this trip cannot avoid on the arc
        min_flow = 0
        e_r = ee[r][p]
        le_r = tw.latest_entry(inst, r, p)
        for q in others:
            if q == r:
                continue
            pq = inst.route_pos[(q, arc_id)]
            if e_r > tw.latest_entry(inst, q, pq) and le_r < tw.earliest_exit(inst, q, pq):
                min_flow += 1
        rho = arc.ttf.delay(min_flow)
        tw.min_delay[r][p] = rho
        delta = rho - applied[r][p]
        if delta > 0:
            applied[r][p] = rho
            changed = True
            for p2 in range(len(trip.route)):
                if ee[r][p2] > e_r:
                    ee[r][p2] += delta
                    heapq.heappush(heap, (ee[r][p2], r, p2))

        # maximum conflicts bound tightens the latest exit
        max_flow = 0
        le_r = tw.latest_entry(inst, r, p)
        for q in others:
            if q == r:
                continue
            pq = inst.route_pos[(q, arc_id)]
            if ee[q][pq] <= le_r and e_r <= lx[q][pq]:
                max_flow += 1
        if max_flow > 0:
            cap = tw.latest_entry(inst, r, p) + arc.ttf.travel_time(max_flow)
            if cap < lx[r][p]:
                lx[r][p] = cap
                changed = True
    return changed


def compute_time_windows(inst: Instance, passes: int = 1, max_passes: int = 10) -> TimeWindows:
    """Arc-specific entry/exit windows plus the initial lower bound.

    ``passes=1`` runs a single queue sweep; ``passes=0`` iterates to a
    fixpoint capped at ``max_passes`` sweeps.
    """
    if passes < 0:
        raise ValueError("passes must be >= 0 (0 meaning iterate to fixpoint)")
    tw = _initialize(inst)
    applied = [[0.0] * len(t.route) for t in inst.trips]
    limit = max_passes if passes == 0 else passes
    ran = 0
    for _ in range(limit):
        moved = _run_queue(inst, tw, applied)
        ran += 1
        if passes == 0 and not moved:
            break
    tw.passes_run = ran
    tw.initial_lb = sum(sum(row) for row in tw.min_delay)

    bad = [
        t.id
        for t in inst.trips
        if any(
            tw.latest_exit[t.id][p]
            < tw.earliest_entry[t.id][p] + inst.arcs[t.route[p]].nominal - TIME_TOL
            for p in range(len(t.route))
        )
    ]
    if bad:
        raise InfeasibleWindows(bad)
    return tw


@dataclass
class ConflictingSet:
    """Trips that may mutually induce delay on one arc, as ordered pairs."""

    arc: int
    pairs: frozenset[tuple[int, int]]
    trips: frozenset[int]
    # per-trip tightened maximum conflict count (pairs where the trip is first)
    max_conflicts: dict[int, int] = field(default_factory=dict)


def _overlap_pairs(inst: Instance, tw: TimeWindows, arc_id: int) -> list[tuple[int, int]]:
    trips = inst.trips_on_arc[arc_id]
    pairs = []
    for r in trips:
        pr = inst.route_pos[(r, arc_id)]
        er, ler = tw.earliest_entry[r][pr], tw.latest_entry(inst, r, pr)
        for q in trips:
            if q == r:
                continue
            pq = inst.route_pos[(q, arc_id)]
            # entry window of r against the full presence window of q
            if tw.earliest_entry[q][pq] <= ler and er <= tw.latest_exit[q][pq]:
                pairs.append((r, q))
    return pairs


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def compute_conflicting_sets(inst: Instance, tw: TimeWindows) -> list[ConflictingSet]:
    """Partition each arc's overlapping trip pairs into connected groups and
    keep the groups whose tightened conflict counts can reach the first
    congestion threshold."""
    out = []
    for arc_id, arc in enumerate(inst.arcs):
        if len(inst.trips_on_arc[arc_id]) < 2 or not arc.ttf.pieces:
            continue
        pairs = _overlap_pairs(inst, tw, arc_id)
        if not pairs:
            continue
        uf = _UnionFind()
        for r, q in pairs:
            uf.union(r, q)
        groups: dict[int, list[tuple[int, int]]] = {}
        for pair in pairs:
            groups.setdefault(uf.find(pair[0]), []).append(pair)
        threshold = arc.ttf.pieces[0][1]
        for group_pairs in groups.values():
            first_counts: dict[int, int] = {}
            members = set()
            for r, q in group_pairs:
                first_counts[r] = first_counts.get(r, 0) + 1
                members.update((r, q))
            if max(first_counts.values()) >= threshold:
                out.append(
                    ConflictingSet(
                        arc=arc_id,
                        pairs=frozenset(group_pairs),
                        trips=frozenset(members),
                        max_conflicts={r: first_counts.get(r, 0) for r in members},
                    )
                )
    out.sort(key=lambda s: (s.arc, sorted(s.trips)))
    return out


@dataclass
class ReducedInstance:
    """Multigraph rewrite of an instance.

    Congestion can only arise on the conflicting arcs; any shift vector
    evaluates to the identical total delay as on the original instance.
    """

    base: Instance
    conflicting_arcs: frozenset[int]
    # reduced arc id -> original arc sequence it stands for
    arc_expansion: dict[int, tuple[int, ...]]
    # reduced trip id -> original trip id
    trip_origin: tuple[int, ...]
    # reduced conflicting arc id -> ordered trip pairs (reduced trip ids)
    conflicting_pairs: dict[int, tuple[tuple[int, int], ...]]

    def project_shifts(self, shifts) -> list[float]:
        return [float(shifts[orig]) for orig in self.trip_origin]

    def evaluate(self, shifts) -> float:
        """Total delay of an original-instance shift vector on the reduction."""
        if not self.trip_origin:
            return 0.0
        return construct_schedule(self.base, self.project_shifts(shifts)).total_delay


def build_reduced_instance(inst: Instance, sets: list[ConflictingSet]) -> ReducedInstance:
    n_orig = inst.n_arcs
    new_arcs: list[Arc] = list(inst.arcs)
    routes: dict[int, list[int]] = {t.id: list(t.route) for t in inst.trips}
    set_of_arc: dict[int, ConflictingSet] = {}

    # Step 1: one parallel conflicting arc per set, rerouting its members
    for cs in sets:
        parent = inst.arcs[cs.arc]
        new_id = len(new_arcs)
        new_arcs.append(
            Arc(
                id=new_id,
                tail=parent.tail,
                head=parent.head,
                ttf=parent.ttf,
                kind="conflicting",
                parent=parent.id,
            )
        )
        set_of_arc[new_id] = cs
        for r in cs.trips:
            pos = inst.route_pos[(r, cs.arc)]
            routes[r][pos] = new_id

    conflicting = {a for a in range(n_orig, len(new_arcs))}
    kept_trips = [r for r, route in routes.items() if any(a in conflicting for a in route)]

    # Step 2: merge maximal runs of non-conflicting arcs in surviving routes
    merged_cache: dict[tuple[int, ...], int] = {}

    def merged_arc(run: list[int]) -> int:
        key = tuple(run)
        if key in merged_cache:
            return merged_cache[key]
        if len(run) == 1:
            merged_cache[key] = run[0]
            return run[0]
        new_id = len(new_arcs)
        nominal = sum(new_arcs[a].nominal for a in run)
        new_arcs.append(
            Arc(
                id=new_id,
                tail=new_arcs[run[0]].tail,
                head=new_arcs[run[-1]].head,
                ttf=TravelTimeFunction(nominal=nominal, pieces=()),
                kind="merged",
                merged_from=key,
            )
        )
        merged_cache[key] = new_id
        return new_id

    reduced_routes: dict[int, list[int]] = {}
    for r in kept_trips:
        out_route: list[int] = []
        run: list[int] = []
        for a in routes[r]:
            if a in conflicting:
                if run:
                    out_route.append(merged_arc(run))
                    run = []
                out_route.append(a)
            else:
                run.append(a)
        if run:
            out_route.append(merged_arc(run))
        reduced_routes[r] = out_route

    used = sorted({a for route in reduced_routes.values() for a in route})
    arc_remap = {old: new for new, old in enumerate(used)}
    final_arcs = []
    expansion: dict[int, tuple[int, ...]] = {}
    for old in used:
        arc = new_arcs[old]
        new_id = arc_remap[old]
        final_arcs.append(
            Arc(
                id=new_id,
                tail=arc.tail,
                head=arc.head,
                ttf=arc.ttf,
                kind=arc.kind,
                parent=arc.parent,
                merged_from=arc.merged_from,
            )
        )
        if arc.kind == "merged":
            expansion[new_id] = arc.merged_from
        elif arc.kind == "conflicting":
            expansion[new_id] = (arc.parent,)
        else:
            expansion[new_id] = (arc.id,)

    kept_trips.sort()
    trip_remap = {orig: new for new, orig in enumerate(kept_trips)}
    final_trips = [
        Trip(
            id=trip_remap[r],
            route=tuple(arc_remap[a] for a in reduced_routes[r]),
            release=inst.trips[r].release,
            deadline=inst.trips[r].deadline,
            max_stagger=inst.trips[r].max_stagger,
        )
        for r in kept_trips
    ]

    pairs_out: dict[int, tuple[tuple[int, int], ...]] = {}
    for old_arc, cs in set_of_arc.items():
        if old_arc not in arc_remap:
            continue
        pairs_out[arc_remap[old_arc]] = tuple(
            sorted((trip_remap[a], trip_remap[b]) for a, b in cs.pairs)
        )

    base = Instance(arcs=final_arcs, trips=final_trips, epsilon=inst.epsilon)
    return ReducedInstance(
        base=base,
        conflicting_arcs=frozenset(
            arc_remap[a] for a in conflicting if a in arc_remap
        ),
        arc_expansion=expansion,
        trip_origin=tuple(kept_trips),
        conflicting_pairs=pairs_out,
    )


def preprocess(inst: Instance, passes: int = 1):
    """Convenience pipeline: windows, conflicting sets, reduction, and the
    windows of the reduced instance (what the MILP consumes)."""
    tw = compute_time_windows(inst, passes=passes)
    sets = compute_conflicting_sets(inst, tw)
    red = build_reduced_instance(inst, sets)
    red_tw = (
        compute_time_windows(red.base, passes=passes)
        if red.base.n_trips
        else TimeWindows([], [], [], initial_lb=0.0)
    )
    # the reduction drops no realizable delay, so the bound carries over
    red_tw.initial_lb = max(red_tw.initial_lb, tw.initial_lb)
    return tw, sets, red, red_tw

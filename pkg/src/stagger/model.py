"""Domain types, invariant checks, and instance (de)serialization.

All times are 64-bit floating point seconds. Equality comparisons use a
single tolerance ``TIME_TOL``; the model constant epsilon carried by each
instance is a separate, configurable quantity.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

TIME_TOL = 1e-9
DEFAULT_EPSILON = 0.01


class InstanceError(ValueError):
    """Raised when an instance file is malformed or violates an invariant."""


@dataclass(frozen=True)
class TravelTimeFunction:
    """Piecewise-linear, convex arc travel time: nominal plus congestion delay.

    ``pieces`` is an ordered sequence of (slope, threshold) pairs; both
    coordinates must be strictly increasing so the max-of-affine form stays
    convex and non-decreasing. An empty ``pieces`` means the arc never
    congests.
    """

    nominal: float
    pieces: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if not self.nominal > 0:
            raise InstanceError(f"nominal travel time must be positive, got {self.nominal}")
        prev_slope = prev_thr = 0.0
        for slope, threshold in self.pieces:
            if not slope > 0 or not threshold > 0:
                raise InstanceError(
                    f"slopes and thresholds must be positive, got ({slope}, {threshold})"
                )
            if slope <= prev_slope and prev_slope > 0:
                raise InstanceError("piece slopes must be strictly increasing")
            if threshold <= prev_thr and prev_thr > 0:
                raise InstanceError("piece thresholds must be strictly increasing")
            prev_slope, prev_thr = slope, threshold

    def delay(self, flow: float) -> float:
        """Congestion delay at the given vehicle count (zero in free flow)."""
        if flow < 0:
            raise ValueError(f"flow must be non-negative, got {flow}")
        worst = 0.0
        for slope, threshold in self.pieces:
            worst = max(worst, slope * (flow - threshold))
        return worst

    def travel_time(self, flow: float) -> float:
        return self.nominal + self.delay(flow)


ARC_KINDS = ("original", "conflicting", "merged")


@dataclass(frozen=True)
class Arc:
    id: int
    tail: int
    head: int
    ttf: TravelTimeFunction
    kind: str = "original"
    # original arc this one parallels (conflicting) or replaces (merged)
    parent: int | None = None
    merged_from: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ARC_KINDS:
            raise InstanceError(f"unknown arc kind {self.kind!r}")

    @property
    def nominal(self) -> float:
        return self.ttf.nominal


@dataclass(frozen=True)
class Trip:
    """A fixed-route trip: (route, release, deadline, staggering budget)."""

    id: int
    route: tuple[int, ...]
    release: float
    deadline: float
    max_stagger: float

    def __post_init__(self):
        if not self.route:
            raise InstanceError(f"trip {self.id}: route is empty")
        if self.max_stagger < 0:
            raise InstanceError(f"trip {self.id}: negative staggering budget")
        if len(set(self.route)) != len(self.route):
            raise InstanceError(f"trip {self.id}: route revisits an arc")


def travel_time(ttf: TravelTimeFunction, flow: float) -> float:
    """Total traversal time at the given concurrent vehicle count."""
    return ttf.travel_time(flow)


class Instance:
    """Immutable problem input: a road (multi)graph plus a trip set.

    Trips and arcs are indexed densely; external string ids, when present in
    the source file, are preserved in ``arc_labels`` / ``trip_labels``.
    """

    def __init__(
        self,
        arcs: Sequence[Arc],
        trips: Sequence[Trip],
        nodes: Sequence[int] | None = None,
        epsilon: float = DEFAULT_EPSILON,
        arc_labels: dict[int, str] | None = None,
        trip_labels: dict[int, str] | None = None,
    ):
        self.arcs = tuple(arcs)
        self.trips = tuple(trips)
        self.arc_labels = arc_labels or {}
        self.trip_labels = trip_labels or {}
        if nodes is None:
            nodes = sorted({a.tail for a in self.arcs} | {a.head for a in self.arcs})
        self.nodes = tuple(nodes)
        self.epsilon = float(epsilon)
        self._validate()
        self.trips_on_arc: tuple[tuple[int, ...], ...] = self._invert_routes()
        # position of each arc inside each trip's route, keyed (trip, arc)
        self.route_pos: dict[tuple[int, int], int] = {
            (t.id, a): p for t in self.trips for p, a in enumerate(t.route)
        }

    def _validate(self):
        for i, arc in enumerate(self.arcs):
            if arc.id != i:
                raise InstanceError(f"arc ids must be dense, arc at index {i} has id {arc.id}")
        node_set = set(self.nodes)
        for j, trip in enumerate(self.trips):
            if trip.id != j:
                raise InstanceError(f"trip ids must be dense, trip at index {j} has id {trip.id}")
            for a in trip.route:
                if not 0 <= a < len(self.arcs):
                    raise InstanceError(f"trip {trip.id}: unknown arc {a}")
            for prev, nxt in zip(trip.route, trip.route[1:]):
                if self.arcs[prev].head != self.arcs[nxt].tail:
                    raise InstanceError(
                        f"trip {trip.id}: route gap between arcs {prev} and {nxt} "
                        f"(head {self.arcs[prev].head} != tail {self.arcs[nxt].tail})"
                    )
            free_flow = sum(self.arcs[a].nominal for a in trip.route)
            if trip.release + free_flow > trip.deadline + TIME_TOL:
                raise InstanceError(
                    f"trip {trip.id}: deadline {trip.deadline} unreachable even in free "
                    f"flow (release {trip.release} + {free_flow})"
                )
            for a in trip.route:
                if self.arcs[a].tail not in node_set or self.arcs[a].head not in node_set:
                    raise InstanceError(f"trip {trip.id}: arc {a} touches unknown node")
        if not self.epsilon > 0:
            raise InstanceError("epsilon must be positive")
        min_nominal = min((a.nominal for a in self.arcs), default=math.inf)
        if self.epsilon >= min_nominal:
            raise InstanceError(
                f"epsilon {self.epsilon} must be smaller than the smallest nominal "
                f"travel time {min_nominal}"
            )

    def _invert_routes(self) -> tuple[tuple[int, ...], ...]:
        on_arc: list[list[int]] = [[] for _ in self.arcs]
        for trip in self.trips:
            for a in trip.route:
                on_arc[a].append(trip.id)
        return tuple(tuple(ts) for ts in on_arc)

    @property
    def n_trips(self) -> int:
        return len(self.trips)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def free_flow_time(self, trip: int) -> float:
        return sum(self.arcs[a].nominal for a in self.trips[trip].route)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "arcs": [
                {
                    "id": self.arc_labels.get(a.id, a.id),
                    "tail": a.tail,
                    "head": a.head,
                    "nominal": a.ttf.nominal,
                    "pieces": [{"slope": s, "threshold": t} for s, t in a.ttf.pieces],
                }
                for a in self.arcs
            ],
            "trips": [
                {
                    "id": self.trip_labels.get(t.id, t.id),
                    "route": [self.arc_labels.get(a, a) for a in t.route],
                    "release": t.release,
                    "deadline": t.deadline,
                    "maxStagger": t.max_stagger,
                }
                for t in self.trips
            ],
            "epsilon": self.epsilon,
        }

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


@dataclass
class Schedule:
    """A solution: per-trip arc entry times with the induced flows and delays.

    ``entries[r][p]`` is the entry time of trip ``r`` on the ``p``-th arc of
    its route; ``exits[r]`` is the final arrival. ``start_shift[r]`` is the
    staggering applied to the trip's departure.
    """

    entries: list[list[float]]
    delays: list[list[float]]
    flows: list[list[int]]
    start_shift: list[float]
    total_delay: float

    def entry(self, trip: int, pos: int) -> float:
        return self.entries[trip][pos]

    def exit_time(self, trip: int, pos: int, inst: Instance) -> float:
        a = inst.trips[trip].route[pos]
        return self.entries[trip][pos] + inst.arcs[a].nominal + self.delays[trip][pos]

    def arrival(self, trip: int, inst: Instance) -> float:
        return self.exit_time(trip, len(inst.trips[trip].route) - 1, inst)

    def copy(self) -> "Schedule":
        return Schedule(
            entries=[row[:] for row in self.entries],
            delays=[row[:] for row in self.delays],
            flows=[row[:] for row in self.flows],
            start_shift=self.start_shift[:],
            total_delay=self.total_delay,
        )

    def export_csv(self, path: str | Path, inst: Instance):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trip_id", "arc_id", "shift_s", "entry_s", "flow", "delay_s"])
            for trip in inst.trips:
                label = inst.trip_labels.get(trip.id, str(trip.id))
                for pos, arc in enumerate(trip.route):
                    writer.writerow(
                        [
                            label,
                            inst.arc_labels.get(arc, str(arc)),
                            repr(self.start_shift[trip.id]),
                            repr(self.entries[trip.id][pos]),
                            self.flows[trip.id][pos],
                            repr(self.delays[trip.id][pos]),
                        ]
                    )


@dataclass(frozen=True)
class Violation:
    kind: str  # release | budget | deadline | continuity | flow | delay | total
    trip: int
    pos: int | None
    detail: str


def validate_schedule(inst: Instance, sched: Schedule, tol: float = 1e-6) -> list[Violation]:
    """Check a schedule against the feasibility conditions and the flow model.

    Returns the list of violations; an empty list certifies feasibility.
    Violations are data, not errors.
    """
    out: list[Violation] = []
    for trip in inst.trips:
        r = trip.id
        start = sched.entries[r][0]
        shift = start - trip.release
        if start < trip.release - tol:
            out.append(Violation("release", r, 0, f"departure {start} before release {trip.release}"))
        if shift > trip.max_stagger + tol:
            out.append(
                Violation("budget", r, 0, f"shift {shift} exceeds budget {trip.max_stagger}")
            )
        arrival = sched.arrival(r, inst)
        if arrival > trip.deadline + tol:
            out.append(
                Violation("deadline", r, None, f"arrival {arrival} after deadline {trip.deadline}")
            )
        for pos in range(len(trip.route) - 1):
            expected = sched.exit_time(r, pos, inst)
            got = sched.entries[r][pos + 1]
            if abs(expected - got) > tol:
                out.append(
                    Violation(
                        "continuity", r, pos, f"entry {got} != previous exit {expected}"
                    )
                )
    # flow / delay consistency against the indicator semantics
    for arc_id, trip_ids in enumerate(inst.trips_on_arc):
        if not trip_ids:
            continue
        arc = inst.arcs[arc_id]
        spans = {}
        for r in trip_ids:
            pos = inst.route_pos[(r, arc_id)]
            x = sched.entries[r][pos]
            spans[r] = (x, x + arc.nominal + sched.delays[r][pos])
        for r in trip_ids:
            pos = inst.route_pos[(r, arc_id)]
            x = sched.entries[r][pos]
            f = sum(
                1
                for q in trip_ids
                if q != r and spans[q][0] <= x < spans[q][1]
            )
            if f != sched.flows[r][pos]:
                out.append(
                    Violation("flow", r, pos, f"stored flow {sched.flows[r][pos]} != indicator {f}")
                )
            d = arc.ttf.delay(f)
            if abs(d - sched.delays[r][pos]) > tol:
                out.append(
                    Violation("delay", r, pos, f"stored delay {sched.delays[r][pos]} != {d}")
                )
    total = sum(sum(row) for row in sched.delays)
    if abs(total - sched.total_delay) > tol:
        out.append(Violation("total", -1, None, f"total {sched.total_delay} != sum {total}"))
    return out


def _parse_ttf(raw: dict, where: str) -> TravelTimeFunction:
    try:
        pieces = tuple(
            (float(p["slope"]), float(p["threshold"])) for p in raw.get("pieces", [])
        )
        return TravelTimeFunction(nominal=float(raw["nominal"]), pieces=pieces)
    except KeyError as exc:
        raise InstanceError(f"{where}: missing field {exc}") from exc


def instance_from_dict(data: dict) -> Instance:
    """Build a validated Instance from the documented JSON schema."""
    try:
        raw_arcs = data["arcs"]
        raw_trips = data["trips"]
    except KeyError as exc:
        raise InstanceError(f"missing top-level field {exc}") from exc

    arc_index: dict[object, int] = {}
    arc_labels: dict[int, str] = {}
    arcs = []
    for i, raw in enumerate(raw_arcs):
        ext_id = raw.get("id", i)
        if ext_id in arc_index:
            raise InstanceError(f"duplicate arc id {ext_id!r}")
        arc_index[ext_id] = i
        if not isinstance(ext_id, int) or ext_id != i:
            arc_labels[i] = str(ext_id)
        arcs.append(
            Arc(
                id=i,
                tail=int(raw["tail"]),
                head=int(raw["head"]),
                ttf=_parse_ttf(raw, f"arc {ext_id!r}"),
            )
        )

    trip_labels: dict[int, str] = {}
    trips = []
    for j, raw in enumerate(raw_trips):
        ext_id = raw.get("id", j)
        if not isinstance(ext_id, int) or ext_id != j:
            trip_labels[j] = str(ext_id)
        try:
            route = tuple(arc_index[a] for a in raw["route"])
        except KeyError as exc:
            raise InstanceError(f"trip {ext_id!r}: unknown arc {exc} in route") from exc
        trips.append(
            Trip(
                id=j,
                route=route,
                release=float(raw["release"]),
                deadline=float(raw["deadline"]),
                max_stagger=float(raw.get("maxStagger", 0.0)),
            )
        )

    nodes = data.get("nodes")
    return Instance(
        arcs=arcs,
        trips=trips,
        nodes=nodes,
        epsilon=float(data.get("epsilon", DEFAULT_EPSILON)),
        arc_labels=arc_labels,
        trip_labels=trip_labels,
    )


def load_instance(path: str | Path, fmt: str = "json") -> Instance:
    """Load and validate an instance file.

    ``fmt="json"`` reads the full schema. ``fmt="csv-bundle"`` is handled by
    the network toolkit, which computes routes; here it only raises a
    directing error.
    """
    path = Path(path)
    if not path.exists():
        raise InstanceError(f"no such file: {path}")
    if fmt == "json":
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InstanceError(f"{path}: invalid JSON ({exc})") from exc
        return instance_from_dict(data)
    if fmt == "csv-bundle":
        raise InstanceError(
            "csv trip bundles carry no routes; build an instance with "
            "stagger.network.build_instance or the `build-instance` CLI command"
        )
    raise InstanceError(f"unknown format {fmt!r}")


def read_trips_csv(path: str | Path) -> list[dict]:
    """Read the trip bundle CSV: trip_id,origin_node,dest_node,release_s."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                {
                    "trip_id": row["trip_id"],
                    "origin": int(row["origin_node"]),
                    "dest": int(row["dest_node"]),
                    "release": float(row["release_s"]),
                }
            )
    return rows

"""Discrete-event schedule evaluation.

Departure shifts fully determine a schedule: trips depart at
``release + shift``, never idle, and each arc entry counts the vehicles
still traversing the arc at that instant. Events are processed in
ascending time order with ties broken by trip id; trips entering the same
arc at the identical timestamp count each other.
"""

from __future__ import annotations

import heapq
from bisect import bisect_right, insort
from dataclasses import dataclass

from .model import Instance, Schedule, TIME_TOL


class StaggerError(ValueError):
    """Raised when a shift vector violates a staggering budget."""


def check_shifts(inst: Instance, shifts: list[float] | tuple[float, ...]):
    if len(shifts) != inst.n_trips:
        raise StaggerError(f"expected {inst.n_trips} shifts, got {len(shifts)}")
    for trip in inst.trips:
        s = shifts[trip.id]
        if s < -TIME_TOL or s > trip.max_stagger + TIME_TOL:
            raise StaggerError(
                f"trip {trip.id}: shift {s} outside [0, {trip.max_stagger}]"
            )


def construct_schedule(inst: Instance, shifts: list[float] | tuple[float, ...]) -> Schedule:
    """Evaluate a shift vector into the unique no-idling schedule.

    With all-zero shifts this is the uncontrolled solution.
    """
    check_shifts(inst, shifts)
    entries = [[0.0] * len(t.route) for t in inst.trips]
    delays = [[0.0] * len(t.route) for t in inst.trips]
    flows = [[0] * len(t.route) for t in inst.trips]
    # per-arc sorted arrival (traversal completion) times
    arrivals: list[list[float]] = [[] for _ in inst.arcs]

    heap: list[tuple[float, int, int]] = []
    for trip in inst.trips:
        start = trip.release + shifts[trip.id]
        entries[trip.id][0] = start
        heapq.heappush(heap, (start, trip.id, 0))

    while heap:
        t = heap[0][0]
        # pop every event at this timestamp, then batch per arc so that
        # simultaneous entries count each other
        batch: list[tuple[int, int]] = []
        while heap and heap[0][0] == t:
            _, r, pos = heapq.heappop(heap)
            batch.append((r, pos))
        by_arc: dict[int, list[tuple[int, int]]] = {}
        for r, pos in batch:
            by_arc.setdefault(inst.trips[r].route[pos], []).append((r, pos))
        for arc_id, members in by_arc.items():
            arc = inst.arcs[arc_id]
            slot = arrivals[arc_id]
            pending = len(slot) - bisect_right(slot, t)
            extra = len(members) - 1
            for r, pos in members:
                f = pending + extra
                d = arc.ttf.delay(f)
                flows[r][pos] = f
                delays[r][pos] = d
            for r, pos in members:
                done = t + arc.nominal + delays[r][pos]
                insort(slot, done)
                if pos + 1 < len(inst.trips[r].route):
                    entries[r][pos + 1] = done
                    heapq.heappush(heap, (done, r, pos + 1))

    total = sum(sum(row) for row in delays)
    return Schedule(
        entries=entries,
        delays=delays,
        flows=flows,
        start_shift=[float(s) for s in shifts],
        total_delay=total,
    )


def uncontrolled_schedule(inst: Instance) -> Schedule:
    return construct_schedule(inst, [0.0] * inst.n_trips)


def total_delay(sched: Schedule) -> float:
    """Sum of all per-arc delays; equals the value stored in the schedule."""
    return sum(sum(row) for row in sched.delays)


@dataclass(frozen=True)
class Conflict:
    """Ordered conflict: ``second`` enters ``arc`` while ``first`` occupies it
    and incurs a positive delay there."""

    first: int
    second: int
    arc: int
    delay: float


def find_conflicts(inst: Instance, sched: Schedule) -> list[Conflict]:
    """All realized conflicts, sorted by induced delay (descending).

    Ties are broken by (arc id, trip ids) so the ordering is total.
    """
    out: list[Conflict] = []
    for arc_id, trip_ids in enumerate(inst.trips_on_arc):
        if len(trip_ids) < 2:
            continue
        arc = inst.arcs[arc_id]
        spans = {}
        for r in trip_ids:
            pos = inst.route_pos[(r, arc_id)]
            x = sched.entries[r][pos]
            spans[r] = (x, x + arc.nominal + sched.delays[r][pos], sched.delays[r][pos])
        for r2 in trip_ids:
            x2 = spans[r2][0]
            d2 = spans[r2][2]
            if d2 <= 0:
                continue
            for r1 in trip_ids:
                if r1 == r2:
                    continue
                if spans[r1][0] <= x2 < spans[r1][1]:
                    out.append(Conflict(first=r1, second=r2, arc=arc_id, delay=d2))
    out.sort(key=lambda c: (-c.delay, c.arc, c.first, c.second))
    return out

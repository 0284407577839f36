"""Rolling-horizon scheduling over fixed-length release epochs.

Trips are batched by release time into half-open epochs [(n-1)*delta,
n*delta). Each epoch is solved with the offline matheuristic; departures
decided in earlier epochs are frozen. Trips still traversing the network
at the epoch boundary are carried into the next epoch with a zero stagger
budget, and single-arc placeholder trips keep the congestion those
carried trips experienced from already-completed traffic visible to the
next epoch's model.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from .engine import construct_schedule
from .heuristic import MatheuristicConfig, run_matheuristic
from .model import Instance, Schedule, Trip

DEFAULT_DELTA = 360.0


@dataclass
class EpochLog:
    epoch: int
    trips: int
    transfer: int
    dummy: int
    ub: float
    lb: float
    elapsed: float


@dataclass
class EpochPlan:
    delta: float
    members: list[list[int]]  # original trip ids per epoch, release order

    @property
    def n_epochs(self) -> int:
        return len(self.members)


def plan_epochs(inst: Instance, delta: float) -> EpochPlan:
    if delta <= 0:
        raise ValueError("epoch length must be positive")
    if math.isinf(delta) or inst.n_trips == 0:
        return EpochPlan(delta, [[t.id for t in inst.trips]] if inst.n_trips else [])
    last = max(t.release for t in inst.trips)
    n_epochs = int(last // delta) + 1
    members: list[list[int]] = [[] for _ in range(n_epochs)]
    for trip in inst.trips:
        members[int(trip.release // delta)].append(trip.id)
    return EpochPlan(delta, members)


@dataclass
class OnlineResult:
    schedule: Schedule  # stitched, on the full instance
    shifts: list[float]
    logs: list[EpochLog] = field(default_factory=list)
    statuses: list[str] = field(default_factory=list)


@dataclass
class _Carried:
    orig_id: int
    start: float


def run_online(
    inst: Instance,
    delta: float = DEFAULT_DELTA,
    config: MatheuristicConfig | None = None,
    epoch_time_limit: float | None = None,
) -> OnlineResult:
    """Solve epoch by epoch and stitch the decided departures together.

    With an infinite epoch length there is a single epoch and the result
    matches the offline matheuristic under the same configuration.
    """
    template = config or MatheuristicConfig()
    plan = plan_epochs(inst, delta)
    shifts = [0.0] * inst.n_trips
    logs: list[EpochLog] = []
    statuses: list[str] = []
    carry: list[_Carried] = []
    dummies: list[Trip] = []

    for n, member_ids in enumerate(plan.members, start=1):
        t0 = time.monotonic()
        boundary = n * delta
        epoch_trips: list[Trip] = []
        meta: list[int | None] = []  # original trip id, None for placeholders
        frozen: set[int] = set()  # epoch-local ids with fixed departures

        for carried in carry:
            orig = inst.trips[carried.orig_id]
            eid = len(epoch_trips)
            epoch_trips.append(
                Trip(
                    id=eid,
                    route=orig.route,
                    release=carried.start,
                    deadline=orig.deadline,
                    max_stagger=0.0,
                )
            )
            meta.append(carried.orig_id)
            frozen.add(eid)
        for dummy in dummies:
            eid = len(epoch_trips)
            epoch_trips.append(
                Trip(
                    id=eid,
                    route=dummy.route,
                    release=dummy.release,
                    deadline=dummy.deadline,
                    max_stagger=0.0,
                )
            )
            meta.append(None)
            frozen.add(eid)
        for orig_id in member_ids:
            orig = inst.trips[orig_id]
            eid = len(epoch_trips)
            epoch_trips.append(
                Trip(
                    id=eid,
                    route=orig.route,
                    release=orig.release,
                    deadline=orig.deadline,
                    max_stagger=orig.max_stagger,
                )
            )
            meta.append(orig_id)

        if not epoch_trips:
            carry, dummies = [], []
            continue

        sub = Instance(arcs=inst.arcs, trips=epoch_trips, epsilon=inst.epsilon)
        limit = epoch_time_limit
        if limit is None:
            limit = delta if math.isfinite(delta) else template.time_limit
        cfg = MatheuristicConfig(
            time_limit=limit,
            milp_slice=template.milp_slice,
            passes=template.passes,
            adapter=template.adapter,
            pop_cap=template.pop_cap,
        )
        result = run_matheuristic(sub, cfg)
        statuses.append(result.status)

        for eid, orig_id in enumerate(meta):
            if orig_id is not None and eid not in frozen:
                shifts[orig_id] = result.shifts[eid]

        sched = result.schedule
        carry, dummies = [], []
        if n < plan.n_epochs:
            transfer: set[int] = set()
            for eid, orig_id in enumerate(meta):
                if orig_id is None:
                    continue
                if sched.arrival(eid, sub) > boundary:
                    transfer.add(eid)
                    carry.append(
                        _Carried(orig_id=orig_id, start=sched.entries[eid][0])
                    )
            seen: set[tuple[int, float, float]] = set()
            for eid in transfer:
                for pos, arc_id in enumerate(sub.trips[eid].route):
                    arc = sub.arcs[arc_id]
                    x = sched.entries[eid][pos]
                    out = x + arc.nominal + sched.delays[eid][pos]
                    for other in sub.trips_on_arc[arc_id]:
                        if other == eid or other in transfer:
                            continue
                        p2 = sub.route_pos[(other, arc_id)]
                        x2 = sched.entries[other][p2]
                        out2 = x2 + arc.nominal + sched.delays[other][p2]
                        if x < out2 and x2 < out:  # occupancy intervals overlap
                            key = (arc_id, x2, out2)
                            if key in seen:
                                continue
                            seen.add(key)
                            dummies.append(
                                Trip(
                                    id=0,
                                    route=(arc_id,),
                                    release=x2,
                                    deadline=out2,
                                    max_stagger=0.0,
                                )
                            )

        logs.append(
            EpochLog(
                epoch=n,
                trips=len(member_ids),
                transfer=len(carry),
                dummy=len(dummies),
                ub=result.upper_bound,
                lb=result.lower_bound,
                elapsed=time.monotonic() - t0,
            )
        )

    final = construct_schedule(inst, shifts)
    return OnlineResult(schedule=final, shifts=shifts, logs=logs, statuses=statuses)


def write_epoch_log(logs: list[EpochLog], path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "trips", "transfer", "dummy", "ub_s", "lb_s", "elapsed_s"])
        for row in logs:
            writer.writerow(
                [row.epoch, row.trips, row.transfer, row.dummy, repr(row.ub), repr(row.lb), f"{row.elapsed:.3f}"]
            )

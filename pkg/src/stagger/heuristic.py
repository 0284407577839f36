"""Greedy conflict-resolution local search and the surrounding
MILP/local-search alternation.

The local search pops conflicts in decreasing order of induced delay,
staggers the involved departures just enough to separate them, and
propagates the entry-time changes incrementally; the propagation's fixed
point is field-for-field identical to re-simulating the shift vector from
scratch, which the tests pin.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

from .engine import Conflict, construct_schedule, find_conflicts
from .model import Instance, Schedule, TIME_TOL, validate_schedule
from .preprocess import preprocess
from .milp import build_model, solve
from .solver import SolverAdapter, SolverError

log = logging.getLogger(__name__)

IMPROVE_TOL = 1e-9
POP_CAP = 1_000_000


@dataclass(frozen=True)
class ConflictWorkItem:
    """A conflict with the shift arithmetic needed to resolve it."""

    first: int  # occupies the arc (entered no later)
    second: int  # enters while first is traversing, incurs the delay
    arc: int
    overlap: float
    feasible_backward: float  # slack to pull the first trip's start back
    feasible_forward: float  # budget to push the second trip's start forward


def analyze_conflict(inst: Instance, sched: Schedule, conflict: Conflict) -> ConflictWorkItem:
    r, r2, arc_id = conflict.first, conflict.second, conflict.arc
    arc = inst.arcs[arc_id]
    pr = inst.route_pos[(r, arc_id)]
    p2 = inst.route_pos[(r2, arc_id)]
    overlap = (
        sched.entries[r][pr]
        + arc.nominal
        + sched.delays[r][pr]
        - sched.entries[r2][p2]
        + inst.epsilon
    )
    start_r = sched.entries[r][0]
    backward = min(start_r - inst.trips[r].release, overlap)
    forward = min(
        inst.trips[r2].max_stagger - (sched.entries[r2][0] - inst.trips[r2].release),
        overlap,
    )
    return ConflictWorkItem(
        first=r,
        second=r2,
        arc=arc_id,
        overlap=overlap,
        feasible_backward=max(backward, 0.0),
        feasible_forward=max(forward, 0.0),
    )


class _Propagator:
    """Incremental re-evaluation of a schedule after departure changes.

    ``spans[r][p]`` is the occupancy interval other trips currently see;
    it lags the live entry arrays until the position is reprocessed, which
    is what lets indicator toggles be detected against the old interval.
    """

    def __init__(self, inst: Instance, sched: Schedule):
        self.inst = inst
        self.entries = [row[:] for row in sched.entries]
        self.delays = [row[:] for row in sched.delays]
        self.flows = [row[:] for row in sched.flows]
        self.shifts = sched.start_shift[:]
        self.spans: list[list[tuple[float, float]]] = []
        for trip in inst.trips:
            r = trip.id
            row = []
            for p, arc_id in enumerate(trip.route):
                x = self.entries[r][p]
                row.append((x, x + inst.arcs[arc_id].nominal + self.delays[r][p]))
            self.spans.append(row)

    def set_start(self, r: int, shift: float):
        self.shifts[r] = shift
        self.entries[r][0] = self.inst.trips[r].release + shift

    def run(self, seeds: list[int], cap: int = POP_CAP) -> bool:
        """Propagate from the seed trips' first arcs; False if the cap hit."""
        inst = self.inst
        heap: list[tuple[float, int, int]] = []
        for r in seeds:
            heapq.heappush(heap, (self.entries[r][0], r, 0))
        pops = 0
        while heap:
            pops += 1
            if pops > cap:
                return False
            t, r, p = heapq.heappop(heap)
            if t != self.entries[r][p]:
                continue  # superseded by a later re-insertion
            route = inst.trips[r].route
            for q in range(p, len(route)):
                arc_id = route[q]
                arc = inst.arcs[arc_id]
                x = self.entries[r][q]
                old_span = self.spans[r][q]
                flow = 0
                for r2 in inst.trips_on_arc[arc_id]:
                    if r2 == r:
                        continue
                    p2 = inst.route_pos[(r2, arc_id)]
                    span2 = self.spans[r2][p2]
                    if span2[0] <= x < span2[1]:
                        flow += 1
                delay = arc.ttf.delay(flow)
                new_span = (x, x + arc.nominal + delay)
                self.flows[r][q] = flow
                self.delays[r][q] = delay
                self.spans[r][q] = new_span

                invalidated = False
                if old_span != new_span:
                    for r2 in inst.trips_on_arc[arc_id]:
                        if r2 == r:
                            continue
                        p2 = inst.route_pos[(r2, arc_id)]
                        x2 = self.spans[r2][p2][0]
                        before = old_span[0] <= x2 < old_span[1]
                        after = new_span[0] <= x2 < new_span[1]
                        if before != after:
                            heapq.heappush(heap, (self.entries[r2][p2], r2, p2))
                            if x2 < x:
                                invalidated = True
                if invalidated:
                    # an earlier trip will be revisited; redo this position after
                    heapq.heappush(heap, (x, r, q))
                    break
                if q + 1 < len(route):
                    if new_span[1] == self.entries[r][q + 1] and old_span == new_span:
                        break  # downstream already consistent
                    self.entries[r][q + 1] = new_span[1]
        return True

    def to_schedule(self) -> Schedule:
        total = sum(sum(row) for row in self.delays)
        return Schedule(
            entries=[row[:] for row in self.entries],
            delays=[row[:] for row in self.delays],
            flows=[row[:] for row in self.flows],
            start_shift=self.shifts[:],
            total_delay=total,
        )


def resolve_conflict(inst: Instance, sched: Schedule, item: ConflictWorkItem) -> Schedule:
    """Stagger the conflicting pair apart and propagate the cascade.

    Requires the combined feasible shifts to cover the overlap. The result
    equals a from-scratch evaluation of the adjusted shift vector.
    """
    if item.feasible_forward + item.feasible_backward < item.overlap - TIME_TOL:
        raise ValueError("conflict is not resolvable within the time windows")
    prop = _Propagator(inst, sched)
    seeds = []
    if item.feasible_forward >= item.overlap:
        prop.set_start(item.second, prop.shifts[item.second] + item.overlap)
        seeds.append(item.second)
    else:
        prop.set_start(item.second, prop.shifts[item.second] + item.feasible_forward)
        back = item.overlap - item.feasible_forward
        prop.set_start(item.first, prop.shifts[item.first] - back)
        seeds.extend([item.second, item.first])
    if prop.run(seeds):
        return prop.to_schedule()
    log.warning("propagation cap hit; rebuilding the schedule from scratch")
    return construct_schedule(inst, prop.shifts)


def local_search(
    inst: Instance,
    sched: Schedule,
    pop_cap: int = POP_CAP,
    on_accept=None,
) -> Schedule:
    """Algorithmic core: pop conflicts by severity, resolve when the shift
    budget covers the overlap, keep strict improvements only.

    ``on_accept`` is called with each accepted intermediate schedule.
    """
    queue = find_conflicts(inst, sched)
    idx = 0
    pops = 0
    while idx < len(queue):
        pops += 1
        if pops > pop_cap:
            log.warning("local search pop cap reached")
            break
        conflict = queue[idx]
        idx += 1
        item = analyze_conflict(inst, sched, conflict)
        if item.overlap <= 0:
            continue
        if item.feasible_forward + item.feasible_backward < item.overlap - TIME_TOL:
            continue
        candidate = resolve_conflict(inst, sched, item)
        if candidate.total_delay < sched.total_delay - IMPROVE_TOL and not validate_schedule(
            inst, candidate
        ):
            sched = candidate
            if on_accept is not None:
                on_accept(sched)
            queue = find_conflicts(inst, sched)
            idx = 0
    return sched


@dataclass
class MatheuristicConfig:
    time_limit: float = 60.0
    milp_slice: float = 30.0
    passes: int = 1
    adapter: SolverAdapter | None = None
    pop_cap: int = POP_CAP


@dataclass
class LogRow:
    iteration: int
    phase: str
    ub: float
    lb: float
    elapsed: float


@dataclass
class MatheuristicResult:
    schedule: Schedule  # on the original instance
    upper_bound: float
    lower_bound: float
    status: str  # optimal | feasible | local-search-only | degraded
    rows: list[LogRow] = field(default_factory=list)
    shifts: list[float] = field(default_factory=list)


def run_matheuristic(inst: Instance, config: MatheuristicConfig | None = None) -> MatheuristicResult:
    """Construction, local search, and MILP alternation on the reduced model.

    Without a solver adapter the result degrades to construction plus local
    search; adapter failures downgrade the status instead of aborting.
    """
    config = config or MatheuristicConfig()
    t0 = time.monotonic()
    rows: list[LogRow] = []

    tw, sets, red, red_tw = preprocess(inst, passes=config.passes)
    lb = red_tw.initial_lb
    rinst = red.base

    if rinst.n_trips == 0:
        shifts = [0.0] * inst.n_trips
        sched = construct_schedule(inst, shifts)
        rows.append(LogRow(0, "construct", sched.total_delay, lb, time.monotonic() - t0))
        return MatheuristicResult(sched, sched.total_delay, lb, "optimal", rows, shifts)

    current = construct_schedule(rinst, [0.0] * rinst.n_trips)
    rows.append(LogRow(0, "construct", current.total_delay, lb, time.monotonic() - t0))
    current = local_search(rinst, current, pop_cap=config.pop_cap)
    rows.append(LogRow(0, "local-search", current.total_delay, lb, time.monotonic() - t0))

    status = "local-search-only" if config.adapter is None else "feasible"
    iteration = 0
    if config.adapter is not None and current.total_delay > lb + IMPROVE_TOL:
        model = build_model(red, red_tw)
        while time.monotonic() - t0 <= config.time_limit:
            iteration += 1
            remaining = config.time_limit - (time.monotonic() - t0)
            if remaining <= 0:
                break
            budget = min(config.milp_slice, remaining)
            try:
                outcome = solve(
                    model,
                    config.adapter,
                    time_limit=budget,
                    warm=current,
                    initial_lb=lb,
                )
            except SolverError as exc:
                log.warning("solver adapter failed (%s); continuing with local search", exc)
                status = "degraded"
                break
            lb = max(lb, outcome.lower_bound)
            if outcome.incumbent is not None and (
                outcome.incumbent.total_delay < current.total_delay - IMPROVE_TOL
            ):
                current = outcome.incumbent
            rows.append(
                LogRow(iteration, "milp", current.total_delay, lb, time.monotonic() - t0)
            )
            if current.total_delay <= lb + IMPROVE_TOL:
                status = "optimal"
                break
            improved = local_search(rinst, current, pop_cap=config.pop_cap)
            if improved.total_delay < current.total_delay - IMPROVE_TOL:
                current = improved
            rows.append(
                LogRow(iteration, "local-search", current.total_delay, lb, time.monotonic() - t0)
            )
            if current.total_delay <= lb + IMPROVE_TOL:
                status = "optimal"
                break
            if outcome.status == "optimal":
                # the MILP cannot produce a better incumbent than its optimum
                break
    elif current.total_delay <= lb + IMPROVE_TOL:
        status = "optimal"

    shifts = [0.0] * inst.n_trips
    for red_id, orig_id in enumerate(red.trip_origin):
        shifts[orig_id] = current.start_shift[red_id]
    final = construct_schedule(inst, shifts)
    rows.append(LogRow(iteration, "final", final.total_delay, lb, time.monotonic() - t0))
    if final.total_delay <= lb + IMPROVE_TOL and status in ("feasible", "local-search-only"):
        status = "optimal" if config.adapter is not None else status
    return MatheuristicResult(final, final.total_delay, lb, status, rows, shifts)


def write_iteration_log(rows: list[LogRow], path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "phase", "ub_s", "lb_s", "elapsed_s"])
        for row in rows:
            writer.writerow([row.iteration, row.phase, repr(row.ub), repr(row.lb), f"{row.elapsed:.3f}"])

"""Shared oracles for the test suite.

The oracles are deliberately independent re-implementations: flows are
recomputed from the pairwise entry-interval indicator without any event
queue, and optima are found by brute force over staggering grids using
nothing but the schedule evaluator.
"""

from __future__ import annotations

import itertools

from stagger.engine import construct_schedule
from stagger.model import Instance, Schedule


def pairwise_flows(inst: Instance, sched: Schedule) -> list[list[int]]:
    """O(n^2) indicator evaluation at the fixed-point entry times.

    A trip's flow on an arc counts every other trip whose occupancy
    interval [entry, entry + nominal + delay) contains its entry instant.
    """
    flows = [[0] * len(t.route) for t in inst.trips]
    for arc_id, trip_ids in enumerate(inst.trips_on_arc):
        arc = inst.arcs[arc_id]
        spans = {}
        for r in trip_ids:
            p = inst.route_pos[(r, arc_id)]
            x = sched.entries[r][p]
            spans[r] = (x, x + arc.nominal + sched.delays[r][p])
        for r in trip_ids:
            p = inst.route_pos[(r, arc_id)]
            x = sched.entries[r][p]
            flows[r][p] = sum(
                1 for q in trip_ids if q != r and spans[q][0] <= x < spans[q][1]
            )
    return flows


def grid_optimum(inst: Instance, step: float) -> tuple[float, tuple[float, ...]]:
    """Exhaustive minimum total delay over the staggering grid."""
    axes = []
    for trip in inst.trips:
        steps = int(trip.max_stagger / step + 1e-9)
        axes.append([step * k for k in range(steps + 1)])
    best = float("inf")
    best_shifts: tuple[float, ...] = ()
    for shifts in itertools.product(*axes):
        total = construct_schedule(inst, list(shifts)).total_delay
        if total < best:
            best, best_shifts = total, shifts
    return best, best_shifts


def schedules_equal(a: Schedule, b: Schedule) -> bool:
    return (
        a.entries == b.entries
        and a.delays == b.delays
        and a.flows == b.flows
        and a.start_shift == b.start_shift
        and a.total_delay == b.total_delay
    )

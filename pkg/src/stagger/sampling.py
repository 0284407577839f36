"""Seeded random instances on a quarter-second time grid.

Every time quantity (nominal times, releases, stagger budgets, slopes) is
a multiple of 0.25, which doubles represent exactly. Entry-time gaps in
any grid schedule are therefore either exactly zero or at least 0.25,
comfortably clear of the default separation constant of 0.01; exact tie
handling and big-M feasibility checks stay free of rounding artefacts.

Deadlines are generated loose enough that every shift vector within the
stagger budgets stays feasible, so samplers over the shift grid never
have to reject.
"""

from __future__ import annotations

import random

from .model import Instance, Trip, Arc, TravelTimeFunction

GRID = 0.25
DEADLINE_SLACK = 4.0


def _grid(rng: random.Random, lo_steps: int, hi_steps: int) -> float:
    return GRID * rng.randint(lo_steps, hi_steps)


def random_instance(
    seed: int,
    n_trips: int = 4,
    n_arcs: int = 5,
    max_stagger_steps: int = 8,
    release_window_steps: int = 8,
    congested: bool = False,
) -> Instance:
    """A chain network with trips on overlapping contiguous sub-routes.

    With ``congested`` every trip runs the whole chain and releases are
    drawn from a tight window, which makes conflicts near-certain.
    """
    rng = random.Random(seed)
    arcs = []
    for a in range(n_arcs):
        nominal = _grid(rng, 2, 12)
        th1 = rng.randint(1, 2)
        slope1 = _grid(rng, 1, 4)
        pieces = [(slope1, float(th1))]
        if rng.random() < 0.5:
            pieces.append((slope1 + _grid(rng, 1, 4), float(th1 + rng.randint(1, 2))))
        arcs.append(
            Arc(id=a, tail=a, head=a + 1, ttf=TravelTimeFunction(nominal, tuple(pieces)))
        )

    routes = []
    for _ in range(n_trips):
        if congested or n_arcs == 1:
            start, length = 0, n_arcs
        else:
            start = rng.randint(0, n_arcs - 1)
            length = rng.randint(1, n_arcs - start)
        routes.append(tuple(range(start, start + length)))

    on_arc = [0] * n_arcs
    for route in routes:
        for a in route:
            on_arc[a] += 1

    trips = []
    for r, route in enumerate(routes):
        window = 2 if congested else release_window_steps
        release = _grid(rng, 0, window)
        stagger = _grid(rng, 0, max_stagger_steps)
        worst = sum(
            arcs[a].nominal + arcs[a].ttf.delay(max(on_arc[a] - 1, 0)) for a in route
        )
        deadline = release + stagger + worst + DEADLINE_SLACK
        trips.append(
            Trip(id=r, route=route, release=release, deadline=deadline, max_stagger=stagger)
        )
    return Instance(arcs=arcs, trips=trips, epsilon=0.01)


def random_shifts(inst: Instance, seed: int) -> list[float]:
    """A shift vector on the grid, within each trip's stagger budget."""
    rng = random.Random(seed)
    shifts = []
    for trip in inst.trips:
        steps = int(trip.max_stagger / GRID)
        shifts.append(GRID * rng.randint(0, steps))
    return shifts


def shift_grid(inst: Instance, step: float = GRID):
    """All grid shift vectors within the budgets, lazily."""
    import itertools

    axes = []
    for trip in inst.trips:
        steps = int(trip.max_stagger / step)
        axes.append([step * k for k in range(steps + 1)])
    return itertools.product(*axes)

"""Summary statistics for a solved scheduling run."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .engine import construct_schedule
from .model import Instance, Schedule


@dataclass
class RunReport:
    n_trips: int
    n_arcs: int
    uncontrolled_delay: float
    upper_bound: float
    lower_bound: float
    optimality_gap: float  # (ub - lb) / ub, zero when ub is zero
    delay_reduction: float  # (unc - ub) / unc, zero when unc is zero
    per_arc_delay: dict[int, float] = field(default_factory=dict)
    per_arc_congested: dict[int, int] = field(default_factory=dict)
    shift_stats: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json() + "\n")


def _guarded_ratio(num: float, den: float) -> float:
    return num / den if den > 1e-12 else 0.0


def build_report(
    inst: Instance,
    sched: Schedule,
    lower_bound: float,
    uncontrolled: Schedule | None = None,
) -> RunReport:
    if uncontrolled is None:
        uncontrolled = construct_schedule(inst, [0.0] * inst.n_trips)
    unc = uncontrolled.total_delay
    ub = sched.total_delay
    per_arc_delay: dict[int, float] = {}
    per_arc_congested: dict[int, int] = {}
    for trip in inst.trips:
        for pos, arc in enumerate(trip.route):
            d = sched.delays[trip.id][pos]
            if d > 0:
                per_arc_delay[arc] = per_arc_delay.get(arc, 0.0) + d
                per_arc_congested[arc] = per_arc_congested.get(arc, 0) + 1
    shifts = sched.start_shift
    nonzero = [s for s in shifts if s > 1e-12]
    stats = {
        "min": min(shifts) if shifts else 0.0,
        "max": max(shifts) if shifts else 0.0,
        "mean": sum(shifts) / len(shifts) if shifts else 0.0,
        "nonzero": float(len(nonzero)),
    }
    return RunReport(
        n_trips=inst.n_trips,
        n_arcs=inst.n_arcs,
        uncontrolled_delay=unc,
        upper_bound=ub,
        lower_bound=lower_bound,
        optimality_gap=_guarded_ratio(ub - lower_bound, ub),
        delay_reduction=_guarded_ratio(unc - ub, unc),
        per_arc_delay=per_arc_delay,
        per_arc_congested=per_arc_congested,
        shift_stats=stats,
    )

"""MILP construction over the reduced instance, warmstart encoding, and
solution decoding.

Binary activation rows are emitted only for conflicting arcs and their
overlap pairs; each big-M constant is the tightest value the time windows
allow, and pairs whose ordering the windows already decide get their
binaries fixed instead of rows.
"""

from __future__ import annotations

import logging
import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .engine import construct_schedule
from .lpfile import LinearModel, write_lp
from .model import Schedule, validate_schedule
from .preprocess import ReducedInstance, TimeWindows
from .solver import SolverAdapter, SolverError

log = logging.getLogger(__name__)


class WindowConflict(Exception):
    """Both orderings of a pair are excluded by the windows."""

    def __init__(self, pairs):
        super().__init__(f"inconsistent windows for pairs {pairs}")
        self.pairs = pairs


@dataclass
class BigM:
    m1: float
    m2: float
    m3: float
    m4: float


@dataclass
class MilpModel:
    lp: LinearModel
    red: ReducedInstance
    tw: TimeWindows
    epsilon: float
    x_name: dict[tuple[int, int], str] = field(default_factory=dict)  # (trip, pos)
    d_name: dict[tuple[int, int], str] = field(default_factory=dict)
    f_name: dict[tuple[int, int], str] = field(default_factory=dict)
    alpha: dict[tuple[int, int, int], str] = field(default_factory=dict)  # (arc, r, r2)
    beta: dict[tuple[int, int, int], str] = field(default_factory=dict)
    gamma: dict[tuple[int, int, int], str] = field(default_factory=dict)
    big_m: dict[tuple[int, int, int], BigM] = field(default_factory=dict)
    fixed_binaries: dict[str, int] = field(default_factory=dict)
    # piece selectors pinning d to the active delay piece, index 0 = free flow
    piece_select: dict[tuple[int, int], list[str]] = field(default_factory=dict)

    @property
    def n_binaries(self) -> int:
        return (
            len(self.alpha)
            + len(self.beta)
            + len(self.gamma)
            + sum(len(v) for v in self.piece_select.values())
        )


def build_model(red: ReducedInstance, tw: TimeWindows) -> MilpModel:
    inst = red.base
    lp = LinearModel(name="staggered-departures")
    model = MilpModel(lp=lp, red=red, tw=tw, epsilon=inst.epsilon)
    eps = inst.epsilon

    conflicting = red.conflicting_arcs
    first_counts: dict[tuple[int, int], int] = {}
    for arc_id, pairs in red.conflicting_pairs.items():
        for r, _ in pairs:
            first_counts[(arc_id, r)] = first_counts.get((arc_id, r), 0) + 1

    for trip in inst.trips:
        r = trip.id
        for p, arc_id in enumerate(trip.route):
            arc = inst.arcs[arc_id]
            xn = lp.var(
                f"x_a{arc_id}_r{r}",
                lb=tw.earliest_entry[r][p],
                ub=tw.latest_entry(inst, r, p),
            )
            if arc_id in conflicting:
                f_max = first_counts.get((arc_id, r), 0)
                d_max = arc.ttf.delay(f_max)
                dn = lp.var(f"d_a{arc_id}_r{r}", lb=0.0, ub=d_max)
                fn = lp.var(f"f_a{arc_id}_r{r}", lb=0.0, ub=float(f_max))
                for k, (slope, threshold) in enumerate(arc.ttf.pieces):
                    lp.add(
                        f"pw{k}_a{arc_id}_r{r}",
                        {fn: slope, dn: -1.0},
                        "<=",
                        slope * threshold,
                    )
                if d_max > 0:
                    # pin d to the active piece so the model cannot buy
                    # extra delay on one arc to dodge congestion downstream
                    zs = [lp.var(f"pz0_a{arc_id}_r{r}", lb=0.0, ub=1.0, binary=True)]
                    lp.add(
                        f"pu0_a{arc_id}_r{r}",
                        {dn: 1.0, zs[0]: d_max},
                        "<=",
                        d_max,
                    )
                    for k, (slope, threshold) in enumerate(arc.ttf.pieces):
                        zk = lp.var(
                            f"pz{k + 1}_a{arc_id}_r{r}", lb=0.0, ub=1.0, binary=True
                        )
                        zs.append(zk)
                        big = d_max + slope * threshold
                        lp.add(
                            f"pu{k + 1}_a{arc_id}_r{r}",
                            {dn: 1.0, fn: -slope, zk: big},
                            "<=",
                            big - slope * threshold,
                        )
                    lp.add(
                        f"ps_a{arc_id}_r{r}",
                        {z: 1.0 for z in zs},
                        "=",
                        1.0,
                    )
                    model.piece_select[(r, p)] = zs
            else:
                dn = lp.var(f"d_a{arc_id}_r{r}", lb=0.0, ub=0.0)
                fn = lp.var(f"f_a{arc_id}_r{r}", lb=0.0, ub=0.0)
            model.x_name[(r, p)] = xn
            model.d_name[(r, p)] = dn
            model.f_name[(r, p)] = fn
            lp.objective[dn] = 1.0
        for p, arc_id in enumerate(trip.route[:-1]):
            arc = inst.arcs[arc_id]
            lp.add(
                f"cont_a{arc_id}_r{r}",
                {
                    model.x_name[(r, p + 1)]: 1.0,
                    model.x_name[(r, p)]: -1.0,
                    model.d_name[(r, p)]: -1.0,
                },
                "=",
                arc.nominal,
            )
        last = len(trip.route) - 1
        last_arc = inst.arcs[trip.route[last]]
        lp.add(
            f"dl_r{r}",
            {model.x_name[(r, last)]: 1.0, model.d_name[(r, last)]: 1.0},
            "<=",
            trip.deadline - last_arc.nominal,
        )

    bad_pairs = []
    for arc_id in sorted(red.conflicting_pairs):
        arc = inst.arcs[arc_id]
        for r, r2 in red.conflicting_pairs[arc_id]:
            pr = inst.route_pos[(r, arc_id)]
            p2 = inst.route_pos[(r2, arc_id)]
            m1 = tw.latest_entry(inst, r, pr) - tw.earliest_entry[r2][p2] + eps
            m2 = tw.latest_entry(inst, r2, p2) - tw.earliest_entry[r][pr]
            m3 = tw.latest_exit[r2][p2] - tw.earliest_entry[r][pr]
            m4 = tw.latest_exit[r][pr] - tw.earliest_entry[r2][p2] + eps
            key = (arc_id, r, r2)
            model.big_m[key] = BigM(m1, m2, m3, m4)

            tag = f"a{arc_id}_r{r}_s{r2}"
            an = lp.var(f"al_{tag}", lb=0.0, ub=1.0, binary=True)
            bn = lp.var(f"be_{tag}", lb=0.0, ub=1.0, binary=True)
            gn = lp.var(f"ga_{tag}", lb=0.0, ub=1.0, binary=True)
            model.alpha[key], model.beta[key], model.gamma[key] = an, bn, gn

            xr = model.x_name[(r, pr)]
            x2 = model.x_name[(r2, p2)]
            d2 = model.d_name[(r2, p2)]

            if m1 <= 0 and m2 <= 0:
                bad_pairs.append((arc_id, r, r2))
                continue
            if m1 <= 0:  # r always enters strictly before r2
                lp.variables[an].lb = lp.variables[an].ub = 0.0
                model.fixed_binaries[an] = 0
            elif m2 <= 0:  # r never enters before r2
                lp.variables[an].lb = lp.variables[an].ub = 1.0
                model.fixed_binaries[an] = 1
            else:
                lp.add(f"al1_{tag}", {xr: 1.0, x2: -1.0, an: -m1}, "<=", -eps)
                lp.add(f"al2_{tag}", {x2: 1.0, xr: -1.0, an: m2}, "<=", m2)

            if m3 <= 0:  # r2 always gone before r arrives
                lp.variables[bn].lb = lp.variables[bn].ub = 0.0
                model.fixed_binaries[bn] = 0
            elif m4 <= 0:  # r always enters while r2 may still traverse
                lp.variables[bn].lb = lp.variables[bn].ub = 1.0
                model.fixed_binaries[bn] = 1
            else:
                lp.add(
                    f"be1_{tag}",
                    {x2: 1.0, d2: 1.0, xr: -1.0, bn: -m3},
                    "<=",
                    -arc.nominal,
                )
                lp.add(
                    f"be2_{tag}",
                    {xr: 1.0, x2: -1.0, d2: -1.0, bn: m4},
                    "<=",
                    m4 + arc.nominal - eps,
                )

            lp.add(f"ga1_{tag}", {gn: 1.0, an: -1.0, bn: -1.0}, ">=", -1.0)
            lp.add(f"ga2_{tag}", {gn: 2.0, an: -1.0, bn: -1.0}, "<=", 0.0)

    if bad_pairs:
        raise WindowConflict(bad_pairs)

    for arc_id in sorted(red.conflicting_pairs):
        per_trip: dict[int, list[str]] = {}
        for (a, r, r2), gname in model.gamma.items():
            if a == arc_id:
                per_trip.setdefault(r, []).append(gname)
        for r in inst.trips_on_arc[arc_id]:
            pr = inst.route_pos[(r, arc_id)]
            coeffs = {model.f_name[(r, pr)]: 1.0}
            for gname in per_trip.get(r, []):
                coeffs[gname] = -1.0
            lp.add(f"fl_a{arc_id}_r{r}", coeffs, "=", 0.0)
    return model


def emit_model(model: MilpModel, path: str | Path):
    write_lp(model.lp, path)


def activation_binaries(
    model: MilpModel, sched: Schedule
) -> dict[str, int]:
    """Binary values implied by a schedule via the activation-condition table."""
    inst = model.red.base
    out: dict[str, int] = {}
    for (arc_id, r, r2) in model.alpha:
        arc = inst.arcs[arc_id]
        pr = inst.route_pos[(r, arc_id)]
        p2 = inst.route_pos[(r2, arc_id)]
        xr = sched.entries[r][pr]
        x2 = sched.entries[r2][p2]
        exit2 = x2 + arc.nominal + sched.delays[r2][p2]
        a = 0 if xr < x2 else 1
        b = 0 if xr >= exit2 else 1
        out[model.alpha[(arc_id, r, r2)]] = a
        out[model.beta[(arc_id, r, r2)]] = b
        out[model.gamma[(arc_id, r, r2)]] = 1 if a + b == 2 else 0
    return out


def encode_warmstart(model: MilpModel, sched: Schedule) -> tuple[dict[str, float], list[str]]:
    """Full variable assignment for a schedule, plus any rows it violates.

    Entry-time gaps inside the open (0, epsilon) band cannot satisfy the
    strict-separation rows; those are reported rather than silently dropped.
    """
    inst = model.red.base
    conflicting = model.red.conflicting_arcs
    values: dict[str, float] = {}
    for trip in inst.trips:
        r = trip.id
        for p, arc_id in enumerate(trip.route):
            values[model.x_name[(r, p)]] = sched.entries[r][p]
            values[model.d_name[(r, p)]] = sched.delays[r][p]
            # flows are only modeled on conflicting arcs; elsewhere the
            # variable is a fixed-zero placeholder (delay is provably zero)
            values[model.f_name[(r, p)]] = (
                float(sched.flows[r][p]) if arc_id in conflicting else 0.0
            )
    values.update({k: float(v) for k, v in activation_binaries(model, sched).items()})
    for (r, p), zs in model.piece_select.items():
        arc = inst.arcs[inst.trips[r].route[p]]
        f = sched.flows[r][p]
        d = sched.delays[r][p]
        active = 0
        if d > 0:
            for k, (slope, threshold) in enumerate(arc.ttf.pieces):
                if abs(slope * (f - threshold) - d) <= 1e-9:
                    active = k + 1
                    break
        for k, name in enumerate(zs):
            values[name] = 1.0 if k == active else 0.0
    violations = check_assignment(model, values)
    return values, violations


def check_assignment(model: MilpModel, values: dict[str, float], tol: float = 1e-7) -> list[str]:
    """Names of constraints (or bounds) the assignment violates."""
    bad = []
    for c in model.lp.constraints:
        lhs = sum(coef * values[v] for v, coef in c.coeffs.items())
        if c.sense == "<=" and lhs > c.rhs + tol:
            bad.append(c.name)
        elif c.sense == ">=" and lhs < c.rhs - tol:
            bad.append(c.name)
        elif c.sense == "=" and abs(lhs - c.rhs) > tol:
            bad.append(c.name)
    for name, var in model.lp.variables.items():
        v = values[name]
        if v < var.lb - tol or v > var.ub + tol:
            bad.append(f"bound:{name}")
    return bad


@dataclass
class SolveOutcome:
    status: str  # optimal | feasible | infeasible | timeout | error
    incumbent: Schedule | None
    lower_bound: float
    objective: float | None = None


def decode_solution(model: MilpModel, values: dict[str, float]) -> Schedule:
    """Turn solver variable values back into an engine-evaluated schedule."""
    inst = model.red.base
    shifts = []
    for trip in inst.trips:
        x0 = values.get(model.x_name[(trip.id, 0)], trip.release)
        shift = min(max(x0 - trip.release, 0.0), trip.max_stagger)
        shifts.append(shift)
    sched = construct_schedule(inst, shifts)
    problems = validate_schedule(inst, sched)
    if problems:
        raise SolverError(f"decoded schedule is infeasible: {problems[:3]}")
    return sched


def solve(
    model: MilpModel,
    adapter: SolverAdapter,
    time_limit: float,
    warm: Schedule | None = None,
    initial_lb: float = 0.0,
    workdir: str | Path | None = None,
) -> SolveOutcome:
    """Run the external solver on the model and decode the incumbent.

    The returned bound is the best of the solver's bound and the
    preprocessing bound. Without conflicting arcs the model is solved
    trivially.
    """
    inst = model.red.base
    if inst.n_trips == 0 or not model.red.conflicting_pairs:
        sched = construct_schedule(inst, [0.0] * inst.n_trips)
        return SolveOutcome("optimal", sched, max(0.0, initial_lb), objective=0.0)

    tmp_ctx = None
    if workdir is None:
        tmp_ctx = tempfile.TemporaryDirectory(prefix="stagger-milp-")
        workdir = tmp_ctx.name
    workdir = Path(workdir)
    try:
        lp_path = workdir / "model.lp"
        emit_model(model, lp_path)
        warm_path = None
        if warm is not None and "warmstart" in adapter.capabilities:
            values, violations = encode_warmstart(model, warm)
            if violations:
                log.warning(
                    "warmstart skipped, %d rows violated (first: %s)",
                    len(violations),
                    violations[0],
                )
            else:
                warm_path = workdir / "warm.sol"
                with open(warm_path, "w") as fh:
                    for name, value in sorted(values.items()):
                        fh.write(f"{name} {value!r}\n")
        result = adapter.solve(lp_path, time_limit=time_limit, warm_path=warm_path)
    finally:
        if tmp_ctx is not None:
            tmp_ctx.cleanup()

    bound = initial_lb
    if result.bound is not None:
        bound = max(bound, result.bound)
    if result.status == "infeasible":
        return SolveOutcome("infeasible", None, bound)
    if result.values:
        incumbent = decode_solution(model, result.values)
        status = "optimal" if result.status == "optimal" else "feasible"
        if result.status == "optimal" and result.objective is not None:
            bound = max(bound, result.objective)
    else:
        incumbent, status = None, "timeout"
    return SolveOutcome(status, incumbent, bound, objective=result.objective)

"""Command line interface.

Every command takes its defaults from an optional TOML config file
(``--config``, table names matching command names) with flags overriding.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import click

from . import network
from .engine import StaggerError, construct_schedule, total_delay
from .heuristic import MatheuristicConfig, run_matheuristic, write_iteration_log
from .model import InstanceError, load_instance, read_trips_csv, validate_schedule
from .online import run_online, write_epoch_log
from .preprocess import preprocess
from .report import build_report
from .solver import SolverAdapter, glpk_adapter, load_adapter


def _apply_config(ctx, param, value):
    if value:
        with open(value, "rb") as fh:
            data = tomllib.load(fh)
        ctx.default_map = {
            cmd.replace("_", "-"): {k.replace("-", "_"): v for k, v in table.items()}
            for cmd, table in data.items()
        }
    return value


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_apply_config,
    expose_value=False,
    is_eager=True,
    help="TOML file with per-command default options.",
)
def main():
    """Staggered departure scheduling toolkit."""


def _resolve_adapter(name: str | None) -> SolverAdapter | None:
    if name is None or name == "glpk":
        return glpk_adapter()
    if name in ("none", "off"):
        return None
    return load_adapter(name)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid-size", type=int, default=4, show_default=True)
@click.option("--spacing", type=float, default=500.0, show_default=True, help="grid spacing in metres")
@click.option("--trips", type=int, default=20, show_default=True)
@click.option("--horizon", type=float, default=600.0, show_default=True)
@click.option("--demand", type=click.Choice(["hotspot", "crossing"]), default="hotspot", show_default=True)
@click.option("--hotspot-intensity", type=float, default=0.5, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def generate(seed, grid_size, spacing, trips, horizon, demand, hotspot_intensity, out_dir):
    """Generate a synthetic road network and trip demand."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    graph, rows = network.generate_synthetic(
        seed,
        grid_size=grid_size,
        spacing_m=spacing,
        n_trips=trips,
        horizon_s=horizon,
        demand=demand,
        hotspot_intensity=hotspot_intensity,
    )
    network.write_graph(graph, out / "nodes.csv", out / "edges.csv")
    network.write_trips_csv(rows, out / "trips.csv")
    click.echo(f"wrote {len(graph.nodes)} nodes, {len(graph.edges)} edges, {len(rows)} trips to {out}")


@main.command()
@click.option("--nodes", "nodes_path", required=True, type=click.Path(exists=True))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True))
@click.option("--target-fraction", type=float, default=0.25, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def contract(nodes_path, edges_path, target_fraction, out_dir):
    """Contract a road graph, preserving distances between kept nodes."""
    graph = network.read_graph(nodes_path, edges_path)
    reduced = network.contract_graph(graph, target_fraction=target_fraction)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    network.write_graph(reduced, out / "nodes_contracted.csv", out / "edges_contracted.csv")
    click.echo(
        f"{len(graph.nodes)} -> {len(reduced.nodes)} nodes, "
        f"{len(graph.edges)} -> {len(reduced.edges)} edges"
    )


@main.command("build-instance")
@click.option("--nodes", "nodes_path", required=True, type=click.Path(exists=True))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True))
@click.option("--trips", "trips_path", required=True, type=click.Path(exists=True))
@click.option("--zeta", type=float, default=0.10, show_default=True, help="stagger budget as a fraction of free-flow time")
@click.option("--speed-kmh", type=float, default=20.0, show_default=True)
@click.option("--capacity-divisor", type=float, default=15.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="instance.json", show_default=True)
def build_instance_cmd(nodes_path, edges_path, trips_path, zeta, speed_kmh, capacity_divisor, out_path):
    """Route trip demand over a graph and calibrate an instance file."""
    graph = network.read_graph(nodes_path, edges_path)
    rows = read_trips_csv(trips_path)
    params = network.ScenarioParams(
        speed_kmh=speed_kmh,
        capacity_divisor=capacity_divisor,
        stagger_fraction=zeta,
    )
    inst = network.build_instance(graph, rows, params)
    inst.save(out_path)
    click.echo(f"wrote {inst.n_trips} trips over {inst.n_arcs} arcs to {out_path}")


@main.command("preprocess")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True))
@click.option("--passes", type=int, default=1, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
def preprocess_cmd(instance_path, passes, out_path):
    """Compute entry windows, conflicting sets, and the reduced model."""
    inst = load_instance(instance_path)
    tw, sets, red, red_tw = preprocess(inst, passes=passes)
    summary = {
        "trips": inst.n_trips,
        "arcs": inst.n_arcs,
        "conflicting_sets": len(sets),
        "reduced_trips": red.base.n_trips,
        "reduced_arcs": red.base.n_arcs,
        "lower_bound_s": red_tw.initial_lb,
        "window_passes": tw.passes_run,
    }
    if out_path:
        tw.dump(inst, out_path)
    click.echo(json.dumps(summary, indent=2))


@main.command("solve")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["offline", "online"]), default="offline", show_default=True)
@click.option("--time-limit", type=float, default=60.0, show_default=True)
@click.option("--milp-slice", type=float, default=30.0, show_default=True)
@click.option("--delta", type=float, default=360.0, show_default=True, help="epoch length in seconds (online mode)")
@click.option("--adapter", "adapter_name", default="glpk", show_default=True, help="glpk, none, or a JSON adapter descriptor path")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def solve_cmd(instance_path, mode, time_limit, milp_slice, delta, adapter_name, out_dir):
    """Solve an instance and write the schedule, report, and run log."""
    inst = load_instance(instance_path)
    adapter = _resolve_adapter(adapter_name)
    cfg = MatheuristicConfig(time_limit=time_limit, milp_slice=milp_slice, adapter=adapter)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "offline":
        result = run_matheuristic(inst, cfg)
        sched, lb = result.schedule, result.lower_bound
        write_iteration_log(result.rows, out / "iterations.csv")
        status = result.status
    else:
        result = run_online(inst, delta=delta, config=cfg)
        sched = result.schedule
        lb = sum(row.lb for row in result.logs)
        write_epoch_log(result.logs, out / "epochs.csv")
        status = ",".join(result.statuses)
    sched.export_csv(out / "schedule.csv", inst)
    report = build_report(inst, sched, lb)
    report.save(out / "report.json")
    click.echo(
        f"status={status} uncontrolled={report.uncontrolled_delay:.3f}s "
        f"ub={report.upper_bound:.3f}s lb={report.lower_bound:.3f}s "
        f"reduction={100 * report.delay_reduction:.1f}%"
    )


@main.command("sweep-zeta")
@click.option("--nodes", "nodes_path", required=True, type=click.Path(exists=True))
@click.option("--edges", "edges_path", required=True, type=click.Path(exists=True))
@click.option("--trips", "trips_path", required=True, type=click.Path(exists=True))
@click.option("--zetas", default="0.05,0.10,0.20", show_default=True)
@click.option("--time-limit", type=float, default=30.0, show_default=True)
@click.option("--adapter", "adapter_name", default="glpk", show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True, help="parallel solver processes")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="sweep.csv", show_default=True)
def sweep_zeta(nodes_path, edges_path, trips_path, zetas, time_limit, adapter_name, jobs, out_path):
    """Re-solve the same demand under several stagger budget fractions."""
    graph = network.read_graph(nodes_path, edges_path)
    rows = read_trips_csv(trips_path)
    adapter = _resolve_adapter(adapter_name)
    values = [float(z) for z in zetas.split(",") if z.strip()]
    tasks = [(graph, rows, zeta, time_limit, adapter) for zeta in values]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_one, tasks))
    else:
        reports = [_sweep_one(t) for t in tasks]
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["zeta", "uncontrolled_s", "ub_s", "lb_s", "gap", "reduction", "mean_shift_s"]
        )
        for zeta, report in zip(values, reports):
            writer.writerow(
                [
                    zeta,
                    repr(report.uncontrolled_delay),
                    repr(report.upper_bound),
                    repr(report.lower_bound),
                    repr(report.optimality_gap),
                    repr(report.delay_reduction),
                    repr(report.shift_stats["mean"]),
                ]
            )
            click.echo(
                f"zeta={zeta:.2f} ub={report.upper_bound:.3f}s "
                f"reduction={100 * report.delay_reduction:.1f}%"
            )
    click.echo(f"wrote {out_path}")


def _sweep_one(task):
    graph, rows, zeta, time_limit, adapter = task
    params = network.ScenarioParams(stagger_fraction=zeta)
    inst = network.build_instance(graph, rows, params)
    result = run_matheuristic(inst, MatheuristicConfig(time_limit=time_limit, adapter=adapter))
    return build_report(inst, result.schedule, result.lower_bound)


@main.command("stats")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True))
def stats_cmd(instance_path):
    """Print instance summary statistics."""
    inst = load_instance(instance_path)
    unc = construct_schedule(inst, [0.0] * inst.n_trips)
    free = sum(inst.free_flow_time(t.id) for t in inst.trips)
    _, sets, red, red_tw = preprocess(inst)
    click.echo(
        json.dumps(
            {
                "trips": inst.n_trips,
                "arcs": inst.n_arcs,
                "nodes": len(inst.nodes),
                "total_free_flow_s": free,
                "uncontrolled_delay_s": unc.total_delay,
                "epsilon_s": inst.epsilon,
                "conflicting_arcs": len(sets),
                "max_trips_per_conflicting_arc": max(
                    (len(s.trips) for s in sets), default=0
                ),
                "lower_bound_s": red_tw.initial_lb,
            },
            indent=2,
        )
    )


@main.command("evaluate")
@click.option("--instance", "instance_path", required=True, type=click.Path(exists=True))
@click.option("--shifts", "shifts_path", required=True, type=click.Path(exists=True), help="CSV of trip_id,shift_s")
def evaluate_cmd(instance_path, shifts_path):
    """Evaluate a shift vector: total delay plus feasibility violations."""
    inst = load_instance(instance_path)
    by_label = {inst.trip_labels.get(t.id, str(t.id)): t.id for t in inst.trips}
    shifts = [0.0] * inst.n_trips
    with open(shifts_path, newline="") as fh:
        for row in csv.DictReader(fh):
            label = row["trip_id"]
            if label not in by_label:
                raise InstanceError(f"unknown trip id {label!r}")
            shifts[by_label[label]] = float(row["shift_s"])
    try:
        sched = construct_schedule(inst, shifts)
    except StaggerError as exc:
        click.echo(f"violation: {exc}")
        sys.exit(1)
    violations = validate_schedule(inst, sched)
    click.echo(f"total_delay_s={sched.total_delay!r}")
    for v in violations:
        click.echo(f"violation: {v.kind} trip={v.trip} pos={v.pos} {v.detail}")
    if violations:
        sys.exit(1)


if __name__ == "__main__":
    main()

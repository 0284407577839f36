#!/usr/bin/env python3
"""Compare offline planning against rolling-horizon online planning.

Generates congested synthetic grid scenarios, solves each one offline
(full information) and online with several epoch lengths, and writes one
CSV row per (seed, mode) with delays and runtimes.
"""

import argparse
import csv
import math
import time

from stagger.engine import uncontrolled_schedule
from stagger.heuristic import MatheuristicConfig, run_matheuristic
from stagger.network import ScenarioParams, build_instance, generate_synthetic
from stagger.online import run_online
from stagger.solver import glpk_adapter


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10, help="number of scenarios")
    ap.add_argument("--trips", type=int, default=14)
    ap.add_argument("--grid-size", type=int, default=6)
    ap.add_argument("--horizon", type=float, default=15.0)
    ap.add_argument("--time-limit", type=float, default=3.0)
    ap.add_argument(
        "--deltas", default="5.0,10.0", help="comma-separated epoch lengths in seconds"
    )
    ap.add_argument("--out", default="offline_vs_online.csv")
    args = ap.parse_args()

    deltas = [float(d) for d in args.deltas.split(",")]
    cfg = MatheuristicConfig(
        time_limit=args.time_limit,
        milp_slice=args.time_limit * 2 / 3,
        adapter=glpk_adapter(),
    )

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "mode", "uncontrolled_s", "ub_s", "elapsed_s"])
        for seed in range(args.seeds):
            graph, rows = generate_synthetic(
                seed,
                grid_size=args.grid_size,
                spacing_m=100.0,
                n_trips=args.trips,
                horizon_s=args.horizon,
                demand="crossing",
            )
            inst = build_instance(graph, rows, ScenarioParams())
            unc = uncontrolled_schedule(inst).total_delay

            t0 = time.perf_counter()
            offline = run_matheuristic(inst, cfg)
            writer.writerow(
                [seed, "offline", unc, offline.upper_bound, time.perf_counter() - t0]
            )
            print(
                f"seed {seed}: uncontrolled {unc:.2f}s, offline {offline.upper_bound:.2f}s"
            )

            for delta in deltas:
                t0 = time.perf_counter()
                online = run_online(
                    inst, delta=delta, config=cfg, epoch_time_limit=args.time_limit / 3
                )
                ub = online.schedule.total_delay
                writer.writerow(
                    [seed, f"online_d{delta:g}", unc, ub, time.perf_counter() - t0]
                )
                print(f"  online delta={delta:g}: {ub:.2f}s")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

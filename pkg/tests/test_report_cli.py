import json

import pytest
from click.testing import CliRunner

from stagger.cli import main
from stagger.engine import construct_schedule, uncontrolled_schedule
from stagger.model import Arc, Instance, Trip, TravelTimeFunction
from stagger.report import _guarded_ratio, build_report


def overlap_pair() -> Instance:
    arc = Arc(id=0, tail=0, head=1, ttf=TravelTimeFunction(10.0, ((1.0, 0.5),)))
    trips = [
        Trip(id=0, route=(0,), release=0.0, deadline=100.0, max_stagger=0.0),
        Trip(id=1, route=(0,), release=8.0, deadline=100.0, max_stagger=5.0),
    ]
    return Instance(arcs=[arc], trips=trips)


class TestReport:
    def test_ratios_recomputable(self):
        inst = overlap_pair()
        unc = uncontrolled_schedule(inst)
        solved = construct_schedule(inst, [0.0, 2.01])
        report = build_report(inst, solved, lower_bound=0.0, uncontrolled=unc)
        assert report.uncontrolled_delay == unc.total_delay > 0
        assert report.upper_bound == 0.0
        assert report.optimality_gap == 0.0
        assert report.delay_reduction == pytest.approx(1.0)

    def test_guarded_ratio_zero_denominator(self):
        assert _guarded_ratio(1.0, 0.0) == 0.0
        assert _guarded_ratio(3.0, 2.0) == 1.5

    def test_per_arc_stats(self):
        inst = overlap_pair()
        unc = uncontrolled_schedule(inst)
        report = build_report(inst, unc, lower_bound=0.0)
        assert report.per_arc_delay == {0: unc.total_delay}
        assert report.per_arc_congested == {0: 1}

    def test_shift_stats(self):
        inst = overlap_pair()
        sched = construct_schedule(inst, [0.0, 2.01])
        report = build_report(inst, sched, lower_bound=0.0)
        stats = report.shift_stats
        assert stats["min"] == 0.0
        assert stats["max"] == pytest.approx(2.01)
        assert stats["mean"] == pytest.approx(2.01 / 2)
        assert stats["nonzero"] == 1.0

    def test_save_roundtrips_as_json(self, tmp_path):
        inst = overlap_pair()
        report = build_report(inst, uncontrolled_schedule(inst), lower_bound=0.5)
        path = tmp_path / "report.json"
        report.save(path)
        data = json.loads(path.read_text())
        assert data["lower_bound"] == 0.5
        assert data["n_trips"] == 2


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def scenario_dir(tmp_path, runner):
    out = runner.invoke(
        main,
        [
            "generate",
            "--seed", "0",
            "--grid-size", "3",
            "--trips", "6",
            "--horizon", "60",
            "--out-dir", str(tmp_path),
        ],
    )
    assert out.exit_code == 0, out.output
    return tmp_path


@pytest.fixture
def instance_path(scenario_dir, runner):
    path = scenario_dir / "instance.json"
    out = runner.invoke(
        main,
        [
            "build-instance",
            "--nodes", str(scenario_dir / "nodes.csv"),
            "--edges", str(scenario_dir / "edges.csv"),
            "--trips", str(scenario_dir / "trips.csv"),
            "--out", str(path),
        ],
    )
    assert out.exit_code == 0, out.output
    return path


class TestCli:
    def test_generate_writes_files(self, scenario_dir):
        for name in ("nodes.csv", "edges.csv", "trips.csv"):
            assert (scenario_dir / name).exists()

    def test_contract(self, scenario_dir, runner, tmp_path):
        out = runner.invoke(
            main,
            [
                "contract",
                "--nodes", str(scenario_dir / "nodes.csv"),
                "--edges", str(scenario_dir / "edges.csv"),
                "--target-fraction", "0.25",
                "--out-dir", str(tmp_path),
            ],
        )
        assert out.exit_code == 0, out.output
        assert (tmp_path / "nodes_contracted.csv").exists()
        assert (tmp_path / "edges_contracted.csv").exists()

    def test_stats(self, instance_path, runner):
        out = runner.invoke(main, ["stats", "--instance", str(instance_path)])
        assert out.exit_code == 0, out.output
        data = json.loads(out.output)
        assert data["trips"] == 6
        assert data["lower_bound_s"] >= 0.0

    def test_preprocess_with_dump(self, instance_path, runner, tmp_path):
        dump = tmp_path / "windows.json"
        out = runner.invoke(
            main,
            ["preprocess", "--instance", str(instance_path), "--out", str(dump)],
        )
        assert out.exit_code == 0, out.output
        summary = json.loads(out.output)
        assert summary["trips"] == 6
        assert json.loads(dump.read_text())

    def test_solve_offline(self, instance_path, runner, tmp_path):
        out = runner.invoke(
            main,
            [
                "solve",
                "--instance", str(instance_path),
                "--adapter", "none",
                "--time-limit", "2",
                "--out-dir", str(tmp_path),
            ],
        )
        assert out.exit_code == 0, out.output
        assert "status=" in out.output
        for name in ("schedule.csv", "report.json", "iterations.csv"):
            assert (tmp_path / name).exists()
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["upper_bound"] <= report["uncontrolled_delay"] + 1e-9

    def test_solve_online(self, instance_path, runner, tmp_path):
        out = runner.invoke(
            main,
            [
                "solve",
                "--instance", str(instance_path),
                "--mode", "online",
                "--delta", "20",
                "--adapter", "none",
                "--time-limit", "2",
                "--out-dir", str(tmp_path),
            ],
        )
        assert out.exit_code == 0, out.output
        assert (tmp_path / "epochs.csv").exists()

    def test_evaluate_zero_shifts(self, instance_path, runner, tmp_path):
        shifts = tmp_path / "shifts.csv"
        shifts.write_text("trip_id,shift_s\nt0,0.0\n")
        out = runner.invoke(
            main,
            ["evaluate", "--instance", str(instance_path), "--shifts", str(shifts)],
        )
        assert out.exit_code == 0, out.output
        assert "total_delay_s=" in out.output

    def test_evaluate_budget_violation_exits_nonzero(self, instance_path, runner, tmp_path):
        shifts = tmp_path / "shifts.csv"
        shifts.write_text("trip_id,shift_s\nt0,100000.0\n")
        out = runner.invoke(
            main,
            ["evaluate", "--instance", str(instance_path), "--shifts", str(shifts)],
        )
        assert out.exit_code == 1
        assert "violation:" in out.output

    def test_evaluate_unknown_trip_rejected(self, instance_path, runner, tmp_path):
        shifts = tmp_path / "shifts.csv"
        shifts.write_text("trip_id,shift_s\nnope,1.0\n")
        out = runner.invoke(
            main,
            ["evaluate", "--instance", str(instance_path), "--shifts", str(shifts)],
        )
        assert out.exit_code != 0

    def test_sweep_zeta(self, scenario_dir, runner, tmp_path):
        out_csv = tmp_path / "sweep.csv"
        out = runner.invoke(
            main,
            [
                "sweep-zeta",
                "--nodes", str(scenario_dir / "nodes.csv"),
                "--edges", str(scenario_dir / "edges.csv"),
                "--trips", str(scenario_dir / "trips.csv"),
                "--zetas", "0.0,0.1",
                "--time-limit", "2",
                "--adapter", "none",
                "--out", str(out_csv),
            ],
        )
        assert out.exit_code == 0, out.output
        lines = out_csv.read_text().splitlines()
        assert lines[0].startswith("zeta,")
        assert len(lines) == 3
        # zeta 0 means no stagger budget: ub equals the uncontrolled delay
        row = dict(zip(lines[0].split(","), lines[1].split(",")))
        assert float(row["ub_s"]) == float(row["uncontrolled_s"])

    def test_config_defaults_and_flag_override(self, tmp_path, runner):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            "[generate]\ntrips = 7\ngrid-size = 3\nhorizon = 60.0\n"
            f'out-dir = "{tmp_path}"\n'
        )
        out = runner.invoke(main, ["--config", str(cfg), "generate"])
        assert out.exit_code == 0, out.output
        trips = (tmp_path / "trips.csv").read_text().splitlines()
        assert len(trips) == 8  # header + 7 rows

        out = runner.invoke(main, ["--config", str(cfg), "generate", "--trips", "4"])
        assert out.exit_code == 0, out.output
        trips = (tmp_path / "trips.csv").read_text().splitlines()
        assert len(trips) == 5

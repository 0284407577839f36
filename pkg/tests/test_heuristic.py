import pytest
from hypothesis import given, settings, strategies as st

from conftest import grid_optimum, schedules_equal
from stagger.engine import construct_schedule, find_conflicts, uncontrolled_schedule
from stagger.heuristic import (
    MatheuristicConfig,
    analyze_conflict,
    local_search,
    resolve_conflict,
    run_matheuristic,
    write_iteration_log,
)
from stagger.model import Arc, Instance, Trip, TravelTimeFunction, validate_schedule
from stagger.sampling import random_instance, random_shifts
from stagger.solver import glpk_adapter


def overlap_pair(release2: float = 8.0, stagger2: float = 5.0, stagger1: float = 0.0) -> Instance:
    arc = Arc(id=0, tail=0, head=1, ttf=TravelTimeFunction(10.0, ((1.0, 0.5),)))
    trips = [
        Trip(id=0, route=(0,), release=0.0, deadline=100.0, max_stagger=stagger1),
        Trip(id=1, route=(0,), release=release2, deadline=100.0, max_stagger=stagger2),
    ]
    return Instance(arcs=[arc], trips=trips)


class TestAnalyzeConflict:
    def test_overlap_arithmetic(self):
        # first enters at 0, traverses 10 (+delay 0 for it), second enters
        # at 8: overlap = 0 + 10 + 0 - 8 + 0.01 = 2.01
        inst = overlap_pair()
        sched = uncontrolled_schedule(inst)
        conflict = next(
            c for c in find_conflicts(inst, sched) if (c.first, c.second) == (0, 1)
        )
        item = analyze_conflict(inst, sched, conflict)
        assert item.overlap == pytest.approx(2.01)
        assert item.feasible_forward == pytest.approx(2.01)  # budget 5 covers it
        assert item.feasible_backward == 0.0  # first trip already at release

    def test_shifts_capped_at_overlap(self):
        inst = overlap_pair(stagger2=100.0)
        sched = uncontrolled_schedule(inst)
        conflict = find_conflicts(inst, sched)[0]
        item = analyze_conflict(inst, sched, conflict)
        assert item.feasible_forward == item.overlap


class TestResolveConflict:
    def test_forward_only_when_budget_covers(self):
        inst = overlap_pair()
        sched = uncontrolled_schedule(inst)
        assert sched.total_delay > 0
        conflict = find_conflicts(inst, sched)[0]
        item = analyze_conflict(inst, sched, conflict)
        out = resolve_conflict(inst, sched, item)
        assert out.start_shift[1] == pytest.approx(2.01)
        assert out.start_shift[0] == 0.0
        assert out.total_delay == 0.0
        assert schedules_equal(out, construct_schedule(inst, out.start_shift))

    def test_split_forward_and_backward(self):
        # second trip can only move +1, so the first absorbs the remaining
        # 1.01 backward; the first departs staggered by 1.5 initially
        arc = Arc(id=0, tail=0, head=1, ttf=TravelTimeFunction(10.0, ((1.0, 0.5),)))
        trips = [
            Trip(id=0, route=(0,), release=0.0, deadline=100.0, max_stagger=2.0),
            Trip(id=1, route=(0,), release=9.5, deadline=100.0, max_stagger=1.0),
        ]
        inst = Instance(arcs=[arc], trips=trips)
        sched = construct_schedule(inst, [1.5, 0.0])
        conflict = next(
            c for c in find_conflicts(inst, sched) if (c.first, c.second) == (0, 1)
        )
        item = analyze_conflict(inst, sched, conflict)
        assert item.overlap == pytest.approx(2.01)
        assert item.feasible_forward == pytest.approx(1.0)
        assert item.feasible_backward == pytest.approx(1.5)
        out = resolve_conflict(inst, sched, item)
        assert out.start_shift[1] == pytest.approx(1.0)
        assert out.start_shift[0] == pytest.approx(1.5 - 1.01)
        assert schedules_equal(out, construct_schedule(inst, out.start_shift))

    def test_unresolvable_conflict_rejected(self):
        inst = overlap_pair(stagger2=0.5)
        sched = uncontrolled_schedule(inst)
        conflict = find_conflicts(inst, sched)[0]
        item = analyze_conflict(inst, sched, conflict)
        with pytest.raises(ValueError):
            resolve_conflict(inst, sched, item)

    def test_cascade_matches_reconstruction(self):
        # resolving the front conflict pushes the middle trip into the third
        arcs = [
            Arc(id=0, tail=0, head=1, ttf=TravelTimeFunction(10.0, ((1.0, 0.5),))),
            Arc(id=1, tail=1, head=2, ttf=TravelTimeFunction(10.0, ((1.0, 0.5),))),
        ]
        trips = [
            Trip(id=0, route=(0,), release=0.0, deadline=100.0, max_stagger=0.0),
            Trip(id=1, route=(0, 1), release=8.0, deadline=100.0, max_stagger=5.0),
            Trip(id=2, route=(1,), release=21.0, deadline=100.0, max_stagger=5.0),
        ]
        inst = Instance(arcs=arcs, trips=trips)
        sched = uncontrolled_schedule(inst)
        conflict = next(
            c for c in find_conflicts(inst, sched) if (c.first, c.second) == (0, 1)
        )
        item = analyze_conflict(inst, sched, conflict)
        out = resolve_conflict(inst, sched, item)
        assert schedules_equal(out, construct_schedule(inst, out.start_shift))

    @given(seed=st.integers(0, 3000), k=st.integers(0, 500))
    @settings(max_examples=150, deadline=None)
    def test_propagation_equals_reconstruction(self, seed, k):
        inst = random_instance(seed, n_trips=seed % 4 + 2, congested=True)
        sched = construct_schedule(inst, random_shifts(inst, k))
        for conflict in find_conflicts(inst, sched)[:3]:
            item = analyze_conflict(inst, sched, conflict)
            if item.overlap <= 0:
                continue
            if item.feasible_forward + item.feasible_backward < item.overlap:
                continue
            out = resolve_conflict(inst, sched, item)
            assert schedules_equal(out, construct_schedule(inst, out.start_shift))


class TestLocalSearch:
    def test_conflict_free_input_unchanged(self):
        inst = random_instance(5, n_trips=1)
        sched = uncontrolled_schedule(inst)
        assert schedules_equal(local_search(inst, sched), sched)

    def test_two_trip_conflict_resolved(self):
        inst = overlap_pair()
        out = local_search(inst, uncontrolled_schedule(inst))
        assert out.total_delay == 0.0
        assert validate_schedule(inst, out) == []

    def test_skips_unresolvable(self):
        inst = overlap_pair(stagger2=0.5)
        sched = uncontrolled_schedule(inst)
        out = local_search(inst, sched)
        assert schedules_equal(out, sched)

    def test_never_worse_and_feasible_on_corpus(self):
        for seed in range(40):
            inst = random_instance(seed, congested=True)
            start = uncontrolled_schedule(inst)
            out = local_search(inst, start)
            assert out.total_delay <= start.total_delay + 1e-12
            assert validate_schedule(inst, out) == []
            assert schedules_equal(out, construct_schedule(inst, out.start_shift))


class TestMatheuristic:
    def test_conflict_free_instance_immediate(self):
        inst = random_instance(5, n_trips=1)
        result = run_matheuristic(inst, MatheuristicConfig(time_limit=5.0))
        assert result.status == "optimal"
        assert result.upper_bound == result.lower_bound == 0.0

    def test_without_adapter_degrades_to_local_search(self):
        inst = overlap_pair()
        result = run_matheuristic(inst, MatheuristicConfig(time_limit=5.0, adapter=None))
        baseline = local_search(inst, uncontrolled_schedule(inst))
        assert result.upper_bound == pytest.approx(baseline.total_delay)
        assert result.status in ("optimal", "local-search-only")

    def test_two_trip_certified_optimal(self):
        inst = overlap_pair()
        result = run_matheuristic(
            inst, MatheuristicConfig(time_limit=30.0, adapter=glpk_adapter())
        )
        assert result.status == "optimal"
        assert result.upper_bound == pytest.approx(0.0, abs=1e-9)

    def test_matches_grid_optimum_on_tiny_instances(self):
        for seed in range(8):
            inst = random_instance(seed, n_trips=3, n_arcs=2, congested=True)
            result = run_matheuristic(
                inst, MatheuristicConfig(time_limit=20.0, adapter=glpk_adapter())
            )
            best, _ = grid_optimum(inst, step=0.25)
            assert result.upper_bound <= best + 1e-6
            assert result.upper_bound >= result.lower_bound - 1e-9

    def test_traces_are_monotone(self):
        inst = random_instance(3, congested=True)
        result = run_matheuristic(
            inst, MatheuristicConfig(time_limit=10.0, adapter=glpk_adapter())
        )
        ubs = [row.ub for row in result.rows]
        lbs = [row.lb for row in result.rows]
        assert ubs == sorted(ubs, reverse=True) or all(
            a >= b - 1e-9 for a, b in zip(ubs, ubs[1:])
        )
        assert all(a <= b + 1e-9 for a, b in zip(lbs, lbs[1:]))

    def test_shifts_reevaluate_to_upper_bound(self):
        inst = random_instance(9, congested=True)
        result = run_matheuristic(
            inst, MatheuristicConfig(time_limit=10.0, adapter=glpk_adapter())
        )
        again = construct_schedule(inst, result.shifts)
        assert again.total_delay == pytest.approx(result.upper_bound)
        assert validate_schedule(inst, result.schedule) == []

    def test_broken_adapter_degrades(self):
        from stagger.solver import SolverAdapter

        bad = SolverAdapter(executable="/no/such/solver", args=["{model}", "{solution}"])
        # local search leaves a gap on this seed, so the adapter gets invoked
        inst = random_instance(0, congested=True)
        result = run_matheuristic(inst, MatheuristicConfig(time_limit=5.0, adapter=bad))
        assert result.status == "degraded"
        assert validate_schedule(inst, result.schedule) == []

    def test_iteration_log_csv(self, tmp_path):
        inst = overlap_pair()
        result = run_matheuristic(inst, MatheuristicConfig(time_limit=5.0))
        path = tmp_path / "iters.csv"
        write_iteration_log(result.rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,phase,ub_s,lb_s,elapsed_s"
        assert len(lines) == len(result.rows) + 1

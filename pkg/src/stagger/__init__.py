"""Staggered trip-departure scheduling to reduce fleet congestion delay.

Shift departures of fixed-route trips within per-trip budgets so that the
total travel delay induced by arc congestion is minimized. The package
provides the schedule evaluation engine, bound-tightening preprocessing,
an exact MILP formulation solved through external solvers, a local-search
matheuristic, a rolling-horizon mode, and a road-network toolkit.
"""

from .model import (
    Arc,
    DEFAULT_EPSILON,
    Instance,
    InstanceError,
    Schedule,
    TIME_TOL,
    TravelTimeFunction,
    Trip,
    Violation,
    instance_from_dict,
    load_instance,
    validate_schedule,
)
from .engine import (
    Conflict,
    StaggerError,
    construct_schedule,
    find_conflicts,
    total_delay,
    uncontrolled_schedule,
)
from .preprocess import (
    ConflictingSet,
    InfeasibleWindows,
    ReducedInstance,
    TimeWindows,
    build_reduced_instance,
    compute_conflicting_sets,
    compute_time_windows,
    preprocess,
)
from .milp import (
    MilpModel,
    SolveOutcome,
    WindowConflict,
    build_model,
    decode_solution,
    encode_warmstart,
    solve,
)
from .solver import SolverAdapter, SolverError, SolverResult, glpk_adapter, load_adapter
from .heuristic import (
    ConflictWorkItem,
    MatheuristicConfig,
    MatheuristicResult,
    analyze_conflict,
    local_search,
    resolve_conflict,
    run_matheuristic,
)
from .online import EpochPlan, OnlineResult, plan_epochs, run_online
from .report import RunReport, build_report

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "Conflict",
    "ConflictWorkItem",
    "ConflictingSet",
    "DEFAULT_EPSILON",
    "EpochPlan",
    "InfeasibleWindows",
    "Instance",
    "InstanceError",
    "MatheuristicConfig",
    "MatheuristicResult",
    "MilpModel",
    "OnlineResult",
    "ReducedInstance",
    "RunReport",
    "Schedule",
    "SolveOutcome",
    "SolverAdapter",
    "SolverError",
    "SolverResult",
    "StaggerError",
    "TIME_TOL",
    "TimeWindows",
    "TravelTimeFunction",
    "Trip",
    "Violation",
    "WindowConflict",
    "analyze_conflict",
    "build_model",
    "build_reduced_instance",
    "build_report",
    "compute_conflicting_sets",
    "compute_time_windows",
    "construct_schedule",
    "decode_solution",
    "encode_warmstart",
    "find_conflicts",
    "glpk_adapter",
    "instance_from_dict",
    "load_adapter",
    "load_instance",
    "local_search",
    "plan_epochs",
    "preprocess",
    "resolve_conflict",
    "run_matheuristic",
    "run_online",
    "solve",
    "total_delay",
    "uncontrolled_schedule",
    "validate_schedule",
]

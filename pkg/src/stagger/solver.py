"""External MILP solver access.

Solvers are driven through a subprocess contract: the model goes out as an
LP file, the solver writes a solution file of ``name value`` lines (plus
``status`` / ``objective`` / ``bound`` headers), and an adapter descriptor
says how to invoke the executable. The bundled reference adapter shells
out to ``python -m stagger.glpk_worker``, which solves via GLPK.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path


class SolverError(RuntimeError):
    pass


@dataclass
class SolverResult:
    status: str  # optimal | feasible | infeasible | timeout | error
    objective: float | None = None
    bound: float | None = None
    values: dict[str, float] = field(default_factory=dict)


def parse_solution_file(path: str | Path) -> SolverResult:
    status = "error"
    objective = bound = None
    values: dict[str, float] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "status":
            status = rest.strip()
        elif key == "objective":
            objective = float(rest)
        elif key == "bound":
            bound = float(rest)
        else:
            values[key] = float(rest)
    return SolverResult(status=status, objective=objective, bound=bound, values=values)


@dataclass
class SolverAdapter:
    """Invocation descriptor for a solver executable.

    ``args`` may reference the placeholders {model}, {solution},
    {time_limit_s}, and {warm}; warm-related arguments are dropped when no
    warmstart file is supplied.
    """

    executable: str
    args: list[str]
    capabilities: frozenset[str] = frozenset({"time-limit"})
    name: str = "external"

    def solve(
        self,
        lp_path: str | Path,
        time_limit: float,
        warm_path: str | Path | None = None,
    ) -> SolverResult:
        lp_path = Path(lp_path)
        sol_path = lp_path.with_suffix(".sol")
        mapping = {
            "model": str(lp_path),
            "solution": str(sol_path),
            "time_limit_s": repr(float(time_limit)),
            "warm": str(warm_path) if warm_path else "",
        }
        argv = [self.executable]
        skip_next = False
        for template in self.args:
            if skip_next:
                skip_next = False
                continue
            if "{warm}" in template and warm_path is None:
                # drop the flag that precedes a warm placeholder, if any
                if argv and argv[-1].startswith("-"):
                    argv.pop()
                continue
            argv.append(template.format(**mapping))
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=max(time_limit * 3, time_limit + 30),
            )
        except FileNotFoundError as exc:
            raise SolverError(f"solver executable not found: {self.executable}") from exc
        except subprocess.TimeoutExpired as exc:
            raise SolverError(f"solver run exceeded the hard timeout: {exc}") from exc
        if proc.returncode != 0:
            raise SolverError(
                f"solver exited with {proc.returncode}: {proc.stderr.strip()[:500]}"
            )
        if not sol_path.exists():
            raise SolverError(f"solver wrote no solution file at {sol_path}")
        return parse_solution_file(sol_path)


def glpk_adapter() -> SolverAdapter:
    """The bundled GLPK-backed reference adapter."""
    return SolverAdapter(
        executable=sys.executable,
        args=[
            "-m",
            "stagger.glpk_worker",
            "{model}",
            "{solution}",
            "--time-limit",
            "{time_limit_s}",
        ],
        capabilities=frozenset({"time-limit"}),
        name="glpk",
    )


def load_adapter(path: str | Path) -> SolverAdapter:
    """Read an adapter descriptor from a JSON config file."""
    data = json.loads(Path(path).read_text())
    args = data.get("args")
    if isinstance(args, str):
        args = shlex.split(args)
    return SolverAdapter(
        executable=data["executable"],
        args=args or [],
        capabilities=frozenset(data.get("capabilities", ["time-limit"])),
        name=data.get("name", "external"),
    )

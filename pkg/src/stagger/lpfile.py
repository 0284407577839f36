"""Minimal LP-format (CPLEX text dialect) writer and parser.

Covers the subset this package emits: a minimization objective, linear
rows with <=, >=, or =, a Bounds section, and a Binary section. Emitted
files re-parse to a structurally identical model, which the tests pin.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path


class LpFormatError(ValueError):
    pass


@dataclass
class Constraint:
    name: str
    coeffs: dict[str, float]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    binary: bool = False


@dataclass
class LinearModel:
    name: str = "model"
    objective: dict[str, float] = field(default_factory=dict)
    constant: float = 0.0
    constraints: list[Constraint] = field(default_factory=list)
    variables: dict[str, Variable] = field(default_factory=dict)

    def var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False) -> str:
        if name in self.variables:
            raise LpFormatError(f"duplicate variable {name}")
        self.variables[name] = Variable(name, lb, ub, binary)
        return name

    def add(self, name: str, coeffs: dict[str, float], sense: str, rhs: float):
        if sense not in ("<=", ">=", "="):
            raise LpFormatError(f"bad sense {sense!r}")
        for v in coeffs:
            if v not in self.variables:
                raise LpFormatError(f"constraint {name} uses unknown variable {v}")
        self.constraints.append(Constraint(name, dict(coeffs), sense, rhs))

    def structurally_equal(self, other: "LinearModel", tol: float = 0.0) -> bool:
        def canon_obj(m):
            return {k: v for k, v in sorted(m.objective.items()) if v != 0.0}

        if canon_obj(self) != canon_obj(other):
            return False
        if set(self.variables) != set(other.variables):
            return False
        for name, v in self.variables.items():
            w = other.variables[name]
            if (v.lb, v.ub, v.binary) != (w.lb, w.ub, w.binary):
                return False
        if len(self.constraints) != len(other.constraints):
            return False
        for c, d in zip(self.constraints, other.constraints):
            if (c.name, c.sense, c.rhs) != (d.name, d.sense, d.rhs):
                return False
            if {k: v for k, v in c.coeffs.items() if v != 0.0} != {
                k: v for k, v in d.coeffs.items() if v != 0.0
            }:
                return False
        return True


def _num(x: float) -> str:
    # repr round-trips doubles exactly, which the re-parse test relies on
    return repr(float(x))


def _terms(coeffs: dict[str, float]) -> str:
    parts = []
    for var in sorted(coeffs):
        coef = coeffs[var]
        if coef == 0.0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        if parts or sign == "-":
            parts.append(f"{sign} {_num(mag)} {var}")
        else:
            parts.append(f"{_num(mag)} {var}")
    return " ".join(parts)


def write_lp(model: LinearModel, path: str | Path):
    lines = [f"\\ {model.name}", "Minimize"]
    obj = _terms(model.objective).strip()
    lines.append(f" obj: {obj}" if obj else " obj:")
    lines.append("Subject To")
    for c in model.constraints:
        sense = {"<=": "<=", ">=": ">=", "=": "="}[c.sense]
        lines.append(f" {c.name}: {_terms(c.coeffs)} {sense} {_num(c.rhs)}")
    lines.append("Bounds")
    for name in sorted(model.variables):
        v = model.variables[name]
        if v.binary:
            # restricted binaries (fixed by preprocessing) keep their bounds
            if (v.lb, v.ub) != (0.0, 1.0):
                lines.append(f" {_num(v.lb)} <= {name} <= {_num(v.ub)}")
            continue
        if v.ub == math.inf:
            if v.lb == 0.0:
                continue
            lines.append(f" {name} >= {_num(v.lb)}")
        else:
            lines.append(f" {_num(v.lb)} <= {name} <= {_num(v.ub)}")
    binaries = sorted(n for n, v in model.variables.items() if v.binary)
    if binaries:
        lines.append("Binary")
        for name in binaries:
            lines.append(f" {name}")
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")


_SECTION = re.compile(
    r"^(minimize|maximize|subject to|st|s\.t\.|bounds|binary|binaries|general|end)$",
    re.IGNORECASE,
)
_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _parse_terms(tokens: list[str], where: str) -> dict[str, float]:
    coeffs: dict[str, float] = {}
    sign = 1.0
    pending: float | None = None
    for tok in tokens:
        if tok == "+":
            continue
        if tok == "-":
            sign = -sign
            continue
        try:
            value = float(tok)
        except ValueError:
            value = None
        if value is not None:
            if pending is not None:
                raise LpFormatError(f"{where}: consecutive numbers")
            pending = value
        else:
            if not _NAME.match(tok):
                raise LpFormatError(f"{where}: bad token {tok!r}")
            coef = sign * (1.0 if pending is None else pending)
            coeffs[tok] = coeffs.get(tok, 0.0) + coef
            sign, pending = 1.0, None
    if pending is not None:
        raise LpFormatError(f"{where}: dangling coefficient")
    return coeffs


def parse_lp(path: str | Path) -> LinearModel:
    model = LinearModel()
    section = None
    explicit_bounds: set[str] = set()
    text = Path(path).read_text()
    first = text.splitlines()[0] if text else ""
    if first.startswith("\\"):
        model.name = first[1:].strip() or "model"

    # stitch logical statements: a row runs until the next row label/section
    lines = []
    for raw in text.splitlines():
        line = raw.split("\\")[0].rstrip()
        if line.strip():
            lines.append(line)

    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if _SECTION.match(stripped):
            section = stripped.lower()
            if section in ("st", "s.t.", "subject to"):
                section = "subject to"
            if section in ("binaries",):
                section = "binary"
            if section == "maximize":
                raise LpFormatError("only minimization models are supported")
            i += 1
            continue
        if section is None:
            raise LpFormatError(f"statement before any section: {stripped!r}")
        if section == "minimize":
            if ":" in stripped:
                stripped = stripped.split(":", 1)[1]
            coeffs = _parse_terms(stripped.split(), "objective")
            for k, v in coeffs.items():
                model.objective[k] = model.objective.get(k, 0.0) + v
        elif section == "subject to":
            if ":" not in stripped:
                raise LpFormatError(f"unnamed constraint: {stripped!r}")
            name, body = stripped.split(":", 1)
            m = re.search(r"(<=|>=|=)", body)
            if not m:
                raise LpFormatError(f"constraint {name}: no relational operator")
            lhs, sense, rhs = body[: m.start()], m.group(1), body[m.end():]
            model.constraints.append(
                Constraint(
                    name.strip(),
                    _parse_terms(lhs.split(), f"constraint {name}"),
                    sense,
                    float(rhs),
                )
            )
        elif section == "bounds":
            toks = stripped.split()
            if "<=" in toks:
                # lb <= name <= ub
                if len(toks) == 5 and toks[1] == "<=" and toks[3] == "<=":
                    lb, name, ub = float(toks[0]), toks[2], float(toks[4])
                    model.variables.setdefault(name, Variable(name)).lb = lb
                    model.variables[name].ub = ub
                    explicit_bounds.add(name)
                elif len(toks) == 3 and toks[1] == "<=":
                    name, ub = toks[0], float(toks[2])
                    model.variables.setdefault(name, Variable(name)).ub = ub
                    explicit_bounds.add(name)
                else:
                    raise LpFormatError(f"bad bound: {stripped!r}")
            elif ">=" in toks:
                if len(toks) != 3:
                    raise LpFormatError(f"bad bound: {stripped!r}")
                name, lb = toks[0], float(toks[2])
                model.variables.setdefault(name, Variable(name)).lb = lb
                explicit_bounds.add(name)
            elif len(toks) == 2 and toks[1].lower() == "free":
                name = toks[0]
                model.variables.setdefault(name, Variable(name)).lb = -math.inf
                explicit_bounds.add(name)
            else:
                raise LpFormatError(f"bad bound: {stripped!r}")
        elif section == "binary":
            for name in stripped.split():
                var = model.variables.setdefault(name, Variable(name))
                var.binary = True
                if name not in explicit_bounds:
                    var.lb, var.ub = 0.0, 1.0
        elif section == "general":
            raise LpFormatError("general integers are not used by this package")
        elif section == "end":
            pass
        i += 1

    # register variables that only appear in rows or the objective
    for c in model.constraints:
        for name in c.coeffs:
            model.variables.setdefault(name, Variable(name))
    for name in model.objective:
        model.variables.setdefault(name, Variable(name))
    return model

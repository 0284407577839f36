"""Subprocess entry point solving an LP-format MILP with GLPK.

Usage: python -m stagger.glpk_worker MODEL.lp SOLUTION.sol [--time-limit S]

Writes a solution file of ``status``/``objective`` headers followed by
``name value`` lines, the format the subprocess adapter parses.
"""

from __future__ import annotations

import argparse
import math
import sys

from .lpfile import parse_lp


def _solve(model, time_limit: float):
    import numpy as np
    from cvxopt import glpk, matrix, spmatrix

    names = sorted(model.variables)
    index = {n: i for i, n in enumerate(names)}
    n = len(names)
    if n == 0:
        return "optimal", 0.0, {}

    c = np.zeros(n)
    for name, coef in model.objective.items():
        c[index[name]] = coef

    g_i, g_j, g_v, h = [], [], [], []
    a_i, a_j, a_v, b = [], [], [], []

    def add_ineq(coeffs, rhs):
        row = len(h)
        for name, coef in coeffs.items():
            if coef != 0.0:
                g_i.append(row)
                g_j.append(index[name])
                g_v.append(coef)
        h.append(rhs)

    for con in model.constraints:
        if con.sense == "<=":
            add_ineq(con.coeffs, con.rhs)
        elif con.sense == ">=":
            add_ineq({k: -v for k, v in con.coeffs.items()}, -con.rhs)
        else:
            row = len(b)
            for name, coef in con.coeffs.items():
                if coef != 0.0:
                    a_i.append(row)
                    a_j.append(index[name])
                    a_v.append(coef)
            b.append(con.rhs)

    binaries = set()
    for name, var in model.variables.items():
        j = index[name]
        if var.binary:
            binaries.add(j)
        if var.ub != math.inf and not var.binary:
            add_ineq({name: 1.0}, var.ub)
        if var.lb != -math.inf and not (var.binary and var.lb == 0.0):
            add_ineq({name: -1.0}, -var.lb)
        if var.binary and var.ub < 1.0:
            add_ineq({name: 1.0}, var.ub)

    if not h:  # GLPK requires at least one inequality row
        add_ineq({names[0]: 0.0}, 0.0)
        g_i.append(0)
        g_j.append(0)
        g_v.append(0.0)

    G = spmatrix(g_v, g_i, g_j, (len(h), n)) if g_v else spmatrix(
        [0.0], [0], [0], (len(h), n)
    )
    A = spmatrix(a_v, a_i, a_j, (len(b), n)) if b else None
    bb = matrix(b) if b else None

    glpk.options["msg_lev"] = "GLP_MSG_OFF"
    glpk.options["tm_lim"] = max(int(time_limit * 1000), 1)
    status, x = glpk.ilp(matrix(c), G, matrix(h), A, bb, set(), binaries)

    if x is None:
        if "infeasible" in status:
            return "infeasible", None, {}
        return "timeout", None, {}
    values = {name: float(x[index[name]]) for name in names}
    objective = float(sum(c[i] * x[i] for i in range(n)))
    mapped = "optimal" if status == "optimal" else "feasible"
    return mapped, objective, values


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stagger.glpk_worker")
    parser.add_argument("model")
    parser.add_argument("solution")
    parser.add_argument("--time-limit", type=float, default=300.0)
    args = parser.parse_args(argv)

    model = parse_lp(args.model)
    status, objective, values = _solve(model, args.time_limit)

    with open(args.solution, "w") as fh:
        fh.write(f"status {status}\n")
        if objective is not None:
            fh.write(f"objective {objective!r}\n")
            if status == "optimal":
                fh.write(f"bound {objective!r}\n")
        for name in sorted(values):
            fh.write(f"{name} {values[name]!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

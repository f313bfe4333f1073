"""Linear / mixed-integer constraint systems, solving, and checking.

The system type is solver-agnostic; `solve` dispatches on the backend named
by the FARKAS_SOLVER environment variable (only "scipy" is implemented,
using HiGHS through scipy.optimize).  Strict inequalities are first-class
relations here: the solver sees them with an additive margin `eps_strict`,
while `check_assignment` evaluates the strict original.

Indicator links (binary = 0 forces a continuous variable to 0) are not
supported natively by HiGHS through scipy; `solve` handles them with a
combinatorial cut loop that is exact whenever feasibility is monotone in
the binary support (true for all systems built in this package: enabling
more states only relaxes the constraints).
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .errors import BackendUnavailable, ModelError
from .model import Num, is_exact

EPS_STRICT = 1e-9
# minimum strict-inequality margin accepted from the LP backend; anything
# smaller is indistinguishable from the solver's own feasibility tolerance
STRICT_MARGIN_MIN = 1e-7

RELATIONS = ("<=", ">=", "==", "<", ">")


@dataclass(frozen=True)
class Variable:
    name: str
    lb: Optional[Num] = 0
    ub: Optional[Num] = None
    binary: bool = False


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: Mapping[str, Num]
    rel: str
    rhs: Num


@dataclass
class LinConstraintSystem:
    variables: Dict[str, Variable] = field(default_factory=dict)
    constraints: List[Constraint] = field(default_factory=list)
    objective: Optional[Tuple[str, Mapping[str, Num]]] = None
    indicators: List[Tuple[str, str]] = field(default_factory=list)

    def add_variable(self, name: str, lb: Optional[Num] = 0, ub: Optional[Num] = None, binary: bool = False) -> str:
        if name in self.variables:
            raise ModelError("duplicate variable %r" % name)
        self.variables[name] = Variable(name, lb, ub, binary)
        return name

    def add_constraint(self, name: str, coeffs: Mapping[str, Num], rel: str, rhs: Num) -> None:
        if rel not in RELATIONS:
            raise ModelError("unknown relation %r" % rel)
        for var in coeffs:
            if var not in self.variables:
                raise ModelError("constraint %r uses undeclared variable %r" % (name, var))
        self.constraints.append(Constraint(name, dict(coeffs), rel, rhs))

    def add_indicator(self, binary: str, continuous: str) -> None:
        if binary not in self.variables or continuous not in self.variables:
            raise ModelError("indicator on undeclared variables")
        if not self.variables[binary].binary:
            raise ModelError("indicator trigger %r is not binary" % binary)
        self.indicators.append((binary, continuous))

    def set_objective(self, sense: str, coeffs: Mapping[str, Num]) -> None:
        if sense not in ("min", "max"):
            raise ModelError("objective sense must be min or max")
        self.objective = (sense, dict(coeffs))

    @property
    def has_binaries(self) -> bool:
        return any(v.binary for v in self.variables.values())

    # -- debugging aid -----------------------------------------------------

    def dump_lp(self) -> str:
        """Human-readable LP-format-style text of the system."""
        lines = []
        if self.objective:
            sense, coeffs = self.objective
            lines.append("%simize" % sense)
            lines.append("  obj: " + _linear_text(coeffs))
        lines.append("subject to")
        for c in self.constraints:
            lines.append("  %s: %s %s %s" % (c.name, _linear_text(c.coeffs), c.rel, c.rhs))
        for binary, cont in self.indicators:
            lines.append("  indicator: %s = 0 -> %s = 0" % (binary, cont))
        lines.append("bounds")
        for v in self.variables.values():
            lb = "-inf" if v.lb is None else str(v.lb)
            ub = "+inf" if v.ub is None else str(v.ub)
            kind = " binary" if v.binary else ""
            lines.append("  %s <= %s <= %s%s" % (lb, v.name, ub, kind))
        return "\n".join(lines) + "\n"


def _linear_text(coeffs: Mapping[str, Num]) -> str:
    if not coeffs:
        return "0"
    return " + ".join("%s %s" % (v, name) for name, v in coeffs.items())


@dataclass(frozen=True)
class SolveOutcome:
    status: str  # "feasible" | "infeasible" | "unknown"
    assignment: Optional[Dict[str, float]] = None
    objective_value: Optional[float] = None
    reason: Optional[str] = None
    incumbent: Optional[Dict[str, float]] = None

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


# ---------------------------------------------------------------------------
# Solving


def solve(
    system: LinConstraintSystem,
    time_limit: Optional[float] = None,
    eps_strict: float = EPS_STRICT,
) -> SolveOutcome:
    backend = os.environ.get("FARKAS_SOLVER", "scipy")
    if backend != "scipy":
        raise BackendUnavailable("unknown solver backend %r" % backend)
    if system.indicators:
        return _solve_with_indicators(system, time_limit, eps_strict)
    return _solve_scipy(system, time_limit, eps_strict)


def _matrices(system: LinConstraintSystem, eps_strict: float):
    order = list(system.variables)
    idx = {name: i for i, name in enumerate(order)}
    n = len(order)
    a_ub, b_ub, a_eq, b_eq, strict_rows = [], [], [], [], []
    for c in system.constraints:
        row = np.zeros(n)
        for name, v in c.coeffs.items():
            row[idx[name]] += float(v)
        rhs = float(c.rhs)
        if c.rel == "==":
            a_eq.append(row)
            b_eq.append(rhs)
        elif c.rel in ("<=", "<"):
            if c.rel == "<":
                strict_rows.append(len(a_ub))
            a_ub.append(row)
            b_ub.append(rhs - (eps_strict if c.rel == "<" else 0.0))
        else:
            if c.rel == ">":
                strict_rows.append(len(a_ub))
            a_ub.append(-row)
            b_ub.append(-(rhs + (eps_strict if c.rel == ">" else 0.0)))
    bounds = [
        (
            None if v.lb is None else float(v.lb),
            None if v.ub is None else float(v.ub),
        )
        for v in system.variables.values()
    ]
    c_vec = np.zeros(n)
    sense = 1.0
    if system.objective:
        obj_sense, coeffs = system.objective
        sense = 1.0 if obj_sense == "min" else -1.0
        for name, v in coeffs.items():
            c_vec[idx[name]] = sense * float(v)
    return order, a_ub, b_ub, a_eq, b_eq, bounds, c_vec, sense, strict_rows


def _solve_scipy(system, time_limit, eps_strict) -> SolveOutcome:
    from scipy.optimize import linprog, milp
    from scipy.optimize import LinearConstraint, Bounds

    order, a_ub, b_ub, a_eq, b_eq, bounds, c_vec, sense, strict_rows = _matrices(
        system, eps_strict
    )

    if not system.has_binaries:
        options = {}
        if time_limit is not None:
            options["time_limit"] = time_limit
        # feasibility problems with strict rows: maximize the smallest
        # strict margin t, so a degenerate boundary point (within the
        # solver's own feasibility tolerance) is not mistaken for a
        # solution of the strict system
        margin = bool(strict_rows) and not system.objective
        a_ub_arr = np.array(a_ub) if a_ub else None
        a_eq_arr = np.array(a_eq) if a_eq else None
        if margin:
            t_col = np.zeros((len(a_ub), 1))
            for i in strict_rows:
                t_col[i, 0] = 1.0
            a_ub_arr = np.hstack([a_ub_arr, t_col])
            if a_eq_arr is not None:
                a_eq_arr = np.hstack([a_eq_arr, np.zeros((len(a_eq), 1))])
            bounds = bounds + [(0.0, 1.0)]
            c_vec = np.concatenate([c_vec, [-1.0]])  # maximize t
        res = linprog(
            c_vec,
            A_ub=a_ub_arr,
            b_ub=np.array(b_ub) if a_ub else None,
            A_eq=a_eq_arr,
            b_eq=np.array(b_eq) if a_eq else None,
            bounds=bounds,
            method="highs",
            options=options,
        )
        if res.status == 0:
            if margin and res.x[-1] < STRICT_MARGIN_MIN:
                return SolveOutcome("infeasible")
            assignment = dict(zip(order, res.x))
            value = sense * res.fun if system.objective else None
            return SolveOutcome("feasible", assignment, value)
        if res.status == 2:
            return SolveOutcome("infeasible")
        return SolveOutcome("unknown", reason=res.message)

    constraints = []
    if a_ub:
        constraints.append(LinearConstraint(np.array(a_ub), -np.inf, np.array(b_ub)))
    if a_eq:
        constraints.append(LinearConstraint(np.array(a_eq), np.array(b_eq), np.array(b_eq)))
    integrality = np.array(
        [1 if v.binary else 0 for v in system.variables.values()]
    )
    lb = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    ub = np.array([np.inf if b[1] is None else b[1] for b in bounds])
    options = {}
    if time_limit is not None:
        options["time_limit"] = time_limit
    res = milp(
        c_vec,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options=options,
    )
    if res.status == 0:
        assignment = dict(zip(order, res.x))
        value = sense * res.fun if system.objective else None
        return SolveOutcome("feasible", assignment, value)
    if res.status == 2:
        return SolveOutcome("infeasible")
    incumbent = dict(zip(order, res.x)) if res.x is not None else None
    return SolveOutcome("unknown", reason=res.message, incumbent=incumbent)


def _solve_with_indicators(system, time_limit, eps_strict) -> SolveOutcome:
    """Exact cut loop for indicator-linked MILPs.

    Solves the relaxation without indicator links, then tests the selected
    binary support by fixing the linked continuous variables of disabled
    binaries to zero.  An infeasible support is excluded with the cut
    "enable at least one of the disabled binaries", which is valid because
    the continuous part only relaxes as more binaries are enabled.
    """
    deadline = None if time_limit is None else time.monotonic() + time_limit
    linked: Dict[str, List[str]] = {}
    for binary, cont in system.indicators:
        linked.setdefault(binary, []).append(cont)

    master = LinConstraintSystem(
        dict(system.variables), list(system.constraints), system.objective, []
    )
    cut_no = 0
    while True:
        remaining = None if deadline is None else max(0.01, deadline - time.monotonic())
        outcome = _solve_scipy(master, remaining, eps_strict)
        if outcome.status == "infeasible":
            return SolveOutcome("infeasible")
        if outcome.status != "feasible":
            return SolveOutcome("unknown", reason=outcome.reason or "cut loop timeout")
        disabled = [
            b for b in linked if outcome.assignment[b] < 0.5
        ]
        sub = LinConstraintSystem(
            dict(system.variables), list(system.constraints), None, []
        )
        fixed = {}
        for b, conts in linked.items():
            val = 0.0 if b in disabled else 1.0
            fixed[b] = val
            sub.variables[b] = Variable(b, val, val, False)
            if b in disabled:
                for cont in conts:
                    old = sub.variables[cont]
                    sub.variables[cont] = Variable(cont, 0, 0, False)
        # fix the remaining binaries too, so the subproblem is a pure LP
        for name, var in list(sub.variables.items()):
            if var.binary:
                val = round(outcome.assignment[name])
                sub.variables[name] = Variable(name, val, val, False)
        remaining = None if deadline is None else max(0.01, deadline - time.monotonic())
        sub_outcome = _solve_scipy(sub, remaining, eps_strict)
        if sub_outcome.status == "feasible":
            assignment = dict(sub_outcome.assignment)
            for b, val in fixed.items():
                assignment[b] = val
            value = None
            if system.objective:
                sense, coeffs = system.objective
                value = sum(float(v) * assignment[name] for name, v in coeffs.items())
            return SolveOutcome("feasible", assignment, value)
        if sub_outcome.status != "infeasible":
            return SolveOutcome("unknown", reason=sub_outcome.reason)
        if not disabled:
            # support is everything and still infeasible: no solution at all
            return SolveOutcome("infeasible")
        cut_no += 1
        master.add_constraint(
            "cut%d" % cut_no, {b: 1 for b in disabled}, ">=", 1
        )
        if deadline is not None and time.monotonic() > deadline:
            return SolveOutcome("unknown", reason="cut loop timeout")


# ---------------------------------------------------------------------------
# Checking


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    violations: Tuple[Tuple[str, float], ...]


def check_assignment(
    system: LinConstraintSystem,
    assignment: Mapping[str, Num],
    mode: str = "tol",
    eps: float = 1e-6,
) -> CheckResult:
    """Re-evaluate every constraint (and bound) under `assignment`.

    mode "exact" uses rational arithmetic with zero slack (all involved
    quantities are converted with Fraction, so float inputs are taken at
    their exact binary value); mode "tol" allows additive slack `eps` on
    non-strict relations.  Strict relations are always evaluated strictly.
    """
    if mode not in ("exact", "tol"):
        raise ModelError("unknown check mode %r" % mode)
    exact = mode == "exact"
    slack = 0 if exact else eps

    def num(v):
        return Fraction(v) if exact else float(v)

    violations: List[Tuple[str, float]] = []
    for name in system.variables:
        if name not in assignment:
            violations.append(("missing:%s" % name, math.inf))
    if violations:
        return CheckResult(False, tuple(violations))

    for var in system.variables.values():
        val = num(assignment[var.name])
        if var.lb is not None and val < num(var.lb) - slack:
            violations.append(("bound:%s" % var.name, float(num(var.lb) - val)))
        if var.ub is not None and val > num(var.ub) + slack:
            violations.append(("bound:%s" % var.name, float(val - num(var.ub))))
        if var.binary and val not in (0, 1) and abs(float(val) - round(float(val))) > slack:
            violations.append(("integrality:%s" % var.name, float(val)))

    for c in system.constraints:
        lhs = sum((num(v) * num(assignment[name]) for name, v in c.coeffs.items()), num(0))
        rhs = num(c.rhs)
        residual = float(lhs - rhs)
        if c.rel == "==" and abs(lhs - rhs) > slack:
            violations.append((c.name, abs(residual)))
        elif c.rel == "<=" and lhs > rhs + slack:
            violations.append((c.name, residual))
        elif c.rel == ">=" and lhs < rhs - slack:
            violations.append((c.name, -residual))
        elif c.rel == "<" and not lhs < rhs:
            violations.append((c.name, residual))
        elif c.rel == ">" and not lhs > rhs:
            violations.append((c.name, -residual))

    for binary, cont in system.indicators:
        if num(assignment[binary]) < num(1) / 2 and abs(num(assignment[cont])) > slack:
            violations.append(("indicator:%s:%s" % (binary, cont), float(num(assignment[cont]))))

    return CheckResult(not violations, tuple(violations))

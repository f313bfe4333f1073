"""Farkas certificates for the four reachability query types.

All systems live on a reachability-form MDP with matrices
A((s,a),s') = [s=s'] - P(s,a,s') and T((s,a),i) = P(s,a,G_i):

  (exists, and), lower bounds:   y >= 0,  A'y <= d_in,  T'y >= bound
  (exists, and), upper bounds:   y >= 0,  A'y >= d_in,  T'y <= bound   (EC-free)
  (forall, or),  upper bounds:   x free, z >= 0, Ax >= Tz, d_in'x <= bound'z
  (forall, or),  lower bounds:   mirrored inequalities                 (EC-free)
  (exists, or):  one single-objective y-system per disjunct
  (forall, and): one single-objective x-system per conjunct

z != 0 is realized as sum(z) = 1 for non-strict bounds (any nonzero z can
be rescaled) and relaxed to sum(z) <= 1 for strict bounds.  The decision
procedure searches a certificate for the query and, failing that, for its
negation; an infeasibility answer is only trusted when the dual system is
feasible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import lp
from .errors import (
    EcFreeRequired,
    ModelError,
    QueryError,
    ShapeMismatch,
    SolverUnknown,
)
from .graph import is_ec_free
from .model import (
    Num,
    Pair,
    ReachabilityFormMdp,
    ReachMatrices,
    build_reach_matrices,
    format_number,
    parse_number,
)
from .query import is_lower, is_strict

_OP_COMPLEMENT = {">=": "<", "<": ">=", ">": "<=", "<=": ">"}


@dataclass(frozen=True)
class ReachQuery:
    """A multi-objective reachability query over the MDP's objective targets."""

    quantifier: str
    connective: str
    ops: Tuple[str, ...]
    bounds: Tuple[Num, ...]

    def __post_init__(self):
        if self.quantifier not in ("exists", "forall"):
            raise QueryError("unknown quantifier %r" % self.quantifier)
        if self.connective not in ("and", "or"):
            raise QueryError("unknown connective %r" % self.connective)
        if len(self.ops) != len(self.bounds) or not self.ops:
            raise QueryError("ops/bounds length mismatch")

    @property
    def k(self) -> int:
        return len(self.ops)

    @property
    def type_tag(self) -> str:
        return "%s-%s" % (self.quantifier, self.connective)

    def negated(self) -> "ReachQuery":
        return ReachQuery(
            "forall" if self.quantifier == "exists" else "exists",
            "or" if self.connective == "and" else "and",
            tuple(_OP_COMPLEMENT[op] for op in self.ops),
            self.bounds,
        )


@dataclass(frozen=True)
class ReachCertificate:
    variant: str  # "exists-and" | "forall-or" | "exists-or" | "forall-and"
    vectors: Mapping[str, Mapping[str, Num]]
    query: ReachQuery
    mode: str = "double"
    disjunct: Optional[int] = None


def pair_key(pair: Pair) -> str:
    return "%s %s" % pair


def _delta_in(rfm: ReachabilityFormMdp) -> Mapping[str, Num]:
    for s in rfm.inner.initial:
        if s in rfm.targets:
            raise ModelError("initial mass on a target state is unsupported")
    return rfm.inner.initial


def _require_ec_free(rfm: ReachabilityFormMdp, why: str) -> None:
    if not is_ec_free(rfm):
        raise EcFreeRequired(why)


# ---------------------------------------------------------------------------
# System builders


def build_exists_and(
    rfm: ReachabilityFormMdp,
    bounds: Sequence[Num],
    ops: Sequence[str],
    matrices: ReachMatrices = None,
) -> lp.LinConstraintSystem:
    """The y-polyhedron for (exists, and) queries.

    Lower-bounded ops give A'y <= d_in; upper-bounded ops flip the flow
    inequalities and require an EC-free MDP.
    """
    directions = {is_lower(op) for op in ops}
    if len(directions) != 1:
        raise QueryError("mixed bound directions in an (exists, and) query")
    lower = directions.pop()
    if not lower:
        _require_ec_free(rfm, "(exists, and) upper bounds need an EC-free MDP")
    mat = matrices or build_reach_matrices(rfm)
    delta = _delta_in(rfm)

    system = lp.LinConstraintSystem()
    for pair in mat.pairs:
        system.add_variable("y[%s]" % pair_key(pair), lb=0)
    # columns of A', i.e. one flow-balance row per non-target state
    cols: Dict[str, Dict[str, Num]] = {s: {} for s in mat.columns}
    for pair in mat.pairs:
        var = "y[%s]" % pair_key(pair)
        for s, v in mat.a_rows[pair].items():
            cols[s][var] = v
    for s in mat.columns:
        system.add_constraint(
            "flow[%s]" % s, cols[s], "<=" if lower else ">=", delta.get(s, 0)
        )
    for i, (op, bound) in enumerate(zip(ops, bounds)):
        coeffs = {
            "y[%s]" % pair_key(pair): mat.t_rows[pair][i]
            for pair in mat.pairs
            if mat.t_rows[pair][i] != 0
        }
        system.add_constraint("objective[%d]" % i, coeffs, op, bound)
    return system


def build_forall_or(
    rfm: ReachabilityFormMdp,
    bounds: Sequence[Num],
    ops: Sequence[str],
    matrices: ReachMatrices = None,
) -> lp.LinConstraintSystem:
    """The (x, z)-polyhedron for (forall, or) queries.

    All predicates must share one comparison operator (the certificate
    condition has a single relation).  Lower bounds require EC-freeness.
    Non-strict ops carry sum(z) = 1, strict ones sum(z) <= 1.
    """
    if len(set(ops)) != 1:
        raise QueryError("(forall, or) queries need a uniform comparison operator")
    op = ops[0]
    if is_lower(op):
        _require_ec_free(rfm, "(forall, or) lower bounds need an EC-free MDP")
    mat = matrices or build_reach_matrices(rfm)
    delta = _delta_in(rfm)
    k = len(bounds)

    system = lp.LinConstraintSystem()
    for s in mat.columns:
        system.add_variable("x[%s]" % s, lb=None)
    for i in range(k):
        system.add_variable("z[%d]" % i, lb=0)

    row_rel = "<=" if is_lower(op) else ">="
    for pair in mat.pairs:
        coeffs: Dict[str, Num] = {
            "x[%s]" % s: v for s, v in mat.a_rows[pair].items()
        }
        for i in range(k):
            t = mat.t_rows[pair][i]
            if t != 0:
                coeffs["z[%d]" % i] = coeffs.get("z[%d]" % i, 0) - t
        system.add_constraint("row[%s]" % pair_key(pair), coeffs, row_rel, 0)

    init_coeffs: Dict[str, Num] = {}
    for s, p in delta.items():
        init_coeffs["x[%s]" % s] = p
    for i, bound in enumerate(bounds):
        if bound != 0:
            init_coeffs["z[%d]" % i] = init_coeffs.get("z[%d]" % i, 0) - bound
    system.add_constraint("initial", init_coeffs, op, 0)

    znorm = {("z[%d]" % i): 1 for i in range(k)}
    system.add_constraint("znorm", znorm, "<=" if is_strict(op) else "==", 1)
    return system


def build_single_exists(
    rfm: ReachabilityFormMdp,
    objective: int,
    bound: Num,
    op: str,
    matrices: ReachMatrices = None,
) -> lp.LinConstraintSystem:
    """Single-objective y-system used for the disjuncts of (exists, or)."""
    if not is_lower(op):
        _require_ec_free(rfm, "single-objective upper bounds need an EC-free MDP")
    mat = matrices or build_reach_matrices(rfm)
    delta = _delta_in(rfm)
    system = lp.LinConstraintSystem()
    for pair in mat.pairs:
        system.add_variable("y[%s]" % pair_key(pair), lb=0)
    cols: Dict[str, Dict[str, Num]] = {s: {} for s in mat.columns}
    for pair in mat.pairs:
        var = "y[%s]" % pair_key(pair)
        for s, v in mat.a_rows[pair].items():
            cols[s][var] = v
    rel = "<=" if is_lower(op) else ">="
    for s in mat.columns:
        system.add_constraint("flow[%s]" % s, cols[s], rel, delta.get(s, 0))
    coeffs = {
        "y[%s]" % pair_key(pair): mat.t_rows[pair][objective]
        for pair in mat.pairs
        if mat.t_rows[pair][objective] != 0
    }
    system.add_constraint("objective[%d]" % objective, coeffs, op, bound)
    return system


def build_single_forall(
    rfm: ReachabilityFormMdp,
    objective: int,
    bound: Num,
    op: str,
    matrices: ReachMatrices = None,
) -> lp.LinConstraintSystem:
    """Single-objective x-system used for the conjuncts of (forall, and)."""
    if is_lower(op):
        _require_ec_free(rfm, "(forall, and) lower bounds need an EC-free MDP")
    mat = matrices or build_reach_matrices(rfm)
    delta = _delta_in(rfm)
    system = lp.LinConstraintSystem()
    for s in mat.columns:
        system.add_variable("x%d[%s]" % (objective, s), lb=None)
    rel = "<=" if is_lower(op) else ">="
    for pair in mat.pairs:
        coeffs = {
            "x%d[%s]" % (objective, s): v for s, v in mat.a_rows[pair].items()
        }
        system.add_constraint(
            "row[%s]" % pair_key(pair), coeffs, rel, mat.t_rows[pair][objective]
        )
    init_coeffs = {("x%d[%s]" % (objective, s)): p for s, p in delta.items()}
    system.add_constraint("initial", init_coeffs, op, bound)
    return system


def build_exists_or(rfm, bounds, ops, matrices=None) -> List[lp.LinConstraintSystem]:
    mat = matrices or build_reach_matrices(rfm)
    return [
        build_single_exists(rfm, i, bounds[i], ops[i], mat) for i in range(len(bounds))
    ]


def build_forall_and(rfm, bounds, ops, matrices=None) -> List[lp.LinConstraintSystem]:
    mat = matrices or build_reach_matrices(rfm)
    return [
        build_single_forall(rfm, i, bounds[i], ops[i], mat) for i in range(len(bounds))
    ]


# ---------------------------------------------------------------------------
# Extraction of certificate vectors from solver assignments


def _extract(prefix: str, assignment: Mapping[str, float]) -> Dict[str, float]:
    out = {}
    marker = prefix + "["
    for name, value in assignment.items():
        if name.startswith(marker) and name.endswith("]"):
            out[name[len(marker):-1]] = value
    return out


def _search(
    rfm: ReachabilityFormMdp,
    rq: ReachQuery,
    matrices: ReachMatrices,
    time_limit: Optional[float],
):
    """Try to certify `rq`; returns (certificate, status).

    status is "feasible", "infeasible" or "unknown"; "infeasible" means the
    solver claimed every relevant system infeasible.
    """
    tag = rq.type_tag
    try:
        if tag == "exists-and":
            system = build_exists_and(rfm, rq.bounds, rq.ops, matrices)
            outcome = lp.solve(system, time_limit)
            if outcome.feasible:
                cert = ReachCertificate(
                    "exists-and", {"y": _extract("y", outcome.assignment)}, rq
                )
                return cert, "feasible"
            return None, outcome.status
        if tag == "forall-or":
            system = build_forall_or(rfm, rq.bounds, rq.ops, matrices)
            outcome = lp.solve(system, time_limit)
            if outcome.feasible:
                cert = ReachCertificate(
                    "forall-or",
                    {
                        "x": _extract("x", outcome.assignment),
                        "z": _extract("z", outcome.assignment),
                    },
                    rq,
                )
                return cert, "feasible"
            return None, outcome.status
        if tag == "exists-or":
            worst = "infeasible"
            for i in range(rq.k):
                try:
                    system = build_single_exists(
                        rfm, i, rq.bounds[i], rq.ops[i], matrices
                    )
                except EcFreeRequired:
                    worst = "unknown"
                    continue
                outcome = lp.solve(system, time_limit)
                if outcome.feasible:
                    cert = ReachCertificate(
                        "exists-or",
                        {"y": _extract("y", outcome.assignment)},
                        rq,
                        disjunct=i,
                    )
                    return cert, "feasible"
                if outcome.status == "unknown":
                    worst = "unknown"
            return None, worst
        # forall-and
        vectors: Dict[str, Mapping[str, float]] = {}
        for i in range(rq.k):
            system = build_single_forall(rfm, i, rq.bounds[i], rq.ops[i], matrices)
            outcome = lp.solve(system, time_limit)
            if not outcome.feasible:
                return None, outcome.status
            vectors["x%d" % i] = _extract("x%d" % i, outcome.assignment)
        return ReachCertificate("forall-and", vectors, rq), "feasible"
    except (EcFreeRequired, QueryError):
        return None, "unknown"


@dataclass(frozen=True)
class CertifyResult:
    verdict: str  # "holds" | "violated"
    certificate: ReachCertificate
    certified_negation: bool


def certify(
    rfm: ReachabilityFormMdp, rq: ReachQuery, time_limit: Optional[float] = None
) -> CertifyResult:
    """Decide `rq`, returning a checkable certificate for it or its negation.

    A "violated" verdict is only produced with an explicit certificate of
    the negated query, so solver infeasibility claims are always
    cross-checked against the dual feasibility.
    """
    if rq.k != rfm.k:
        raise ShapeMismatch(
            "query has %d objectives, model has %d target sets" % (rq.k, rfm.k)
        )
    matrices = build_reach_matrices(rfm)
    cert, status = _search(rfm, rq, matrices, time_limit)
    if cert is not None:
        return CertifyResult("holds", cert, False)
    dual_cert, _dual_status = _search(rfm, rq.negated(), matrices, time_limit)
    if dual_cert is not None:
        return CertifyResult("violated", dual_cert, True)
    raise SolverUnknown(
        "no certificate found for the query (%s) or its negation" % status
    )


# ---------------------------------------------------------------------------
# Checking


def _systems_for(rfm, cert: ReachCertificate, matrices=None):
    rq = cert.query
    tag = rq.type_tag
    if cert.variant != tag:
        raise ShapeMismatch("certificate variant %r does not match query %s" % (cert.variant, tag))
    if tag == "exists-and":
        return [build_exists_and(rfm, rq.bounds, rq.ops, matrices)]
    if tag == "forall-or":
        return [build_forall_or(rfm, rq.bounds, rq.ops, matrices)]
    if tag == "exists-or":
        if cert.disjunct is None or not 0 <= cert.disjunct < rq.k:
            raise ShapeMismatch("exists-or certificate needs a valid disjunct index")
        return [
            build_single_exists(
                rfm, cert.disjunct, rq.bounds[cert.disjunct], rq.ops[cert.disjunct], matrices
            )
        ]
    return [
        build_single_forall(rfm, i, rq.bounds[i], rq.ops[i], matrices)
        for i in range(rq.k)
    ]


def _assignment_for(system: lp.LinConstraintSystem, cert: ReachCertificate):
    assignment = {}
    for prefix, vec in cert.vectors.items():
        for key, value in vec.items():
            assignment["%s[%s]" % (prefix, key)] = value
    extra = set(assignment) - set(system.variables)
    relevant = {k for k in system.variables}
    # vectors of other conjunct systems are allowed to be absent here
    return {k: v for k, v in assignment.items() if k in relevant}, extra


def check_certificate(
    rfm: ReachabilityFormMdp,
    cert: ReachCertificate,
    mode: str = "tol",
    eps: float = 1e-6,
) -> lp.CheckResult:
    """Re-evaluate the defining inequalities of `cert`; no optimization."""
    if cert.query.k != rfm.k:
        raise ShapeMismatch("certificate/model objective count mismatch")
    matrices = build_reach_matrices(rfm)
    all_violations = []
    known = set()
    for system in _systems_for(rfm, cert, matrices):
        known |= set(system.variables)
        assignment, _extra = _assignment_for(system, cert)
        result = lp.check_assignment(system, assignment, mode, eps)
        all_violations.extend(result.violations)
    for prefix, vec in cert.vectors.items():
        for key in vec:
            if "%s[%s]" % (prefix, key) not in known:
                raise ShapeMismatch("certificate entry %s[%s] matches no variable" % (prefix, key))
    return lp.CheckResult(not all_violations, tuple(all_violations))


# ---------------------------------------------------------------------------
# Certificate files


def certificate_to_json(cert: ReachCertificate, tolerance: float = 1e-6) -> str:
    def enc(v):
        return format_number(v) if not isinstance(v, float) else v

    doc = {
        "variant": cert.variant,
        "mode": cert.mode,
        "tolerance": tolerance,
        "queryEcho": {
            "quantifier": cert.query.quantifier,
            "connective": cert.query.connective,
            "ops": list(cert.query.ops),
            "bounds": [enc(b) for b in cert.query.bounds],
        },
        "vectors": {
            name: {key: enc(val) for key, val in vec.items()}
            for name, vec in cert.vectors.items()
        },
    }
    if cert.disjunct is not None:
        doc["disjunct"] = cert.disjunct
    return json.dumps(doc, indent=2) + "\n"


def certificate_from_json(text: str) -> ReachCertificate:
    doc = json.loads(text)

    def dec(v):
        return parse_number(v) if isinstance(v, str) else v

    echo = doc["queryEcho"]
    rq = ReachQuery(
        echo["quantifier"],
        echo["connective"],
        tuple(echo["ops"]),
        tuple(dec(b) for b in echo["bounds"]),
    )
    vectors = {
        name: {key: dec(val) for key, val in vec.items()}
        for name, vec in doc["vectors"].items()
    }
    return ReachCertificate(
        doc["variant"], vectors, rq, doc.get("mode", "double"), doc.get("disjunct")
    )

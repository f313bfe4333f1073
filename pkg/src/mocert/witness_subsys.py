"""Minimal witnessing subsystems: certificate supports, the
support-minimizing MILPs, and the quotient-to-original transfer.

The MILPs attach one binary per (non-target) state to the certificate
polyhedron of a lower-bounded (exists, and) or (forall, or) query:

  reach (forall, or):   x >= 0 and x(s) <= gamma(s) * k
  reach (exists, and):  gamma(s) = 0  =>  y(s, a) = 0   (flows unbounded)
  mp (exists, and):     x(s,a) <= gamma(s) (recurrent flow mass is <= 1)
                        and indicator links for the transient flow y
  mp (forall, or):      g(s) - z'r_min <= gamma(s) * (max r_max - min r_min)

The initial state and all targets are always kept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Mapping, Optional, Union

from . import lp, mp_cert, reach_cert
from .errors import ModelError, QueryError, SolverUnknown
from .model import (
    Mdp,
    Num,
    ReachabilityFormMdp,
    induced_reach_subsystem,
    induced_subsystem,
)
from .product import ReducedQuery, split_product_state
from .query import Query, is_lower
from .reach_cert import ReachCertificate, ReachQuery, pair_key

EPS_SUPP = 1e-9


def state_support(
    cert: Union[ReachCertificate, mp_cert.MpCertificate],
    mdp: Optional[Mdp] = None,
    tol: float = EPS_SUPP,
) -> FrozenSet[str]:
    """States carrying the certificate, per variant.

    exists-and:  states with positive total y-flow;
    forall-or:   states with positive x (negative entries count as zero);
    mp-exists:   states with positive x- or y-flow;
    mp-forall:   states whose gain exceeds the floor z'r_min (needs `mdp`).
    """
    variant = cert.variant
    if variant in ("exists-and", "exists-or"):
        return _flow_support([cert.vectors["y"]], tol)
    if variant == "forall-or":
        return frozenset(s for s, v in cert.vectors["x"].items() if v > tol)
    if variant == "mp-exists-and":
        return _flow_support([cert.vectors["x"], cert.vectors["y"]], tol)
    if variant == "mp-forall-or":
        if mdp is None:
            raise QueryError("mp-forall support needs the model for r_min")
        rewards = mp_cert.effective_rewards(mdp, cert.query.predicates)
        r_min = mp_cert.build_r_min(rewards)
        z = cert.vectors["z"]
        floor = sum(float(z.get(str(i), 0)) * float(r_min[i]) for i in range(len(r_min)))
        return frozenset(
            s for s, g in cert.vectors["g"].items() if float(g) - floor > tol
        )
    raise QueryError("no state support for certificate variant %r" % variant)


def _flow_support(vectors, tol) -> FrozenSet[str]:
    totals: Dict[str, float] = {}
    for vec in vectors:
        for key, value in vec.items():
            s = key.rsplit(" ", 1)[0]
            totals[s] = totals.get(s, 0.0) + abs(float(value))
    return frozenset(s for s, v in totals.items() if v > tol)


@dataclass(frozen=True)
class WitnessSubsystem:
    level: str  # "quotient" | "product" | "original"
    kept: FrozenSet[str]
    subsystem: object  # ReachabilityFormMdp (reach) or Subsystem (mp)
    certificate: object
    optimality: str  # "proven" | "incumbent" | "heuristic"
    objective_value: Optional[float] = None


# ---------------------------------------------------------------------------
# MILPs


def _gamma_vars(system: lp.LinConstraintSystem, states, fixed_one, weights):
    for s in states:
        if s in fixed_one:
            system.add_variable("gamma[%s]" % s, lb=1, ub=1, binary=True)
        else:
            system.add_variable("gamma[%s]" % s, lb=0, ub=1, binary=True)
    system.set_objective(
        "min",
        {("gamma[%s]" % s): (1 if weights is None else weights.get(s, 1)) for s in states},
    )


def _reachable_targets(rfm: ReachabilityFormMdp, kept) -> FrozenSet[str]:
    """Targets reachable from the initial states through `kept` states only
    (unreachable sinks would be dead weight in the subsystem)."""
    frontier = [s for s in rfm.inner.initial if s in kept]
    seen = set(frontier)
    hit = set()
    while frontier:
        s = frontier.pop()
        for a in rfm.inner.actions(s):
            for t in rfm.inner.successors(s, a):
                if t in seen:
                    continue
                seen.add(t)
                if t in rfm.targets:
                    hit.add(t)
                elif t in kept:
                    frontier.append(t)
    return frozenset(hit)


def milp_min_subsystem_reach(
    rfm: ReachabilityFormMdp,
    rq: ReachQuery,
    weights: Optional[Mapping[str, Num]] = None,
    time_limit: Optional[float] = None,
    level: str = "original",
) -> WitnessSubsystem:
    """Support-minimizing MILP for lower-bounded reach queries."""
    if not all(is_lower(op) for op in rq.ops):
        raise QueryError("witnessing subsystems cover lower-bounded queries")
    tag = rq.type_tag
    fixed = set(s for s in rfm.inner.initial) | set()
    states = rfm.nontarget_states

    if tag == "exists-and":
        system = reach_cert.build_exists_and(rfm, rq.bounds, rq.ops)
        _gamma_vars(system, states, fixed, weights)
        for pair in rfm.enabled:
            system.add_indicator("gamma[%s]" % pair[0], "y[%s]" % pair_key(pair))
    elif tag == "forall-or":
        system = reach_cert.build_forall_or(rfm, rq.bounds, rq.ops)
        for s in states:
            # Fig-3(b) form: x is non-negative and capped by gamma * k
            system.variables["x[%s]" % s] = lp.Variable("x[%s]" % s, 0, None)
        _gamma_vars(system, states, fixed, weights)
        for s in states:
            system.add_constraint(
                "cap[%s]" % s, {"x[%s]" % s: 1, "gamma[%s]" % s: -rq.k}, "<=", 0
            )
    else:
        raise QueryError("no subsystem MILP for query type %s" % tag)

    outcome = lp.solve(system, time_limit)
    if outcome.status == "infeasible":
        raise SolverUnknown("query has no witnessing subsystem (not certifiable)")
    if not outcome.feasible:
        raise SolverUnknown(outcome.reason or "MILP gave no incumbent")

    gamma_kept = {
        s for s in states if outcome.assignment["gamma[%s]" % s] > 0.5
    } | set(rfm.inner.initial)
    kept = frozenset(gamma_kept) | _reachable_targets(rfm, gamma_kept)
    if tag == "exists-and":
        vectors = {"y": reach_cert._extract("y", outcome.assignment)}
    else:
        vectors = {
            "x": reach_cert._extract("x", outcome.assignment),
            "z": reach_cert._extract("z", outcome.assignment),
        }
    cert = ReachCertificate(tag, vectors, rq)
    sub = induced_reach_subsystem(rfm, kept)
    check = reach_cert.certify(sub, rq)
    if check.verdict != "holds":
        raise ModelError("minimized subsystem failed re-certification")
    return WitnessSubsystem(level, kept, sub, cert, "proven", outcome.objective_value)


def milp_min_subsystem_mp(
    mdp: Mdp,
    query: Query,
    weights: Optional[Mapping[str, Num]] = None,
    time_limit: Optional[float] = None,
) -> WitnessSubsystem:
    """Support-minimizing MILP for non-strict mean-payoff queries."""
    tag = mp_cert._canonical_tag(query)
    rewards = mp_cert.effective_rewards(mdp, query.predicates)
    bounds = [p.bound for p in query.predicates]
    fixed = set(mdp.initial)
    states = mdp.states

    if tag == "exists-and":
        system = mp_cert.build_Hmp(mdp, rewards, bounds)
        _gamma_vars(system, states, fixed, weights)
        for pair in mdp.enabled:
            system.add_constraint(
                "cap[%s]" % pair_key(pair),
                {"x[%s]" % pair_key(pair): 1, "gamma[%s]" % pair[0]: -1},
                "<=",
                0,
            )
            system.add_indicator("gamma[%s]" % pair[0], "y[%s]" % pair_key(pair))
    else:
        system = mp_cert.build_Fmp(mdp, rewards, bounds)
        r_min = mp_cert.build_r_min(rewards)
        big_m = float(max(max(vec.values()) for vec in rewards)) - float(min(r_min))
        big_m = max(big_m, 1.0)
        _gamma_vars(system, states, fixed, weights)
        for s in states:
            coeffs: Dict[str, Num] = {"g[%s]" % s: 1, "gamma[%s]" % s: -big_m}
            for i in range(len(r_min)):
                if r_min[i] != 0:
                    coeffs["z[%d]" % i] = coeffs.get("z[%d]" % i, 0) - r_min[i]
            system.add_constraint("cap[%s]" % s, coeffs, "<=", 0)

    outcome = lp.solve(system, time_limit)
    if outcome.status == "infeasible":
        raise SolverUnknown("query has no witnessing subsystem (not certifiable)")
    if not outcome.feasible:
        raise SolverUnknown(outcome.reason or "MILP gave no incumbent")

    kept = frozenset(
        s for s in states if outcome.assignment["gamma[%s]" % s] > 0.5
    ) | set(mdp.initial)
    if tag == "exists-and":
        vectors = {
            "x": mp_cert._extract("x", outcome.assignment),
            "y": mp_cert._extract("y", outcome.assignment),
            "z": mp_cert._extract("z", outcome.assignment),
        }
        cert = mp_cert.MpCertificate("mp-exists-and", vectors, query)
    else:
        vectors = {
            "g": mp_cert._extract("g", outcome.assignment),
            "b": mp_cert._extract("b", outcome.assignment),
            "z": mp_cert._extract("z", outcome.assignment),
        }
        cert = mp_cert.MpCertificate("mp-forall-or", vectors, query)
    sub = induced_subsystem(mdp, kept)
    check = mp_cert.certify_mp(sub.mdp, query)
    if check.verdict != "holds":
        raise ModelError("minimized subsystem failed re-certification")
    return WitnessSubsystem("original", kept, sub, cert, "proven", outcome.objective_value)


# ---------------------------------------------------------------------------
# Support subsystems and quotient transfer


def support_subsystem(
    rfm: ReachabilityFormMdp, cert: ReachCertificate
) -> ReachabilityFormMdp:
    """The subsystem induced by a certificate's support (plus s_in, targets)."""
    kept = state_support(cert) | set(rfm.inner.initial) | rfm.targets
    return induced_reach_subsystem(rfm, kept)


def quotient_weights(reduction: ReducedQuery) -> Dict[str, int]:
    """Weight each quotient state by the original states folded into it,
    so the quotient MILP minimizes the transferred subsystem's size."""
    bases: Dict[str, set] = {}
    for name in reduction.product.mdp.states:
        base, _u, _v = split_product_state(name)
        bases.setdefault(reduction.quotient.iota[name], set()).add(base)
    return {
        s: len(bases.get(s, ())) for s in reduction.quotient.mdp.states
    }


def transfer_subsystem(
    ws: WitnessSubsystem, reduction: ReducedQuery
) -> WitnessSubsystem:
    """Project a quotient-level witness down to the original model (the
    original keeps every state some kept quotient state projects to) and
    re-verify it against the reduced query."""
    if ws.level != "quotient":
        raise QueryError("transfer starts from a quotient-level witness")
    kept_original = set()
    for name in reduction.product.mdp.states:
        if reduction.quotient.iota[name] in ws.kept:
            kept_original.add(split_product_state(name)[0])
    kept_original |= set(reduction.original.initial)
    sub = induced_subsystem(reduction.original, kept_original)

    from .product import reduce_query  # local import to avoid a cycle

    sub_reduction = reduce_query(sub.mdp, reduction.query)
    rq = ReachQuery(
        reduction.query.quantifier,
        reduction.query.connective,
        sub_reduction.ops,
        sub_reduction.bounds,
    )
    check = reach_cert.certify(sub_reduction.rfm, rq)
    if check.verdict != "holds":
        raise ModelError("transferred subsystem failed re-verification")
    return WitnessSubsystem(
        "original", frozenset(kept_original), sub, check.certificate, "heuristic"
    )

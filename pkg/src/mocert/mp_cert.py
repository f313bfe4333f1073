"""Farkas certificates for multi-objective mean-payoff queries.

Two polyhedra are implemented, both on a general MDP (no EC-freeness):

  H (exists, and): x, y >= 0 on E (recurrent/transient flow), z >= 0 on S
    (mass redirected to an implicit worst-reward state), certifying
    "some scheduler gives E[liminf-average r_i] >= bound_i for all i";

  F (forall, or):  gain g and bias b on S, z >= 0 on [k] with sum(z) = 1,
    certifying "every scheduler gives E[limsup-average r_i] >= bound_i
    for some i".

The two systems are duals up to reward negation: H(r, bounds) is
infeasible exactly when the negated query holds, in which case
F(-r, -bounds) is feasible and is emitted as the certificate of the
negation (its bounds are the non-strict relaxation of the strictly
negated query; the strict part follows from H's infeasibility).
Strict mean-payoff bounds themselves are not certifiable here and
raise StrictUnsupported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import lp
from .errors import (
    ModelError,
    QueryError,
    ShapeMismatch,
    SolverUnknown,
    StrictUnsupported,
)
from .graph import mec_decomposition
from .model import Mdp, Num, Pair, format_number, parse_number
from .query import Predicate, Query, negate
from .reach_cert import pair_key

#: tolerance for the x-outside-MECs sanity assertion
FLOW_LOCALITY_TOL = 1e-6


def effective_rewards(mdp: Mdp, preds: Sequence[Predicate]) -> List[Dict[Pair, Num]]:
    """Total reward vectors over all enabled pairs (missing entries are 0),
    negated where the predicate asks for it."""
    out = []
    for p in preds:
        vec = mdp.reward_vector(p.reward)
        sign = -1 if p.negate_reward else 1
        out.append({pair: sign * vec.get(pair, 0) for pair in mdp.enabled})
    return out


def build_r_min(rewards: Sequence[Mapping[Pair, Num]]) -> List[Num]:
    """Per objective, the minimal reward over all enabled pairs."""
    out = []
    for vec in rewards:
        if not vec:
            raise ModelError("empty reward vector")
        out.append(min(vec.values()))
    return out


def build_Hmp(
    mdp: Mdp,
    rewards: Sequence[Mapping[Pair, Num]],
    bounds: Sequence[Num],
) -> lp.LinConstraintSystem:
    """The (exists, and) polyhedron: flow balance, recurrence, objectives."""
    r_min = build_r_min(rewards)
    system = lp.LinConstraintSystem()
    for pair in mdp.enabled:
        system.add_variable("x[%s]" % pair_key(pair), lb=0)
        system.add_variable("y[%s]" % pair_key(pair), lb=0)
    for s in mdp.states:
        system.add_variable("z[%s]" % s, lb=0)

    incoming: Dict[str, Dict[Pair, Num]] = {s: {} for s in mdp.states}
    for pair in mdp.enabled:
        for t, p in mdp.successors(*pair).items():
            incoming[t][pair] = incoming[t].get(pair, 0) + p

    for s in mdp.states:
        balance: Dict[str, Num] = {}
        recurrent: Dict[str, Num] = {}
        for pair, p in incoming[s].items():
            balance["y[%s]" % pair_key(pair)] = p
            recurrent["x[%s]" % pair_key(pair)] = p
        for a in mdp.actions(s):
            yv = "y[%s]" % pair_key((s, a))
            xv = "x[%s]" % pair_key((s, a))
            balance[yv] = balance.get(yv, 0) - 1
            balance[xv] = balance.get(xv, 0) - 1
            recurrent[xv] = recurrent.get(xv, 0) - 1
        balance["z[%s]" % s] = -1
        system.add_constraint("balance[%s]" % s, balance, "==", -mdp.initial.get(s, 0))
        system.add_constraint("recurrent[%s]" % s, recurrent, "==", 0)

    for i, (vec, bound) in enumerate(zip(rewards, bounds)):
        coeffs: Dict[str, Num] = {}
        for pair, r in vec.items():
            if r != 0:
                coeffs["x[%s]" % pair_key(pair)] = r
        if r_min[i] != 0:
            for s in mdp.states:
                coeffs["z[%s]" % s] = r_min[i]
        system.add_constraint("objective[%d]" % i, coeffs, ">=", bound)
    return system


def build_Fmp(
    mdp: Mdp,
    rewards: Sequence[Mapping[Pair, Num]],
    bounds: Sequence[Num],
) -> lp.LinConstraintSystem:
    """The (forall, or) polyhedron: gain/bias rows, floor rows, separation."""
    r_min = build_r_min(rewards)
    s_in = mdp.initial_state
    k = len(rewards)
    system = lp.LinConstraintSystem()
    for s in mdp.states:
        system.add_variable("g[%s]" % s, lb=None)
        system.add_variable("b[%s]" % s, lb=None)
    for i in range(k):
        system.add_variable("z[%d]" % i, lb=0)

    for (s, a) in mdp.enabled:
        dist = mdp.successors(s, a)
        gain: Dict[str, Num] = {"g[%s]" % s: 1}
        for t, p in dist.items():
            gain["g[%s]" % t] = gain.get("g[%s]" % t, 0) - p
        system.add_constraint("gain[%s]" % pair_key((s, a)), gain, "<=", 0)

        bias: Dict[str, Num] = {"g[%s]" % s: 1, "b[%s]" % s: 1}
        for t, p in dist.items():
            bias["b[%s]" % t] = bias.get("b[%s]" % t, 0) - p
        for i in range(k):
            r = rewards[i].get((s, a), 0)
            if r != 0:
                bias["z[%d]" % i] = bias.get("z[%d]" % i, 0) - r
        system.add_constraint("bias[%s]" % pair_key((s, a)), bias, "<=", 0)

    for s in mdp.states:
        floor: Dict[str, Num] = {"g[%s]" % s: 1}
        for i in range(k):
            if r_min[i] != 0:
                floor["z[%d]" % i] = -r_min[i]
        system.add_constraint("floor[%s]" % s, floor, ">=", 0)

    init: Dict[str, Num] = {"g[%s]" % s_in: 1}
    for i, bound in enumerate(bounds):
        if bound != 0:
            init["z[%d]" % i] = init.get("z[%d]" % i, 0) - bound
    system.add_constraint("initial", init, ">=", 0)
    system.add_constraint("znorm", {("z[%d]" % i): 1 for i in range(k)}, "==", 1)
    return system


# ---------------------------------------------------------------------------
# Certifying decision


@dataclass(frozen=True)
class MpCertificate:
    variant: str  # "mp-exists-and" | "mp-forall-or"
    vectors: Mapping[str, Mapping[str, Num]]
    query: Query
    mode: str = "double"


def _canonical_tag(query: Query) -> str:
    if query.is_probability:
        raise QueryError("certify_mp applies to mean-payoff queries")
    tag = query.type_tag
    if len(query.predicates) == 1:
        # with one predicate the connective is irrelevant
        tag = "exists-and" if query.quantifier == "exists" else "forall-or"
    if tag not in ("exists-and", "forall-or"):
        raise QueryError("mean-payoff certificates cover (exists, and) and (forall, or) queries")
    want = "inf" if tag == "exists-and" else "sup"
    for p in query.predicates:
        if p.op != ">=":
            raise StrictUnsupported("strict mean-payoff bounds are not supported")
        if p.variant != want:
            raise QueryError(
                "%s mean-payoff queries need lim%s predicates" % (tag, want)
            )
    return tag


def _check_flow_locality(mdp: Mdp, x: Mapping[str, float]) -> None:
    in_mec = set()
    for mec in mec_decomposition(mdp):
        in_mec |= mec.pairs
    for pair in mdp.enabled:
        if pair not in in_mec and abs(x.get(pair_key(pair), 0)) > FLOW_LOCALITY_TOL:
            raise ModelError(
                "recurrent flow outside all end components at (%s, %s)" % pair
            )


def _extract(prefix: str, assignment: Mapping[str, float]) -> Dict[str, float]:
    marker = prefix + "["
    return {
        name[len(marker):-1]: value
        for name, value in assignment.items()
        if name.startswith(marker) and name.endswith("]")
    }


@dataclass(frozen=True)
class MpCertifyResult:
    verdict: str  # "holds" | "violated"
    certificate: MpCertificate
    certified_negation: bool


def certify_mp(
    mdp: Mdp, query: Query, time_limit: Optional[float] = None
) -> MpCertifyResult:
    """Decide a mean-payoff query with a certificate for it or its negation.

    The negated query has strict bounds; the certificate emitted for it
    covers the non-strict relaxation, the strict excess being witnessed by
    the primal system's infeasibility.
    """
    tag = _canonical_tag(query)
    rewards = effective_rewards(mdp, query.predicates)
    bounds = [p.bound for p in query.predicates]
    neg_query = negate(query)
    neg_relaxed = Query(
        neg_query.quantifier,
        neg_query.connective,
        tuple(
            Predicate(
                "mp",
                ">=",
                p.bound,
                reward=p.reward,
                variant=p.variant,
                negate_reward=p.negate_reward,
            )
            for p in neg_query.predicates
        ),
    )
    neg_rewards = [{pair: -r for pair, r in vec.items()} for vec in rewards]
    neg_bounds = [-b for b in bounds]

    if tag == "exists-and":
        primal = build_Hmp(mdp, rewards, bounds)
        outcome = lp.solve(primal, time_limit)
        if outcome.feasible:
            x = _extract("x", outcome.assignment)
            _check_flow_locality(mdp, x)
            cert = MpCertificate(
                "mp-exists-and",
                {
                    "x": x,
                    "y": _extract("y", outcome.assignment),
                    "z": _extract("z", outcome.assignment),
                },
                query,
            )
            return MpCertifyResult("holds", cert, False)
        if outcome.status != "infeasible":
            raise SolverUnknown(outcome.reason or "solver gave up")
        dual = build_Fmp(mdp, neg_rewards, neg_bounds)
        dual_outcome = lp.solve(dual, time_limit)
        if not dual_outcome.feasible:
            raise SolverUnknown("infeasibility not confirmed by the dual system")
        cert = MpCertificate(
            "mp-forall-or",
            {
                "g": _extract("g", dual_outcome.assignment),
                "b": _extract("b", dual_outcome.assignment),
                "z": _extract("z", dual_outcome.assignment),
            },
            neg_relaxed,
        )
        return MpCertifyResult("violated", cert, True)

    primal = build_Fmp(mdp, rewards, bounds)
    outcome = lp.solve(primal, time_limit)
    if outcome.feasible:
        cert = MpCertificate(
            "mp-forall-or",
            {
                "g": _extract("g", outcome.assignment),
                "b": _extract("b", outcome.assignment),
                "z": _extract("z", outcome.assignment),
            },
            query,
        )
        return MpCertifyResult("holds", cert, False)
    if outcome.status != "infeasible":
        raise SolverUnknown(outcome.reason or "solver gave up")
    dual = build_Hmp(mdp, neg_rewards, neg_bounds)
    dual_outcome = lp.solve(dual, time_limit)
    if not dual_outcome.feasible:
        raise SolverUnknown("infeasibility not confirmed by the dual system")
    x = _extract("x", dual_outcome.assignment)
    _check_flow_locality(mdp, x)
    cert = MpCertificate(
        "mp-exists-and",
        {
            "x": x,
            "y": _extract("y", dual_outcome.assignment),
            "z": _extract("z", dual_outcome.assignment),
        },
        neg_relaxed,
    )
    return MpCertifyResult("violated", cert, True)


# ---------------------------------------------------------------------------
# Checking


def check_mp_certificate(
    mdp: Mdp, cert: MpCertificate, mode: str = "tol", eps: float = 1e-6
) -> lp.CheckResult:
    """Re-evaluate every constraint family of the certificate's polyhedron."""
    rewards = effective_rewards(mdp, cert.query.predicates)
    bounds = [p.bound for p in cert.query.predicates]
    expected_tag = _canonical_tag(cert.query)
    if "mp-" + expected_tag != cert.variant:
        raise ShapeMismatch(
            "certificate variant %r does not match query %s" % (cert.variant, expected_tag)
        )
    if cert.variant == "mp-exists-and":
        system = build_Hmp(mdp, rewards, bounds)
    else:
        system = build_Fmp(mdp, rewards, bounds)
    assignment = {}
    for prefix, vec in cert.vectors.items():
        for key, value in vec.items():
            name = "%s[%s]" % (prefix, key)
            if name not in system.variables:
                raise ShapeMismatch("certificate entry %s matches no variable" % name)
            assignment[name] = value
    return lp.check_assignment(system, assignment, mode, eps)


# ---------------------------------------------------------------------------
# Certificate files (shared schema with the reachability certificates)


def mp_certificate_to_json(cert: MpCertificate, tolerance: float = 1e-6) -> str:
    def enc(v):
        return format_number(v) if not isinstance(v, float) else v

    doc = {
        "variant": cert.variant,
        "mode": cert.mode,
        "tolerance": tolerance,
        "queryEcho": {
            "quantifier": cert.query.quantifier,
            "connective": cert.query.connective,
            "predicates": [
                {
                    "reward": p.reward,
                    "variant": p.variant,
                    "negateReward": p.negate_reward,
                    "op": p.op,
                    "bound": enc(p.bound),
                }
                for p in cert.query.predicates
            ],
        },
        "vectors": {
            name: {key: enc(val) for key, val in vec.items()}
            for name, vec in cert.vectors.items()
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def mp_certificate_from_json(text: str) -> MpCertificate:
    doc = json.loads(text)

    def dec(v):
        return parse_number(v) if isinstance(v, str) else v

    echo = doc["queryEcho"]
    preds = tuple(
        Predicate(
            "mp",
            entry["op"],
            dec(entry["bound"]),
            reward=entry["reward"],
            variant=entry["variant"],
            negate_reward=bool(entry.get("negateReward", False)),
        )
        for entry in echo["predicates"]
    )
    query = Query(echo["quantifier"], echo["connective"], preds)
    vectors = {
        name: {key: dec(val) for key, val in vec.items()}
        for name, vec in doc["vectors"].items()
    }
    return MpCertificate(doc["variant"], vectors, query, doc.get("mode", "double"))

"""Query algebra: predicates, normalization to lower bounds, dualization.

A query is a quantifier (exists/forall), a connective (and/or) and a
non-empty list of predicates that are either all probability predicates
(reach / invariant) or all mean-payoff predicates.

Mean-payoff predicates are kept in a canonical form with op in {>=, >}:
an upper bound on a liminf value is the same predicate as a lower bound on
the limsup value of the negated reward (mp_sup(r) = -mp_inf(-r)), and the
constructor rewrites <=/< accordingly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import FrozenSet, Optional, Tuple

from .errors import QueryError
from .model import Mdp, Num, format_number, parse_number

OPS = ("<", "<=", ">", ">=")

_OP_COMPLEMENT = {">=": "<", "<": ">=", ">": "<=", "<=": ">"}
_OP_MIRROR = {"<": ">", ">": "<", "<=": ">=", ">=": "<="}


def op_holds(value, op: str, bound) -> bool:
    if op == "<":
        return value < bound
    if op == "<=":
        return value <= bound
    if op == ">":
        return value > bound
    return value >= bound


def is_lower(op: str) -> bool:
    return op in (">", ">=")


def is_strict(op: str) -> bool:
    return op in ("<", ">")


@dataclass(frozen=True)
class Predicate:
    """One objective: reach/invariant over a label, or a mean-payoff bound.

    For probability predicates, `complement` means the state set is the
    complement of the label (used by normalization, which turns an upper
    bound on reaching G into a lower bound on staying in S \\ G).
    For mean-payoff predicates, `negate_reward` means the reward vector is
    negated before evaluation.
    """

    kind: str  # "reach" | "invariant" | "mp"
    op: str
    bound: Num
    target: Optional[str] = None
    complement: bool = False
    reward: Optional[str] = None
    variant: Optional[str] = None  # "inf" | "sup"
    negate_reward: bool = False

    def __post_init__(self):
        if self.kind not in ("reach", "invariant", "mp"):
            raise QueryError("unknown predicate kind %r" % self.kind)
        if self.op not in OPS:
            raise QueryError("unknown comparison %r" % self.op)
        if self.kind == "mp":
            if self.reward is None or self.variant not in ("inf", "sup"):
                raise QueryError("mean-payoff predicate needs reward and variant")
            if self.op in ("<", "<="):
                # canonicalize to a lower bound on the mirrored variant
                object.__setattr__(self, "op", _OP_MIRROR[self.op])
                object.__setattr__(self, "bound", -self.bound)
                object.__setattr__(
                    self, "variant", "sup" if self.variant == "inf" else "inf"
                )
                object.__setattr__(self, "negate_reward", not self.negate_reward)
        else:
            if self.target is None:
                raise QueryError("probability predicate needs a target label")
            if not 0 <= self.bound <= 1:
                raise QueryError("probability bound %s outside [0,1]" % self.bound)

    @property
    def is_probability(self) -> bool:
        return self.kind in ("reach", "invariant")


@dataclass(frozen=True)
class Query:
    quantifier: str  # "exists" | "forall"
    connective: str  # "and" | "or"
    predicates: Tuple[Predicate, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.quantifier not in ("exists", "forall"):
            raise QueryError("unknown quantifier %r" % self.quantifier)
        if self.connective not in ("and", "or"):
            raise QueryError("unknown connective %r" % self.connective)
        if not self.predicates:
            raise QueryError("query needs at least one predicate")
        kinds = {p.is_probability for p in self.predicates}
        if len(kinds) > 1:
            raise QueryError("mixing probability and mean-payoff predicates")

    @property
    def is_probability(self) -> bool:
        return self.predicates[0].is_probability

    @property
    def type_tag(self) -> str:
        return "%s-%s" % (self.quantifier, self.connective)


def normalize_lower_bounds(query: Query) -> Query:
    """Rewrite every probability predicate to a lower bound (> or >=).

    Pr(reach G) <= b  becomes  Pr(stay in S\\G) >= 1-b  and vice versa;
    strictness is preserved.  Identity on already lower-bounded predicates.
    """
    if not query.is_probability:
        raise QueryError("normalize_lower_bounds applies to probability queries")
    preds = []
    for p in query.predicates:
        if is_lower(p.op):
            preds.append(p)
        else:
            preds.append(
                replace(
                    p,
                    kind="invariant" if p.kind == "reach" else "reach",
                    complement=not p.complement,
                    op=_OP_MIRROR[p.op],
                    bound=1 - p.bound,
                )
            )
    return replace(query, predicates=tuple(preds))


def negate(query: Query) -> Query:
    """The dual query: quantifier and connective flip, each bound complements.

    Mean-payoff complements are expressed with lower-bound ops by flipping
    the liminf/limsup variant and negating reward and bound.
    """
    preds = []
    for p in query.predicates:
        if p.is_probability:
            preds.append(replace(p, op=_OP_COMPLEMENT[p.op]))
        else:
            preds.append(
                replace(
                    p,
                    op=">" if p.op == ">=" else ">=",
                    bound=-p.bound,
                    variant="sup" if p.variant == "inf" else "inf",
                    negate_reward=not p.negate_reward,
                )
            )
    return Query(
        "forall" if query.quantifier == "exists" else "exists",
        "or" if query.connective == "and" else "and",
        tuple(preds),
    )


def resolve_states(mdp: Mdp, pred: Predicate) -> FrozenSet[str]:
    """The state set a probability predicate talks about."""
    if not pred.is_probability:
        raise QueryError("mean-payoff predicates have no state set")
    base = mdp.label_set(pred.target)
    if pred.complement:
        return frozenset(mdp.states) - base
    return base


# ---------------------------------------------------------------------------
# File format


def _bound_to_json(bound: Num):
    if isinstance(bound, float):
        return bound
    return format_number(Fraction(bound))


def _bound_from_json(value) -> Num:
    if isinstance(value, str):
        return parse_number(value)
    if isinstance(value, bool):
        raise QueryError("bad bound %r" % value)
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        return value
    raise QueryError("bad bound %r" % value)


_KIND_TO_JSON = {"reach": "reach", "invariant": "invariant", "mp": "mean-payoff"}
_KIND_FROM_JSON = {v: k for k, v in _KIND_TO_JSON.items()}
_VARIANT_TO_JSON = {"inf": "liminf", "sup": "limsup"}
_VARIANT_FROM_JSON = {v: k for k, v in _VARIANT_TO_JSON.items()}


def serialize_query(query: Query) -> str:
    preds = []
    for p in query.predicates:
        entry = {"kind": _KIND_TO_JSON[p.kind], "op": p.op, "bound": _bound_to_json(p.bound)}
        if p.is_probability:
            entry["target"] = p.target
            if p.complement:
                entry["complement"] = True
        else:
            entry["reward"] = p.reward
            entry["variant"] = _VARIANT_TO_JSON[p.variant]
            if p.negate_reward:
                entry["negateReward"] = True
        preds.append(entry)
    doc = {
        "quantifier": query.quantifier,
        "connective": query.connective,
        "predicates": preds,
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_query(text: str) -> Query:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QueryError("bad query file: %s" % exc) from exc
    if not isinstance(doc, dict):
        raise QueryError("query file must hold an object")
    try:
        quantifier = doc["quantifier"]
        connective = doc["connective"]
        raw_preds = doc["predicates"]
    except KeyError as exc:
        raise QueryError("query file missing field %s" % exc) from exc
    preds = []
    for entry in raw_preds:
        kind = _KIND_FROM_JSON.get(entry.get("kind"))
        if kind is None:
            raise QueryError("unknown predicate kind %r" % entry.get("kind"))
        common = dict(op=entry.get("op"), bound=_bound_from_json(entry.get("bound")))
        if kind == "mp":
            variant = _VARIANT_FROM_JSON.get(entry.get("variant"))
            if variant is None:
                raise QueryError("unknown variant %r" % entry.get("variant"))
            preds.append(
                Predicate(
                    kind,
                    reward=entry.get("reward"),
                    variant=variant,
                    negate_reward=bool(entry.get("negateReward", False)),
                    **common,
                )
            )
        else:
            preds.append(
                Predicate(
                    kind,
                    target=entry.get("target"),
                    complement=bool(entry.get("complement", False)),
                    **common,
                )
            )
    return Query(quantifier, connective, tuple(preds))

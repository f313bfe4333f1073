"""Product construction tracking visited target/unsafe sets, and the
reduction of a lower-bounded reach/invariant query to a pure reach query
over the sinks of the MEC quotient.

Product states are (base, u, v): u collects the indices of reach objectives
whose target set has been visited, v the indices of invariant objectives
whose safe set has been left.  Both sets are updated with the state being
entered, and the initial state carries the memberships of s_in itself, so
u and v always describe the full prefix including the current state.
States serialize as `base|u-bits|v-bits` with bitmask integers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Sequence, Set, Tuple

from .errors import BlowupLimit, InconsistentMec, ModelError, QueryError
from .graph import Mec, Quotient, mec_decomposition, mec_quotient, is_ec_free
from .model import (
    Mdp,
    Num,
    Pair,
    ReachabilityFormMdp,
    check_reachability_form,
)
from .query import Query, is_lower, normalize_lower_bounds, resolve_states

MAX_TRACKED = 62


def product_state_name(base: str, u: int, v: int) -> str:
    return "%s|%d|%d" % (base, u, v)


def split_product_state(name: str) -> Tuple[str, int, int]:
    base, u, v = name.rsplit("|", 2)
    return base, int(u), int(v)


@dataclass(frozen=True, eq=False)
class Product:
    mdp: Mdp
    k: int
    ell: int
    base_mdp: Mdp


def build_product(
    mdp: Mdp,
    reach_targets: Sequence[FrozenSet[str]],
    safe_sets: Sequence[FrozenSet[str]],
    blowup_cap: int = None,
) -> Product:
    """On-the-fly BFS product of `mdp` with the visited-set tracker.

    Only states reachable from the initial distribution are materialized;
    raises BlowupLimit beyond `blowup_cap` (default 10 * |S| * 2^(k+l)).
    """
    k, ell = len(reach_targets), len(safe_sets)
    if k + ell > MAX_TRACKED:
        raise QueryError("more than %d tracked objectives" % MAX_TRACKED)
    if blowup_cap is None:
        blowup_cap = 10 * len(mdp.states) * (1 << (k + ell))

    def update(s: str, u: int, v: int) -> Tuple[int, int]:
        for i, t in enumerate(reach_targets):
            if s in t:
                u |= 1 << i
        for j, g in enumerate(safe_sets):
            if s not in g:
                v |= 1 << j
        return u, v

    initial: Dict[str, Num] = {}
    frontier: List[Tuple[str, int, int]] = []
    seen: Set[Tuple[str, int, int]] = set()
    for s, p in mdp.initial.items():
        u, v = update(s, 0, 0)
        initial[product_state_name(s, u, v)] = p
        if (s, u, v) not in seen:
            seen.add((s, u, v))
            frontier.append((s, u, v))

    trans: Dict[Pair, Dict[str, Num]] = {}
    order: List[Tuple[str, int, int]] = []
    while frontier:
        s, u, v = frontier.pop(0)
        order.append((s, u, v))
        name = product_state_name(s, u, v)
        for a in mdp.actions(s):
            dist: Dict[str, Num] = {}
            for t, p in mdp.successors(s, a).items():
                tu, tv = update(t, u, v)
                dist[product_state_name(t, tu, tv)] = p
                if (t, tu, tv) not in seen:
                    seen.add((t, tu, tv))
                    if len(seen) > blowup_cap:
                        raise BlowupLimit(
                            "product exceeded %d states" % blowup_cap
                        )
                    frontier.append((t, tu, tv))
            trans[(name, a)] = dist

    states = tuple(product_state_name(*x) for x in order)
    labels = {
        name: frozenset(
            product_state_name(s, u, v) for (s, u, v) in order if s in members
        )
        for name, members in mdp.labels.items()
    }
    product_mdp = Mdp(states, trans, initial, {}, labels)
    return Product(product_mdp, k, ell, mdp)


def classify_mecs(
    product: Product, mecs: Sequence[Mec]
) -> Tuple[List[List[int]], List[List[int]]]:
    """Sort product MECs into the objective lists A_i / B_j.

    A_i holds the indices of MECs whose (shared) u contains reach index i;
    B_j the MECs whose (shared) v does not contain invariant index j.
    """
    a_lists: List[List[int]] = [[] for _ in range(product.k)]
    b_lists: List[List[int]] = [[] for _ in range(product.ell)]
    for idx, mec in enumerate(mecs):
        tracked = {split_product_state(s)[1:] for s in mec.states}
        if len(tracked) != 1:
            raise InconsistentMec(
                "MEC %d has heterogeneous tracking sets %s" % (idx, sorted(tracked))
            )
        (u, v), = tracked
        for i in range(product.k):
            if u & (1 << i):
                a_lists[i].append(idx)
        for j in range(product.ell):
            if not v & (1 << j):
                b_lists[j].append(idx)
    return a_lists, b_lists


@dataclass(frozen=True, eq=False)
class ReducedQuery:
    """A lower-bounded reach query over quotient sinks, with its provenance."""

    original: Mdp
    query: Query  # the normalized query on the original model
    product: Product
    quotient: Quotient
    rfm: ReachabilityFormMdp  # quotient in reachability form, F = all sinks
    targets: Tuple[FrozenSet[str], ...]  # per predicate: subsets of F
    ops: Tuple[str, ...]
    bounds: Tuple[Num, ...]


def reduce_query(mdp: Mdp, query: Query, blowup_cap: int = None) -> ReducedQuery:
    """Fig.-1 upper path: product, quotient, MEC classification.

    Takes a probability query, normalizes it to lower bounds, and returns
    the quotient as a reachability-form MDP whose objective targets are the
    sinks of the suitable MECs.
    """
    if not query.is_probability:
        raise QueryError("reduce_query applies to probability queries")
    query = normalize_lower_bounds(query)

    reach_targets: List[FrozenSet[str]] = []
    safe_sets: List[FrozenSet[str]] = []
    positions: List[Tuple[str, int]] = []  # predicate -> which list, index
    for p in query.predicates:
        assert is_lower(p.op)
        states = resolve_states(mdp, p)
        if p.kind == "reach":
            positions.append(("reach", len(reach_targets)))
            reach_targets.append(states)
        else:
            positions.append(("invariant", len(safe_sets)))
            safe_sets.append(states)

    product = build_product(mdp, reach_targets, safe_sets, blowup_cap)
    quotient = mec_quotient(product.mdp)
    a_lists, b_lists = classify_mecs(product, quotient.mecs)

    targets = []
    for kind, idx in positions:
        pool = a_lists[idx] if kind == "reach" else b_lists[idx]
        targets.append(frozenset(quotient.bottom_state[i] for i in pool))

    rfm = ReachabilityFormMdp(quotient.mdp, quotient.bottoms, tuple(targets))
    if not is_ec_free(rfm):
        raise ModelError("quotient unexpectedly has end components outside F")
    report = check_reachability_form(quotient.mdp, quotient.bottoms)
    if not report.ok:
        raise ModelError("quotient failed the reachability-form check")
    return ReducedQuery(
        mdp,
        query,
        product,
        quotient,
        rfm,
        tuple(targets),
        tuple(p.op for p in query.predicates),
        tuple(p.bound for p in query.predicates),
    )

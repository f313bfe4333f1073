import random

import pytest

from mocert.errors import QueryError
from mocert.model import ReachabilityFormMdp, parse_mdp
from mocert.product import reduce_query
from mocert.query import Predicate, Query
from mocert.reach_cert import ReachCertificate, ReachQuery, certify
from mocert.witness_subsys import (
    milp_min_subsystem_mp,
    milp_min_subsystem_reach,
    quotient_weights,
    state_support,
    support_subsystem,
    transfer_subsystem,
)

from oracles import brute_min_subsystem, random_reach_form


def fig2_reduction(fig2):
    query = Query(
        "forall",
        "or",
        (
            Predicate("reach", ">=", 0.25, target="goal"),
            Predicate("invariant", ">=", 0.25, target="safe"),
        ),
    )
    return reduce_query(fig2, query)


def reduced_rq(red):
    return ReachQuery(red.query.quantifier, red.query.connective, red.ops, red.bounds)


# ---------------------------------------------------------------------------
# Supports


def test_state_support_of_flow():
    query = ReachQuery("exists", "and", (">=",), (0.5,))
    cert = ReachCertificate("exists-and", {"y": {"s0 alpha": 1.0, "s1 beta": 0.0}}, query)
    assert state_support(cert) == frozenset({"s0"})


def test_state_support_of_forall_or():
    query = ReachQuery("forall", "or", (">=",), (0.5,))
    cert = ReachCertificate(
        "forall-or", {"x": {"s0": 0.4, "s1": 1e-12, "s2": -0.3}, "z": {"0": 1.0}}, query
    )
    assert state_support(cert) == frozenset({"s0"})


def test_state_support_mp_forall_floor_is_empty():
    mdp = parse_mdp("@initial s\n@reward r s a 5\ns a s 1")
    from mocert.mp_cert import MpCertificate

    query = Query(
        "forall", "or", (Predicate("mp", ">=", 5, reward="r", variant="sup"),)
    )
    cert = MpCertificate(
        "mp-forall-or", {"g": {"s": 5.0}, "b": {"s": 0.0}, "z": {"0": 1.0}}, query
    )
    assert state_support(cert, mdp) == frozenset()
    with pytest.raises(QueryError):
        state_support(cert)  # needs the model for the floor


def test_support_subsystem_recertifies(m1_rfm):
    rq = ReachQuery("exists", "and", (">=",), (0.7,))
    cert = certify(m1_rfm, rq).certificate
    sub = support_subsystem(m1_rfm, cert)
    assert certify(sub, rq).verdict == "holds"


# ---------------------------------------------------------------------------
# Reach MILPs


def test_full_chain_is_needed():
    chain = parse_mdp(
        "@initial c0\nc0 a c1 1\nc1 a c2 1\nc2 a c3 1\nc3 a c4 1\nc4 a t 1\nt stay t 1"
    )
    rfm = ReachabilityFormMdp(chain, frozenset({"t"}), (frozenset({"t"}),))
    rq = ReachQuery("exists", "and", (">=",), (1,))
    ws = milp_min_subsystem_reach(rfm, rq)
    assert ws.kept == frozenset({"c0", "c1", "c2", "c3", "c4", "t"})
    assert ws.optimality == "proven"
    assert len([s for s in ws.kept if s != "t"]) == brute_min_subsystem(rfm, rq)


def test_trivial_bound_keeps_only_the_initial_state(m1_rfm):
    for rq in (
        ReachQuery("exists", "and", (">=",), (0,)),
        ReachQuery("forall", "or", (">=",), (0,)),
    ):
        ws = milp_min_subsystem_reach(m1_rfm, rq)
        assert set(s for s in ws.kept if s not in m1_rfm.targets) == {"s0"}


def test_upper_bounds_rejected(m1_rfm):
    with pytest.raises(QueryError):
        milp_min_subsystem_reach(m1_rfm, ReachQuery("exists", "and", ("<=",), (0.9,)))


def test_milp_matches_brute_force_on_random_instances():
    rng = random.Random(7)
    done = 0
    while done < 5:
        rfm = random_reach_form(rng, n_states=7, max_actions=2, k=1)
        rq = ReachQuery("exists", "and", (">=",), (0.4,))
        if certify(rfm, rq).verdict != "holds":
            continue
        ws = milp_min_subsystem_reach(rfm, rq)
        kept_free = len([s for s in ws.kept if s not in rfm.targets])
        assert kept_free == brute_min_subsystem(rfm, rq)
        done += 1


# ---------------------------------------------------------------------------
# The running example: quotient-level witness and transfer


def test_fig2_quotient_witness_and_transfer(fig2):
    red = fig2_reduction(fig2)
    rq = reduced_rq(red)
    assert certify(red.rfm, rq).verdict == "holds"

    weights = quotient_weights(red)
    assert weights["s0|0|0"] == 1
    ws = milp_min_subsystem_reach(red.rfm, rq, weights=weights, level="quotient")
    assert ws.kept == frozenset(
        {"s0|0|0", "mec:s1|0|0", "bot:s1|0|0", "mec:s2|1|1", "bot:s2|1|1"}
    )
    assert ws.optimality == "proven"
    assert ws.objective_value == pytest.approx(4.0)

    transferred = transfer_subsystem(ws, red)
    assert transferred.level == "original"
    assert transferred.kept == frozenset({"s0", "s1", "s2"})
    assert transferred.optimality == "heuristic"


def test_transfer_requires_quotient_level(fig2):
    red = fig2_reduction(fig2)
    ws = milp_min_subsystem_reach(red.rfm, reduced_rq(red), level="original")
    with pytest.raises(QueryError):
        transfer_subsystem(ws, red)


# ---------------------------------------------------------------------------
# Mean-payoff MILPs


def test_mp_exists_subsystem_drops_the_useless_loop():
    mdp = parse_mdp(
        "@initial s0\n"
        "@reward r g0 a 0\n@reward r g10 a 10\n"
        "s0 go0 g0 1\ns0 go10 g10 1\n"
        "g0 a g0 1\ng10 a g10 1"
    )
    query = Query(
        "exists", "and", (Predicate("mp", ">=", 10, reward="r", variant="inf"),)
    )
    ws = milp_min_subsystem_mp(mdp, query)
    assert ws.kept == frozenset({"s0", "g10"})
    assert ws.optimality == "proven"


def test_mp_forall_subsystem_recertifies():
    mdp = parse_mdp(
        "@initial s0\n"
        "@reward r s0 go 2\n@reward r g a 5\n"
        "s0 go g 1\ng a g 1"
    )
    query = Query(
        "forall", "or", (Predicate("mp", ">=", 5, reward="r", variant="sup"),)
    )
    ws = milp_min_subsystem_mp(mdp, query)
    assert "s0" in ws.kept and "g" in ws.kept

import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from mocert.errors import BlowupLimit, QueryError
from mocert.graph import mec_decomposition
from mocert.model import parse_mdp
from mocert.product import (
    build_product,
    product_state_name,
    reduce_query,
    split_product_state,
)
from mocert.query import Predicate, Query

from oracles import random_mdp, vi_weighted_reach


def fig2_query():
    return Query(
        "forall",
        "or",
        (
            Predicate("reach", ">=", 0.25, target="goal"),
            Predicate("invariant", ">=", 0.25, target="safe"),
        ),
    )


def test_state_name_round_trip():
    name = product_state_name("s0", 3, 1)
    assert name == "s0|3|1"
    assert split_product_state(name) == ("s0", 3, 1)


def test_trivial_product_is_isomorphic(fig2):
    prod = build_product(fig2, [], [])
    assert sorted(prod.mdp.states) == sorted("%s|0|0" % s for s in fig2.states)
    for (s, a), dist in fig2.trans.items():
        got = prod.mdp.successors("%s|0|0" % s, a)
        assert got == {"%s|0|0" % t: p for t, p in dist.items()}


def test_fig2_product_golden(fig2):
    prod = build_product(fig2, [fig2.label_set("goal")], [fig2.label_set("safe")])
    assert set(prod.mdp.states) == {
        "s0|0|0",
        "s1|0|0",
        "s3|0|1",
        "s4|0|1",
        "s2|1|1",
        "s1|1|1",
    }
    # bits update on the state being entered, not the one being left
    assert prod.mdp.successors("s0|0|0", "b") == {
        "s3|0|1": pytest.approx(0.5),
        "s1|0|0": pytest.approx(0.5),
    }
    assert prod.mdp.successors("s2|1|1", "back") == {"s1|1|1": 1}
    assert prod.mdp.initial == {"s0|0|0": 1}


def test_initial_state_in_target_sets_bit():
    mdp = parse_mdp("@initial g\n@label goal g\ng a g 1")
    prod = build_product(mdp, [mdp.label_set("goal")], [])
    assert set(prod.mdp.states) == {"g|1|0"}
    assert prod.mdp.initial == {"g|1|0": 1}


def test_blowup_cap():
    mdp = parse_mdp(
        "@initial s0\n@label goal s1\ns0 a s1 1\ns1 a s2 1\ns2 a s0 1"
    )
    with pytest.raises(BlowupLimit):
        build_product(mdp, [mdp.label_set("goal")], [], blowup_cap=2)


def test_product_labels_projected(fig2):
    prod = build_product(fig2, [fig2.label_set("goal")], [fig2.label_set("safe")])
    assert prod.mdp.label_set("goal") == frozenset({"s2|1|1"})
    assert prod.mdp.label_set("safe") == frozenset({"s0|0|0", "s1|0|0", "s1|1|1"})


# ---------------------------------------------------------------------------
# reduce_query: the full upper pipeline


def test_reduce_fig2_golden(fig2):
    red = reduce_query(fig2, fig2_query())
    assert len(red.rfm.inner.states) == 7
    assert red.bounds == (0.25, 0.25)
    assert red.ops == (">=", ">=")
    # goal objective: only the MEC that has seen the goal counts
    assert red.targets[0] == frozenset({"bot:s2|1|1"})
    # safe objective: only the MEC that never left the safe region
    assert red.targets[1] == frozenset({"bot:s1|0|0"})
    assert red.rfm.targets == frozenset(
        {"bot:s2|1|1", "bot:s1|0|0", "bot:s3|0|1"}
    )


def test_reduce_rejects_mp_queries(m1):
    q = Query("exists", "and", (Predicate("mp", ">=", 0, reward="r", variant="inf"),))
    with pytest.raises(QueryError):
        reduce_query(m1, q)


def test_reduce_normalizes_upper_bounds(m1):
    q = Query("exists", "and", (Predicate("reach", "<=", 0.75, target="goal"),))
    red = reduce_query(m1, q)
    assert red.ops == (">=",)
    assert red.bounds == (0.25,)


def _max_reach(mdp, goal):
    """Max Pr(eventually goal) by value iteration directly on the model."""
    values = {s: (1.0 if s in goal else 0.0) for s in mdp.states}
    for _ in range(100000):
        delta = 0.0
        for s in mdp.states:
            if s in goal:
                continue
            best = max(
                sum(float(p) * values[t] for t, p in mdp.successors(s, a).items())
                for a in mdp.actions(s)
            )
            delta = max(delta, abs(best - values[s]))
            values[s] = best
        if delta < 1e-13:
            break
    return sum(float(p) * values[s] for s, p in mdp.initial.items())


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10_000))
def test_reduction_preserves_max_reach_probability(seed):
    """Optimal Pr(◇goal) equals the optimal probability of absorbing in the
    suitable quotient sinks of the reduced model (tolerance 1e-9)."""
    rng = random.Random(seed)
    mdp = random_mdp(rng, n_states=5, max_actions=2)
    goal = frozenset(rng.sample(mdp.states, 2))
    mdp = replace(mdp, labels={"goal": goal})
    q = Query("exists", "and", (Predicate("reach", ">=", 0.5, target="goal"),))
    red = reduce_query(mdp, q)
    reduced_value = vi_weighted_reach(
        red.rfm, {t: 1.0 for t in red.targets[0]}, maximize=True
    )
    assert reduced_value == pytest.approx(_max_reach(mdp, goal), abs=1e-9)

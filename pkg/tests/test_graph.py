import random

import pytest
from hypothesis import given, settings, strategies as st

from mocert.graph import TAU, is_ec_free, mec_decomposition, mec_quotient
from mocert.model import Mdp, ReachabilityFormMdp, parse_mdp
from mocert.product import build_product

from oracles import chain_absorption_value, md_schedulers, random_mdp


def test_acyclic_mdp_has_no_mecs():
    mdp = parse_mdp("@initial s0\ns0 a s1 1\ns1 a s2 1\ns2 a s2 1")
    mecs = mec_decomposition(mdp)
    # only the absorbing end state forms a MEC
    assert [sorted(m.states) for m in mecs] == [["s2"]]


def test_dag_without_loops_has_none():
    mdp = Mdp(("x", "y"), {("x", "a"): {"y": 1}, ("y", "a"): {"x": 1}}, {"x": 1})
    # x<->y is one MEC spanning both states
    mecs = mec_decomposition(mdp)
    assert len(mecs) == 1
    assert mecs[0].states == frozenset({"x", "y"})


def test_two_disjoint_cycles():
    mdp = parse_mdp(
        "@initial s0\n"
        "s0 go1 a0 1\ns0 go2 b0 1\n"
        "a0 a a1 1\na1 a a0 1\n"
        "b0 a b1 1\nb1 a b0 1"
    )
    mecs = mec_decomposition(mdp)
    assert sorted(sorted(m.states) for m in mecs) == [["a0", "a1"], ["b0", "b1"]]
    # exit-free cycles keep all their pairs
    for m in mecs:
        assert len(m.pairs) == 2


def test_mec_excludes_leaving_actions(fig2):
    mecs = mec_decomposition(fig2)
    by_states = {frozenset(m.states): m for m in mecs}
    loop = by_states[frozenset({"s1", "s2"})]
    # c enters the MEC-internal cycle s1<->s2 but d/a leave {s3,s4}
    cycle = by_states[frozenset({"s3", "s4"})]
    assert ("s3", "d") not in cycle.pairs and ("s4", "a") not in cycle.pairs
    assert ("s1", "c") in loop.pairs and ("s2", "back") in loop.pairs


def test_fig2_product_has_three_mecs(fig2):
    prod = build_product(
        fig2,
        [fig2.label_set("goal")],
        [fig2.label_set("safe")],
    )
    assert len(mec_decomposition(prod.mdp)) == 3


def test_is_ec_free(m1_rfm):
    assert is_ec_free(m1_rfm)
    looped = parse_mdp("@initial s0\ns0 a s0 1\ns0 b t 1\nt stay t 1")
    rfm = ReachabilityFormMdp(looped, frozenset({"t"}), (frozenset({"t"}),))
    assert not is_ec_free(rfm)


# ---------------------------------------------------------------------------
# MEC quotient


def test_quotient_shape(fig2):
    q = mec_quotient(fig2)
    # |S_hat| = |S| - |S in MECs| + 2 * #MECs
    assert len(q.mdp.states) == len(fig2.states) - 4 + 2 * 2
    assert len(q.bottoms) == 2
    for i in q.mec_state:
        s_c = q.mec_state[i]
        assert (s_c, TAU) in q.mdp.trans
        assert q.mdp.successors(s_c, TAU) == {q.bottom_state[i]: 1}


def test_quotient_iota_and_exits(fig2):
    q = mec_quotient(fig2)
    by_states = {frozenset(m.states): i for i, m in enumerate(q.mecs)}
    i34 = by_states[frozenset({"s3", "s4"})]
    s_c = q.mec_state[i34]
    assert q.iota["s3"] == s_c and q.iota["s4"] == s_c
    originals = set(q.exit_pairs.values())
    assert ("s3", "d") in originals and ("s4", "a") in originals
    # non-MEC states map to themselves
    assert q.iota["s0"] == "s0"


def test_quotient_renames_colliding_exit_actions():
    # both MEC states exit with the same action name
    mdp = parse_mdp(
        "@initial s0\n"
        "s0 go m0 1\n"
        "m0 a m1 1\nm1 a m0 1\n"
        "m0 leave t 1\nm1 leave u 1\n"
        "t stay t 1\nu stay u 1"
    )
    q = mec_quotient(mdp)
    s_c = next(iter(q.mec_state.values()))
    names = set(q.mdp.actions(s_c))
    assert TAU in names
    assert len(names) == 3  # tau + two distinct exit names
    assert set(q.exit_pairs.values()) == {("m0", "leave"), ("m1", "leave")}


def test_quotient_bottom_lookup(fig2):
    q = mec_quotient(fig2)
    for i, bot in q.bottom_state.items():
        assert q.mec_of_bottom(bot) is q.mecs[i]


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 10_000))
def test_quotient_preserves_reach_probability(seed):
    """Max probability of absorption in a quotient sink pool equals the max
    probability of confinement/visit computed on the original model."""
    rng = random.Random(seed)
    mdp = random_mdp(rng, n_states=5, max_actions=2)
    q = mec_quotient(mdp)
    rfm_targets = q.bottoms
    # under any scheduler the play ends in some MEC, so total sink mass is 1
    for choice in list(md_schedulers(q.mdp))[:8]:
        value = chain_absorption_value(
            q.mdp, choice, {t: 1.0 for t in rfm_targets}, rfm_targets
        )
        assert value == pytest.approx(1.0, abs=1e-9)


def test_quotient_is_ec_free_outside_sinks(fig2):
    q = mec_quotient(fig2)
    rfm = ReachabilityFormMdp(q.mdp, q.bottoms, ())
    assert is_ec_free(rfm)

import random

import pytest
from hypothesis import given, settings, strategies as st

from mocert import lp, mp_cert
from mocert.errors import ModelError, QueryError, StrictUnsupported
from mocert.model import parse_mdp
from mocert.mp_cert import (
    MpCertificate,
    build_Fmp,
    build_Hmp,
    build_r_min,
    certify_mp,
    check_mp_certificate,
    effective_rewards,
    mp_certificate_from_json,
    mp_certificate_to_json,
)
from mocert.query import Predicate, Query

from oracles import pi_mean_payoff, random_mdp

SINGLE_LOOP = "@initial s\n@reward r s a 5\ns a s 1"

TWO_LOOPS = (
    "@initial s0\n"
    "@reward r g0 a 0\n@reward r g10 a 10\n"
    "s0 go g0 1/2\ns0 go g10 1/2\n"
    "g0 a g0 1\ng10 a g10 1"
)

TRADEOFF = (
    "@initial s\n"
    "@reward r1 s a 1\n@reward r2 s a -1\n"
    "@reward r1 s b -1\n@reward r2 s b 1\n"
    "s a s 1\ns b s 1"
)


def mp_query(quantifier, connective, *triples):
    preds = tuple(
        Predicate("mp", ">=", bound, reward=reward, variant=variant)
        for reward, variant, bound in triples
    )
    return Query(quantifier, connective, preds)


def test_build_r_min():
    mdp = parse_mdp("@initial s\n@reward r s a 3\n@reward r t a -2\ns a t 1\nt a s 1")
    rewards = effective_rewards(mdp, mp_query("exists", "and", ("r", "inf", 0)).predicates)
    assert build_r_min(rewards) == [-2]
    constant = [{("s", "a"): 1, ("t", "a"): 1}]
    assert build_r_min(constant) == [1]


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 10_000))
def test_build_r_min_matches_scan(seed):
    rng = random.Random(seed)
    mdp = random_mdp(rng, n_states=4, max_actions=2, rewards=("r",))
    rewards = effective_rewards(mdp, mp_query("exists", "and", ("r", "inf", 0)).predicates)
    assert build_r_min(rewards) == [min(rewards[0].values())]


# ---------------------------------------------------------------------------
# The two polyhedra


def test_Hmp_single_loop_at_value():
    mdp = parse_mdp(SINGLE_LOOP)
    rewards = [{("s", "a"): 5}]
    out = lp.solve(build_Hmp(mdp, rewards, [5]))
    assert out.feasible
    assert out.assignment["x[s a]"] == pytest.approx(1.0)
    assert out.assignment["y[s a]"] == pytest.approx(0.0, abs=1e-8)


def test_Hmp_single_loop_above_value():
    mdp = parse_mdp(SINGLE_LOOP)
    assert lp.solve(build_Hmp(mdp, [{("s", "a"): 5}], [5.1])).status == "infeasible"


def test_Hmp_two_loops_average():
    mdp = parse_mdp(TWO_LOOPS)
    rewards = effective_rewards(mdp, mp_query("exists", "and", ("r", "inf", 5)).predicates)
    assert lp.solve(build_Hmp(mdp, rewards, [5])).feasible
    assert lp.solve(build_Hmp(mdp, rewards, [5.1])).status == "infeasible"


def test_Fmp_single_loop():
    mdp = parse_mdp(SINGLE_LOOP)
    rewards = [{("s", "a"): 5}]
    out = lp.solve(build_Fmp(mdp, rewards, [5]))
    assert out.feasible
    assert out.assignment["g[s]"] == pytest.approx(5.0)
    assert lp.solve(build_Fmp(mdp, rewards, [5.1])).status == "infeasible"


def test_Fmp_floor_case():
    # two loops at one state, rewards 0 and 10: every scheduler stays >= 0
    mdp = parse_mdp(
        "@initial s\n@reward r s a 0\n@reward r s b 10\ns a s 1\ns b s 1"
    )
    rewards = effective_rewards(mdp, mp_query("forall", "or", ("r", "sup", 0)).predicates)
    out = lp.solve(build_Fmp(mdp, rewards, [0]))
    assert out.feasible
    assert out.assignment["g[s]"] >= -1e-9


# ---------------------------------------------------------------------------
# Certifying decision


def test_certify_single_loop_holds():
    mdp = parse_mdp(SINGLE_LOOP)
    result = certify_mp(mdp, mp_query("exists", "and", ("r", "inf", 5)))
    assert result.verdict == "holds"
    assert result.certificate.variant == "mp-exists-and"
    assert check_mp_certificate(mdp, result.certificate).ok


def test_certify_single_loop_violated_with_dual():
    mdp = parse_mdp(SINGLE_LOOP)
    result = certify_mp(mdp, mp_query("exists", "and", ("r", "inf", 6)))
    assert result.verdict == "violated"
    assert result.certified_negation
    cert = result.certificate
    assert cert.variant == "mp-forall-or"
    assert check_mp_certificate(mdp, cert).ok


def test_certify_two_loop_split():
    mdp = parse_mdp(TWO_LOOPS)
    assert certify_mp(mdp, mp_query("exists", "and", ("r", "inf", 5))).verdict == "holds"
    assert (
        certify_mp(mdp, mp_query("exists", "and", ("r", "inf", 5.5))).verdict
        == "violated"
    )


def test_certify_tradeoff_violated():
    """r1 = -r2, so no scheduler pushes both mean payoffs to 0.4."""
    mdp = parse_mdp(TRADEOFF)
    query = mp_query("exists", "and", ("r1", "inf", 0.4), ("r2", "inf", 0.4))
    result = certify_mp(mdp, query)
    assert result.verdict == "violated"
    assert check_mp_certificate(mdp, result.certificate).ok
    # the one-sided version is achievable by mixing the two loops
    ok = mp_query("exists", "and", ("r1", "inf", 0.4), ("r2", "inf", -0.4))
    assert certify_mp(mdp, ok).verdict == "holds"


def test_certify_forall_or():
    mdp = parse_mdp(TWO_LOOPS)
    result = certify_mp(mdp, mp_query("forall", "or", ("r", "sup", 0)))
    assert result.verdict == "holds"
    assert result.certificate.variant == "mp-forall-or"
    # the model has no real choice: every scheduler yields exactly 5
    assert certify_mp(mdp, mp_query("forall", "or", ("r", "sup", 5))).verdict == "holds"
    result = certify_mp(mdp, mp_query("forall", "or", ("r", "sup", 5.5)))
    assert result.verdict == "violated"
    assert result.certificate.variant == "mp-exists-and"


def test_strict_bounds_unsupported():
    mdp = parse_mdp(SINGLE_LOOP)
    query = Query(
        "exists", "and", (Predicate("mp", ">", 4, reward="r", variant="inf"),)
    )
    with pytest.raises(StrictUnsupported):
        certify_mp(mdp, query)


def test_wrong_variant_rejected():
    mdp = parse_mdp(SINGLE_LOOP)
    with pytest.raises(QueryError):
        certify_mp(mdp, mp_query("exists", "and", ("r", "sup", 4)))


def test_flow_locality_enforced():
    """Feasible recurrent flow never sits outside the end components."""
    mdp = parse_mdp(
        "@initial s0\n@reward r s0 a 1\n@reward r t a 1\ns0 a t 1\nt a t 1"
    )
    result = certify_mp(mdp, mp_query("exists", "and", ("r", "inf", 1)))
    x = result.certificate.vectors["x"]
    assert abs(x.get("s0 a", 0)) <= mp_cert.FLOW_LOCALITY_TOL


# ---------------------------------------------------------------------------
# Checking


def test_check_reports_bias_violation():
    mdp = parse_mdp(SINGLE_LOOP)
    query = mp_query("forall", "or", ("r", "sup", 5))
    cert = MpCertificate(
        "mp-forall-or",
        {"g": {"s": 5.5}, "b": {"s": 0.0}, "z": {"0": 1.0}},
        query,
    )
    result = check_mp_certificate(mdp, cert)
    assert not result.ok
    bias = [v for name, v in result.violations if name.startswith("bias")]
    assert bias and bias[0] == pytest.approx(0.5, abs=1e-9)


def test_check_round_trip_through_json():
    mdp = parse_mdp(TWO_LOOPS)
    result = certify_mp(mdp, mp_query("exists", "and", ("r", "inf", 5)))
    again = mp_certificate_from_json(mp_certificate_to_json(result.certificate))
    assert again.variant == "mp-exists-and"
    assert check_mp_certificate(mdp, again).ok


# ---------------------------------------------------------------------------
# Agreement with policy iteration on single objectives


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 10_000), st.sampled_from([-2, 0, 1, 3]))
def test_single_objective_verdicts_match_pi(seed, bound):
    rng = random.Random(seed)
    mdp = random_mdp(rng, n_states=5, max_actions=2, rewards=("r",))
    rewards = mdp.reward_vector("r")
    opt = pi_mean_payoff(mdp, rewards, maximize=True)
    if abs(opt - bound) < 1e-6:
        return
    verdict = certify_mp(mdp, mp_query("exists", "and", ("r", "inf", bound))).verdict
    assert (verdict == "holds") == (opt > bound)

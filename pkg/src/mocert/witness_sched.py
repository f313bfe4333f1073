"""Scheduler witnesses.

Memoryless schedulers extracted from flow certificates, the separating
scheduler for (forall, or) certificates, the per-MEC stay/leave schedulers,
the exit-rate equation solver for redirecting a strongly connected DTMC,
assembly of the two-memory scheduler with stochastic memory update, and a
chain-based evaluation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import (
    Divergent,
    ModelError,
    NoEntryMass,
    NotDistribution,
    NotStronglyConnected,
    SeparationFailed,
)
from .graph import TAU, Mec, Quotient
from .model import Dtmc, Mdp, Num, Pair, ReachabilityFormMdp, STOCHASTIC_TOL
from .query import Predicate, resolve_states
from .reach_cert import ReachCertificate

M0, M1 = "m0", "m1"


def _check_rows(choice: Mapping[str, Mapping[str, Num]], what: str) -> None:
    for key, dist in choice.items():
        total = sum(float(p) for p in dist.values())
        if abs(total - 1.0) > 1e-9:
            raise ModelError("%s row %r sums to %s" % (what, key, total))
        if any(float(p) < -STOCHASTIC_TOL for p in dist.values()):
            raise ModelError("%s row %r has a negative entry" % (what, key))


@dataclass(frozen=True)
class MemorylessScheduler:
    """state -> distribution over enabled actions."""

    choice: Mapping[str, Mapping[str, Num]]

    def __post_init__(self):
        _check_rows(self.choice, "scheduler")

    def probability(self, s: str, a: str) -> float:
        return float(self.choice.get(s, {}).get(a, 0))


@dataclass(frozen=True)
class FmcScheduler:
    """Two-memory scheduler with stochastic memory update.

    `next_move` maps (state, memory) to an action distribution; `update`
    maps (action, arrived-state, memory) to a memory distribution and
    defaults to the identity for missing keys.  Once in m1 the update never
    returns to m0.
    """

    initial_memory: Mapping[str, Num]
    next_move: Mapping[Tuple[str, str], Mapping[str, Num]]
    update: Mapping[Tuple[str, str, str], Mapping[str, Num]]

    def __post_init__(self):
        total = sum(float(p) for p in self.initial_memory.values())
        if abs(total - 1.0) > 1e-9:
            raise ModelError("initial memory distribution sums to %s" % total)
        _check_rows(self.next_move, "next-move")
        _check_rows(self.update, "memory-update")
        for (a, s, m), dist in self.update.items():
            if m == M1 and float(dist.get(M0, 0)) > 0:
                raise ModelError("memory update returns from m1 to m0 at (%s, %s)" % (a, s))

    def memory_after(self, a: str, s: str, m: str) -> Mapping[str, Num]:
        return self.update.get((a, s, m), {m: 1})


# ---------------------------------------------------------------------------
# Schedulers from certificates


def memoryless_from_flow(mdp: Mdp, y: Mapping[Pair, Num]) -> MemorylessScheduler:
    """Normalize a non-negative flow over enabled pairs into a scheduler.

    States with zero flow mass get a Dirac choice on their first action.
    """
    choice: Dict[str, Dict[str, Num]] = {}
    for s in mdp.states:
        actions = mdp.actions(s)
        mass = {a: max(0.0, float(y.get((s, a), 0))) for a in actions}
        total = sum(mass.values())
        if total > 0:
            choice[s] = {a: v / total for a, v in mass.items() if v > 0}
        else:
            choice[s] = {actions[0]: 1}
    return MemorylessScheduler(choice)


def scheduler_from_certificate(
    rfm: ReachabilityFormMdp, cert: ReachCertificate
) -> MemorylessScheduler:
    """Memoryless scheduler read from an (exists, and) certificate's flow."""
    if cert.variant not in ("exists-and", "exists-or"):
        raise ModelError("flow schedulers come from exists-side certificates")
    y = {}
    for key, value in cert.vectors["y"].items():
        s, a = key.rsplit(" ", 1)
        y[(s, a)] = value
    return memoryless_from_flow(rfm.inner, y)


def _weighted_reach_values(
    rfm: ReachabilityFormMdp, weight: Mapping[str, float], maximize: bool
) -> Dict[str, float]:
    """Optimal expected target weight at absorption, by value iteration."""
    values = {s: 0.0 for s in rfm.nontarget_states}
    pick = max if maximize else min
    for _ in range(100000):
        delta = 0.0
        for s in rfm.nontarget_states:
            best = pick(
                sum(
                    float(p) * (weight.get(t, 0.0) if t in rfm.targets else values[t])
                    for t, p in rfm.inner.successors(s, a).items()
                )
                for a in rfm.inner.actions(s)
            )
            delta = max(delta, abs(best - values[s]))
            values[s] = best
        if delta < 1e-14:
            break
    return values


def forall_or_witness(
    rfm: ReachabilityFormMdp,
    cert: ReachCertificate,
    tol: float = 1e-8,
) -> Tuple[MemorylessScheduler, float]:
    """The separating scheduler of a (forall, or) certificate.

    Optimizes the z-weighted combination of the reachability objectives
    (maximal for upper-bounded queries, minimal for lower-bounded ones) and
    checks that the achieved value gamma* is separated from z'lambda.
    """
    if cert.variant != "forall-or":
        raise ModelError("separating schedulers come from (forall, or) certificates")
    z = [float(cert.vectors["z"].get(str(i), 0)) for i in range(cert.query.k)]
    weight: Dict[str, float] = {}
    for i, targets in enumerate(rfm.objective_targets):
        for t in targets:
            weight[t] = weight.get(t, 0.0) + z[i]
    lower = all(op in (">=", ">") for op in cert.query.ops)
    values = _weighted_reach_values(rfm, weight, maximize=not lower)

    def q_value(s, a):
        return sum(
            float(p) * (weight.get(t, 0.0) if t in rfm.targets else values[t])
            for t, p in rfm.inner.successors(s, a).items()
        )

    choice: Dict[str, Dict[str, Num]] = {}
    for s in rfm.inner.states:
        if s in rfm.targets:
            choice[s] = {rfm.inner.actions(s)[0]: 1}
            continue
        qs = [(q_value(s, a), a) for a in rfm.inner.actions(s)]
        best = max(qs)[0] if not lower else min(qs)[0]
        picked = next(a for v, a in qs if abs(v - best) < 1e-9)
        choice[s] = {picked: 1}
    gamma = sum(
        float(p) * (weight.get(s, 0.0) if s in rfm.targets else values[s])
        for s, p in rfm.inner.initial.items()
    )
    z_lambda = sum(z[i] * float(cert.query.bounds[i]) for i in range(cert.query.k))
    if lower and gamma < z_lambda - tol:
        raise SeparationFailed("gamma* %.12g below z'lambda %.12g" % (gamma, z_lambda))
    if not lower and gamma > z_lambda + tol:
        raise SeparationFailed("gamma* %.12g above z'lambda %.12g" % (gamma, z_lambda))
    return MemorylessScheduler(choice), gamma


# ---------------------------------------------------------------------------
# Induced chains and their analysis


def induced_chain(mdp: Mdp, sched) -> Tuple[Dict[object, Dict[object, float]], Dict[object, float]]:
    """The Markov chain induced by a scheduler.

    Memoryless schedulers give chain states equal to MDP states; finite
    memory is unfolded into (state, memory) nodes.
    """
    if isinstance(sched, MemorylessScheduler):
        trans: Dict[object, Dict[object, float]] = {}
        for s in mdp.states:
            row: Dict[object, float] = {}
            for a in mdp.actions(s):
                pa = sched.probability(s, a)
                if pa <= 0:
                    continue
                for t, p in mdp.successors(s, a).items():
                    row[t] = row.get(t, 0.0) + pa * float(p)
            trans[s] = row
        initial = {s: float(p) for s, p in mdp.initial.items()}
        return trans, initial

    trans = {}
    initial = {}
    for s, p in mdp.initial.items():
        for m, q in sched.initial_memory.items():
            if float(q) > 0:
                key = (s, m)
                initial[key] = initial.get(key, 0.0) + float(p) * float(q)
    frontier = list(initial)
    seen = set(frontier)
    while frontier:
        s, m = frontier.pop()
        row = {}
        for a, pa in sched.next_move[(s, m)].items():
            if float(pa) <= 0:
                continue
            for t, p in mdp.successors(s, a).items():
                for m2, q in sched.memory_after(a, t, m).items():
                    if float(q) <= 0:
                        continue
                    key = (t, m2)
                    row[key] = row.get(key, 0.0) + float(pa) * float(p) * float(q)
        trans[(s, m)] = row
        for key in row:
            if key not in seen:
                seen.add(key)
                frontier.append(key)
    for key in list(initial):
        if key not in trans:
            trans[key] = {}
    return trans, initial


def _chain_graph(trans) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(trans)
    for s, row in trans.items():
        for t, p in row.items():
            if p > 0:
                graph.add_edge(s, t)
    return graph


def chain_reach_probabilities(trans, targets) -> Dict[object, float]:
    """Pr(eventually visit `targets`) from every chain state."""
    targets = set(targets) & set(trans)
    graph = _chain_graph(trans)
    can_reach = set(targets)
    rev = graph.reverse(copy=False)
    for t in targets:
        can_reach |= nx.descendants(rev, t)
    probs = {s: 0.0 for s in trans}
    for t in targets:
        probs[t] = 1.0
    interior = [s for s in can_reach if s not in targets]
    if interior:
        index = {s: i for i, s in enumerate(interior)}
        mat = np.eye(len(interior))
        rhs = np.zeros(len(interior))
        for s in interior:
            for t, p in trans[s].items():
                if t in targets:
                    rhs[index[s]] += p
                elif t in index:
                    mat[index[s], index[t]] -= p
        sol = np.linalg.solve(mat, rhs)
        for s, i in index.items():
            probs[s] = float(sol[i])
    return probs


def _reachable(trans, initial):
    seen = set(s for s, p in initial.items() if p > 0)
    frontier = list(seen)
    while frontier:
        s = frontier.pop()
        for t, p in trans[s].items():
            if p > 0 and t not in seen:
                seen.add(t)
                frontier.append(t)
    return seen


def _bsccs(trans, restrict=None) -> List[FrozenSet[object]]:
    graph = _chain_graph(trans)
    if restrict is not None:
        graph = graph.subgraph(restrict).copy()
    out = []
    for scc in nx.strongly_connected_components(graph):
        closed = all(t in scc for s in scc for t, p in trans[s].items() if p > 0)
        single = next(iter(scc))
        # a trivial SCC without a self-loop is transient, not a BSCC
        if closed and (len(scc) > 1 or single in trans[single] or not trans[single]):
            out.append(frozenset(scc))
    return out


def _from_initial(probs, initial) -> float:
    return sum(float(p) * probs[s] for s, p in initial.items())


def confinement_probabilities(
    mdp: Mdp, sched, state_sets: Sequence[Iterable[str]]
) -> List[float]:
    """Pr(eventually stay forever inside each given state set).

    A path is eventually confined to a set iff the bottom SCC it ends up in
    lies entirely inside the set (memory components are projected away).
    """
    trans, initial = induced_chain(mdp, sched)
    reachable = _reachable(trans, initial)
    bsccs = _bsccs(trans, reachable)

    def base(x):
        return x[0] if isinstance(x, tuple) else x

    out = []
    for states in state_sets:
        states = set(states)
        good = set()
        for bscc in bsccs:
            if all(base(x) in states for x in bscc):
                good |= set(bscc)
        probs = chain_reach_probabilities(trans, good)
        out.append(_from_initial(probs, initial))
    return out


def _stationary(trans, bscc) -> Dict[object, float]:
    nodes = sorted(bscc, key=str)
    index = {s: i for i, s in enumerate(nodes)}
    n = len(nodes)
    mat = np.zeros((n + 1, n))
    rhs = np.zeros(n + 1)
    for s in nodes:
        mat[index[s], index[s]] -= 1.0
        for t, p in trans[s].items():
            mat[index[t], index[s]] += p
    mat[n, :] = 1.0
    rhs[n] = 1.0
    sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    return {s: float(sol[index[s]]) for s in nodes}


def chain_mean_payoff(trans, initial, step_reward: Mapping[object, float]) -> float:
    """Expected long-run average reward of the chain (liminf = limsup a.s.)."""
    reachable = _reachable(trans, initial)
    total = 0.0
    for bscc in _bsccs(trans, reachable):
        probs = chain_reach_probabilities(trans, bscc)
        mass = _from_initial(probs, initial)
        if mass <= 0:
            continue
        stat = _stationary(trans, bscc)
        gain = sum(stat[s] * float(step_reward.get(s, 0.0)) for s in bscc)
        total += mass * gain
    return total


def evaluate_scheduler(
    mdp: Mdp, sched, predicates: Sequence[Predicate]
) -> List[float]:
    """Value of each predicate under the fixed scheduler, by chain analysis."""
    trans, initial = induced_chain(mdp, sched)

    def base(x):
        return x[0] if isinstance(x, tuple) else x

    out = []
    for pred in predicates:
        if pred.kind == "mp":
            rewards = mdp.reward_vector(pred.reward)
            sign = -1.0 if pred.negate_reward else 1.0
            step = {}
            for x in trans:
                s = base(x)
                m = x[1] if isinstance(x, tuple) else None
                acc = 0.0
                for a in mdp.actions(s):
                    pa = (
                        sched.probability(s, a)
                        if isinstance(sched, MemorylessScheduler)
                        else float(sched.next_move[(s, m)].get(a, 0))
                    )
                    acc += pa * sign * float(rewards.get((s, a), 0))
                step[x] = acc
            out.append(chain_mean_payoff(trans, initial, step))
            continue
        states = resolve_states(mdp, pred)
        if pred.kind == "reach":
            hit = {x for x in trans if base(x) in states}
            probs = chain_reach_probabilities(trans, hit)
            out.append(_from_initial(probs, initial))
        else:  # invariant: never leave `states`
            bad = {x for x in trans if base(x) not in states}
            probs = chain_reach_probabilities(trans, bad)
            out.append(1.0 - _from_initial(probs, initial))
    return out


# ---------------------------------------------------------------------------
# Expected frequencies


def expected_frequencies(
    mdp: Mdp, sched: MemorylessScheduler, transient_only: bool = True
) -> Dict[Pair, float]:
    """Expected number of plays of each enabled pair under the scheduler.

    Solves freq(s, a) = sigma(s)(a) * (delta_in(s) + sum of incoming
    expected flow) on the transient part of the induced chain.  Recurrent
    states have divergent frequencies; their pairs are omitted when
    `transient_only`, otherwise requesting them raises Divergent.
    """
    trans, initial = induced_chain(mdp, sched)
    reachable = _reachable(trans, initial)
    recurrent = set()
    for bscc in _bsccs(trans, reachable):
        recurrent |= set(bscc)
    if recurrent and not transient_only:
        raise Divergent(
            "recurrent states %s have infinite frequencies" % sorted(recurrent)[:4]
        )
    # unreachable states are trivially visited zero times; solving only on
    # the reachable transient part keeps the system nonsingular
    transient = [s for s in mdp.states if s in reachable and s not in recurrent]
    index = {s: i for i, s in enumerate(transient)}
    n = len(transient)
    mat = np.eye(n)
    rhs = np.zeros(n)
    for s in transient:
        rhs[index[s]] = float(initial.get(s, 0))
        # incoming expected flow from other transient states
    for s in transient:
        for t, p in trans[s].items():
            if t in index:
                mat[index[t], index[s]] -= p
    visits = np.linalg.solve(mat, rhs)
    freq: Dict[Pair, float] = {}
    for (s, a) in mdp.enabled:
        if s in index:
            freq[(s, a)] = float(visits[index[s]]) * sched.probability(s, a)
    return freq


# ---------------------------------------------------------------------------
# Exit rates (redirecting a strongly connected DTMC)


def solve_exit_rates(
    d: Dtmc, delta: Mapping[str, Num], mu: Mapping[str, Num]
) -> Dict[str, float]:
    """Exit rates lambda making the exit-copy chain absorb with law mu.

    Adding to every state s an exit taken with rate lambda(s) (all other
    transitions rescaled by 1 - lambda(s)) yields absorption probabilities
    Pr(eventually exit at s) = mu(s), for the chain started in delta.

    Solves x(I - P) = delta - mu P, shifts along the stationary vector so
    that x*(s) - mu(s) >= 1 on the support of mu, and sets
    lambda(s) = mu(s) / x*(s).  The result is verified by re-solving the
    absorption system to 1e-10.
    """
    states = list(d.states)
    n = len(states)
    index = {s: i for i, s in enumerate(states)}
    p_mat = np.zeros((n, n))
    for s in states:
        for t, p in d.trans[s].items():
            p_mat[index[s], index[t]] = float(p)
    graph = nx.DiGraph((s, t) for s in states for t, p in d.trans[s].items() if float(p) > 0)
    graph.add_nodes_from(states)
    if not nx.is_strongly_connected(graph):
        raise NotStronglyConnected("exit-rate solving needs a strongly connected chain")
    for name, dist in (("delta", delta), ("mu", mu)):
        total = sum(float(dist.get(s, 0)) for s in states)
        if abs(total - 1.0) > 1e-9 or any(float(v) < 0 for v in dist.values()):
            raise NotDistribution("%s is not a distribution over the chain states" % name)

    delta_vec = np.array([float(delta.get(s, 0)) for s in states])
    mu_vec = np.array([float(mu.get(s, 0)) for s in states])
    lhs = np.eye(n) - p_mat  # x solves x (I - P) = delta - mu P
    rhs = delta_vec - mu_vec @ p_mat
    x, *_ = np.linalg.lstsq(lhs.T, rhs, rcond=None)

    # stationary vector spans the null space of (I - P)^T acting on rows
    eigvals, eigvecs = np.linalg.eig(p_mat.T)
    idx = int(np.argmin(np.abs(eigvals - 1.0)))
    gamma = np.real(eigvecs[:, idx])
    gamma = gamma / gamma.sum()

    support = mu_vec > 0
    shift = float(np.max((mu_vec[support] + 1.0 - x[support]) / gamma[support]))
    x_star = x + shift * gamma

    lam = {
        s: (float(mu_vec[i] / x_star[i]) if mu_vec[i] > 0 else 0.0)
        for s, i in index.items()
    }

    # independent verification: absorption law of the redirected chain
    scaled = np.diag([1.0 - lam[s] for s in states]) @ p_mat
    visits = delta_vec @ np.linalg.inv(np.eye(n) - scaled)
    for s, i in index.items():
        absorbed = float(visits[i] * lam[s])
        if abs(absorbed - float(mu_vec[i])) > 1e-10:
            raise ModelError(
                "exit-rate verification failed at %s: %.12g vs %.12g"
                % (s, absorbed, float(mu_vec[i]))
            )
    return lam


# ---------------------------------------------------------------------------
# Per-MEC schedulers and the two-memory assembly


def stay_scheduler(mec: Mec) -> MemorylessScheduler:
    """Uniform over internal actions: stays inside the MEC almost surely."""
    choice: Dict[str, Dict[str, Num]] = {}
    for s in mec.states:
        internal = sorted(a for (t, a) in mec.pairs if t == s)
        choice[s] = {a: 1.0 / len(internal) for a in internal}
    return MemorylessScheduler(choice)


def _quotient_pair(quotient: Quotient, pair: Pair) -> Pair:
    """The quotient-level pair an original pair projects to."""
    s, a = pair
    image = quotient.iota[s]
    if image == s:
        return pair
    for qpair, original in quotient.exit_pairs.items():
        if original == pair:
            return qpair
    raise ModelError("pair %r is internal to a MEC; it has no quotient image" % (pair,))


def leave_scheduler(
    mdp: Mdp,
    quotient: Quotient,
    mec: Mec,
    sched_hat: MemorylessScheduler,
    freq: Mapping[Pair, float],
) -> MemorylessScheduler:
    """A memoryless scheduler on S(C) that leaves the MEC almost surely,
    with the same exit-pair law as the quotient scheduler (normalized by
    the leave probability p).

    `freq` are the quotient expected frequencies under `sched_hat`.
    """
    mec_index = quotient.mecs.index(mec)
    s_c = quotient.mec_state[mec_index]
    p = 1.0 - sched_hat.probability(s_c, TAU)
    if p <= 0:
        raise ModelError("quotient scheduler never leaves %s" % s_c)

    internal_anywhere = frozenset().union(*(m.pairs for m in quotient.mecs))
    states = sorted(mec.states, key=mdp.state_index)
    # entry frequency of each MEC state
    entry = {s: float(mdp.initial.get(s, 0)) for s in states}
    for (t, a) in mdp.enabled:
        if (t, a) in internal_anywhere:
            continue  # internal pairs never enter another MEC
        mass = freq.get(_quotient_pair(quotient, (t, a)), 0.0)
        if mass <= 0:
            continue
        for s, prob in mdp.successors(t, a).items():
            if s in entry:
                entry[s] += mass * float(prob)
    total_entry = sum(entry.values())
    if total_entry <= 0:
        raise NoEntryMass("MEC %s is never entered under the quotient scheduler" % s_c)
    delta = {s: entry[s] / total_entry for s in states}

    # exit-pair law of the quotient scheduler
    exit_freq: Dict[Pair, float] = {}
    for (t, a) in mdp.enabled:
        if t in mec.states and (t, a) not in mec.pairs:
            exit_freq[(t, a)] = freq.get(_quotient_pair(quotient, (t, a)), 0.0)
    total_exit = sum(exit_freq.values())
    if total_exit <= 0:
        raise NoEntryMass("MEC %s is never left under the quotient scheduler" % s_c)
    mu = {s: sum(v for (t, _a), v in exit_freq.items() if t == s) / total_exit for s in states}

    stay = stay_scheduler(mec)
    chain = {
        s: {}
        for s in states
    }
    for s in states:
        row: Dict[str, float] = {}
        for a, pa in stay.choice[s].items():
            for t, prob in mdp.successors(s, a).items():
                row[t] = row.get(t, 0.0) + float(pa) * float(prob)
        chain[s] = row
    dtmc = Dtmc(tuple(states), chain, delta)
    lam = solve_exit_rates(dtmc, delta, mu)

    choice: Dict[str, Dict[str, Num]] = {}
    for s in states:
        row = {}
        for a in mdp.actions(s):
            if (s, a) in mec.pairs:
                row[a] = (1.0 - lam[s]) * float(stay.choice[s].get(a, 0))
            elif lam[s] > 0:
                state_exit = sum(v for (t, _a), v in exit_freq.items() if t == s)
                row[a] = lam[s] * exit_freq[(s, a)] / state_exit
        row = {a: v for a, v in row.items() if v > 0}
        choice[s] = row
    return MemorylessScheduler(choice)


def assemble_fmc_scheduler(
    mdp: Mdp, quotient: Quotient, sched_hat: MemorylessScheduler
) -> FmcScheduler:
    """The two-memory scheduler realizing a memoryless quotient scheduler.

    Outside MECs it plays the quotient scheduler; on entering a MEC C it
    flips to the leave scheduler with probability p_C (the quotient
    scheduler's probability of leaving C) and to the stay scheduler
    otherwise.  Memory m1 (= committed to staying) is never left.
    """
    freq = expected_frequencies(quotient.mdp, sched_hat)
    in_mec: Dict[str, int] = {}
    for i, mec in enumerate(quotient.mecs):
        for s in mec.states:
            in_mec[s] = i

    leave: Dict[int, Optional[MemorylessScheduler]] = {}
    stay: Dict[int, MemorylessScheduler] = {}
    p_c: Dict[int, float] = {}
    for i, mec in enumerate(quotient.mecs):
        s_c = quotient.mec_state[i]
        p = 1.0 - sched_hat.probability(s_c, TAU)
        stay[i] = stay_scheduler(mec)
        if p > 0:
            try:
                leave[i] = leave_scheduler(mdp, quotient, mec, sched_hat, freq)
            except NoEntryMass:
                leave[i] = None  # unreachable MEC: stay is as good as any
                p = 0.0
        else:
            leave[i] = None
        p_c[i] = p

    # the flip condition identifies entering actions by name, so wherever a
    # genuine coin flip is needed, an action entering the MEC from outside
    # must not collide with one of its internal actions
    for i, mec in enumerate(quotient.mecs):
        if not 0.0 < p_c[i] < 1.0:
            continue
        internal_names = {a for (_s, a) in mec.pairs}
        for (t, a) in mdp.enabled:
            if (t, a) in mec.pairs:
                continue
            if a in internal_names and any(
                s in mec.states for s in mdp.successors(t, a)
            ):
                raise ModelError(
                    "action %r entering a MEC collides with an internal action" % a
                )

    next_move: Dict[Tuple[str, str], Mapping[str, Num]] = {}
    for s in mdp.states:
        if s in in_mec:
            i = in_mec[s]
            next_move[(s, M1)] = dict(stay[i].choice[s])
            if leave[i] is not None:
                next_move[(s, M0)] = dict(leave[i].choice[s])
            else:
                next_move[(s, M0)] = dict(stay[i].choice[s])
        else:
            row = dict(sched_hat.choice[quotient.iota[s]])
            next_move[(s, M0)] = row
            next_move[(s, M1)] = row

    update: Dict[Tuple[str, str, str], Mapping[str, Num]] = {}
    for s in mdp.states:
        if s not in in_mec:
            continue
        i = in_mec[s]
        entering = {
            a
            for (t, a) in mdp.enabled
            if (t, a) not in quotient.mecs[i].pairs
            and s in mdp.successors(t, a)
        }
        for a in entering:
            update[(a, s, M0)] = {M0: p_c[i], M1: 1.0 - p_c[i]}

    initial_state = mdp.initial_state
    if initial_state in in_mec:
        p_init = p_c[in_mec[initial_state]]
    else:
        p_init = 1.0
    initial_memory = {M0: p_init, M1: 1.0 - p_init}
    return FmcScheduler(initial_memory, next_move, update)


# ---------------------------------------------------------------------------
# Export


def scheduler_to_dot(sched) -> str:
    """DOT-compatible text with one node per (state, memory) and edges
    labelled `action:prob`; memory updates are annotated on the node."""
    lines = ["digraph scheduler {"]
    if isinstance(sched, MemorylessScheduler):
        for s in sorted(sched.choice):
            labels = ", ".join(
                "%s:%g" % (a, float(p)) for a, p in sorted(sched.choice[s].items())
            )
            lines.append('  "%s" [label="%s | %s"];' % (s, s, labels))
    else:
        for (s, m) in sorted(sched.next_move):
            labels = ", ".join(
                "%s:%g" % (a, float(p))
                for a, p in sorted(sched.next_move[(s, m)].items())
            )
            lines.append('  "%s,%s" [label="%s,%s | %s"];' % (s, m, s, m, labels))
        for (a, s, m), dist in sorted(sched.update.items()):
            note = ", ".join("%s:%g" % (m2, float(p)) for m2, p in sorted(dist.items()))
            lines.append('  // update on (%s -> %s) from %s: %s' % (a, s, m, note))
    lines.append("}")
    return "\n".join(lines) + "\n"

"""End-component analysis: MEC decomposition, EC-freeness, MEC quotient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Set, Tuple

import networkx as nx

from .errors import ModelError
from .model import Mdp, Num, Pair, ReachabilityFormMdp

TAU = "tau"


@dataclass(frozen=True, eq=False)
class Mec:
    """Maximal end component: a closed, strongly connected set of pairs."""

    pairs: FrozenSet[Pair]

    @property
    def states(self) -> FrozenSet[str]:
        return frozenset(s for (s, _a) in self.pairs)


def _scc_index(graph: nx.DiGraph) -> Dict[str, int]:
    comp = {}
    for i, scc in enumerate(nx.strongly_connected_components(graph)):
        for s in scc:
            comp[s] = i
    return comp


def mec_decomposition(mdp: Mdp) -> List[Mec]:
    """All maximal end components, via iterated SCC refinement.

    Repeatedly removes state-action pairs whose support leaves the SCC of
    their state until a fixpoint; the surviving non-trivial SCCs are the
    MECs.  A closedness/connectivity self-check runs before returning.
    """
    pairs: Set[Pair] = set(mdp.trans.keys())
    while True:
        graph = nx.DiGraph()
        graph.add_nodes_from(mdp.states)
        for (s, a) in pairs:
            for t in mdp.successors(s, a):
                graph.add_edge(s, t)
        comp = _scc_index(graph)
        removed = False
        for (s, a) in list(pairs):
            if any(comp[t] != comp[s] for t in mdp.successors(s, a)):
                pairs.discard((s, a))
                removed = True
        if not removed:
            break

    by_comp: Dict[int, Set[Pair]] = {}
    for (s, a) in pairs:
        by_comp.setdefault(comp[s], set()).add((s, a))
    mecs = [Mec(frozenset(group)) for group in by_comp.values()]
    mecs.sort(key=lambda m: min(mdp.state_index(s) for s in m.states))
    for mec in mecs:
        _self_check(mdp, mec)
    return mecs


def _self_check(mdp: Mdp, mec: Mec) -> None:
    states = mec.states
    graph = nx.DiGraph()
    graph.add_nodes_from(states)
    for (s, a) in mec.pairs:
        for t in mdp.successors(s, a):
            if t not in states:
                raise ModelError("end component not closed at (%s, %s)" % (s, a))
            graph.add_edge(s, t)
    if not nx.is_strongly_connected(graph):
        raise ModelError("end component not strongly connected")


def is_ec_free(rfm: ReachabilityFormMdp) -> bool:
    """True iff every end component lies inside the target frontier F."""
    return all(mec.states <= rfm.targets for mec in mec_decomposition(rfm.inner))


# ---------------------------------------------------------------------------
# MEC quotient


@dataclass(frozen=True, eq=False)
class Quotient:
    """The MEC quotient with its ι map and per-MEC bookkeeping.

    Each MEC C collapses to a fresh state s_C with an extra action τ leading
    to an absorbing sink ⊥_C ("stay in C forever").  `exit_pairs` maps each
    quotient-level action of an s_C state back to the original exit pair.
    """

    mdp: Mdp
    iota: Mapping[str, str]
    mecs: Tuple[Mec, ...]
    mec_state: Mapping[int, str]  # mec index -> s_C name
    bottom_state: Mapping[int, str]  # mec index -> ⊥_C name
    exit_pairs: Mapping[Pair, Pair]  # (s_C, action) -> original (s, a)

    @property
    def bottoms(self) -> FrozenSet[str]:
        return frozenset(self.bottom_state.values())

    def mec_of_bottom(self, bottom: str) -> Mec:
        for i, name in self.bottom_state.items():
            if name == bottom:
                return self.mecs[i]
        raise ModelError("not a quotient sink: %r" % bottom)


def mec_quotient(mdp: Mdp) -> Quotient:
    """Collapse every MEC to a fresh state with a τ-successor sink.

    Exit actions keep their original names; when two exit pairs of one MEC
    share an action name the state is appended (`action@state`) to keep the
    quotient's (state, action) keys unique.
    """
    mecs = tuple(mec_decomposition(mdp))
    in_mec: Dict[str, int] = {}
    for i, mec in enumerate(mecs):
        for s in mec.states:
            in_mec[s] = i

    mec_state = {
        i: "mec:%s" % min(mec.states, key=mdp.state_index) for i, mec in enumerate(mecs)
    }
    bottom_state = {
        i: "bot:%s" % min(mec.states, key=mdp.state_index) for i, mec in enumerate(mecs)
    }
    iota = {s: (mec_state[in_mec[s]] if s in in_mec else s) for s in mdp.states}

    states: List[str] = [s for s in mdp.states if s not in in_mec]
    for i in range(len(mecs)):
        states.append(mec_state[i])
        states.append(bottom_state[i])

    def project(dist: Mapping[str, Num]) -> Dict[str, Num]:
        out: Dict[str, Num] = {}
        for t, p in dist.items():
            key = iota[t]
            out[key] = out.get(key, 0) + p
        return out

    trans: Dict[Pair, Dict[str, Num]] = {}
    exit_pairs: Dict[Pair, Pair] = {}
    for (s, a), dist in mdp.trans.items():
        i = in_mec.get(s)
        if i is None:
            trans[(s, a)] = project(dist)
        elif (s, a) not in mecs[i].pairs:
            # exit pair of MEC i; keep the action identity, disambiguating
            # name clashes between different exit states of the same MEC
            name = a
            if (mec_state[i], name) in trans:
                name = "%s@%s" % (a, s)
            if (mec_state[i], name) in trans:
                raise ModelError("cannot disambiguate exit pair (%s, %s)" % (s, a))
            trans[(mec_state[i], name)] = project(dist)
            exit_pairs[(mec_state[i], name)] = (s, a)
    for i in range(len(mecs)):
        trans[(mec_state[i], TAU)] = {bottom_state[i]: 1}
        trans[(bottom_state[i], TAU)] = {bottom_state[i]: 1}

    initial = project(mdp.initial)
    labels = {}
    for name, members in mdp.labels.items():
        labels[name] = frozenset(iota[s] for s in members)
    quotient_mdp = Mdp(tuple(states), trans, initial, {}, labels)
    return Quotient(quotient_mdp, iota, mecs, mec_state, bottom_state, exit_pairs)

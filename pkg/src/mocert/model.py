"""Core MDP/DTMC types, subsystems and the reachability-form matrices.

Probabilities are stored as parsed: `fractions.Fraction` (or int) entries keep
the model in rational mode, floats put it in double mode.  Nothing is converted
implicitly; a model built entirely from rationals can be checked with exact
arithmetic downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Tuple, Union

from .errors import InitialStateDropped, ModelError, ModelParseError

Num = Union[int, Fraction, float]
Pair = Tuple[str, str]

#: tolerance on stochasticity checks in double mode
STOCHASTIC_TOL = 1e-9

#: state / action names used for the redirect sink of a subsystem
SINK_STATE = "<bot>"
SINK_ACTION = "<stay>"


def is_exact(value: Num) -> bool:
    return isinstance(value, (int, Fraction)) and not isinstance(value, bool)


def _check_distribution(dist: Mapping[str, Num], what: str) -> None:
    if not dist:
        raise ModelError("empty distribution for %s" % what)
    for v in dist.values():
        if v < 0:
            raise ModelError("negative probability in %s" % what)
    total = sum(dist.values())
    if all(is_exact(v) for v in dist.values()):
        if total != 1:
            raise ModelError("distribution for %s sums to %s, not 1" % (what, total))
    elif abs(float(total) - 1.0) > STOCHASTIC_TOL:
        raise ModelError("distribution for %s sums to %r" % (what, float(total)))


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite MDP with a partial transition function.

    Action names may be reused across states; everything is keyed on
    (state, action) pairs.  Zero-probability entries are never stored, so the
    support of a distribution is exactly its key set.
    """

    states: Tuple[str, ...]
    trans: Mapping[Pair, Mapping[str, Num]]
    initial: Mapping[str, Num]
    rewards: Mapping[str, Mapping[Pair, Num]] = field(default_factory=dict)
    labels: Mapping[str, FrozenSet[str]] = field(default_factory=dict)

    def __post_init__(self):
        index = {s: i for i, s in enumerate(self.states)}
        if len(index) != len(self.states):
            raise ModelError("duplicate state names")
        with_action = set()
        for (s, a), dist in self.trans.items():
            if s not in index:
                raise ModelError("transition from unknown state %r" % s)
            _check_distribution(dist, "(%s, %s)" % (s, a))
            for t in dist:
                if t not in index:
                    raise ModelError("transition to unknown state %r" % t)
                if dist[t] == 0:
                    raise ModelError("explicit zero entry at (%s, %s)" % (s, a))
            with_action.add(s)
        missing = [s for s in self.states if s not in with_action]
        if missing:
            raise ModelError("states without enabled actions: %s" % ", ".join(missing))
        for s in self.initial:
            if s not in index:
                raise ModelError("initial mass on unknown state %r" % s)
        _check_distribution(self.initial, "initial distribution")
        for name, vec in self.rewards.items():
            for pair in vec:
                if pair not in self.trans:
                    raise ModelError("reward %r on disabled pair %r" % (name, pair))
        for name, states in self.labels.items():
            for s in states:
                if s not in index:
                    raise ModelError("label %r on unknown state %r" % (name, s))
        object.__setattr__(self, "_index", index)
        enabled = sorted(self.trans.keys(), key=lambda p: (index[p[0]], p[1]))
        object.__setattr__(self, "_enabled", tuple(enabled))

    # -- basic accessors ---------------------------------------------------

    @property
    def enabled(self) -> Tuple[Pair, ...]:
        """All enabled (state, action) pairs in deterministic order."""
        return self._enabled

    def state_index(self, s: str) -> int:
        return self._index[s]

    def actions(self, s: str) -> List[str]:
        return [a for (t, a) in self._enabled if t == s]

    def successors(self, s: str, a: str) -> Mapping[str, Num]:
        return self.trans[(s, a)]

    @property
    def initial_state(self) -> str:
        """The single initial state; raises unless δ_in is Dirac."""
        if len(self.initial) != 1:
            raise ModelError("initial distribution is not Dirac")
        return next(iter(self.initial))

    @property
    def is_rational(self) -> bool:
        if not all(is_exact(v) for v in self.initial.values()):
            return False
        return all(
            is_exact(v) for dist in self.trans.values() for v in dist.values()
        )

    def reward_vector(self, name: str) -> Mapping[Pair, Num]:
        try:
            return self.rewards[name]
        except KeyError:
            raise ModelError("unknown reward vector %r" % name) from None

    def label_set(self, name: str) -> FrozenSet[str]:
        try:
            return self.labels[name]
        except KeyError:
            raise ModelError("unknown label %r" % name) from None


@dataclass(frozen=True, eq=False)
class Dtmc:
    """Markov chain: one implicit action per state."""

    states: Tuple[str, ...]
    trans: Mapping[str, Mapping[str, Num]]
    initial: Mapping[str, Num]

    def __post_init__(self):
        index = {s: i for i, s in enumerate(self.states)}
        if len(index) != len(self.states):
            raise ModelError("duplicate state names")
        for s in self.states:
            if s not in self.trans:
                raise ModelError("state %r has no outgoing distribution" % s)
            _check_distribution(self.trans[s], s)
            for t in self.trans[s]:
                if t not in index:
                    raise ModelError("transition to unknown state %r" % t)
        _check_distribution(self.initial, "initial distribution")

    def state_index(self, s: str) -> int:
        return self.states.index(s)

    def to_mdp(self, action: str = "a") -> Mdp:
        trans = {(s, action): dict(d) for s, d in self.trans.items()}
        return Mdp(self.states, trans, dict(self.initial))


# ---------------------------------------------------------------------------
# Subsystems


@dataclass(frozen=True, eq=False)
class Subsystem:
    """Sub-MDP induced by a kept state set, with mass redirected to a sink."""

    kept: FrozenSet[str]
    sink: str
    mdp: Mdp
    original: Mdp


def induced_subsystem(mdp: Mdp, kept: Iterable[str]) -> Subsystem:
    """Restrict `mdp` to `kept`, redirecting lost mass to an absorbing sink.

    Kept states keep their full action sets.  Reward vectors assign the
    minimal reward of the original model to the sink's action.
    """
    kept = frozenset(kept)
    for s in kept:
        if s not in mdp.states:
            raise ModelError("kept state %r not in model" % s)
    for s in mdp.initial:
        if s not in kept:
            raise InitialStateDropped("initial state %r not kept" % s)
    if SINK_STATE in kept:
        raise ModelError("reserved sink name in kept set")

    states = tuple(s for s in mdp.states if s in kept) + (SINK_STATE,)
    trans: Dict[Pair, Dict[str, Num]] = {}
    for (s, a), dist in mdp.trans.items():
        if s not in kept:
            continue
        new = {t: p for t, p in dist.items() if t in kept}
        lost = sum(p for t, p in dist.items() if t not in kept)
        if lost != 0:
            new[SINK_STATE] = lost
        trans[(s, a)] = new
    trans[(SINK_STATE, SINK_ACTION)] = {SINK_STATE: 1}

    rewards: Dict[str, Dict[Pair, Num]] = {}
    for name, vec in mdp.rewards.items():
        worst = min(vec.get(pair, 0) for pair in mdp.enabled)
        new_vec = {pair: v for pair, v in vec.items() if pair[0] in kept}
        new_vec[(SINK_STATE, SINK_ACTION)] = worst
        rewards[name] = new_vec

    labels = {
        name: frozenset(s for s in states_set if s in kept)
        for name, states_set in mdp.labels.items()
    }
    sub = Mdp(states, trans, dict(mdp.initial), rewards, labels)
    return Subsystem(kept, SINK_STATE, sub, mdp)


# ---------------------------------------------------------------------------
# Reachability form


def _positive_reach(mdp: Mdp, targets: FrozenSet[str]) -> FrozenSet[str]:
    """States that reach `targets` with positive probability (any scheduler)."""
    pred: Dict[str, set] = {s: set() for s in mdp.states}
    for (s, _a), dist in mdp.trans.items():
        for t in dist:
            pred[t].add(s)
    seen = set(targets)
    frontier = list(targets)
    while frontier:
        t = frontier.pop()
        for s in pred[t]:
            if s not in seen:
                seen.add(s)
                frontier.append(s)
    return frozenset(seen)


@dataclass(frozen=True, eq=False)
class ReachabilityReport:
    non_absorbing_targets: Tuple[str, ...]
    unreachable_states: Tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.non_absorbing_targets and not self.unreachable_states


def check_reachability_form(mdp: Mdp, targets: Iterable[str]) -> ReachabilityReport:
    """Report violations of the reachability-form assumptions.

    Targets must be absorbing and every state must be able to reach the
    target set with positive probability under some scheduler.
    """
    targets = frozenset(targets)
    bad_targets = []
    for t in sorted(targets, key=mdp.state_index):
        for a in mdp.actions(t):
            if set(mdp.successors(t, a)) != {t}:
                bad_targets.append(t)
                break
    can_reach = _positive_reach(mdp, targets)
    unreachable = tuple(s for s in mdp.states if s not in can_reach)
    return ReachabilityReport(tuple(bad_targets), unreachable)


@dataclass(frozen=True, eq=False)
class ReachabilityFormMdp:
    """MDP whose target states F are absorbing and reachable from everywhere.

    `targets` is the full absorbing frontier F (it may contain sink states
    that belong to no objective); each objective target set is a subset of it.
    The enabled pairs of the reachability form exclude all F-pairs.
    """

    inner: Mdp
    targets: FrozenSet[str]
    objective_targets: Tuple[FrozenSet[str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(self.targets))
        object.__setattr__(
            self, "objective_targets", tuple(frozenset(g) for g in self.objective_targets)
        )
        for g in self.objective_targets:
            if not g <= self.targets:
                raise ModelError("objective targets must lie inside F")
        report = check_reachability_form(self.inner, self.targets)
        if report.non_absorbing_targets:
            raise ModelError(
                "non-absorbing targets: %s" % ", ".join(report.non_absorbing_targets)
            )
        bad = [s for s in report.unreachable_states if s not in self.targets]
        if bad:
            raise ModelError("states never reaching F: %s" % ", ".join(bad))

    @property
    def enabled(self) -> Tuple[Pair, ...]:
        return tuple(p for p in self.inner.enabled if p[0] not in self.targets)

    @property
    def nontarget_states(self) -> Tuple[str, ...]:
        return tuple(s for s in self.inner.states if s not in self.targets)

    @property
    def k(self) -> int:
        return len(self.objective_targets)


def induced_reach_subsystem(rfm: ReachabilityFormMdp, kept: Iterable[str]) -> ReachabilityFormMdp:
    """Subsystem of a reachability-form MDP, itself in reachability form.

    The redirect sink joins the absorbing frontier F (but no objective set).
    """
    kept = frozenset(kept) | rfm.targets
    sub = induced_subsystem(rfm.inner, kept)
    return ReachabilityFormMdp(
        sub.mdp,
        (rfm.targets & kept) | {sub.sink},
        tuple(g & kept for g in rfm.objective_targets),
    )


@dataclass(frozen=True, eq=False)
class ReachMatrices:
    """Sparse rows of the reachability-form matrices A and T.

    A((s,a), s') = [s = s'] - P(s,a,s') over non-target columns;
    T((s,a), i)  = P(s,a, G_i).
    Entries keep the model's arithmetic (Fractions stay Fractions).
    """

    pairs: Tuple[Pair, ...]
    columns: Tuple[str, ...]
    a_rows: Mapping[Pair, Mapping[str, Num]]
    t_rows: Mapping[Pair, Tuple[Num, ...]]

    def a_dense(self):
        import numpy as np

        mat = np.zeros((len(self.pairs), len(self.columns)))
        col = {s: j for j, s in enumerate(self.columns)}
        for i, pair in enumerate(self.pairs):
            for s, v in self.a_rows[pair].items():
                mat[i, col[s]] = float(v)
        return mat

    def t_dense(self):
        import numpy as np

        return np.array([[float(v) for v in self.t_rows[p]] for p in self.pairs])


def build_reach_matrices(rfm: ReachabilityFormMdp) -> ReachMatrices:
    pairs = rfm.enabled
    columns = rfm.nontarget_states
    column_set = set(columns)
    a_rows: Dict[Pair, Dict[str, Num]] = {}
    t_rows: Dict[Pair, Tuple[Num, ...]] = {}
    for (s, a) in pairs:
        dist = rfm.inner.successors(s, a)
        row: Dict[str, Num] = {}
        for t, p in dist.items():
            if t in column_set:
                row[t] = -p
        row[s] = row.get(s, 0) + 1
        if row[s] == 0:
            del row[s]
        a_rows[(s, a)] = row
        t_rows[(s, a)] = tuple(
            sum((p for t, p in dist.items() if t in g), 0) for g in rfm.objective_targets
        )
    return ReachMatrices(pairs, columns, a_rows, t_rows)


# ---------------------------------------------------------------------------
# Explicit text format


def parse_number(text: str, line: int = None) -> Num:
    """Parse a probability/reward literal: integer, decimal or `p/q`."""
    text = text.strip()
    try:
        if "/" in text:
            return Fraction(text)
        if "." in text or "e" in text or "E" in text:
            return float(text)
        return int(text)
    except (ValueError, ZeroDivisionError):
        raise ModelParseError("bad number %r" % text, line) from None


def format_number(value: Num) -> str:
    if isinstance(value, Fraction):
        if value.denominator == 1:
            return str(value.numerator)
        return "%d/%d" % (value.numerator, value.denominator)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_mdp(text: str) -> Mdp:
    """Parse the explicit model format.

    Lines: `state action successor probability` transitions, plus headers
    `@initial <state> [prob]`, `@reward <name> <state> <action> <value>`,
    `@label <name> <state>...`.  `#` starts a comment.
    """
    trans: Dict[Pair, Dict[str, Num]] = {}
    initial: Dict[str, Num] = {}
    rewards: Dict[str, Dict[Pair, Num]] = {}
    labels: Dict[str, set] = {}
    states: List[str] = []
    seen = set()

    def note_state(s):
        if s not in seen:
            seen.add(s)
            states.append(s)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        parts = stripped.split()
        if parts[0] == "@initial":
            if len(parts) == 2:
                initial[parts[1]] = 1
            elif len(parts) == 3:
                initial[parts[1]] = parse_number(parts[2], lineno)
            else:
                raise ModelParseError("@initial expects a state", lineno)
            note_state(parts[1])
        elif parts[0] == "@reward":
            if len(parts) != 5:
                raise ModelParseError("@reward expects name state action value", lineno)
            _, name, s, a, value = parts
            rewards.setdefault(name, {})[(s, a)] = parse_number(value, lineno)
        elif parts[0] == "@label":
            if len(parts) < 2:
                raise ModelParseError("@label expects a name", lineno)
            labels.setdefault(parts[1], set()).update(parts[2:])
            for s in parts[2:]:
                note_state(s)
        elif parts[0].startswith("@"):
            raise ModelParseError("unknown directive %r" % parts[0], lineno)
        else:
            if len(parts) != 4:
                raise ModelParseError(
                    "expected `state action successor probability`", lineno
                )
            s, a, t, p = parts
            note_state(s)
            note_state(t)
            prob = parse_number(p, lineno)
            if (s, a) in trans and t in trans[(s, a)]:
                raise ModelParseError("duplicate transition", lineno)
            trans.setdefault((s, a), {})[t] = prob
    if not initial:
        raise ModelParseError("no @initial line")
    try:
        return Mdp(
            tuple(states),
            trans,
            initial,
            rewards,
            {name: frozenset(v) for name, v in labels.items()},
        )
    except ModelError as exc:
        raise ModelParseError(str(exc)) from exc


def serialize_mdp(mdp: Mdp) -> str:
    """Canonical explicit-format text (sorted states/actions, stable)."""
    out = []
    for s in sorted(mdp.initial):
        if mdp.initial[s] == 1:
            out.append("@initial %s" % s)
        else:
            out.append("@initial %s %s" % (s, format_number(mdp.initial[s])))
    for name in sorted(mdp.labels):
        members = sorted(mdp.labels[name])
        if members:
            out.append("@label %s %s" % (name, " ".join(members)))
    for name in sorted(mdp.rewards):
        vec = mdp.rewards[name]
        for (s, a) in sorted(vec):
            out.append("@reward %s %s %s %s" % (name, s, a, format_number(vec[(s, a)])))
    for (s, a) in sorted(mdp.trans):
        dist = mdp.trans[(s, a)]
        for t in sorted(dist):
            out.append("%s %s %s %s" % (s, a, t, format_number(dist[t])))
    return "\n".join(out) + "\n"

"""Stochastic concurrent game structures with imperfect information.

The central structure is :class:`ICGS`: a finite set of states, per-agent
legal action sets, a probability distribution over successors for every
legal joint action, a propositional labelling, and per-agent observation
equivalences. All probabilities are kept as exact :class:`fractions.Fraction`
values; downstream numeric checkers convert to binary64 themselves.

Structures are immutable after construction and safe to share across
threads. Validation never raises on malformed content; :func:`validate`
returns a report listing every violated invariant instead.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

JointAction = tuple[str, ...]

#: tolerance used when distributions carry non-rational (decimal) mass
PROB_SUM_TOL = Fraction(1, 10**12)


class ModelError(Exception):
    """Structural misuse of a model (wrong strategy, unknown agent, ...)."""


class InvalidModelError(ModelError):
    """Operation rejected because the model failed validation."""

    def __init__(self, report: list[str]):
        super().__init__("invalid model: " + "; ".join(report))
        self.report = report


def as_prob(value) -> Fraction:
    """Coerce ints, decimal strings and float literals to exact fractions.

    Floats go through their shortest decimal repr, so ``0.5`` means 1/2 and
    ``0.1`` means 1/10 rather than the underlying binary values.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a probability")


class Distribution:
    """Finite-support distribution over outcome ids.

    Exact-zero entries are dropped at construction; everything else is kept
    verbatim so that invalid mass assignments survive long enough for
    :func:`validate` to report them.
    """

    __slots__ = ("_support",)

    def __init__(self, support: Mapping[str, object]):
        probs = {}
        for outcome, p in support.items():
            p = as_prob(p)
            if p == 0:
                continue
            probs[outcome] = p
        self._support = probs

    @classmethod
    def point(cls, outcome: str) -> "Distribution":
        return cls({outcome: 1})

    @property
    def support(self) -> dict[str, Fraction]:
        return dict(self._support)

    def outcomes(self) -> tuple[str, ...]:
        return tuple(sorted(self._support))

    def __getitem__(self, outcome: str) -> Fraction:
        return self._support.get(outcome, Fraction(0))

    def __contains__(self, outcome: str) -> bool:
        return outcome in self._support

    def __len__(self) -> int:
        return len(self._support)

    def items(self) -> Iterator[tuple[str, Fraction]]:
        return iter(sorted(self._support.items()))

    def total(self) -> Fraction:
        return sum(self._support.values(), Fraction(0))

    def is_point(self) -> bool:
        return len(self._support) == 1 and self.total() == 1

    def errors(self) -> list[str]:
        """Invariant violations: mass must be positive and sum to one."""
        problems = []
        for outcome, p in sorted(self._support.items()):
            if p < 0:
                problems.append(f"negative probability {p} for {outcome!r}")
        total = self.total()
        if abs(total - 1) > PROB_SUM_TOL:
            problems.append(f"distribution sums to {total} != 1")
        return problems

    def __eq__(self, other) -> bool:
        return isinstance(other, Distribution) and self._support == other._support

    def __hash__(self):
        return hash(frozenset(self._support.items()))

    def __repr__(self):
        body = ", ".join(f"{o}: {p}" for o, p in self.items())
        return f"Distribution({{{body}}})"


def _freeze_labels(labels: Mapping[str, Iterable[str]], states) -> dict[str, frozenset[str]]:
    out = {s: frozenset() for s in states}
    for s, props in labels.items():
        out[s] = frozenset(props)
    return out


@dataclass(frozen=True)
class ICGS:
    """Stochastic concurrent game structure with imperfect information.

    ``legal`` maps (state, agent) to the agent's available actions there,
    ``trans`` maps (state, joint action) to a successor distribution, and
    ``obs`` maps each agent to a state -> observation-class assignment.
    Agents and the action alphabet are ordered; that order is the canonical
    order used everywhere (joint actions, strategy enumeration, exports).
    """

    agents: tuple[str, ...]
    actions: tuple[str, ...]
    states: tuple[str, ...]
    initial: str
    legal: Mapping[tuple[str, str], frozenset[str]]
    trans: Mapping[tuple[str, JointAction], Distribution]
    labels: Mapping[str, frozenset[str]]
    obs: Mapping[str, Mapping[str, str]]
    props: frozenset[str] = frozenset()
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "states", tuple(self.states))
        legal = {k: frozenset(v) for k, v in self.legal.items()}
        object.__setattr__(self, "legal", legal)
        trans = {
            (s, tuple(m)): (d if isinstance(d, Distribution) else Distribution(d))
            for (s, m), d in self.trans.items()
        }
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "labels", _freeze_labels(self.labels, self.states))
        obs = {a: dict(classes) for a, classes in self.obs.items()}
        object.__setattr__(self, "obs", obs)
        props = frozenset(self.props)
        if not props:
            props = frozenset().union(*self.labels.values()) if self.labels else frozenset()
        object.__setattr__(self, "props", props)
        object.__setattr__(self, "meta", dict(self.meta))

    # -- ordered accessors -------------------------------------------------

    def action_order(self, acts: Iterable[str]) -> tuple[str, ...]:
        """Sort a set of actions by the global alphabet order."""
        rank = {a: i for i, a in enumerate(self.actions)}
        return tuple(sorted(acts, key=lambda a: rank.get(a, len(rank))))

    def legal_actions(self, state: str, agent: str) -> tuple[str, ...]:
        return self.action_order(self.legal.get((state, agent), frozenset()))

    def joint_actions(self, state: str) -> tuple[JointAction, ...]:
        """All legal joint actions at ``state`` in canonical product order."""
        per_agent = [self.legal_actions(state, a) for a in self.agents]
        return tuple(itertools.product(*per_agent))

    def successors(self, state: str, move: JointAction) -> tuple[str, ...]:
        return self.trans[(state, tuple(move))].outcomes()

    def obs_class(self, agent: str, state: str) -> str:
        return self.obs[agent][state]

    def observation_classes(self, agent: str) -> tuple[tuple[str, tuple[str, ...]], ...]:
        """Observation classes of ``agent``, ordered by first occurrence.

        Each entry is (class id, states in model state order). The ordering
        is the canonical class order used by strategy enumeration.
        """
        classes: dict[str, list[str]] = {}
        order: list[str] = []
        assignment = self.obs.get(agent, {})
        for s in self.states:
            cls = assignment.get(s, s)
            if cls not in classes:
                classes[cls] = []
                order.append(cls)
            classes[cls].append(s)
        return tuple((c, tuple(classes[c])) for c in order)

    def atoms(self) -> frozenset[str]:
        return self.props


@dataclass(frozen=True)
class NondetCGS:
    """Projection of an ICGS that forgets probabilities but keeps support."""

    agents: tuple[str, ...]
    actions: tuple[str, ...]
    states: tuple[str, ...]
    initial: str
    legal: Mapping[tuple[str, str], frozenset[str]]
    trans: Mapping[tuple[str, JointAction], frozenset[str]]
    labels: Mapping[str, frozenset[str]]
    obs: Mapping[str, Mapping[str, str]]
    props: frozenset[str] = frozenset()
    meta: Mapping[str, object] = field(default_factory=dict)

    action_order = ICGS.action_order
    legal_actions = ICGS.legal_actions
    joint_actions = ICGS.joint_actions
    obs_class = ICGS.obs_class
    observation_classes = ICGS.observation_classes
    atoms = ICGS.atoms

    def successors(self, state: str, move: JointAction) -> tuple[str, ...]:
        return tuple(sorted(self.trans[(state, tuple(move))]))


@dataclass(frozen=True)
class MarkovChain:
    """Plain Markov chain: one distribution per state."""

    states: tuple[str, ...]
    trans: Mapping[str, Distribution]

    def errors(self) -> list[str]:
        problems = []
        for s in self.states:
            if s not in self.trans:
                problems.append(f"state {s!r} has no transition row")
                continue
            for msg in self.trans[s].errors():
                problems.append(f"row of {s!r}: {msg}")
        return problems


@dataclass(frozen=True)
class StrategyProfile:
    """Deterministic memoryless uniform joint strategy for a coalition.

    One action per (agent, observation class); constant across each class
    by construction, which is exactly the uniformity requirement.
    """

    coalition: tuple[str, ...]
    choice: Mapping[tuple[str, str], str]

    def __post_init__(self):
        object.__setattr__(self, "coalition", tuple(self.coalition))
        object.__setattr__(self, "choice", dict(self.choice))

    def action_at(self, model: ICGS | NondetCGS, agent: str, state: str) -> str:
        return self.choice[(agent, model.obs_class(agent, state))]

    def to_json(self) -> dict:
        out: dict[str, dict[str, str]] = {a: {} for a in self.coalition}
        for (agent, cls), action in sorted(self.choice.items()):
            out[agent][cls] = action
        return out


@dataclass(frozen=True)
class MDP:
    """Decision process left to the opponents after fixing a coalition strategy.

    ``choices`` holds, per state, the opponent joint actions (tuples aligned
    with ``opponents``); ``trans`` the successor distribution per choice.
    """

    states: tuple[str, ...]
    opponents: tuple[str, ...]
    choices: Mapping[str, tuple[JointAction, ...]]
    trans: Mapping[tuple[str, JointAction], Distribution]
    source: Mapping[str, object] = field(default_factory=dict)

    def errors(self) -> list[str]:
        problems = []
        for s in self.states:
            opts = self.choices.get(s, ())
            if not opts:
                problems.append(f"state {s!r} has no choice")
            for c in opts:
                row = self.trans.get((s, c))
                if row is None:
                    problems.append(f"missing row for ({s!r}, {c!r})")
                    continue
                for msg in row.errors():
                    problems.append(f"row ({s!r}, {c!r}): {msg}")
        return problems


# -- validation --------------------------------------------------------------


def validate(model: ICGS) -> list[str]:
    """Check every ICGS invariant; return a report, one line per violation.

    Validation never raises: malformed containers produce report entries,
    and an empty report means the model is valid.
    """
    report: list[str] = []
    states = set(model.states)
    if not model.states:
        report.append("model has no states")
    if not model.agents:
        report.append("model has no agents")
    if len(set(model.states)) != len(model.states):
        report.append("duplicate state ids")
    if model.initial not in states:
        report.append(f"initial state {model.initial!r} not among states")

    for s in model.states:
        extra = model.labels.get(s, frozenset()) - model.props
        if extra:
            report.append(f"labels of {s!r} not in declared props: {sorted(extra)}")

    for agent in model.agents:
        assignment = model.obs.get(agent)
        if assignment is None:
            report.append(f"agent {agent!r} has no observation assignment")
            continue
        missing = states - set(assignment)
        if missing:
            report.append(f"agent {agent!r} observation misses states {sorted(missing)}")

    for s in model.states:
        for agent in model.agents:
            acts = model.legal.get((s, agent))
            if not acts:
                report.append(f"legal({s!r}, {agent!r}) is empty")
            elif not acts <= set(model.actions):
                unknown = sorted(acts - set(model.actions))
                report.append(f"legal({s!r}, {agent!r}) uses unknown actions {unknown}")

    # uniformity: indistinguishable states must offer identical actions
    for agent in model.agents:
        for cls, members in model.observation_classes(agent):
            first = model.legal.get((members[0], agent), frozenset())
            for other in members[1:]:
                if model.legal.get((other, agent), frozenset()) != first:
                    report.append(
                        f"uniformity violated for agent {agent!r} in class {cls!r}: "
                        f"legal({members[0]!r}) != legal({other!r})"
                    )
                    break

    # transitions: defined exactly for the legal joint actions, rows normalized
    for s in model.states:
        expected = set(model.joint_actions(s))
        present = {m for (s2, m) in model.trans if s2 == s}
        for m in sorted(expected - present):
            report.append(f"missing transition for ({s!r}, {m!r})")
        for m in sorted(present - expected):
            report.append(f"transition for illegal joint action ({s!r}, {m!r})")
        for m in sorted(expected & present):
            dist = model.trans[(s, m)]
            if len(dist) == 0:
                report.append(f"({s!r}, {m!r}) has no successor")
            for msg in dist.errors():
                report.append(f"({s!r}, {m!r}): {msg}")
            stray = set(dist.support) - states
            if stray:
                report.append(f"({s!r}, {m!r}) targets unknown states {sorted(stray)}")
    return report


def require_valid(model: ICGS) -> None:
    report = validate(model)
    if report:
        raise InvalidModelError(report)


# -- projection --------------------------------------------------------------


def project_nondeterministic(model: ICGS) -> NondetCGS:
    """Forget transition probabilities, keeping the support relation.

    (s, m, s') is in the projected relation iff trans(s, m)(s') > 0.
    Labels, legality and observations are preserved untouched.
    """
    require_valid(model)
    trans = {
        key: frozenset(dist.support)
        for key, dist in model.trans.items()
    }
    return NondetCGS(
        agents=model.agents,
        actions=model.actions,
        states=model.states,
        initial=model.initial,
        legal=model.legal,
        trans=trans,
        labels=model.labels,
        obs=model.obs,
        props=model.props,
        meta=dict(model.meta),
    )


# -- strategies --------------------------------------------------------------


def _strategy_slots(model: ICGS | NondetCGS, coalition: Sequence[str]):
    """Per-(agent, class) decision slots in canonical enumeration order."""
    members = [a for a in model.agents if a in set(coalition)]
    unknown = set(coalition) - set(model.agents)
    if unknown:
        raise ModelError(f"coalition contains unknown agents {sorted(unknown)}")
    slots = []
    for agent in members:
        for cls, states_of in model.observation_classes(agent):
            acts = model.legal_actions(states_of[0], agent)
            slots.append((agent, cls, acts))
    return slots


def strategy_count(model: ICGS | NondetCGS, coalition: Sequence[str]) -> int:
    count = 1
    for _, _, acts in _strategy_slots(model, coalition):
        count *= len(acts)
    return count


def enumerate_strategies(
    model: ICGS | NondetCGS, coalition: Sequence[str]
) -> Iterator[StrategyProfile]:
    """Yield every deterministic memoryless uniform joint strategy once.

    Order is lexicographic over (agent order, observation-class order,
    action order), all taken from the model's canonical orderings. The
    empty coalition yields exactly one empty profile.
    """
    slots = _strategy_slots(model, coalition)
    members = tuple(a for a in model.agents if a in set(coalition))
    keys = [(agent, cls) for agent, cls, _ in slots]
    for combo in itertools.product(*(acts for _, _, acts in slots)):
        yield StrategyProfile(coalition=members, choice=dict(zip(keys, combo)))


# -- induced decision process -------------------------------------------------


def induce_mdp(model: ICGS, strategy: StrategyProfile, check: bool = True) -> MDP:
    """Fix the coalition's strategy; leave all legal joint moves to opponents.

    The result ranges over the model's own states: for path objectives over
    finite models the opponents' extremal probabilities are attained by
    memoryless choices, so no history unfolding is needed. ``check=False``
    skips re-validation when the caller has already validated the model.
    """
    if check:
        require_valid(model)
    coalition = set(strategy.coalition)
    opponents = tuple(a for a in model.agents if a not in coalition)

    # reject strategies that pick illegal actions, naming the bad slot
    for agent in strategy.coalition:
        for cls, states_of in model.observation_classes(agent):
            action = strategy.choice.get((agent, cls))
            if action is None:
                raise ModelError(f"strategy misses a choice for ({agent!r}, {cls!r})")
            if action not in model.legal[(states_of[0], agent)]:
                raise ModelError(
                    f"strategy picks illegal action {action!r} for ({agent!r}, {cls!r})"
                )

    choices: dict[str, tuple[JointAction, ...]] = {}
    trans: dict[tuple[str, JointAction], Distribution] = {}
    for s in model.states:
        fixed = {a: strategy.action_at(model, a, s) for a in strategy.coalition}
        opp_lists = [model.legal_actions(s, a) for a in opponents]
        opts = tuple(itertools.product(*opp_lists))
        choices[s] = opts
        for opp_move in opts:
            joint = tuple(
                fixed[a] if a in coalition else opp_move[opponents.index(a)]
                for a in model.agents
            )
            trans[(s, opp_move)] = model.trans[(s, joint)]
    return MDP(
        states=model.states,
        opponents=opponents,
        choices=choices,
        trans=trans,
        source={"coalition": strategy.coalition, "choice": dict(strategy.choice)},
    )


# -- serialization -------------------------------------------------------------


def model_to_json(model: ICGS) -> dict:
    """Serialize to the interchange schema with exact rational probabilities."""
    states = [
        {
            "id": s,
            "labels": sorted(model.labels.get(s, frozenset())),
            "obs": {a: model.obs_class(a, s) for a in model.agents},
        }
        for s in model.states
    ]
    legal = {
        s: {a: list(model.legal_actions(s, a)) for a in model.agents}
        for s in model.states
    }
    transitions = [
        {
            "state": s,
            "joint_action": list(m),
            "distribution": {t: str(p) for t, p in model.trans[(s, m)].items()},
        }
        for s in model.states
        for m in model.joint_actions(s)
        if (s, m) in model.trans
    ]
    doc = {
        "agents": list(model.agents),
        "actions": list(model.actions),
        "props": sorted(model.props),
        "states": states,
        "legal": legal,
        "transitions": transitions,
        "initial": model.initial,
    }
    if model.meta:
        doc["meta"] = dict(model.meta)
    return doc


def model_from_json(doc: Mapping) -> ICGS:
    states = tuple(entry["id"] for entry in doc["states"])
    labels = {entry["id"]: frozenset(entry["labels"]) for entry in doc["states"]}
    obs: dict[str, dict[str, str]] = {a: {} for a in doc["agents"]}
    for entry in doc["states"]:
        for agent, cls in entry["obs"].items():
            obs[agent][entry["id"]] = cls
    legal = {
        (s, a): frozenset(acts)
        for s, per_agent in doc["legal"].items()
        for a, acts in per_agent.items()
    }
    trans = {
        (t["state"], tuple(t["joint_action"])): Distribution(
            {dst: Fraction(p) for dst, p in t["distribution"].items()}
        )
        for t in doc["transitions"]
    }
    return ICGS(
        agents=tuple(doc["agents"]),
        actions=tuple(doc["actions"]),
        states=states,
        initial=doc["initial"],
        legal=legal,
        trans=trans,
        labels=labels,
        obs=obs,
        props=frozenset(doc.get("props", [])),
        meta=doc.get("meta", {}),
    )


def dump_model(model: ICGS, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> ICGS:
    with open(path, encoding="utf-8") as fh:
        return model_from_json(json.load(fh))

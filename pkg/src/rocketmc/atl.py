"""Non-probabilistic ATL checking on projected game structures.

Two routes are provided. ``check_atl_perfect`` runs the classic fixpoint
algorithms over the controllable-predecessor operator and is sound for
perfect information. ``check_atl_ii`` enumerates deterministic memoryless
uniform coalition strategies and tests the path objective universally on
the structure each strategy induces, under the objective or subjective
reading of where the strategy must win.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .formula import (
    And,
    Atom,
    Eventually,
    Globally,
    Implies,
    Next,
    Not,
    Or,
    Release,
    StrategicPlain,
    StrategicProb,
    Until,
    normalize_path,
)
from .model import NondetCGS, StrategyProfile, enumerate_strategies

StateSet = frozenset


class CheckError(Exception):
    pass


class UnknownAtomError(CheckError):
    def __init__(self, name: str, inventory):
        super().__init__(
            f"unknown atom {name!r}; model atoms: {sorted(inventory) or '(none)'}"
        )
        self.name = name


def sat_atom(model, name: str) -> StateSet:
    if name == "true":
        return frozenset(model.states)
    if name == "false":
        return frozenset()
    if name not in model.atoms():
        raise UnknownAtomError(name, model.atoms())
    return frozenset(s for s in model.states if name in model.labels.get(s, frozenset()))


def _merge_move(agents, co_agents, co_move, opp_agents, opp_move):
    parts = dict(zip(co_agents, co_move))
    parts.update(zip(opp_agents, opp_move))
    return tuple(parts[a] for a in agents)


def cpre(model: NondetCGS, coalition, target: StateSet) -> StateSet:
    """States where the coalition can force the next state into ``target``.

    s qualifies iff some legal coalition move guarantees, against every
    opponent completion, that all possible successors lie in target.
    """
    coalition_set = set(coalition)
    co_agents = [a for a in model.agents if a in coalition_set]
    opp_agents = [a for a in model.agents if a not in coalition_set]
    result = set()
    for s in model.states:
        co_lists = [model.legal_actions(s, a) for a in co_agents]
        opp_lists = [model.legal_actions(s, a) for a in opp_agents]
        for co_move in itertools.product(*co_lists):
            controlled = True
            for opp_move in itertools.product(*opp_lists):
                joint = _merge_move(model.agents, co_agents, co_move, opp_agents, opp_move)
                if not model.trans[(s, joint)] <= target:
                    controlled = False
                    break
            if controlled:
                result.add(s)
                break
    return frozenset(result)


def _lfp_until(model, coalition, t1: StateSet, t2: StateSet) -> StateSet:
    z = frozenset()
    while True:
        nxt = t2 | (t1 & cpre(model, coalition, z))
        if nxt == z:
            return z
        z = nxt


def _gfp_release(model, coalition, t1: StateSet, t2: StateSet) -> StateSet:
    z = frozenset(model.states)
    while True:
        nxt = t2 & (t1 | cpre(model, coalition, z))
        if nxt == z:
            return z
        z = nxt


def check_atl_perfect(model: NondetCGS, f) -> StateSet:
    """Satisfaction set of a plain ATL formula via cpre fixpoints.

    Nested strategic operators are evaluated bottom-up to state sets.
    Probabilistic operators are rejected; those belong to the PATL checker.
    """
    if isinstance(f, Atom):
        return sat_atom(model, f.name)
    if isinstance(f, Not):
        return frozenset(model.states) - check_atl_perfect(model, f.operand)
    if isinstance(f, And):
        return check_atl_perfect(model, f.left) & check_atl_perfect(model, f.right)
    if isinstance(f, Or):
        return check_atl_perfect(model, f.left) | check_atl_perfect(model, f.right)
    if isinstance(f, Implies):
        return (frozenset(model.states) - check_atl_perfect(model, f.left)) | check_atl_perfect(
            model, f.right
        )
    if isinstance(f, StrategicProb):
        raise CheckError("probabilistic strategic operator: use the PATL checker")
    if isinstance(f, StrategicPlain):
        path = normalize_path(f.path)
        coalition = f.coalition
        if isinstance(path, Next):
            return cpre(model, coalition, check_atl_perfect(model, path.operand))
        if isinstance(path, Until):
            return _lfp_until(
                model, coalition, check_atl_perfect(model, path.left), check_atl_perfect(model, path.right)
            )
        if isinstance(path, Release):
            return _gfp_release(
                model, coalition, check_atl_perfect(model, path.left), check_atl_perfect(model, path.right)
            )
        raise CheckError(f"unsupported path operator {path!r}")
    raise TypeError(f"not a state formula: {f!r}")


# -- imperfect information ------------------------------------------------------


@dataclass
class AtlIIResult:
    """Per-state verdicts plus the first witnessing strategy for each state."""

    holds: dict[str, bool]
    witness: dict[str, StrategyProfile] = field(default_factory=dict)
    witness_index: dict[str, int] = field(default_factory=dict)
    strategies_examined: int = 0

    def sat_set(self) -> StateSet:
        return frozenset(s for s, ok in self.holds.items() if ok)


def _restricted_successors(model: NondetCGS, strategy: StrategyProfile):
    """One-step successor sets once the coalition is pinned to ``strategy``."""
    coalition_set = set(strategy.coalition)
    opp_agents = [a for a in model.agents if a not in coalition_set]
    succ: dict[str, frozenset[str]] = {}
    for s in model.states:
        co_moves = tuple(strategy.action_at(model, a, s) for a in strategy.coalition)
        opp_lists = [model.legal_actions(s, a) for a in opp_agents]
        reached: set[str] = set()
        for opp_move in itertools.product(*opp_lists):
            joint = _merge_move(model.agents, strategy.coalition, co_moves, opp_agents, opp_move)
            reached |= model.trans[(s, joint)]
        succ[s] = frozenset(reached)
    return succ


def _universal_sat(model, succ, path, sets) -> StateSet:
    """All-paths satisfaction of an X/U/R objective over resolved state sets."""
    states = frozenset(model.states)

    def pre_all(target: StateSet) -> StateSet:
        return frozenset(s for s in states if succ[s] <= target)

    if isinstance(path, Next):
        return pre_all(sets[path.operand])
    if isinstance(path, Until):
        t1, t2 = sets[path.left], sets[path.right]
        z = frozenset()
        while True:
            nxt = t2 | (t1 & pre_all(z))
            if nxt == z:
                return z
            z = nxt
    if isinstance(path, Release):
        t1, t2 = sets[path.left], sets[path.right]
        z = states
        while True:
            nxt = t2 & (t1 | pre_all(z))
            if nxt == z:
                return z
            z = nxt
    raise CheckError(f"unsupported path operator {path!r}")


def subjective_start_states(model, coalition, state: str) -> StateSet:
    """The state itself plus everything some coalition member confuses with it."""
    out = {state}
    for agent in coalition:
        cls = model.obs_class(agent, state)
        out.update(s for s in model.states if model.obs_class(agent, s) == cls)
    return frozenset(out)


def check_atl_ii(model: NondetCGS, f, mode: str = "objective") -> AtlIIResult:
    """Strategy-enumeration ATL checking under imperfect information.

    A state satisfies a strategic subformula iff some deterministic
    memoryless uniform strategy makes the objective hold on every path
    from it (objective mode) or from every observationally equivalent
    start state (subjective mode). Witnesses are the lowest-index
    strategies in canonical enumeration order.
    """
    if mode not in ("objective", "subjective"):
        raise CheckError(f"unknown mode {mode!r}")
    all_states = frozenset(model.states)
    examined = [0]
    witness: dict[str, StrategyProfile] = {}
    witness_index: dict[str, int] = {}

    def search(node: StrategicPlain, record: bool) -> StateSet:
        path = normalize_path(node.path)
        if isinstance(path, Next):
            operands = (path.operand,)
        else:
            operands = (path.left, path.right)
        sets = {g: evaluate(g, False) for g in operands}
        if mode == "subjective":
            nbhd = {s: subjective_start_states(model, node.coalition, s) for s in model.states}
        sat: set[str] = set()
        for idx, sigma in enumerate(enumerate_strategies(model, node.coalition)):
            examined[0] += 1
            universal = _universal_sat(model, _restricted_successors(model, sigma), path, sets)
            if mode == "objective":
                won = universal
            else:
                won = frozenset(s for s in model.states if nbhd[s] <= universal)
            for s in won - sat:
                if record:
                    witness[s] = sigma
                    witness_index[s] = idx
            sat |= won
            if sat == all_states:
                break
        return frozenset(sat)

    def evaluate(g, record: bool) -> StateSet:
        if isinstance(g, Atom):
            return sat_atom(model, g.name)
        if isinstance(g, Not):
            return all_states - evaluate(g.operand, False)
        if isinstance(g, And):
            return evaluate(g.left, False) & evaluate(g.right, False)
        if isinstance(g, Or):
            return evaluate(g.left, False) | evaluate(g.right, False)
        if isinstance(g, Implies):
            return (all_states - evaluate(g.left, False)) | evaluate(g.right, False)
        if isinstance(g, StrategicProb):
            raise CheckError("probabilistic strategic operator: use the PATL checker")
        if isinstance(g, StrategicPlain):
            return search(g, record)
        raise TypeError(f"not a state formula: {g!r}")

    sat = evaluate(f, isinstance(f, StrategicPlain))
    return AtlIIResult(
        holds={s: s in sat for s in model.states},
        witness=witness,
        witness_index=witness_index,
        strategies_examined=examined[0],
    )

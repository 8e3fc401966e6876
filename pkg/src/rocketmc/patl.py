"""PATL checking: coalition strategy search over induced decision processes.

For a probabilistic strategic formula the checker enumerates deterministic
memoryless uniform coalition strategies in canonical order, induces the
opponents' decision process for each, computes the extremal probability of
the path event (minimal for lower bounds, maximal for upper bounds), and
compares against the threshold. The first witness in enumeration order
decides; exhausting the space decides falsity.

Probabilities of Until events are computed by value iteration from below
after a qualitative zero-probability precomputation, or by exact rational
backward propagation when the process is layered (a DAG plus terminal
self-loops, which is what the telemetry pipeline produces). Release events
go through the duality P(a R b) = 1 - P(!a U !b) with the optimization
direction flipped. Next events are always computed exactly.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from .atl import (
    CheckError,
    _gfp_release,
    _lfp_until,
    cpre,
    sat_atom,
    subjective_start_states,
)
from .formula import (
    And,
    Atom,
    Implies,
    Next,
    Not,
    Or,
    ProbabilityBound,
    Release,
    StrategicPlain,
    StrategicProb,
    Until,
    normalize,
    to_text,
)
from .model import (
    ICGS,
    MDP,
    StrategyProfile,
    enumerate_strategies,
    induce_mdp,
    project_nondeterministic,
    require_valid,
    strategy_count,
)

StateSet = frozenset

TRUTH_TRUE = "true"
TRUTH_FALSE = "false"
TRUTH_BOUNDARY = "boundary-inconclusive"
TRUTH_BUDGET = "budget-exhausted"
TRUTH_TIMEOUT = "timeout"


class TimeoutExceeded(Exception):
    pass


@dataclass(frozen=True)
class NextEvent:
    target: StateSet


@dataclass(frozen=True)
class UntilEvent:
    left: StateSet
    right: StateSet


@dataclass(frozen=True)
class ReleaseEvent:
    left: StateSet
    right: StateSet


@dataclass
class ProbVector:
    """Per-state event probabilities plus convergence bookkeeping.

    ``exact`` carries rational values when the computation was exact
    (Next events, layered processes); ``values`` is always binary64.
    """

    values: dict[str, float]
    residual: float
    iterations: int
    exact: dict[str, Fraction] | None = None


@dataclass
class CheckSettings:
    """Tuning knobs for the PATL engine."""

    tolerance: float = 1e-10
    boundary_guard: float = 1e-6
    strategy_budget: int | None = None
    prob1_precompute: bool = False
    exact_layered: bool = True
    threads: int = 1
    timeout_s: float | None = None
    # reserved: randomized memoryless search is not implemented
    randomized_strategies: bool = False


@dataclass
class VerificationResult:
    formula: str
    model_id: str
    mode: str
    truth: str
    achieved: float
    witness: StrategyProfile | None
    strategies_examined: int
    wall_time_s: float

    def to_json(self) -> dict:
        return {
            "formula": self.formula,
            "model": self.model_id,
            "mode": self.mode,
            "truth": self.truth,
            "achieved": self.achieved,
            "witness": self.witness.to_json() if self.witness else None,
            "strategies_examined": self.strategies_examined,
            "wall_time_s": self.wall_time_s,
        }


# -- qualitative precomputation -------------------------------------------------


def _support(mdp: MDP, s: str, c) -> tuple[str, ...]:
    return tuple(mdp.trans[(s, c)].support)

def prob0_max(mdp: MDP, left: StateSet, right: StateSet) -> StateSet:
    """States where no scheduler reaches ``right`` through ``left``."""
    reach = set(right)
    corridor = set(left) - set(right)
    changed = True
    while changed:
        changed = False
        for s in mdp.states:
            if s in reach or s not in corridor:
                continue
            if any(
                any(t in reach for t in _support(mdp, s, c))
                for c in mdp.choices[s]
            ):
                reach.add(s)
                changed = True
    return frozenset(mdp.states) - frozenset(reach)


def prob0_min(mdp: MDP, left: StateSet, right: StateSet) -> StateSet:
    """States where some scheduler avoids ``right`` (through ``left``) surely."""
    avoid = set(mdp.states) - set(right)
    corridor = set(left) - set(right)
    changed = True
    while changed:
        changed = False
        for s in list(avoid):
            if s not in corridor:
                continue  # outside the corridor the event already failed
            if not any(
                all(t in avoid for t in _support(mdp, s, c))
                for c in mdp.choices[s]
            ):
                avoid.discard(s)
                changed = True
    return frozenset(avoid)


def prob1_max(mdp: MDP, left: StateSet, right: StateSet) -> StateSet:
    """States where some scheduler reaches ``right`` through ``left`` a.s."""
    corridor = set(left) - set(right)
    u = set(mdp.states)
    while True:
        v: set[str] = set(right)
        grown = True
        while grown:
            grown = False
            for s in mdp.states:
                if s in v or s not in corridor:
                    continue
                for c in mdp.choices[s]:
                    supp = _support(mdp, s, c)
                    if all(t in u for t in supp) and any(t in v for t in supp):
                        v.add(s)
                        grown = True
                        break
        if v == u:
            return frozenset(u)
        u = v


def prob1_min(mdp: MDP, left: StateSet, right: StateSet) -> StateSet:
    """States where every scheduler reaches ``right`` through ``left`` a.s."""
    corridor = set(left) - set(right)
    bad = frozenset(mdp.states) - set(left) - set(right)
    # largest sub-structure of the corridor some scheduler never leaves
    stay = set(corridor)
    changed = True
    while changed:
        changed = False
        for s in list(stay):
            if not any(
                all(t in stay for t in _support(mdp, s, c)) for c in mdp.choices[s]
            ):
                stay.discard(s)
                changed = True
    escape = set(bad) | stay
    changed = True
    while changed:
        changed = False
        for s in mdp.states:
            if s in escape or s not in corridor:
                continue
            if any(
                any(t in escape for t in _support(mdp, s, c))
                for c in mdp.choices[s]
            ):
                escape.add(s)
                changed = True
    return frozenset(mdp.states) - frozenset(escape)


# -- layered detection and exact propagation --------------------------------------


def terminal_states(mdp: MDP) -> StateSet:
    """States whose every choice is a probability-one self-loop."""
    out = set()
    for s in mdp.states:
        rows = [mdp.trans[(s, c)] for c in mdp.choices[s]]
        if rows and all(row.is_point() and s in row for row in rows):
            out.add(s)
    return frozenset(out)


def topological_order(mdp: MDP) -> list[str] | None:
    """Reverse-evaluation order for layered processes, or None if cyclic.

    Terminal self-loop states are treated as sinks; any other cycle makes
    the process non-layered.
    """
    terminals = terminal_states(mdp)
    succs: dict[str, set[str]] = {}
    indeg = {s: 0 for s in mdp.states}
    for s in mdp.states:
        if s in terminals:
            succs[s] = set()
            continue
        out = set()
        for c in mdp.choices[s]:
            out |= set(_support(mdp, s, c))
        succs[s] = out
    for s, out in succs.items():
        for t in out:
            if t == s:
                return None  # non-terminal self-loop: cyclic
            indeg[t] += 1
    frontier = [s for s in mdp.states if indeg[s] == 0]
    order: list[str] = []
    while frontier:
        s = frontier.pop()
        order.append(s)
        for t in succs[s]:
            indeg[t] -= 1
            if indeg[t] == 0:
                frontier.append(t)
    if len(order) != len(mdp.states):
        return None
    return order


def _exact_until(mdp: MDP, event: UntilEvent, direction: str, order: list[str]) -> ProbVector:
    opt = max if direction == "max" else min
    values: dict[str, Fraction] = {}
    for s in reversed(order):
        if s in event.right:
            values[s] = Fraction(1)
        elif s not in event.left:
            values[s] = Fraction(0)
        elif all(
            mdp.trans[(s, c)].is_point() and s in mdp.trans[(s, c)]
            for c in mdp.choices[s]
        ):
            values[s] = Fraction(0)  # trapped in a self-loop outside the target
        else:
            values[s] = opt(
                sum((p * values[t] for t, p in mdp.trans[(s, c)].items()), Fraction(0))
                for c in mdp.choices[s]
            )
    return ProbVector(
        values={s: float(v) for s, v in values.items()},
        residual=0.0,
        iterations=len(order),
        exact=values,
    )


# -- extremal probabilities ---------------------------------------------------------


def _check_rows(mdp: MDP) -> None:
    problems = mdp.errors()
    if problems:
        raise CheckError("malformed decision process: " + "; ".join(problems[:5]))


def _value_iteration(
    mdp: MDP,
    event: UntilEvent,
    direction: str,
    tol: float,
    prob1: bool,
    deadline: float | None,
    history: list[dict[str, float]] | None = None,
) -> ProbVector:
    if direction == "max":
        zero = prob0_max(mdp, event.left, event.right)
        one = prob1_max(mdp, event.left, event.right) if prob1 else frozenset(event.right)
    else:
        zero = prob0_min(mdp, event.left, event.right)
        one = prob1_min(mdp, event.left, event.right) if prob1 else frozenset(event.right)
    opt = max if direction == "max" else min

    rows: dict[str, list[list[tuple[str, float]]]] = {}
    free = [s for s in mdp.states if s not in zero and s not in one]
    for s in free:
        rows[s] = [
            [(t, float(p)) for t, p in mdp.trans[(s, c)].items()]
            for c in mdp.choices[s]
        ]
    x = {s: 0.0 for s in mdp.states}
    for s in one:
        x[s] = 1.0
    iterations = 0
    residual = 0.0
    while True:
        iterations += 1
        if deadline is not None and iterations % 64 == 0 and time.monotonic() > deadline:
            raise TimeoutExceeded
        residual = 0.0
        for s in free:
            new = opt(sum(p * x[t] for t, p in row) for row in rows[s])
            delta = abs(new - x[s])
            if delta > residual:
                residual = delta
            x[s] = new
        if history is not None:
            history.append(dict(x))
        if residual < tol:
            break
    return ProbVector(values=x, residual=residual, iterations=iterations, exact=None)


def mdp_extremal(
    mdp: MDP,
    event,
    direction: str,
    tol: float = 1e-10,
    *,
    prob1: bool = False,
    exact_layered: bool = True,
    deadline: float | None = None,
    history: list[dict[str, float]] | None = None,
    validate_rows: bool = True,
) -> ProbVector:
    """Extremal probability of a path event, per state, over all schedulers.

    Until events run value iteration from the zero vector after the
    qualitative prob-0 precomputation (so qualitative answers are exact),
    or exact backward propagation on layered processes. Release events are
    computed via duality with the direction flipped.
    """
    if direction not in ("min", "max"):
        raise CheckError(f"unknown direction {direction!r}")
    if tol <= 0:
        raise CheckError(f"tolerance must be positive, got {tol}")
    if validate_rows:
        _check_rows(mdp)

    if isinstance(event, NextEvent):
        opt = max if direction == "max" else min
        values: dict[str, Fraction] = {}
        for s in mdp.states:
            values[s] = opt(
                sum((p for t, p in mdp.trans[(s, c)].items() if t in event.target), Fraction(0))
                for c in mdp.choices[s]
            )
        return ProbVector(
            values={s: float(v) for s, v in values.items()},
            residual=0.0,
            iterations=1,
            exact=values,
        )

    if isinstance(event, ReleaseEvent):
        states = frozenset(mdp.states)
        dual = UntilEvent(states - event.left, states - event.right)
        flipped = "min" if direction == "max" else "max"
        inner = mdp_extremal(
            mdp,
            dual,
            flipped,
            tol,
            prob1=prob1,
            exact_layered=exact_layered,
            deadline=deadline,
            history=history,
            validate_rows=False,
        )
        exact = None
        if inner.exact is not None:
            exact = {s: 1 - v for s, v in inner.exact.items()}
        return ProbVector(
            values={s: 1.0 - v for s, v in inner.values.items()},
            residual=inner.residual,
            iterations=inner.iterations,
            exact=exact,
        )

    if not isinstance(event, UntilEvent):
        raise CheckError(f"unknown event {event!r}")

    if exact_layered:
        order = topological_order(mdp)
        if order is not None:
            return _exact_until(mdp, event, direction, order)
    return _value_iteration(mdp, event, direction, tol, prob1, deadline, history)


# -- formula checking -----------------------------------------------------------------


def _event_for(path, sets) -> NextEvent | UntilEvent | ReleaseEvent:
    if isinstance(path, Next):
        return NextEvent(sets[path.operand])
    if isinstance(path, Until):
        return UntilEvent(sets[path.left], sets[path.right])
    if isinstance(path, Release):
        return ReleaseEvent(sets[path.left], sets[path.right])
    raise CheckError(f"PATL fragment expects X/U/R after normalization, got {path!r}")


class _Evaluator:
    """Bottom-up satisfaction sets, resolving nested strategic operators."""

    def __init__(self, model: ICGS, settings: CheckSettings, deadline: float | None):
        self.model = model
        self.settings = settings
        self.deadline = deadline
        self._projection = None

    def projection(self):
        if self._projection is None:
            self._projection = project_nondeterministic(self.model)
        return self._projection

    def sat(self, g) -> StateSet:
        model = self.model
        if isinstance(g, Atom):
            return sat_atom(model, g.name)
        if isinstance(g, Not):
            return frozenset(model.states) - self.sat(g.operand)
        if isinstance(g, And):
            return self.sat(g.left) & self.sat(g.right)
        if isinstance(g, Or):
            return self.sat(g.left) | self.sat(g.right)
        if isinstance(g, Implies):
            return (frozenset(model.states) - self.sat(g.left)) | self.sat(g.right)
        if isinstance(g, StrategicPlain):
            proj = self.projection()
            path = g.path
            if isinstance(path, Next):
                return cpre(proj, g.coalition, self.sat(path.operand))
            if isinstance(path, Until):
                return _lfp_until(proj, g.coalition, self.sat(path.left), self.sat(path.right))
            if isinstance(path, Release):
                return _gfp_release(proj, g.coalition, self.sat(path.left), self.sat(path.right))
            raise CheckError(f"unsupported path operator {path!r}")
        if isinstance(g, StrategicProb):
            sat = set()
            for s in self.model.states:
                outcome = _search(self.model, g, "objective", self.settings, self.deadline, self, start=s)
                if outcome.truth == TRUTH_TRUE:
                    sat.add(s)
                elif outcome.truth == TRUTH_TIMEOUT:
                    raise TimeoutExceeded
                elif outcome.truth != TRUTH_FALSE:
                    raise CheckError(
                        f"nested strategic operator {to_text(g)!r} is {outcome.truth} at {s!r}"
                    )
            return frozenset(sat)
        raise TypeError(f"not a state formula: {g!r}")


@dataclass
class _Candidate:
    index: int
    strategy: StrategyProfile
    score: object  # Fraction or float
    status: str  # "sat" | "unsat" | "boundary"


def _classify(value, bound: ProbabilityBound, guard: float) -> str:
    if isinstance(value, Fraction):
        return "sat" if bound.holds(value) else "unsat"
    if abs(value - float(bound.threshold)) < guard:
        return "boundary"
    return "sat" if bound.holds(value) else "unsat"


def _search(
    model: ICGS,
    node: StrategicProb,
    mode: str,
    settings: CheckSettings,
    deadline: float | None,
    evaluator: _Evaluator,
    start: str | None = None,
) -> VerificationResult:
    bound = node.bound
    path = node.path
    if isinstance(path, Next):
        operands = (path.operand,)
    else:
        operands = (path.left, path.right)
    sets = {g: evaluator.sat(g) for g in operands}
    event = _event_for(path, sets)

    initial = start if start is not None else model.initial
    if mode == "subjective":
        starts = tuple(sorted(subjective_start_states(model, node.coalition, initial)))
    else:
        starts = (initial,)

    # lower bounds must survive the worst opponent, upper bounds the best
    direction = "min" if bound.relation in (">=", ">") else "max"
    maximizing = direction == "min"

    def evaluate(indexed) -> _Candidate:
        idx, sigma = indexed
        mdp = induce_mdp(model, sigma, check=False)
        vec = mdp_extremal(
            mdp,
            event,
            direction,
            settings.tolerance,
            prob1=settings.prob1_precompute,
            exact_layered=settings.exact_layered,
            deadline=deadline,
            validate_rows=False,
        )
        values = vec.exact if vec.exact is not None else vec.values
        picked = [values[s] for s in starts]
        # the deciding value is the weakest start state for this bound
        score = min(picked) if maximizing else max(picked)
        statuses = {_classify(v, bound, settings.boundary_guard) for v in picked}
        if "unsat" in statuses:
            status = "unsat"
        elif "boundary" in statuses:
            status = "boundary"
        else:
            status = "sat"
        return _Candidate(idx, sigma, score, status)

    best = None
    saw_boundary = False
    examined = 0
    witness = None
    truth = TRUTH_FALSE

    def better(a, b):
        if b is None:
            return True
        return a > b if maximizing else a < b

    total = strategy_count(model, node.coalition)
    stream = enumerate(enumerate_strategies(model, node.coalition))
    timed_out = False
    window = max(1, settings.threads) * 4
    pool = ThreadPoolExecutor(settings.threads) if settings.threads > 1 else None
    try:
        while examined < total:
            if deadline is not None and time.monotonic() > deadline:
                timed_out = True
                break
            take = window
            if settings.strategy_budget is not None:
                room = settings.strategy_budget - examined
                if room <= 0:
                    break
                take = min(take, room)
            batch = list(itertools.islice(stream, take))
            if not batch:
                break
            try:
                if pool is not None:
                    outcomes = list(pool.map(evaluate, batch))
                else:
                    outcomes = [evaluate(item) for item in batch]
            except TimeoutExceeded:
                timed_out = True
                break
            stop = False
            for cand in outcomes:
                examined += 1
                if better(cand.score, best):
                    best = cand.score
                if cand.status == "sat":
                    witness = cand.strategy
                    truth = TRUTH_TRUE
                    stop = True
                    break
                if cand.status == "boundary":
                    saw_boundary = True
            if stop:
                break
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)

    if truth != TRUTH_TRUE:
        if timed_out:
            truth = TRUTH_TIMEOUT
        elif examined < total:
            truth = TRUTH_BUDGET
        elif saw_boundary:
            truth = TRUTH_BOUNDARY
        else:
            truth = TRUTH_FALSE
    achieved = float(best) if best is not None else 0.0
    return VerificationResult(
        formula=to_text(node),
        model_id="",
        mode=mode,
        truth=truth,
        achieved=achieved,
        witness=witness,
        strategies_examined=examined,
        wall_time_s=0.0,
    )


def check_patl(
    model: ICGS,
    f,
    mode: str = "objective",
    settings: CheckSettings | None = None,
    model_id: str | None = None,
) -> VerificationResult:
    """Check a probabilistic strategic formula at the model's initial state.

    Objective mode evaluates the bound at the initial state; subjective
    mode requires the same strategy to meet the bound at every state a
    coalition member cannot distinguish from it.
    """
    settings = settings or CheckSettings()
    if settings.randomized_strategies:
        raise CheckError("randomized strategy search is reserved but not implemented")
    if mode not in ("objective", "subjective"):
        raise CheckError(f"unknown mode {mode!r}")
    require_valid(model)
    started = time.perf_counter()
    node = normalize(f)
    if not isinstance(node, StrategicProb):
        raise CheckError("check_patl expects a probabilistic strategic formula at top level")
    unknown = node.coalition - set(model.agents)
    if unknown:
        raise CheckError(f"coalition contains unknown agents {sorted(unknown)}")
    deadline = None
    if settings.timeout_s is not None:
        deadline = time.monotonic() + settings.timeout_s
    evaluator = _Evaluator(model, settings, deadline)
    try:
        result = _search(model, node, mode, settings, deadline, evaluator)
    except TimeoutExceeded:
        result = VerificationResult(
            formula=to_text(node),
            model_id="",
            mode=mode,
            truth=TRUTH_TIMEOUT,
            achieved=0.0,
            witness=None,
            strategies_examined=0,
            wall_time_s=0.0,
        )
    result.model_id = model_id or str(model.meta.get("name", ""))
    result.wall_time_s = time.perf_counter() - started
    return result


def check_pctl(
    model: ICGS,
    bound: ProbabilityBound,
    path,
    mode: str = "objective",
    settings: CheckSettings | None = None,
    model_id: str | None = None,
) -> VerificationResult:
    """PCTL-style checking: the empty-coalition instance of check_patl."""
    return check_patl(model, StrategicProb(frozenset(), bound, path), mode, settings, model_id)

"""PATL state formulas: AST, text parser, printer and normalizer.

Only the PATL fragment is accepted: a strategic operator takes exactly one
path operator (X, U, R, or the derived F/G) whose operands are state
formulas. Boolean combinations and nesting of path formulas are rejected
at parse time.

Concrete syntax::

    <<Rocket>>^{>=0.9} F (GoodState & Finish)
    <<Rocket>> G (Disengaged -> GoodState)
    <<>>^{<=0.5} X p

Atoms are identifiers; ``!``, ``&``, ``|``, ``->`` bind in that order
(tightest first); ``->`` is right-associative. Thresholds are decimals or
fractions in [0, 1]. ``true`` and ``false`` are built-in atoms.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

RELATIONS = ("<=", "<", ">", ">=")


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class FragmentError(ParseError):
    """Raised for PATL* constructs outside the supported PATL fragment."""


# -- AST -----------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    operand: "StateFormula"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Or:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Implies:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class ProbabilityBound:
    relation: str
    threshold: Fraction

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        if not 0 <= self.threshold <= 1:
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")

    def holds(self, value) -> bool:
        if self.relation == "<=":
            return value <= self.threshold
        if self.relation == "<":
            return value < self.threshold
        if self.relation == ">":
            return value > self.threshold
        return value >= self.threshold


@dataclass(frozen=True)
class Next:
    operand: "StateFormula"


@dataclass(frozen=True)
class Until:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Release:
    left: "StateFormula"
    right: "StateFormula"


@dataclass(frozen=True)
class Eventually:
    operand: "StateFormula"


@dataclass(frozen=True)
class Globally:
    operand: "StateFormula"


@dataclass(frozen=True)
class StrategicProb:
    coalition: frozenset[str]
    bound: ProbabilityBound
    path: "PathFormula"


@dataclass(frozen=True)
class StrategicPlain:
    coalition: frozenset[str]
    path: "PathFormula"


PathFormula = Union[Next, Until, Release, Eventually, Globally]
StateFormula = Union[Atom, Not, And, Or, Implies, StrategicProb, StrategicPlain]

TRUE = Atom("true")
FALSE = Atom("false")

_KEYWORDS = {"X", "U", "R", "F", "G"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<coop_open><<)
  | (?P<coop_close>>>)
  | (?P<bound_open>\^\{)
  | (?P<rel><=|>=|->|<|>)
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(){},!&|])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str, what: str | None = None):
        kind, text, pos = self.peek()
        if text != value:
            raise ParseError(f"expected {what or value!r}, found {text or 'end of input'!r}", pos)
        return self.advance()

    # state formulas ---------------------------------------------------------

    def parse_state(self) -> StateFormula:
        left = self.parse_or()
        if self.peek()[1] == "->":
            self.advance()
            right = self.parse_state()  # right-associative
            return Implies(left, right)
        return left

    def parse_or(self) -> StateFormula:
        node = self.parse_and()
        while self.peek()[1] == "|":
            self.advance()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self) -> StateFormula:
        node = self.parse_unary()
        while self.peek()[1] == "&":
            self.advance()
            node = And(node, self.parse_unary())
        return node

    def parse_unary(self) -> StateFormula:
        kind, text, pos = self.peek()
        if text == "!":
            self.advance()
            return Not(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self) -> StateFormula:
        kind, text, pos = self.peek()
        if text == "(":
            self.advance()
            inner = self.parse_state()
            self.expect(")")
            return inner
        if text == "<<":
            return self.parse_strategic()
        if kind == "ident":
            if text in _KEYWORDS:
                raise FragmentError(
                    f"path operator {text!r} outside a strategic operator: "
                    "only the PATL fragment is supported",
                    pos,
                )
            self.advance()
            return Atom(text)
        raise ParseError(f"expected a formula, found {text or 'end of input'!r}", pos)

    # strategic operator -------------------------------------------------------

    def parse_strategic(self) -> StateFormula:
        self.expect("<<")
        coalition = set()
        if self.peek()[1] != ">>":
            while True:
                kind, text, pos = self.peek()
                if kind != "ident":
                    raise ParseError(f"expected agent name, found {text!r}", pos)
                self.advance()
                coalition.add(text)
                if self.peek()[1] == ",":
                    self.advance()
                    continue
                break
        self.expect(">>")
        bound = None
        if self.peek()[1] == "^{":
            self.advance()
            kind, rel, pos = self.peek()
            if rel not in RELATIONS:
                raise ParseError(f"unknown relation symbol {rel!r}", pos)
            self.advance()
            kind, num, pos = self.peek()
            if kind != "num":
                raise ParseError(f"expected threshold, found {num!r}", pos)
            self.advance()
            try:
                threshold = Fraction(num)
            except ValueError:
                raise ParseError(f"malformed threshold {num!r}", pos) from None
            if not 0 <= threshold <= 1:
                raise ParseError(f"threshold {num} outside [0, 1]", pos)
            self.expect("}")
            bound = ProbabilityBound(rel, threshold)
        path = self.parse_path()
        if bound is None:
            return StrategicPlain(frozenset(coalition), path)
        return StrategicProb(frozenset(coalition), bound, path)

    # path formulas -------------------------------------------------------------

    def parse_path(self) -> PathFormula:
        kind, text, pos = self.peek()
        if text in ("X", "F", "G"):
            self.advance()
            operand = self.parse_unary()
            return {"X": Next, "F": Eventually, "G": Globally}[text](operand)
        if text == "(":
            # try a parenthesized path formula, fall back to a state operand
            mark = self.i
            try:
                self.advance()
                inner = self.parse_path()
                self.expect(")")
                self._reject_chained_path()
                return inner
            except ParseError:
                self.i = mark
        left = self.parse_unary()
        kind, op, pos = self.peek()
        if op not in ("U", "R"):
            raise ParseError(
                f"expected a path operator (X, U, R, F, G), found {op or 'end of input'!r}",
                pos,
            )
        self.advance()
        right = self.parse_unary()
        self._reject_chained_path()
        return (Until if op == "U" else Release)(left, right)

    def _reject_chained_path(self):
        kind, text, pos = self.peek()
        if text in ("U", "R"):
            raise FragmentError(
                "nested until/release path formulas are not in the PATL fragment",
                pos,
            )


def parse(text: str) -> StateFormula:
    """Parse a PATL state formula, raising ParseError with a position."""
    parser = _Parser(text)
    node = parser.parse_state()
    kind, tok, pos = parser.peek()
    if kind != "eof":
        raise ParseError(f"trailing input {tok!r}", pos)
    return node


# -- printing -------------------------------------------------------------------

_LEVEL_IMPLIES, _LEVEL_OR, _LEVEL_AND, _LEVEL_UNARY = range(4)


def _fmt(f: StateFormula, level: int) -> str:
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, Not):
        return "!" + _fmt(f.operand, _LEVEL_UNARY)
    if isinstance(f, (StrategicProb, StrategicPlain)):
        coalition = ",".join(sorted(f.coalition))
        bound = ""
        if isinstance(f, StrategicProb):
            bound = f"^{{{f.bound.relation}{f.bound.threshold}}}"
        return f"<<{coalition}>>{bound} {_fmt_path(f.path)}"
    if isinstance(f, And):
        text = f"{_fmt(f.left, _LEVEL_AND)} & {_fmt(f.right, _LEVEL_AND + 1)}"
        needed = _LEVEL_AND
    elif isinstance(f, Or):
        text = f"{_fmt(f.left, _LEVEL_OR)} | {_fmt(f.right, _LEVEL_OR + 1)}"
        needed = _LEVEL_OR
    elif isinstance(f, Implies):
        text = f"{_fmt(f.left, _LEVEL_IMPLIES + 1)} -> {_fmt(f.right, _LEVEL_IMPLIES)}"
        needed = _LEVEL_IMPLIES
    else:
        raise TypeError(f"not a state formula: {f!r}")
    if needed < level:
        return f"({text})"
    return text


def _fmt_path(path: PathFormula) -> str:
    if isinstance(path, Next):
        return f"X {_fmt(path.operand, _LEVEL_UNARY)}"
    if isinstance(path, Eventually):
        return f"F {_fmt(path.operand, _LEVEL_UNARY)}"
    if isinstance(path, Globally):
        return f"G {_fmt(path.operand, _LEVEL_UNARY)}"
    if isinstance(path, Until):
        return f"{_fmt(path.left, _LEVEL_UNARY)} U {_fmt(path.right, _LEVEL_UNARY)}"
    if isinstance(path, Release):
        return f"{_fmt(path.left, _LEVEL_UNARY)} R {_fmt(path.right, _LEVEL_UNARY)}"
    raise TypeError(f"not a path formula: {path!r}")


def to_text(f: StateFormula) -> str:
    return _fmt(f, _LEVEL_IMPLIES)


# -- normalization ----------------------------------------------------------------


def normalize(f: StateFormula) -> StateFormula:
    """Rewrite derived path operators: F p -> true U p and G p -> false R p.

    The result contains only X/U/R path operators. Idempotent; atoms,
    coalitions and probability bounds are preserved.
    """
    if isinstance(f, Atom):
        return f
    if isinstance(f, Not):
        return Not(normalize(f.operand))
    if isinstance(f, And):
        return And(normalize(f.left), normalize(f.right))
    if isinstance(f, Or):
        return Or(normalize(f.left), normalize(f.right))
    if isinstance(f, Implies):
        return Implies(normalize(f.left), normalize(f.right))
    if isinstance(f, StrategicProb):
        return StrategicProb(f.coalition, f.bound, normalize_path(f.path))
    if isinstance(f, StrategicPlain):
        return StrategicPlain(f.coalition, normalize_path(f.path))
    raise TypeError(f"not a state formula: {f!r}")


def normalize_path(path: PathFormula) -> PathFormula:
    if isinstance(path, Next):
        return Next(normalize(path.operand))
    if isinstance(path, Until):
        return Until(normalize(path.left), normalize(path.right))
    if isinstance(path, Release):
        return Release(normalize(path.left), normalize(path.right))
    if isinstance(path, Eventually):
        return Until(TRUE, normalize(path.operand))
    if isinstance(path, Globally):
        return Release(FALSE, normalize(path.operand))
    raise TypeError(f"not a path formula: {path!r}")


# -- utilities --------------------------------------------------------------------


def atoms(f) -> frozenset[str]:
    """All atom names occurring in a formula (including true/false)."""
    if isinstance(f, Atom):
        return frozenset([f.name])
    if isinstance(f, Not):
        return atoms(f.operand)
    if isinstance(f, (And, Or, Implies, Until, Release)):
        return atoms(f.left) | atoms(f.right)
    if isinstance(f, (Next, Eventually, Globally)):
        return atoms(f.operand)
    if isinstance(f, (StrategicProb, StrategicPlain)):
        return atoms(f.path)
    raise TypeError(f"not a formula: {f!r}")


def coalitions(f) -> frozenset[frozenset[str]]:
    if isinstance(f, (StrategicProb, StrategicPlain)):
        return frozenset([f.coalition]) | coalitions(f.path)
    if isinstance(f, Not):
        return coalitions(f.operand)
    if isinstance(f, (And, Or, Implies, Until, Release)):
        return coalitions(f.left) | coalitions(f.right)
    if isinstance(f, (Next, Eventually, Globally)):
        return coalitions(f.operand)
    if isinstance(f, Atom):
        return frozenset()
    raise TypeError(f"not a formula: {f!r}")


# -- JSON -------------------------------------------------------------------------


def formula_to_json(f) -> dict:
    if isinstance(f, Atom):
        return {"op": "atom", "name": f.name}
    if isinstance(f, Not):
        return {"op": "not", "operand": formula_to_json(f.operand)}
    if isinstance(f, And):
        return {"op": "and", "left": formula_to_json(f.left), "right": formula_to_json(f.right)}
    if isinstance(f, Or):
        return {"op": "or", "left": formula_to_json(f.left), "right": formula_to_json(f.right)}
    if isinstance(f, Implies):
        return {"op": "implies", "left": formula_to_json(f.left), "right": formula_to_json(f.right)}
    if isinstance(f, StrategicProb):
        return {
            "op": "strategic",
            "coalition": sorted(f.coalition),
            "relation": f.bound.relation,
            "threshold": str(f.bound.threshold),
            "path": formula_to_json(f.path),
        }
    if isinstance(f, StrategicPlain):
        return {"op": "strategic", "coalition": sorted(f.coalition), "path": formula_to_json(f.path)}
    if isinstance(f, Next):
        return {"op": "next", "operand": formula_to_json(f.operand)}
    if isinstance(f, Eventually):
        return {"op": "eventually", "operand": formula_to_json(f.operand)}
    if isinstance(f, Globally):
        return {"op": "globally", "operand": formula_to_json(f.operand)}
    if isinstance(f, Until):
        return {"op": "until", "left": formula_to_json(f.left), "right": formula_to_json(f.right)}
    if isinstance(f, Release):
        return {"op": "release", "left": formula_to_json(f.left), "right": formula_to_json(f.right)}
    raise TypeError(f"not a formula: {f!r}")


def formula_from_json(doc: dict):
    op = doc["op"]
    if op == "atom":
        return Atom(doc["name"])
    if op == "not":
        return Not(formula_from_json(doc["operand"]))
    if op in ("and", "or", "implies", "until", "release"):
        cls = {"and": And, "or": Or, "implies": Implies, "until": Until, "release": Release}[op]
        return cls(formula_from_json(doc["left"]), formula_from_json(doc["right"]))
    if op in ("next", "eventually", "globally"):
        cls = {"next": Next, "eventually": Eventually, "globally": Globally}[op]
        return cls(formula_from_json(doc["operand"]))
    if op == "strategic":
        path = formula_from_json(doc["path"])
        coalition = frozenset(doc["coalition"])
        if "relation" in doc:
            bound = ProbabilityBound(doc["relation"], Fraction(doc["threshold"]))
            return StrategicProb(coalition, bound, path)
        return StrategicPlain(coalition, path)
    raise ValueError(f"unknown formula op {op!r}")

"""LTL syntax, parsing, and the predicate analysis used to shrink program domains.

Assignments are frozensets holding the signals that are true.  Enumerations of
``2^X`` follow :func:`assignments`: product order with the first declared signal
as the most significant bit, so the all-false assignment always comes first.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

KEYWORDS = frozenset({"X", "F", "G", "U", "true", "false"})
_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


class FormulaError(ValueError):
    """Raised for malformed formulas or undeclared signals."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UndeclaredSignalError(FormulaError):
    def __init__(self, name: str):
        super().__init__(f"undeclared signal {name!r}")
        self.name = name


# ---------------------------------------------------------------------------
# signals


def check_signal_name(name: str) -> str:
    if not isinstance(name, str) or not _NAME.match(name) or name in KEYWORDS:
        raise ValueError(f"invalid signal name {name!r}")
    return name


@dataclass(frozen=True)
class SignalPartition:
    """Visible/hidden inputs and controlled/guided outputs, in declared order."""

    visible: tuple[str, ...] = ()
    hidden: tuple[str, ...] = ()
    controlled: tuple[str, ...] = ()
    guided: tuple[str, ...] = ()

    def __post_init__(self):
        for field in ("visible", "hidden", "controlled", "guided"):
            object.__setattr__(self, field, tuple(getattr(self, field)))
        names = self.signals
        for name in names:
            check_signal_name(name)
        if len(set(names)) != len(names):
            raise ValueError(f"signal sets overlap or repeat: {names}")

    @property
    def inputs(self) -> tuple[str, ...]:
        return self.visible + self.hidden

    @property
    def outputs(self) -> tuple[str, ...]:
        return self.controlled + self.guided

    @property
    def signals(self) -> tuple[str, ...]:
        return self.visible + self.hidden + self.controlled + self.guided

    def kind(self, name: str) -> str:
        for field in ("visible", "hidden", "controlled", "guided"):
            if name in getattr(self, field):
                return field
        raise UndeclaredSignalError(name)

    def to_dict(self) -> dict:
        return {
            "visible": list(self.visible),
            "hidden": list(self.hidden),
            "controlled": list(self.controlled),
            "guided": list(self.guided),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SignalPartition":
        return cls(*(tuple(data.get(k, ())) for k in ("visible", "hidden", "controlled", "guided")))


def assignments(signals: Sequence[str]) -> list[frozenset[str]]:
    """All of ``2^signals`` in increasing bitset order."""
    signals = tuple(signals)
    return [
        frozenset(s for s, bit in zip(signals, bits) if bit)
        for bits in itertools.product((False, True), repeat=len(signals))
    ]


def to_bits(assignment: Iterable[str], signals: Sequence[str]) -> int:
    assignment = set(assignment)
    n = len(signals)
    return sum(1 << (n - 1 - j) for j, s in enumerate(signals) if s in assignment)


def from_bits(bits: int, signals: Sequence[str]) -> frozenset[str]:
    n = len(signals)
    return frozenset(s for j, s in enumerate(signals) if bits >> (n - 1 - j) & 1)


def format_assignment(assignment: Iterable[str], signals: Sequence[str] | None = None) -> str:
    assignment = set(assignment)
    order = list(signals) if signals is not None else sorted(assignment)
    return "{" + ",".join(s for s in order if s in assignment) + "}"


# ---------------------------------------------------------------------------
# formulas


class Formula:
    """Base class of LTL syntax trees.  Nodes are immutable and hashable."""

    __slots__ = ()

    @property
    def children(self) -> tuple["Formula", ...]:
        return ()

    def __str__(self) -> str:
        return pretty(self)


@dataclass(frozen=True, repr=False)
class Atom(Formula):
    name: str

    def __repr__(self):
        return f"Atom({self.name!r})"


@dataclass(frozen=True, repr=False)
class Const(Formula):
    value: bool

    def __repr__(self):
        return "TRUE" if self.value else "FALSE"


@dataclass(frozen=True)
class _Unary(Formula):
    arg: Formula

    @property
    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class _Binary(Formula):
    left: Formula
    right: Formula

    @property
    def children(self):
        return (self.left, self.right)


class Not(_Unary):
    pass


class Next(_Unary):
    pass


class Eventually(_Unary):
    pass


class Always(_Unary):
    pass


class And(_Binary):
    pass


class Or(_Binary):
    pass


class Implies(_Binary):
    pass


class Iff(_Binary):
    pass


class Until(_Binary):
    pass


TRUE = Const(True)
FALSE = Const(False)

TEMPORAL = (Next, Eventually, Always, Until)


def size(phi: Formula) -> int:
    """Node count of the syntax tree; derived connectives count as one node."""
    return 1 + sum(size(c) for c in phi.children)


def atoms(phi: Formula) -> tuple[str, ...]:
    """Atom names in first-occurrence (left-to-right) order."""
    seen: dict[str, None] = {}

    def walk(f):
        if isinstance(f, Atom):
            seen.setdefault(f.name)
        for c in f.children:
            walk(c)

    walk(phi)
    return tuple(seen)


def is_propositional(phi: Formula) -> bool:
    if isinstance(phi, TEMPORAL):
        return False
    return all(is_propositional(c) for c in phi.children)


def conjunction(formulas: Sequence[Formula]) -> Formula:
    if not formulas:
        return TRUE
    result = formulas[0]
    for f in formulas[1:]:
        result = And(result, f)
    return result


def disjunction(formulas: Sequence[Formula]) -> Formula:
    if not formulas:
        return FALSE
    result = formulas[0]
    for f in formulas[1:]:
        result = Or(result, f)
    return result


def next_power(phi: Formula, j: int) -> Formula:
    for _ in range(j):
        phi = Next(phi)
    return phi


# ---------------------------------------------------------------------------
# parsing and printing

_TOKEN = re.compile(r"\s*(?:(<->|->|[!&|()])|([A-Za-z][A-Za-z0-9_]*))")

# binding strength, higher binds tighter
_PREC = {Iff: 1, Implies: 2, Or: 3, And: 4, Until: 5}
_SYMBOL = {Iff: "<->", Implies: "->", Or: "|", And: "&", Until: "U"}
_UNARY_SYMBOL = {Not: "!", Next: "X ", Eventually: "F ", Always: "G "}
_UNARY_PREC = 6


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = len(text[pos:]) - len(text[pos:].lstrip()) + pos
            raise FormulaSyntaxError(f"unexpected character {text[start]!r}", start)
        start = m.start(1) if m.group(1) else m.start(2)
        tokens.append((m.group(1) or m.group(2), start))
        pos = m.end()
    tokens.append(("<eof>", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, declared: frozenset[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.declared = declared

    def peek(self) -> str:
        return self.tokens[self.i][0]

    def take(self) -> tuple[str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok, pos = self.take()
        if tok != value:
            raise FormulaSyntaxError(f"expected {value!r}, found {tok!r}", pos)

    def parse(self) -> Formula:
        phi = self.iff()
        tok, pos = self.tokens[self.i]
        if tok != "<eof>":
            raise FormulaSyntaxError(f"unexpected token {tok!r}", pos)
        return phi

    def iff(self):
        left = self.implies()
        if self.peek() == "<->":
            self.take()
            return Iff(left, self.iff())
        return left

    def implies(self):
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self):
        left = self.conj()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conj())
        return left

    def conj(self):
        left = self.until()
        while self.peek() == "&":
            self.take()
            left = And(left, self.until())
        return left

    def until(self):
        left = self.unary()
        if self.peek() == "U":
            self.take()
            return Until(left, self.until())
        return left

    def unary(self):
        tok, pos = self.take()
        if tok == "!":
            return Not(self.unary())
        if tok == "X":
            return Next(self.unary())
        if tok == "F":
            return Eventually(self.unary())
        if tok == "G":
            return Always(self.unary())
        if tok == "(":
            phi = self.iff()
            self.expect(")")
            return phi
        if tok == "true":
            return TRUE
        if tok == "false":
            return FALSE
        if tok == "<eof>":
            raise FormulaSyntaxError("unexpected end of formula", pos)
        if tok == "U" or not _NAME.match(tok):
            raise FormulaSyntaxError(f"unexpected token {tok!r}", pos)
        if self.declared is not None and tok not in self.declared:
            raise UndeclaredSignalError(tok)
        return Atom(tok)


def parse_formula(text: str, partition: SignalPartition | None = None) -> Formula:
    """Parse the ASCII grammar; atoms must be declared in ``partition`` if given."""
    declared = frozenset(partition.signals) if partition is not None else None
    return _Parser(text, declared).parse()


def pretty(phi: Formula) -> str:
    """Print with the minimal parentheses needed to re-parse to the same tree."""

    def go(f: Formula, need: int) -> str:
        if isinstance(f, Atom):
            return f.name
        if isinstance(f, Const):
            return "true" if f.value else "false"
        if isinstance(f, _Unary):
            text = _UNARY_SYMBOL[type(f)] + go(f.arg, _UNARY_PREC)
            prec = _UNARY_PREC
        else:
            prec = _PREC[type(f)]
            right_assoc = isinstance(f, (Until, Implies, Iff))
            left = go(f.left, prec + 1 if right_assoc else prec)
            right = go(f.right, prec if right_assoc else prec + 1)
            text = f"{left} {_SYMBOL[type(f)]} {right}"
        return f"({text})" if prec < need else text

    return go(phi, 0)


# ---------------------------------------------------------------------------
# predicate analysis


def eval_predicate(theta: Formula, sigma: Iterable[str]) -> bool:
    """Propositional evaluation; signals absent from ``sigma`` are false."""
    sigma = sigma if isinstance(sigma, (set, frozenset)) else frozenset(sigma)
    return _eval(theta, sigma)


def _eval(f: Formula, sigma) -> bool:
    if isinstance(f, Atom):
        return f.name in sigma
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not _eval(f.arg, sigma)
    if isinstance(f, And):
        return _eval(f.left, sigma) and _eval(f.right, sigma)
    if isinstance(f, Or):
        return _eval(f.left, sigma) or _eval(f.right, sigma)
    if isinstance(f, Implies):
        return not _eval(f.left, sigma) or _eval(f.right, sigma)
    if isinstance(f, Iff):
        return _eval(f.left, sigma) == _eval(f.right, sigma)
    raise FormulaError(f"temporal operator in predicate: {pretty(f)}")


def _add_unique(out: list, items: Iterable):
    for item in items:
        if item not in out:
            out.append(item)


def prop_set(phi: Formula) -> tuple[Formula, ...]:
    """Maximal propositional subformulas, in first-occurrence order."""
    if is_propositional(phi):
        return (phi,)
    out: list[Formula] = []
    for child in phi.children:
        _add_unique(out, prop_set(child))
    return tuple(out)


def _chain(theta: Formula, op) -> list[Formula]:
    """Operands of a maximal ``op`` chain, left to right."""
    if isinstance(theta, op):
        return _chain(theta.left, op) + _chain(theta.right, op)
    return [theta]


def _cl_predicate(theta: Formula, hidden: frozenset[str]) -> list[Formula]:
    if isinstance(theta, Const):
        return []
    names = set(atoms(theta))
    if names <= hidden:
        return [theta]
    if not names & hidden:
        return []
    out: list[Formula] = []
    if isinstance(theta, (And, Or)):
        # & and | are associative: the hidden-only operands of one chain form
        # a single maximal subformula however the chain happens to be parsed
        op = type(theta)
        operands = _chain(theta, op)
        pure = [x for x in operands if not isinstance(x, Const) and set(atoms(x)) <= hidden]
        if pure:
            joined = pure[0]
            for x in pure[1:]:
                joined = op(joined, x)
            _add_unique(out, _cl_predicate(joined, hidden))
        for x in operands:
            if x not in pure:
                _add_unique(out, _cl_predicate(x, hidden))
        return out
    # -> and <-> recurse like the other binary connectives
    for child in theta.children:
        _add_unique(out, _cl_predicate(child, hidden))
    return out


def cl_hidden(phi: Formula, partition: SignalPartition) -> tuple[Formula, ...]:
    """Maximal hidden-only subformulas of the predicates in ``prop_set(phi)``."""
    hidden = frozenset(partition.hidden)
    out: list[Formula] = []
    for theta in prop_set(phi):
        _add_unique(out, _cl_predicate(theta, hidden))
    return tuple(out)


def substitute(theta: Formula, values: Mapping[str, bool]) -> Formula:
    """Replace the atoms in ``values`` by constants and propagate them."""
    if isinstance(theta, Atom):
        if theta.name in values:
            return TRUE if values[theta.name] else FALSE
        return theta
    if isinstance(theta, Const):
        return theta
    if isinstance(theta, Not):
        arg = substitute(theta.arg, values)
        if isinstance(arg, Const):
            return Const(not arg.value)
        return Not(arg)
    if isinstance(theta, _Binary) and not isinstance(theta, Until):
        left = substitute(theta.left, values)
        right = substitute(theta.right, values)
        return _simplify_binary(type(theta), left, right)
    raise FormulaError(f"temporal operator in predicate: {pretty(theta)}")


def _simplify_binary(op, left: Formula, right: Formula) -> Formula:
    lc = left.value if isinstance(left, Const) else None
    rc = right.value if isinstance(right, Const) else None
    if op is And:
        if lc is False or rc is False:
            return FALSE
        if lc is True:
            return right
        if rc is True:
            return left
    elif op is Or:
        if lc is True or rc is True:
            return TRUE
        if lc is False:
            return right
        if rc is False:
            return left
    elif op is Implies:
        if lc is False or rc is True:
            return TRUE
        if lc is True:
            return right
        if rc is False:
            return Not(left) if lc is None else Const(not lc)
    elif op is Iff:
        if lc is not None and rc is not None:
            return Const(lc == rc)
        if lc is not None:
            return right if lc else Not(right)
        if rc is not None:
            return left if rc else Not(left)
    return op(left, right)


def restrict_predicates(
    preds: Sequence[Formula], partition: SignalPartition, f: Iterable[str]
) -> tuple[Formula, ...]:
    """Simplify ``preds`` under the assignment ``f`` to V u C, dropping constants."""
    f = frozenset(f)
    values = {s: s in f for s in partition.visible + partition.controlled}
    out: list[Formula] = []
    for theta in preds:
        simplified = substitute(theta, values)
        if not isinstance(simplified, Const):
            _add_unique(out, [simplified])
    return tuple(out)


def cl_hidden_f(phi: Formula, partition: SignalPartition, f: Iterable[str]) -> tuple[Formula, ...]:
    """``cl_hidden`` after fixing the visible and controlled signals to ``f``."""
    hidden = frozenset(partition.hidden)
    out: list[Formula] = []
    for theta in restrict_predicates(prop_set(phi), partition, f):
        _add_unique(out, _cl_predicate(theta, hidden))
    return tuple(out)


@dataclass(frozen=True)
class HiddenClassIndex:
    """Partition of ``2^H`` by joint valuation of hidden-only predicates.

    ``class_of[b]`` is the class of the hidden assignment with bitset ``b`` and
    ``reps[c]`` the bitset of the minimal member of class ``c``.  Classes are
    numbered in order of their minimal members.
    """

    hidden: tuple[str, ...]
    predicates: tuple[Formula, ...]
    class_of: tuple[int, ...]
    reps: tuple[int, ...]

    @property
    def num_classes(self) -> int:
        return len(self.reps)

    def classify(self, h: Iterable[str]) -> int:
        return self.class_of[to_bits(h, self.hidden)]

    def rep(self, h: Iterable[str]) -> frozenset[str]:
        return from_bits(self.reps[self.classify(h)], self.hidden)

    def rep_of_class(self, cls: int) -> frozenset[str]:
        return from_bits(self.reps[cls], self.hidden)

    def members(self, cls: int) -> list[frozenset[str]]:
        return [from_bits(b, self.hidden) for b, c in enumerate(self.class_of) if c == cls]

    def member_bits(self, cls: int) -> list[int]:
        return [b for b, c in enumerate(self.class_of) if c == cls]

    @property
    def is_discrete(self) -> bool:
        return self.num_classes == 1 << len(self.hidden)


def hidden_classes(preds: Sequence[Formula], partition: SignalPartition | Sequence[str]) -> HiddenClassIndex:
    hidden = tuple(partition.hidden) if isinstance(partition, SignalPartition) else tuple(partition)
    preds = tuple(preds)
    allowed = set(hidden)
    for theta in preds:
        extra = set(atoms(theta)) - allowed
        if extra:
            raise FormulaError(f"predicate {pretty(theta)} mentions non-hidden signals {sorted(extra)}")
    signature: dict[tuple[bool, ...], int] = {}
    class_of = []
    reps = []
    for bits, h in enumerate(assignments(hidden)):
        key = tuple(_eval(theta, h) for theta in preds)
        if key not in signature:
            signature[key] = len(reps)
            reps.append(bits)
        class_of.append(signature[key])
    return HiddenClassIndex(hidden, preds, tuple(class_of), tuple(reps))


def discrete_classes(hidden: SignalPartition | Sequence[str]) -> HiddenClassIndex:
    """The index distinguishing every hidden assignment (full program domain)."""
    names = tuple(hidden.hidden) if isinstance(hidden, SignalPartition) else tuple(hidden)
    return hidden_classes([Atom(h) for h in names], names)

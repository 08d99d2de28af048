"""Büchi word automata from LTL, lasso semantics, and product emptiness.

Letters are bitsets over the automaton's atom tuple (first atom is the most
significant bit), matching :func:`sge.logic.to_bits`.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Hashable, Iterable, Sequence

from .logic import (
    Always,
    And,
    Atom,
    Const,
    Eventually,
    Formula,
    Iff,
    Implies,
    Next,
    Not,
    Or,
    Until,
    atoms as formula_atoms,
    from_bits,
    to_bits,
)

# ---------------------------------------------------------------------------
# lasso words


@dataclass(frozen=True)
class LassoWord:
    """The infinite word ``prefix . period^omega`` over assignments."""

    prefix: tuple[frozenset[str], ...]
    period: tuple[frozenset[str], ...]

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(frozenset(a) for a in self.prefix))
        object.__setattr__(self, "period", tuple(frozenset(a) for a in self.period))
        if not self.period:
            raise ValueError("lasso period must be non-empty")

    def __len__(self) -> int:
        return len(self.prefix) + len(self.period)

    def letter(self, j: int) -> frozenset[str]:
        """Letter at position ``j`` of the infinite word (0-based)."""
        if j < len(self.prefix):
            return self.prefix[j]
        return self.period[(j - len(self.prefix)) % len(self.period)]

    def successor(self, j: int) -> int:
        """Next lasso position, folding the end of the period back to its start."""
        return j + 1 if j + 1 < len(self) else len(self.prefix)

    def unroll(self, n: int) -> list[frozenset[str]]:
        return [self.letter(j) for j in range(n)]

    def restrict(self, signals: Iterable[str]) -> "LassoWord":
        keep = frozenset(signals)
        return LassoWord(tuple(a & keep for a in self.prefix), tuple(a & keep for a in self.period))


def eval_ltl_lasso(phi: Formula, w: LassoWord) -> bool:
    """LTL satisfaction at position 0, by subformula labeling of lasso positions."""
    n = len(w)
    succ = [w.successor(j) for j in range(n)]
    letters = [w.letter(j) for j in range(n)]
    memo: dict[Formula, list[bool]] = {}

    def until(a: list[bool], b: list[bool]) -> list[bool]:
        val = list(b)
        changed = True
        while changed:
            changed = False
            for j in range(n - 1, -1, -1):
                if not val[j] and a[j] and val[succ[j]]:
                    val[j] = changed = True
        return val

    def label(f: Formula) -> list[bool]:
        if f in memo:
            return memo[f]
        if isinstance(f, Atom):
            val = [f.name in a for a in letters]
        elif isinstance(f, Const):
            val = [f.value] * n
        elif isinstance(f, Not):
            val = [not x for x in label(f.arg)]
        elif isinstance(f, And):
            val = [x and y for x, y in zip(label(f.left), label(f.right))]
        elif isinstance(f, Or):
            val = [x or y for x, y in zip(label(f.left), label(f.right))]
        elif isinstance(f, Implies):
            val = [not x or y for x, y in zip(label(f.left), label(f.right))]
        elif isinstance(f, Iff):
            val = [x == y for x, y in zip(label(f.left), label(f.right))]
        elif isinstance(f, Next):
            a = label(f.arg)
            val = [a[succ[j]] for j in range(n)]
        elif isinstance(f, Until):
            val = until(label(f.left), label(f.right))
        elif isinstance(f, Eventually):
            val = until([True] * n, label(f.arg))
        elif isinstance(f, Always):
            a = label(f.arg)
            val = list(a)
            changed = True
            while changed:
                changed = False
                for j in range(n - 1, -1, -1):
                    if val[j] and not val[succ[j]]:
                        val[j] = False
                        changed = True
        else:
            raise TypeError(f"unknown formula node {f!r}")
        memo[f] = val
        return val

    return label(phi)[0]


# ---------------------------------------------------------------------------
# negation normal form over tuples

_TT = ("T",)
_FF = ("F",)


def _nnf(f: Formula, neg: bool = False) -> tuple:
    if isinstance(f, Atom):
        return ("nap", f.name) if neg else ("ap", f.name)
    if isinstance(f, Const):
        return _FF if f.value == neg else _TT
    if isinstance(f, Not):
        return _nnf(f.arg, not neg)
    if isinstance(f, And):
        return _mk("or" if neg else "and", _nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Or):
        return _mk("and" if neg else "or", _nnf(f.left, neg), _nnf(f.right, neg))
    if isinstance(f, Implies):
        if neg:
            return _mk("and", _nnf(f.left), _nnf(f.right, True))
        return _mk("or", _nnf(f.left, True), _nnf(f.right))
    if isinstance(f, Iff):
        a, na = _nnf(f.left), _nnf(f.left, True)
        b, nb = _nnf(f.right), _nnf(f.right, True)
        if neg:
            return _mk("or", _mk("and", a, nb), _mk("and", na, b))
        return _mk("or", _mk("and", a, b), _mk("and", na, nb))
    if isinstance(f, Next):
        return ("X", _nnf(f.arg, neg))
    if isinstance(f, Eventually):
        if neg:
            return _mk("R", _FF, _nnf(f.arg, True))
        return _mk("U", _TT, _nnf(f.arg))
    if isinstance(f, Always):
        if neg:
            return _mk("U", _TT, _nnf(f.arg, True))
        return _mk("R", _FF, _nnf(f.arg))
    if isinstance(f, Until):
        if neg:
            return _mk("R", _nnf(f.left, True), _nnf(f.right, True))
        return _mk("U", _nnf(f.left), _nnf(f.right))
    raise TypeError(f"unknown formula node {f!r}")


def _mk(op: str, a: tuple, b: tuple) -> tuple:
    if op == "and":
        if a == _FF or b == _FF:
            return _FF
        if a == _TT:
            return b
        if b == _TT or a == b:
            return a
    elif op == "or":
        if a == _TT or b == _TT:
            return _TT
        if a == _FF:
            return b
        if b == _FF or a == b:
            return a
    elif op == "U":
        if b in (_TT, _FF):
            return b
    elif op == "R":
        if b in (_TT, _FF):
            return b
    return (op, a, b)


# A term is (pos, neg, next, postponed), each a frozenset.
_EMPTY = frozenset()
_UNIT = (_EMPTY, _EMPTY, _EMPTY, _EMPTY)


def _merge(t1, t2):
    pos = t1[0] | t2[0]
    neg = t1[1] | t2[1]
    if pos & neg:
        return None
    return (pos, neg, t1[2] | t2[2], t1[3] | t2[3])


def _product(terms1, terms2):
    out = []
    for t1 in terms1:
        for t2 in terms2:
            t = _merge(t1, t2)
            if t is not None:
                out.append(t)
    return _prune(out)


def _subsumes(t1, t2) -> bool:
    return t1[0] <= t2[0] and t1[1] <= t2[1] and t1[2] <= t2[2] and t1[3] <= t2[3]


def _prune(terms):
    unique = list(dict.fromkeys(terms))
    unique.sort(key=lambda t: (len(t[0]) + len(t[1]) + len(t[2]) + len(t[3])))
    kept = []
    for t in unique:
        if not any(_subsumes(k, t) for k in kept):
            kept.append(t)
    return kept


@lru_cache(maxsize=None)
def _expand(f: tuple) -> tuple:
    op = f[0]
    if op == "T":
        return (_UNIT,)
    if op == "F":
        return ()
    if op == "ap":
        return ((frozenset([f[1]]), _EMPTY, _EMPTY, _EMPTY),)
    if op == "nap":
        return ((_EMPTY, frozenset([f[1]]), _EMPTY, _EMPTY),)
    if op == "and":
        return tuple(_product(_expand(f[1]), _expand(f[2])))
    if op == "or":
        return tuple(_prune(list(_expand(f[1])) + list(_expand(f[2]))))
    if op == "X":
        nxt = _EMPTY if f[1] == _TT else frozenset([f[1]])
        return ((_EMPTY, _EMPTY, nxt, _EMPTY),)
    if op == "U":
        wait = (_EMPTY, _EMPTY, frozenset([f]), frozenset([f]))
        return tuple(_prune(list(_expand(f[2])) + _product(_expand(f[1]), [wait])))
    if op == "R":
        stay = (_EMPTY, _EMPTY, frozenset([f]), _EMPTY)
        both = _product(_expand(f[1]), _expand(f[2]))
        return tuple(_prune(both + _product(_expand(f[2]), [stay])))
    raise ValueError(f"bad nnf node {f!r}")


def _expand_set(formulas: frozenset) -> list:
    terms = [_UNIT]
    for f in sorted(formulas, key=repr):
        terms = _product(terms, _expand(f))
        if not terms:
            break
    return terms


def _untils(f: tuple, out: dict):
    if f[0] == "U":
        out.setdefault(f)
    for child in f[1:]:
        if isinstance(child, tuple):
            _untils(child, out)


# ---------------------------------------------------------------------------
# Büchi automata


@dataclass(frozen=True)
class Nbw:
    """Explicit Büchi automaton with dense per-letter transitions.

    ``delta[q][letter]`` is the sorted tuple of successors of ``q``.
    """

    atoms: tuple[str, ...]
    num_states: int
    initial: int
    delta: tuple[tuple[tuple[int, ...], ...], ...]
    accepting: frozenset[int]

    @property
    def states(self) -> range:
        return range(self.num_states)

    @property
    def num_letters(self) -> int:
        return 1 << len(self.atoms)

    def letter(self, assignment: Iterable[str]) -> int:
        return to_bits(assignment, self.atoms)

    def successors(self, q: int, assignment: Iterable[str]) -> tuple[int, ...]:
        return self.delta[q][self.letter(assignment)]

    def accepts(self, w: LassoWord) -> bool:
        return lasso_accepted(self, w)

    def to_dict(self) -> dict:
        transitions = []
        for q in self.states:
            for letter, succ in enumerate(self.delta[q]):
                if succ:
                    transitions.append(
                        {
                            "state": q,
                            "letter": sorted(from_bits(letter, self.atoms)),
                            "successors": list(succ),
                        }
                    )
        return {
            "format": "nbw",
            "atoms": list(self.atoms),
            "states": list(self.states),
            "initial": self.initial,
            "accepting": sorted(self.accepting),
            "transitions": transitions,
        }


def nbw_from_ltl(phi: Formula, atoms: Sequence[str] | None = None) -> Nbw:
    """Tableau construction: a generalized automaton over obligation sets, degeneralized.

    ``atoms`` fixes the alphabet; it defaults to the atoms of ``phi`` and may
    include signals that ``phi`` leaves unconstrained.
    """
    atoms = tuple(atoms) if atoms is not None else formula_atoms(phi)
    missing = set(formula_atoms(phi)) - set(atoms)
    if missing:
        raise ValueError(f"alphabet misses atoms {sorted(missing)}")
    root = _nnf(phi)
    until_index: dict = {}
    _untils(root, until_index)
    untils = list(until_index)
    n_u = len(untils)
    nbits = len(atoms)
    bit = {a: 1 << (nbits - 1 - j) for j, a in enumerate(atoms)}
    letters = range(1 << nbits)

    init_set = frozenset() if root == _TT else frozenset([root])
    if root == _FF:
        return Nbw(atoms, 1, 0, (tuple(() for _ in letters),), frozenset())

    index: dict = {(init_set, 0): 0}
    order = [(init_set, 0)]
    edges: list[list[tuple[int, int, int]]] = []  # (posmask, negmask, target)
    i = 0
    term_cache: dict = {}
    while i < len(order):
        obligations, level = order[i]
        i += 1
        if obligations not in term_cache:
            term_cache[obligations] = _expand_set(obligations)
        out = []
        base = 0 if level == n_u else level
        for pos, neg, nxt, postponed in term_cache[obligations]:
            lvl = base
            while lvl < n_u and untils[lvl] not in postponed:
                lvl += 1
            key = (nxt, lvl)
            if key not in index:
                index[key] = len(order)
                order.append(key)
            posmask = sum(bit[a] for a in pos)
            negmask = sum(bit[a] for a in neg)
            out.append((posmask, negmask, index[key]))
        edges.append(out)

    accepting = {q for q, (_, lvl) in enumerate(order) if lvl == n_u}
    delta = []
    for q in range(len(order)):
        row = []
        for letter in letters:
            succ = {t for pm, nm, t in edges[q] if letter & pm == pm and not letter & nm}
            row.append(tuple(sorted(succ)))
        delta.append(tuple(row))
    return _trim(Nbw(atoms, len(order), 0, tuple(delta), frozenset(accepting)))


def _trim(a: Nbw) -> Nbw:
    """Drop states that are unreachable or cannot reach an accepting cycle."""
    graph = [sorted({t for succ in a.delta[q] for t in succ}) for q in a.states]
    reach = _reachable([a.initial], lambda q: graph[q])
    live = _live_states(graph, a.accepting)
    keep = [q for q in sorted(reach) if q in live]
    if a.initial not in keep:
        keep = [a.initial]
    # renumber in breadth-first order from the initial state
    keep_set = set(keep)
    order = [a.initial]
    seen = {a.initial}
    k = 0
    while k < len(order):
        q = order[k]
        k += 1
        for succ in a.delta[q]:
            for t in succ:
                if t in keep_set and t not in seen:
                    seen.add(t)
                    order.append(t)
    new = {q: j for j, q in enumerate(order)}
    delta = tuple(
        tuple(tuple(sorted(new[t] for t in succ if t in new)) for succ in a.delta[q]) for q in order
    )
    accepting = frozenset(new[q] for q in order if q in a.accepting)
    return Nbw(a.atoms, len(order), 0, delta, accepting)


def _reachable(roots: Iterable, succ: Callable) -> set:
    seen = set(roots)
    stack = list(seen)
    while stack:
        x = stack.pop()
        for y in succ(x):
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return seen


def _live_states(graph: list[list[int]], accepting: Iterable[int]) -> set[int]:
    """States from which some accepting state on a cycle is reachable."""
    comps = strongly_connected_components(len(graph), graph)
    good = set()
    for comp in comps:
        cset = set(comp)
        nontrivial = len(comp) > 1 or comp[0] in graph[comp[0]]
        if nontrivial and cset & set(accepting):
            good |= cset
    rev: list[list[int]] = [[] for _ in graph]
    for q, succ in enumerate(graph):
        for t in succ:
            rev[t].append(q)
    return _reachable(good, lambda q: rev[q])


def cyclic_states(a: Nbw) -> frozenset[int]:
    """States lying on some cycle of the transition graph."""
    graph = [sorted({t for succ in a.delta[q] for t in succ}) for q in a.states]
    out = set()
    for comp in strongly_connected_components(a.num_states, graph):
        if len(comp) > 1 or comp[0] in graph[comp[0]]:
            out.update(comp)
    return frozenset(out)


def universal_states(a: Nbw, accepting: Iterable[int] | None = None) -> frozenset[int]:
    """States from which every infinite word has an accepting run.

    Computed as a sufficient condition: the largest set of accepting states
    that can always stay inside itself, closed backwards under "every letter
    has a successor in the set".
    """
    acc = set(a.accepting if accepting is None else accepting)
    core = set(acc)
    changed = True
    while changed:
        changed = False
        for q in list(core):
            if not all(any(t in core for t in succ) for succ in a.delta[q]):
                core.discard(q)
                changed = True
    doomed = set(core)
    changed = True
    while changed:
        changed = False
        for q in a.states:
            if q not in doomed and all(any(t in doomed for t in succ) for succ in a.delta[q]):
                doomed.add(q)
                changed = True
    return frozenset(doomed)


# ---------------------------------------------------------------------------
# graph algorithms


def strongly_connected_components(n: int, graph: Sequence[Sequence[int]]) -> list[list[int]]:
    """Iterative Tarjan; components are returned in reverse topological order."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, k = work[-1]
            succ = graph[v]
            if k < len(succ):
                work[-1] = (v, k + 1)
                w = succ[k]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
            else:
                work.pop()
                if work:
                    u = work[-1][0]
                    low[u] = min(low[u], low[v])
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        comp.append(w)
                        if w == v:
                            break
                    comps.append(sorted(comp))
    return comps


@dataclass
class _Explored:
    nodes: list
    edges: list  # per node: list of (label, target index)


def _explore(initial: Hashable, succ: Callable[[Hashable], Iterable[tuple[Hashable, Hashable]]]) -> _Explored:
    ids = {initial: 0}
    nodes = [initial]
    edges = []
    k = 0
    while k < len(nodes):
        out = []
        for label, target in succ(nodes[k]):
            if target not in ids:
                ids[target] = len(nodes)
                nodes.append(target)
            out.append((label, ids[target]))
        edges.append(out)
        k += 1
    return _Explored(nodes, edges)


def find_accepting_lasso(
    initial: Hashable,
    succ: Callable[[Hashable], Iterable[tuple[Hashable, Hashable]]],
    is_accepting: Callable[[Hashable], bool],
):
    """Search a finite graph for a reachable accepting cycle.

    Returns ``None`` when none exists, otherwise ``(prefix, cycle)`` as lists of
    ``(node, label)`` steps: the prefix leads from ``initial`` to the first node
    of the cycle, and the cycle returns to that node.
    """
    g = _explore(initial, succ)
    n = len(g.nodes)
    graph = [sorted({t for _, t in out}) for out in g.edges]
    good = [False] * n
    for comp in strongly_connected_components(n, graph):
        if len(comp) == 1 and comp[0] not in graph[comp[0]]:
            continue
        if any(is_accepting(g.nodes[x]) for x in comp):
            for x in comp:
                good[x] = True
    target = None
    parent: dict[int, tuple[int, object] | None] = {0: None}
    queue = deque([0])
    while queue:
        x = queue.popleft()
        if good[x] and is_accepting(g.nodes[x]):
            target = x
            break
        for label, t in g.edges[x]:
            if t not in parent:
                parent[t] = (x, label)
                queue.append(t)
    if target is None:
        return None
    prefix = _path_to(parent, target, g)
    # shortest cycle from target back to itself within its component
    back: dict[int, tuple[int, object]] = {}
    queue = deque([target])
    seen = {target}
    cycle = None
    while queue and cycle is None:
        x = queue.popleft()
        for label, t in g.edges[x]:
            if not good[t]:
                continue
            if t == target:
                steps = [(g.nodes[x], label)]
                y = x
                while y != target:
                    py, plabel = back[y]
                    steps.append((g.nodes[py], plabel))
                    y = py
                steps.reverse()
                cycle = steps
                break
            if t not in seen:
                seen.add(t)
                back[t] = (x, label)
                queue.append(t)
    assert cycle is not None
    return prefix, cycle


def _path_to(parent, target, g) -> list:
    steps = []
    x = target
    while parent[x] is not None:
        px, label = parent[x]
        steps.append((g.nodes[px], label))
        x = px
    steps.reverse()
    return steps


def lasso_accepted(a: Nbw, w: LassoWord) -> bool:
    """Whether some run of ``a`` on the lasso word visits accepting states infinitely often."""
    letters = [a.letter(w.letter(j) & frozenset(a.atoms)) for j in range(len(w))]

    def succ(node):
        j, q = node
        nj = w.successor(j)
        return [(None, (nj, t)) for t in a.delta[q][letters[j]]]

    return find_accepting_lasso((0, a.initial), succ, lambda node: node[1] in a.accepting) is not None


@dataclass(frozen=True)
class UcwView:
    """Universal co-Büchi reading of the automaton for the negated formula."""

    underlying: Nbw

    @property
    def rejecting(self) -> frozenset[int]:
        return self.underlying.accepting

    def accepts(self, w: LassoWord) -> bool:
        return not lasso_accepted(self.underlying, w)


def ucw_for(phi: Formula, atoms: Sequence[str] | None = None) -> UcwView:
    atoms = tuple(atoms) if atoms is not None else formula_atoms(phi)
    return UcwView(nbw_from_ltl(Not(phi), atoms))


# ---------------------------------------------------------------------------
# generators and emptiness


@dataclass(frozen=True)
class LabeledStructure:
    """Finite generator of infinite words.

    ``edges[v]`` lists ``(choice, label, target)``: for each environment choice
    one edge, labeled by the assignment it produces.
    """

    num_vertices: int
    initial: int
    edges: tuple[tuple[tuple[object, frozenset[str], int], ...], ...]

    def __post_init__(self):
        for v, out in enumerate(self.edges):
            if not out:
                raise ValueError(f"vertex {v} has no outgoing edge")


@dataclass(frozen=True)
class EmptinessResult:
    empty: bool
    choices: LassoWord | None = None  # environment choices along the witness
    labels: LassoWord | None = None  # the accepted labeling
    vertices: tuple[int, ...] = field(default=())  # vertex before each witness step

    def __bool__(self) -> bool:
        return self.empty


def product_empty(gen: LabeledStructure, bad: Nbw) -> EmptinessResult:
    """Decide whether no infinite path of ``gen`` is accepted by ``bad``."""
    atoms = frozenset(bad.atoms)
    letter_cache: dict = {}

    def letter(label):
        if label not in letter_cache:
            letter_cache[label] = bad.letter(label & atoms)
        return letter_cache[label]

    def succ(node):
        v, q = node
        out = []
        for k, (choice, label, target) in enumerate(gen.edges[v]):
            for t in bad.delta[q][letter(label)]:
                out.append((k, (target, t)))
        return out

    found = find_accepting_lasso((gen.initial, bad.initial), succ, lambda n: n[1] in bad.accepting)
    if found is None:
        return EmptinessResult(True)
    prefix, cycle = found

    def word(steps):
        return tuple(gen.edges[node[0]][k][0] for node, k in steps), tuple(
            gen.edges[node[0]][k][1] for node, k in steps
        )

    pc, pl = word(prefix)
    cc, cl = word(cycle)
    verts = tuple(node[0] for node, _ in prefix + cycle)
    return EmptinessResult(False, LassoWord(pc, cc), LassoWord(pl, cl), verts)


"""Transducers with a guided environment: model, execution, transformations, verification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .automata import LabeledStructure, LassoWord, Nbw, eval_ltl_lasso, nbw_from_ltl, product_empty
from .logic import (
    Formula,
    HiddenClassIndex,
    Not,
    SignalPartition,
    assignments,
    atoms as formula_atoms,
    cl_hidden,
    cl_hidden_f,
    discrete_classes,
    format_assignment,
    from_bits,
    hidden_classes,
    parse_formula,
    pretty,
    to_bits,
)

Assignment = frozenset  # of signal names


# ---------------------------------------------------------------------------
# programs


@dataclass(frozen=True)
class Program:
    """A table ``M x classes -> M x 2^G``; memories are ``0..k-1``.

    ``rows[m][cls] = (next_memory, guided)``.  ``dontcare`` marks rows whose
    value was chosen arbitrarily; it is metadata and ignored by equality.
    """

    index: HiddenClassIndex
    rows: tuple[tuple[tuple[int, frozenset[str]], ...], ...]
    dontcare: frozenset[tuple[int, int]] = field(default=frozenset(), compare=False)

    def __post_init__(self):
        rows = tuple(tuple((int(m2), frozenset(g)) for m2, g in row) for row in self.rows)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "dontcare", frozenset(self.dontcare))
        k = len(rows)
        for row in rows:
            if len(row) != self.index.num_classes:
                raise ValueError("program row does not cover every hidden class")
            for m2, _ in row:
                if not 0 <= m2 < k:
                    raise ValueError(f"next memory {m2} outside 0..{k - 1}")

    @property
    def memory_size(self) -> int:
        return len(self.rows)

    def __call__(self, m: int, h: Iterable[str]) -> tuple[int, frozenset[str]]:
        return self.rows[m][self.index.classify(h)]

    def memory_update(self, m: int, h: Iterable[str]) -> int:
        return self(m, h)[0]

    def guided(self, m: int, h: Iterable[str]) -> frozenset[str]:
        return self(m, h)[1]

    def table(self) -> dict[tuple[int, frozenset[str]], tuple[int, frozenset[str]]]:
        """The program as a function on raw hidden assignments."""
        return {
            (m, h): self(m, h)
            for m in range(self.memory_size)
            for h in assignments(self.index.hidden)
        }

    def same_function(self, other: "Program") -> bool:
        return self.index.hidden == other.index.hidden and self.table() == other.table()

    @classmethod
    def from_function(cls, index: HiddenClassIndex, k: int, fn) -> "Program":
        """Build from ``fn(m, rep) -> (m', g)`` evaluated on class representatives."""
        rows = tuple(
            tuple(fn(m, index.rep_of_class(c)) for c in range(index.num_classes)) for m in range(k)
        )
        return cls(index, rows)

    def is_tight_for(self, index: HiddenClassIndex) -> bool:
        """Constant on the classes of ``index``."""
        for m in range(self.memory_size):
            for c in range(index.num_classes):
                if len({self(m, h) for h in index.members(c)}) > 1:
                    return False
        return True


def constant_program(hidden: Sequence[str], k: int = 1, guided: Iterable[str] = (), memory: int | None = None) -> Program:
    index = hidden_classes([], hidden)
    rows = tuple(((m if memory is None else memory, frozenset(guided)),) for m in range(k))
    return Program(index, rows)


# ---------------------------------------------------------------------------
# machines


@dataclass(frozen=True)
class Transducer:
    """Full-visibility Mealy machine; ``transitions[s][i] = (s', o)`` with ``i`` a bitset over inputs."""

    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    num_states: int
    initial: int
    transitions: tuple[tuple[tuple[int, frozenset[str]], ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        trans = tuple(tuple((int(s2), frozenset(o)) for s2, o in row) for row in self.transitions)
        object.__setattr__(self, "transitions", trans)
        if len(trans) != self.num_states:
            raise ValueError("transition table does not cover every state")
        for row in trans:
            if len(row) != 1 << len(self.inputs):
                raise ValueError("transition table does not cover every input letter")

    def step(self, s: int, i: Iterable[str]) -> tuple[int, frozenset[str]]:
        return self.transitions[s][to_bits(i, self.inputs)]

    def run(self, word: Sequence[Iterable[str]]) -> list[frozenset[str]]:
        s = self.initial
        out = []
        for i in word:
            i = frozenset(i)
            s, o = self.step(s, i)
            out.append(i | o)
        return out

    def to_dict(self) -> dict:
        trans = []
        for s in range(self.num_states):
            for bits, (s2, o) in enumerate(self.transitions[s]):
                trans.append(
                    {
                        "state": f"s{s}",
                        "input": _sorted_in(from_bits(bits, self.inputs), self.inputs),
                        "next_state": f"s{s2}",
                        "output": _sorted_in(o, self.outputs),
                    }
                )
        return {
            "format": "transducer",
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "states": [f"s{s}" for s in range(self.num_states)],
            "initial_state": f"s{self.initial}",
            "transitions": trans,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Transducer":
        if data.get("format") != "transducer":
            raise ValueError("not a transducer document")
        inputs = tuple(data["inputs"])
        outputs = tuple(data["outputs"])
        names = list(data["states"])
        sid = {n: j for j, n in enumerate(names)}
        table: list[list] = [[None] * (1 << len(inputs)) for _ in names]
        for t in data["transitions"]:
            _check_subset(t["input"], inputs, "input")
            _check_subset(t["output"], outputs, "output")
            table[sid[t["state"]]][to_bits(t["input"], inputs)] = (sid[t["next_state"]], frozenset(t["output"]))
        if any(x is None for row in table for x in row):
            raise ValueError("transducer transitions are not total")
        return cls(inputs, outputs, len(names), sid[data["initial_state"]], tuple(map(tuple, table)))


@dataclass(frozen=True)
class Tge:
    """``transitions[s][v] = (s', c, program)`` with ``v`` a bitset over the visible signals.

    Memories are ``0..memory_size-1`` and all programs share that memory;
    the environment starts in ``initial_memory``.
    """

    partition: SignalPartition
    num_states: int
    initial: int
    memory_size: int
    initial_memory: int
    transitions: tuple[tuple[tuple[int, frozenset[str], Program], ...], ...]

    def __post_init__(self):
        trans = tuple(tuple((int(s2), frozenset(c), p) for s2, c, p in row) for row in self.transitions)
        object.__setattr__(self, "transitions", trans)
        n_v = 1 << len(self.partition.visible)
        if len(trans) != self.num_states or any(len(row) != n_v for row in trans):
            raise ValueError("TGE transitions are not total")
        for row in trans:
            for s2, c, p in row:
                if not 0 <= s2 < self.num_states:
                    raise ValueError(f"next state {s2} out of range")
                if not c <= set(self.partition.controlled):
                    raise ValueError(f"controlled assignment {sorted(c)} mentions other signals")
                if p.memory_size != self.memory_size:
                    raise ValueError("program memory differs from TGE memory")
                if p.index.hidden != self.partition.hidden:
                    raise ValueError("program hidden signals differ from TGE partition")
                for row_p in p.rows:
                    for _, g in row_p:
                        if not g <= set(self.partition.guided):
                            raise ValueError(f"guided assignment {sorted(g)} mentions other signals")
        if not 0 <= self.initial_memory < self.memory_size:
            raise ValueError("initial memory out of range")

    def step(self, s: int, v: Iterable[str]) -> tuple[int, frozenset[str], Program]:
        return self.transitions[s][to_bits(v, self.partition.visible)]

    def programs(self) -> list[Program]:
        """Distinct programs in order of first use (state-major, visible-letter order)."""
        out: list[Program] = []
        for row in self.transitions:
            for _, _, p in row:
                if p not in out:
                    out.append(p)
        return out


def _sorted_in(assignment: Iterable[str], order: Sequence[str]) -> list[str]:
    a = set(assignment)
    return [s for s in order if s in a]


def _check_subset(names, allowed, what):
    extra = set(names) - set(allowed)
    if extra:
        raise ValueError(f"{what} mentions undeclared signals {sorted(extra)}")


# ---------------------------------------------------------------------------
# execution


@dataclass(frozen=True)
class Step:
    state: int
    visible: frozenset[str]
    hidden: frozenset[str]
    controlled: frozenset[str]
    program: Program
    memory: int  # before the step
    next_state: int
    next_memory: int
    guided: frozenset[str]

    @property
    def letter(self) -> frozenset[str]:
        return self.visible | self.hidden | self.controlled | self.guided


@dataclass(frozen=True)
class Computation:
    """Steps of a run; for lasso inputs ``steps[loop_start:]`` repeats forever."""

    steps: tuple[Step, ...]
    initial_state: int
    initial_memory: int
    loop_start: int | None = None

    @property
    def is_lasso(self) -> bool:
        return self.loop_start is not None

    @property
    def letters(self) -> tuple[frozenset[str], ...]:
        return tuple(st.letter for st in self.steps)

    def word(self) -> LassoWord:
        if self.loop_start is None:
            raise ValueError("finite computation has no lasso word")
        letters = self.letters
        return LassoWord(letters[: self.loop_start], letters[self.loop_start :])

    def trace(self) -> tuple[tuple[int, int], ...]:
        return ((self.initial_state, self.initial_memory),) + tuple(
            (st.next_state, st.next_memory) for st in self.steps
        )

    def unroll(self, n: int) -> list[frozenset[str]]:
        letters = self.letters
        if self.loop_start is None:
            return list(letters[:n])
        return self.word().unroll(n)


def run_tge(t: Tge, w: LassoWord | Sequence[Iterable[str]]) -> Computation:
    """Execute ``t`` on a finite input word or on a lasso input word."""
    vis = frozenset(t.partition.visible)
    hid = frozenset(t.partition.hidden)

    def step(s, m, letter):
        letter = frozenset(letter)
        v, h = letter & vis, letter & hid
        s2, c, p = t.step(s, v)
        m2, g = p(m, h)
        return Step(s, v, h, c, p, m, s2, m2, g)

    s, m = t.initial, t.initial_memory
    steps: list[Step] = []
    if not isinstance(w, LassoWord):
        for letter in w:
            st = step(s, m, letter)
            steps.append(st)
            s, m = st.next_state, st.next_memory
        return Computation(tuple(steps), t.initial, t.initial_memory)

    seen: dict[tuple[int, int, int], int] = {}
    j = 0
    while True:
        if j >= len(w.prefix):
            key = (s, m, (j - len(w.prefix)) % len(w.period))
            if key in seen:
                return Computation(tuple(steps), t.initial, t.initial_memory, seen[key])
            seen[key] = j
        st = step(s, m, w.letter(j))
        steps.append(st)
        s, m = st.next_state, st.next_memory
        j += 1


# ---------------------------------------------------------------------------
# transformations


def transducer_to_tge(t: Transducer) -> Tge:
    """One-state TGE whose single program makes the environment simulate ``t``."""
    partition = SignalPartition((), t.inputs, (), t.outputs)
    index = discrete_classes(t.inputs)
    rows = tuple(
        tuple(t.transitions[s][index.reps[c]] for c in range(index.num_classes)) for s in range(t.num_states)
    )
    p = Program(index, rows)
    return Tge(partition, 1, 0, t.num_states, t.initial, (((0, frozenset(), p),),))


def tge_to_transducer(t: Tge) -> Transducer:
    """Full-visibility product on ``S x M``; state ``(s, m)`` is numbered ``s * |M| + m``."""
    part = t.partition
    k = t.memory_size
    inputs = part.inputs
    table = []
    for s in range(t.num_states):
        for m in range(k):
            row = []
            for i in assignments(inputs):
                s2, c, p = t.step(s, i & set(part.visible))
                m2, g = p(m, i & set(part.hidden))
                row.append((s2 * k + m2, c | g))
            table.append(tuple(row))
    return Transducer(inputs, part.outputs, t.num_states * k, t.initial * k + t.initial_memory, tuple(table))


def _rebuild(t: Tge, partition: SignalPartition, fn) -> Tge:
    """New TGE over ``partition`` with ``fn(s, v) -> (s', c, program)``; programs are shared by equality."""
    cache: dict[Program, Program] = {}
    rows = []
    for s in range(t.num_states):
        row = []
        for v in assignments(partition.visible):
            s2, c, p = fn(s, v)
            p = cache.setdefault(p, p)
            row.append((s2, c, p))
        rows.append(tuple(row))
    return Tge(partition, t.num_states, t.initial, t.memory_size, t.initial_memory, tuple(rows))


def reveal_inputs(t: Tge, revealed: Iterable[str]) -> Tge:
    """Move hidden signals ``revealed`` to the visible side; programs are partially applied."""
    part = t.partition
    revealed = frozenset(revealed)
    if not revealed <= set(part.hidden):
        raise ValueError(f"revealed signals {sorted(revealed - set(part.hidden))} are not hidden")
    new_visible = part.visible + tuple(h for h in part.hidden if h in revealed)
    new_hidden = tuple(h for h in part.hidden if h not in revealed)
    new_part = SignalPartition(new_visible, new_hidden, part.controlled, part.guided)
    index = discrete_classes(new_hidden)
    vis = frozenset(part.visible)
    memo: dict = {}

    def fn(s, u):
        s2, c, p = t.step(s, u & vis)
        fixed = u & revealed
        key = (p, fixed)
        if key not in memo:
            rows = []
            dont = set()
            for m in range(t.memory_size):
                row = []
                for cls in range(index.num_classes):
                    h = index.rep_of_class(cls) | fixed
                    row.append(p(m, h))
                    if (m, p.index.classify(h)) in p.dontcare:
                        dont.add((m, cls))
                rows.append(tuple(row))
            memo[key] = Program(index, tuple(rows), frozenset(dont))
        return s2, c, memo[key]

    return _rebuild(t, new_part, fn)


def delegate_outputs(t: Tge, delegated: Iterable[str]) -> Tge:
    """Move controlled signals ``delegated`` to the guided side; programs absorb their values."""
    part = t.partition
    delegated = frozenset(delegated)
    if not delegated <= set(part.controlled):
        raise ValueError(f"delegated signals {sorted(delegated - set(part.controlled))} are not controlled")
    new_part = SignalPartition(
        part.visible,
        part.hidden,
        tuple(c for c in part.controlled if c not in delegated),
        part.guided + tuple(c for c in part.controlled if c in delegated),
    )

    def fn(s, v):
        s2, c, p = t.step(s, v)
        extra = c & delegated
        rows = tuple(tuple((m2, g | extra) for m2, g in row) for row in p.rows)
        return s2, c - delegated, Program(p.index, rows, p.dontcare)

    return _rebuild(t, new_part, fn)


def tighten_program(p: Program, index: HiddenClassIndex) -> Program:
    """``p'(m, h) = p(m, rep(h))`` with ``rep`` taken from ``index``."""
    rows = []
    dont = set()
    for m in range(p.memory_size):
        row = []
        for cls in range(index.num_classes):
            h = index.rep_of_class(cls)
            row.append(p(m, h))
            if (m, p.index.classify(h)) in p.dontcare:
                dont.add((m, cls))
        rows.append(tuple(row))
    return Program(index, tuple(rows), frozenset(dont))


def tighten_tge(t: Tge, phi: Formula, mode: str = "tight") -> Tge:
    """Replace every program by its tight (or per-transition f-tight) version."""
    part = t.partition
    if mode not in ("tight", "f-tight"):
        raise ValueError(f"unknown tightening mode {mode!r}")
    plain = hidden_classes(cl_hidden(phi, part), part) if mode == "tight" else None
    index_cache: dict = {}

    def fn(s, v):
        s2, c, p = t.step(s, v)
        if plain is not None:
            index = plain
        else:
            key = v | c
            if key not in index_cache:
                index_cache[key] = hidden_classes(cl_hidden_f(phi, part, key), part)
            index = index_cache[key]
        return s2, c, tighten_program(p, index)

    return _rebuild(t, part, fn)


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class VerificationResult:
    realizes: bool
    counterexample: LassoWord | None = None  # input word over V u H
    computation: Computation | None = None

    def __bool__(self) -> bool:
        return self.realizes


def labeled_structure(t: Transducer) -> LabeledStructure:
    edges = []
    for s in range(t.num_states):
        out = []
        for bits, i in enumerate(assignments(t.inputs)):
            s2, o = t.transitions[s][bits]
            out.append((i, i | o, s2))
        edges.append(tuple(out))
    return LabeledStructure(t.num_states, t.initial, tuple(edges))


def verify_transducer(t: Transducer, phi: Formula, bad: Nbw | None = None):
    """Emptiness of the transducer's computations intersected with ``not phi``."""
    if bad is None:
        bad = nbw_from_ltl(Not(phi), formula_atoms(phi))
    return product_empty(labeled_structure(t), bad)


def verify_tge(t: Tge, phi: Formula, bad: Nbw | None = None) -> VerificationResult:
    """Check that every computation of ``t`` satisfies ``phi``."""
    missing = set(formula_atoms(phi)) - set(t.partition.signals)
    if missing:
        raise ValueError(f"formula mentions signals outside the TGE partition: {sorted(missing)}")
    res = verify_transducer(tge_to_transducer(t), phi, bad)
    if res.empty:
        return VerificationResult(True)
    word = res.choices
    return VerificationResult(False, word, run_tge(t, word))


def violates(t: Tge, phi: Formula, w: LassoWord) -> bool:
    return not eval_ltl_lasso(phi, run_tge(t, w).word())


# ---------------------------------------------------------------------------
# counting


def count_programs(memory_size: int, hidden_size: int, guided_size: int, classes: int | None = None):
    """Number of programs ``(|M| 2^|G|)^(|M| classes)``; ``math.inf`` beyond ``2^64``.

    ``classes=None`` counts the full domain of ``2^|H|`` hidden assignments.
    """
    if min(memory_size, hidden_size, guided_size) < 0:
        raise ValueError("sizes must be non-negative")
    if classes is None:
        classes = 1 << hidden_size
    base = memory_size << guided_size
    exp = memory_size * classes
    if base <= 1 or exp == 0:
        return 1 if exp == 0 or base == 1 else 0
    if exp * math.log2(base) > 64:
        return math.inf
    n = base**exp
    return n if n <= 1 << 64 else math.inf


# ---------------------------------------------------------------------------
# serialization


def program_ids(t: Tge) -> dict[Program, str]:
    return {p: f"p{j}" for j, p in enumerate(t.programs())}


def program_to_dict(p: Program, pid: str, partition: SignalPartition) -> dict:
    rows = []
    for m in range(p.memory_size):
        for cls in range(p.index.num_classes):
            m2, g = p.rows[m][cls]
            rows.append(
                {
                    "memory": f"m{m}",
                    "class": cls,
                    "rep": _sorted_in(p.index.rep_of_class(cls), partition.hidden),
                    "next_memory": f"m{m2}",
                    "guided": _sorted_in(g, partition.guided),
                    "dontcare": (m, cls) in p.dontcare,
                }
            )
    return {"id": pid, "class_predicates": [pretty(q) for q in p.index.predicates], "rows": rows}


def tge_to_dict(t: Tge) -> dict:
    ids = program_ids(t)
    part = t.partition
    transitions = []
    for s in range(t.num_states):
        for bits, v in enumerate(assignments(part.visible)):
            s2, c, p = t.transitions[s][bits]
            transitions.append(
                {
                    "state": f"s{s}",
                    "visible": _sorted_in(v, part.visible),
                    "next_state": f"s{s2}",
                    "controlled": _sorted_in(c, part.controlled),
                    "program": ids[p],
                }
            )
    return {
        "format": "tge",
        "partition": part.to_dict(),
        "states": [f"s{s}" for s in range(t.num_states)],
        "initial_state": f"s{t.initial}",
        "memory": [f"m{m}" for m in range(t.memory_size)],
        "initial_memory": f"m{t.initial_memory}",
        "programs": [program_to_dict(p, ids[p], part) for p in ids],
        "transitions": transitions,
    }


def tge_from_dict(data: Mapping) -> Tge:
    """Inverse of :func:`tge_to_dict`; state and memory names are arbitrary strings.

    Program rows may name their class by ``class`` index or by a ``rep``
    hidden assignment, which is classified under the program's predicates.
    Every (memory, class) pair must be covered.
    """
    if data.get("format") != "tge":
        raise ValueError("not a TGE document")
    part = SignalPartition.from_dict(data["partition"])
    states = list(data["states"])
    sid = {n: j for j, n in enumerate(states)}
    mems = list(data["memory"])
    mid = {n: j for j, n in enumerate(mems)}
    if len(sid) != len(states) or len(mid) != len(mems):
        raise ValueError("duplicate state or memory names")
    programs: dict[str, Program] = {}
    hidden_part = SignalPartition((), part.hidden, (), ())
    for pd in data["programs"]:
        preds = [parse_formula(text, hidden_part) for text in pd.get("class_predicates", [])]
        index = hidden_classes(preds, part.hidden)
        table: list[list] = [[None] * index.num_classes for _ in mems]
        dont = set()
        for row in pd["rows"]:
            m = mid[row["memory"]]
            if "class" in row:
                cls = int(row["class"])
                if not 0 <= cls < index.num_classes:
                    raise ValueError(f"program {pd['id']}: class {cls} out of range")
            else:
                _check_subset(row["rep"], part.hidden, "program row")
                cls = index.classify(row["rep"])
            _check_subset(row.get("guided", []), part.guided, "program row")
            table[m][cls] = (mid[row["next_memory"]], frozenset(row.get("guided", [])))
            if row.get("dontcare"):
                dont.add((m, cls))
        if any(x is None for r in table for x in r):
            raise ValueError(f"program {pd['id']} is not total")
        if pd["id"] in programs:
            raise ValueError(f"duplicate program id {pd['id']}")
        programs[pd["id"]] = Program(index, tuple(map(tuple, table)), frozenset(dont))
    table = [[None] * (1 << len(part.visible)) for _ in states]
    for tr in data["transitions"]:
        _check_subset(tr["visible"], part.visible, "transition")
        _check_subset(tr.get("controlled", []), part.controlled, "transition")
        entry = (sid[tr["next_state"]], frozenset(tr.get("controlled", [])), programs[tr["program"]])
        table[sid[tr["state"]]][to_bits(tr["visible"], part.visible)] = entry
    if any(x is None for r in table for x in r):
        raise ValueError("TGE transitions are not total")
    return Tge(part, len(states), sid[data["initial_state"]], len(mems), mid[data["initial_memory"]], tuple(map(tuple, table)))


def tge_to_dot(t: Tge) -> str:
    ids = program_ids(t)
    part = t.partition
    lines = ["digraph tge {", "  rankdir=LR;", '  init [shape=point];', f"  init -> s{t.initial};"]
    for s in range(t.num_states):
        lines.append(f'  s{s} [shape=circle, label="s{s}"];')
    for s in range(t.num_states):
        for bits, v in enumerate(assignments(part.visible)):
            s2, c, p = t.transitions[s][bits]
            label = f"{format_assignment(v, part.visible)} / [{format_assignment(c, part.controlled)}, {ids[p]}]"
            lines.append(f'  s{s} -> s{s2} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def format_program(p: Program, partition: SignalPartition, pid: str = "p") -> str:
    """Human-readable table of a program."""
    preds = ", ".join(pretty(q) for q in p.index.predicates) or "-"
    lines = [f"{pid}: classes over [{preds}]"]
    for m in range(p.memory_size):
        for cls in range(p.index.num_classes):
            m2, g = p.rows[m][cls]
            rep = format_assignment(p.index.rep_of_class(cls), partition.hidden)
            note = "  (dontcare)" if (m, cls) in p.dontcare else ""
            lines.append(f"  m{m}, class {cls} {rep} -> m{m2}, {format_assignment(g, partition.guided)}{note}")
    return "\n".join(lines)

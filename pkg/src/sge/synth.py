"""Bounded synthesis of TGEs.

The universal co-Büchi tree automaton over ``Q x M`` is solved as a safety
game on counting functions ``F : Q x M -> {-1, 0..B}`` (``-1`` meaning
unreachable).  The winning region is downward closed and is kept as an
antichain of maximal functions, computed backwards as a greatest fixpoint.

Two facts keep the backward step cheap.  A program chooses its row for every
(memory, class) pair independently, so the functions that a move maps below a
target ``w`` form a product over memory columns of one column set ``S``.
And relabeling memories maps strategies to strategies, so functions are
stored up to column permutation (canonical form: sorted columns).
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .automata import Nbw, cyclic_states, nbw_from_ltl, universal_states
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
    hidden_classes,
    to_bits,
)
from .tge import Program, Tge, count_programs, verify_tge

BOT = -1
MODES = ("full", "tight", "f-tight")


class SynthesisError(RuntimeError):
    """Raised when the engine would violate its own guarantees (a bug)."""


class SizingError(ValueError):
    """Raised when an instance exceeds a configured cap."""


@dataclass(frozen=True)
class SolverConfig:
    memory: int = 1
    bound_initial: int = 1
    bound_growth: int = 2
    bound_max: int | None = None  # None: 2 (|Q| |M|)^2
    program_mode: str = "f-tight"
    programs: tuple[Program, ...] | None = None  # restrict moves to these programs
    max_atoms: int = 12
    program_cap: int = 1 << 20
    time_budget: float | None = None  # seconds
    max_positions: int | None = None  # antichain size cap
    verify: bool = True

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory bound must be at least 1")
        if self.bound_initial < 0:
            raise ValueError("initial counter bound must be non-negative")
        if self.bound_growth < 2:
            raise ValueError("bound growth factor must be at least 2")
        if self.program_mode not in MODES:
            raise ValueError(f"program mode must be one of {MODES}")
        if self.bound_max is not None and self.bound_max < self.bound_initial:
            raise ValueError("bound_max below initial bound")

    def schedule(self, default_max: int) -> list[int]:
        top = default_max if self.bound_max is None else self.bound_max
        bounds = []
        b = self.bound_initial
        while b < top:
            bounds.append(b)
            b = max(b * self.bound_growth, b + 1)
        bounds.append(top)
        return bounds


@dataclass(frozen=True)
class SynthesisOutcome:
    tag: str  # Realizable | NotRealizableWithinBound | Unknown
    tge: Tge | None = None
    bound: int | None = None
    stats: dict = field(default_factory=dict, compare=False)

    @property
    def realizable(self) -> bool:
        return self.tag == "Realizable"


class Overflow(Exception):
    """A move pushes some branch past the counter bound or into a hopeless state."""


# ---------------------------------------------------------------------------
# the tree automaton


class UctSpec:
    """The universal co-Büchi tree automaton over ``Q x M`` for ``phi`` and memory ``k``.

    States of ``Q`` come from the Büchi automaton for the negated formula.
    ``alpha`` keeps only rejecting states on cycles (a transient state is
    visited at most once per branch), and ``hopeless`` holds states from which
    every continuation violates ``phi``.
    """

    def __init__(self, phi: Formula, partition: SignalPartition, k: int, max_atoms: int = 12):
        if k < 1:
            raise ValueError("memory bound must be at least 1")
        missing = set(formula_atoms(phi)) - set(partition.signals)
        if missing:
            raise ValueError(f"formula mentions undeclared signals {sorted(missing)}")
        if len(partition.signals) > max_atoms:
            raise SizingError(f"{len(partition.signals)} signals exceed the alphabet cap of {max_atoms}")
        self.phi = phi
        self.partition = partition
        self.k = k
        self.atoms = formula_atoms(phi)
        self.nbw: Nbw = nbw_from_ltl(Not(phi), self.atoms)
        self.n = self.nbw.num_states
        self.q0 = self.nbw.initial
        self.alpha = frozenset(self.nbw.accepting & cyclic_states(self.nbw))
        self.hopeless = universal_states(self.nbw)
        self.alpha_vec = np.array([1 if q in self.alpha else 0 for q in range(self.n)], dtype=np.int32)
        self.hopeless_vec = np.array([q in self.hopeless for q in range(self.n)])
        self._letter_cache: dict = {}

    @property
    def num_states(self) -> int:
        return self.n * self.k

    def letter(self, assignment) -> int:
        key = frozenset(assignment)
        if key not in self._letter_cache:
            self._letter_cache[key] = to_bits(key, self.atoms)
        return self._letter_cache[key]

    def succ_states(self, q: int, m: int, v, c, p: Program) -> set[tuple[int, int]]:
        """``U_h eta(q, v u h u c u p_G(m,h)) x {p_M(m,h)}``."""
        out = set()
        for h in assignments(self.partition.hidden):
            m2, g = p(m, h)
            letter = self.letter(frozenset(v) | h | frozenset(c) | g)
            for q2 in self.nbw.delta[q][letter]:
                out.add((q2, m2))
        return out

    def initial_function(self) -> np.ndarray:
        f = np.full((self.n, self.k), BOT, dtype=np.int32)
        f[self.q0, 0] = 1 if self.q0 in self.alpha else 0
        return f


def build_uct(phi: Formula, partition: SignalPartition, k: int) -> UctSpec:
    return UctSpec(phi, partition, k)


def counting_succ(uct: UctSpec, F: np.ndarray, v, c, p: Program, bound: int) -> np.ndarray:
    """Forward update of a counting function; raises :class:`Overflow` on a losing move."""
    F = np.asarray(F)
    out = np.full((uct.n, uct.k), BOT, dtype=np.int32)
    for q in range(uct.n):
        for m in range(uct.k):
            x = int(F[q, m])
            if x == BOT:
                continue
            for q2, m2 in uct.succ_states(q, m, v, c, p):
                if q2 in uct.hopeless:
                    raise Overflow((q2, m2))
                y = x + (1 if q2 in uct.alpha else 0)
                if y > bound:
                    raise Overflow((q2, m2))
                if y > out[q2, m2]:
                    out[q2, m2] = y
    return out


# ---------------------------------------------------------------------------
# program domains


def class_index(phi: Formula, partition: SignalPartition, mode: str, f=None) -> HiddenClassIndex:
    if mode == "full":
        return discrete_classes(partition)
    if mode == "tight":
        return hidden_classes(cl_hidden(phi, partition), partition)
    if mode == "f-tight":
        if f is None:
            raise ValueError("f-tight programs need an assignment to the visible and controlled signals")
        return hidden_classes(cl_hidden_f(phi, partition, f), partition)
    raise ValueError(f"unknown program mode {mode!r}")


def enumerate_programs(
    k: int,
    partition: SignalPartition,
    mode: str = "full",
    f=None,
    phi: Formula | None = None,
    cap: int | None = 1 << 20,
) -> Iterator[Program]:
    """All programs over the mode's class index, rows varying fastest at the last (memory, class)."""
    if mode != "full" and phi is None:
        raise ValueError("tight modes need the formula")
    index = class_index(phi, partition, mode, f)
    total = count_programs(k, len(partition.hidden), len(partition.guided), index.num_classes)
    if cap is not None and total > cap:
        raise SizingError(
            f"{total} programs (|M|={k}, {index.num_classes} classes, |G|={len(partition.guided)}) exceed cap {cap}"
        )
    options = [(m2, g) for m2 in range(k) for g in assignments(partition.guided)]
    slots = k * index.num_classes
    for choice in itertools.product(options, repeat=slots):
        rows = tuple(tuple(choice[m * index.num_classes : (m + 1) * index.num_classes]) for m in range(k))
        yield Program(index, rows)


# ---------------------------------------------------------------------------
# antichains of counting functions up to memory permutation


class Antichain:
    """Maximal elements of a set of ``n x k`` arrays, closed under column permutation."""

    def __init__(self, n: int, k: int):
        self.n, self.k = n, k
        self.perms = np.array(list(itertools.permutations(range(k))), dtype=np.intp)
        self.items: list[np.ndarray] = []
        self._perm_rows: list[np.ndarray] = []  # each (P, n*k)
        self._stack: np.ndarray | None = None

    def __len__(self):
        return len(self.items)

    def _all_perms(self, a: np.ndarray) -> np.ndarray:
        return a[:, self.perms].transpose(1, 0, 2).reshape(len(self.perms), -1)

    def dominated(self, a: np.ndarray) -> bool:
        """Whether ``a <= pi(b)`` for some stored ``b`` and permutation ``pi``."""
        if not self.items:
            return False
        if self._stack is None or len(self._stack) != len(self._perm_rows) * len(self.perms):
            self._stack = np.concatenate(self._perm_rows)
        return bool(np.any(np.all(self._stack >= a.reshape(1, -1), axis=1)))

    def add_unchecked(self, a: np.ndarray):
        self.items.append(a)
        self._perm_rows.append(self._all_perms(a))
        self._stack = None

    @classmethod
    def maximal(cls, n: int, k: int, candidates: Sequence[np.ndarray], limit: int | None = None) -> "Antichain":
        out = cls(n, k)
        uniq = {}
        for a in candidates:
            c = canonical(a)
            uniq.setdefault(c.tobytes(), c)
        ordered = sorted(uniq.values(), key=lambda a: (-int(a.sum()), a.tobytes()))
        for a in ordered:
            if not out.dominated(a):
                out.add_unchecked(a)
                if limit is not None and len(out) > limit:
                    raise _Budget("antichain size")
        return out


class _Budget(Exception):
    pass


def canonical(a: np.ndarray) -> np.ndarray:
    """Representative of the column-permutation orbit: columns in lexicographic order."""
    cols = sorted(range(a.shape[1]), key=lambda j: tuple(a[:, j]))
    return np.ascontiguousarray(a[:, cols])


def _max_vectors(vectors: list[np.ndarray]) -> list[np.ndarray]:
    uniq = {}
    for v in vectors:
        uniq.setdefault(v.tobytes(), v)
    ordered = sorted(uniq.values(), key=lambda v: (-int(v.sum()), v.tobytes()))
    kept: list[np.ndarray] = []
    for v in ordered:
        if not any(np.all(v <= w) for w in kept):
            kept.append(v)
    return kept


# ---------------------------------------------------------------------------
# the solver


@dataclass
class _Move:
    """Successor structure of one (direction, controlled, class, guided) choice."""

    reach: np.ndarray  # (n, n) bool: q -> q' for some hidden assignment of the class
    hopeless: np.ndarray  # (n,) bool: some successor is hopeless
    has_succ: np.ndarray  # (n,) bool


class Solver:
    def __init__(self, phi: Formula, partition: SignalPartition, config: SolverConfig):
        self.phi = phi
        self.partition = partition
        self.config = config
        self.uct = UctSpec(phi, partition, config.memory, config.max_atoms)
        self.n = self.uct.n
        self.k = config.memory
        part = partition
        self.vis = assignments(part.visible)
        self.ctl = assignments(part.controlled)
        self.gds = assignments(part.guided)
        # class index per (v, c)
        self.indexes: dict[tuple[int, int], HiddenClassIndex] = {}
        for vi, v in enumerate(self.vis):
            for ci, c in enumerate(self.ctl):
                if config.programs is not None:
                    idx = config.programs[0].index if config.programs else discrete_classes(part)
                else:
                    idx = class_index(phi, part, config.program_mode, v | c)
                self.indexes[vi, ci] = idx
        self.moves: dict[tuple[int, int, int, int], _Move] = {}
        for (vi, ci), idx in self.indexes.items():
            for cls in range(idx.num_classes):
                members = idx.members(cls)
                for gi, g in enumerate(self.gds):
                    self.moves[vi, ci, cls, gi] = self._move(self.vis[vi] | self.ctl[ci] | g, members)
        self.stats = {"iterations": 0, "positions": 0, "bounds_tried": [], "class_options": 0}
        self.deadline = None if config.time_budget is None else time.monotonic() + config.time_budget

    def _move(self, base: frozenset, members: list[frozenset]) -> _Move:
        n = self.n
        reach = np.zeros((n, n), dtype=bool)
        for h in members:
            letter = self.uct.letter(base | h)
            for q in range(n):
                for q2 in self.uct.nbw.delta[q][letter]:
                    reach[q, q2] = True
        hopeless = np.any(reach & self.uct.hopeless_vec[None, :], axis=1)
        return _Move(reach, hopeless, reach.any(axis=1))

    # -- backward step ------------------------------------------------------

    def _vec_all(self, w: np.ndarray, mv: _Move, bound: int) -> np.ndarray:
        """``(n, k)``: largest counts at ``q`` whose successors under ``mv`` fit ``w[:, m']``."""
        vals = w - self.uct.alpha_vec[:, None]  # (n, k)
        big = bound + 1
        masked = np.where(mv.reach[:, :, None], vals[None, :, :], big)
        out = masked.min(axis=1)
        out = np.clip(out, BOT, bound)
        out[mv.hopeless, :] = BOT
        return out.astype(np.int32)

    def _options(self, w: np.ndarray, vi: int, ci: int, bound: int) -> list[list[tuple[np.ndarray, int, int]]]:
        """Per class: list of (vector, m', guided index) options."""
        idx = self.indexes[vi, ci]
        out = []
        for cls in range(idx.num_classes):
            opts = []
            for gi in range(len(self.gds)):
                vec = self._vec_all(w, self.moves[vi, ci, cls, gi], bound)
                for m2 in range(self.k):
                    opts.append((vec[:, m2], m2, gi))
            out.append(opts)
        return out

    def _column_set(self, w: np.ndarray, vi: int, ci: int, bound: int) -> list[np.ndarray]:
        cols = [np.full(self.n, bound, dtype=np.int32)]
        for opts in self._options(w, vi, ci, bound):
            vecs = _max_vectors([o[0] for o in opts])
            cols = _max_vectors([np.minimum(a, b) for a in cols for b in vecs])
            self.stats["class_options"] += len(opts)
        return cols

    def _explicit_functions(self, w: np.ndarray, vi: int, ci: int, bound: int) -> list[np.ndarray]:
        """Maximal functions a listed program maps below ``w``."""
        out = []
        cache = {}
        for p in self.config.programs:
            F = np.full((self.n, self.k), bound, dtype=np.int32)
            for m in range(self.k):
                for cls in range(p.index.num_classes):
                    m2, g = p.rows[m][cls]
                    gi = to_bits(g, self.partition.guided)
                    key = (cls, gi)
                    if key not in cache:
                        cache[key] = self._vec_all(w, self.moves[vi, ci, cls, gi], bound)
                    F[:, m] = np.minimum(F[:, m], cache[key][:, m2])
            out.append(F)
        return out

    def _check_budget(self, size: int = 0):
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Budget("time")
        if self.config.max_positions is not None and size > self.config.max_positions:
            raise _Budget("antichain size")

    def cpre(self, W: Antichain, bound: int) -> Antichain:
        limit = self.config.max_positions
        per_dir: list[Antichain] = []
        for vi in range(len(self.vis)):
            cands = []
            for w in W.items:
                for ci in range(len(self.ctl)):
                    self._check_budget()
                    if self.config.programs is not None:
                        cands.extend(self._explicit_functions(w, vi, ci, bound))
                        continue
                    cols = self._column_set(w, vi, ci, bound)
                    for combo in itertools.combinations_with_replacement(range(len(cols)), self.k):
                        cands.append(np.stack([cols[j] for j in combo], axis=1))
            self.stats["positions"] += len(cands)
            per_dir.append(Antichain.maximal(self.n, self.k, cands, limit))
        result = per_dir[0]
        for other in per_dir[1:]:
            cands = []
            for a in result.items:
                for b in other.items:
                    for perm in W.perms:
                        cands.append(np.minimum(a, b[:, perm]))
                self._check_budget(len(cands))
            self.stats["positions"] += len(cands)
            result = Antichain.maximal(self.n, self.k, cands, limit)
        return result

    def winning_region(self, bound: int) -> Antichain:
        W = Antichain(self.n, self.k)
        W.add_unchecked(np.full((self.n, self.k), bound, dtype=np.int32))
        f0 = self.uct.initial_function()
        while True:
            self._check_budget(len(W))
            self.stats["iterations"] += 1
            new = self.cpre(W, bound)
            if not _contains(new, f0):
                return new
            if _same(new, W):
                return new
            W = new

    # -- driver -------------------------------------------------------------

    def solve(self) -> SynthesisOutcome:
        start = time.monotonic()
        f0 = self.uct.initial_function()
        default_max = 2 * (self.n * self.k) ** 2
        bounds = self.config.schedule(default_max)
        if not (self.uct.alpha - self.uct.hopeless):
            bounds = bounds[-1:]  # counts never grow: every bound gives the same game
        self.stats.update(
            ucw_states=self.n,
            rejecting_states=len(self.uct.alpha),
            hopeless_states=len(self.uct.hopeless),
            memory=self.k,
            program_mode=self.config.program_mode if self.config.programs is None else "listed",
        )
        last = None
        try:
            if self.uct.q0 in self.uct.hopeless:
                bounds = bounds[-1:]
                self.stats["bounds_tried"].append(bounds[-1])
                return self._finish(SynthesisOutcome("NotRealizableWithinBound", None, bounds[-1]), start)
            for bound in bounds:
                last = bound
                self.stats["bounds_tried"].append(bound)
                W = self.winning_region(bound)
                self.stats["antichain_size"] = len(W)
                if _contains(W, f0):
                    tge = self.extract(W, bound)
                    return self._finish(SynthesisOutcome("Realizable", tge, bound), start)
        except _Budget as exc:
            self.stats["budget"] = str(exc)
            return self._finish(SynthesisOutcome("Unknown", None, last), start)
        return self._finish(SynthesisOutcome("NotRealizableWithinBound", None, last), start)

    def _finish(self, outcome: SynthesisOutcome, start: float) -> SynthesisOutcome:
        stats = dict(self.stats)
        stats["wall_time"] = time.monotonic() - start
        return SynthesisOutcome(outcome.tag, outcome.tge, outcome.bound, stats)

    # -- strategy extraction -----------------------------------------------

    def _option_matrices(self, target: np.ndarray, vi: int, ci: int, bound: int):
        """Per class: (vectors (n_opts, n), [(m', guided index)])."""
        out = []
        for opts in self._options(target, vi, ci, bound):
            out.append((np.stack([o[0] for o in opts]), [(o[1], o[2]) for o in opts]))
        return out

    def _move_ok(self, sources: np.ndarray, target: np.ndarray, vi: int, ci: int, bound: int) -> np.ndarray:
        """For each source function, whether some program maps it below ``target``."""
        N = len(sources)
        if self.config.programs is not None:
            Fs = np.stack(self._explicit_functions(target, vi, ci, bound))  # (P, n, k)
            return np.all(sources[:, None] <= Fs[None], axis=(2, 3)).any(axis=1)
        cols = sources.transpose(0, 2, 1).reshape(N * self.k, self.n)
        good = np.all(cols == BOT, axis=1)
        fits = np.ones(N * self.k, dtype=bool)
        for vecs, _ in self._option_matrices(target, vi, ci, bound):
            fits &= np.all(cols[:, None, :] <= vecs[None, :, :], axis=2).any(axis=1)
        return (good | fits).reshape(N, self.k).all(axis=1)

    def _rows_for(self, w: np.ndarray, target: np.ndarray, vi: int, ci: int, bound: int):
        """A program mapping ``w`` below ``target``: ``(rows, dontcare, listed)`` or ``None``."""
        if self.config.programs is not None:
            for p, F in zip(self.config.programs, self._explicit_functions(target, vi, ci, bound)):
                if np.all(w <= F):
                    return p.rows, frozenset(), p
            return None
        options = self._option_matrices(target, vi, ci, bound)
        rows = []
        dont = set()
        for m in range(self.k):
            col = w[:, m]
            if np.all(col == BOT):
                rows.append(tuple((m, frozenset()) for _ in options))
                dont.update((m, cls) for cls in range(len(options)))
                continue
            row = []
            for vecs, labels in options:
                hits = np.flatnonzero(np.all(col[None, :] <= vecs, axis=1))
                if len(hits) == 0:
                    return None
                m2, gi = labels[hits[0]]
                row.append((m2, self.gds[gi]))
            rows.append(tuple(row))
        return tuple(rows), frozenset(dont), None

    def _closed_set(self, items: list[np.ndarray], bound: int, start_ok: np.ndarray) -> list[int]:
        """Indices of a small set of winning functions closed under some move per direction.

        Smallest sets are tried first while the search stays cheap; otherwise
        the set reachable by preferring already chosen targets is returned.
        """
        N = len(items)
        stack = np.stack(items)
        ok = np.zeros((len(self.vis), N, N), dtype=bool)  # ok[v, source, target]
        for vi in range(len(self.vis)):
            for b in range(N):
                for ci in range(len(self.ctl)):
                    ok[vi, :, b] |= self._move_ok(stack, items[b], vi, ci, bound)
        budget = 200_000
        for size in range(1, N + 1):
            n_sets = math.comb(N, size)
            if n_sets > budget:
                break
            budget -= n_sets
            for combo in itertools.combinations(range(N), size):
                if not start_ok[list(combo)].any():
                    continue
                sub = ok[:, list(combo)][:, :, list(combo)]
                if sub.any(axis=2).all():
                    first = next(j for j in combo if start_ok[j])
                    return [first] + [j for j in combo if j != first]
        first = int(np.flatnonzero(start_ok)[0])
        chosen = [first]
        j = 0
        while j < len(chosen):
            a = chosen[j]
            j += 1
            for vi in range(len(self.vis)):
                if any(ok[vi, a, b] for b in chosen):
                    continue
                b = int(np.flatnonzero(ok[vi, a])[0])
                chosen.append(b)
        return chosen

    def extract(self, W: Antichain, bound: int) -> Tge:
        """Build a TGE whose states are winning functions and whose moves keep the counts below them."""
        f0 = self.uct.initial_function()
        items = list(W.items)
        start_perm = []
        for a in items:
            perm = next((p for p in W.perms if np.all(f0 <= a[:, p])), None)
            start_perm.append(perm)
        start_ok = np.array([p is not None for p in start_perm])
        chosen = self._closed_set(items, bound, start_ok)
        first = chosen[0]
        pool = [np.ascontiguousarray(items[first][:, start_perm[first]])] + [items[j] for j in chosen[1:]]
        # breadth-first numbering from the initial state; unreachable members are dropped
        order = [0]
        table: dict[int, list] = {}
        program_cache: dict = {}
        j = 0
        while j < len(order):
            a = order[j]
            j += 1
            row = []
            for vi in range(len(self.vis)):
                found = None
                candidates = order + [b for b in range(len(pool)) if b not in order]
                for b in candidates:
                    for ci in range(len(self.ctl)):
                        r = self._rows_for(pool[a], pool[b], vi, ci, bound)
                        if r is not None:
                            found = (b, ci, r)
                            break
                    if found:
                        break
                if found is None:
                    raise SynthesisError("winning position without a winning move")
                b, ci, (rows, dont, listed) = found
                if b not in order:
                    order.append(b)
                if listed is not None:
                    prog = listed
                else:
                    prog = Program(self.indexes[vi, ci], rows, dont)
                    prog = program_cache.setdefault(prog, prog)
                row.append((b, self.ctl[ci], prog))
            table[a] = row
        renumber = {a: i for i, a in enumerate(order)}
        transitions = tuple(
            tuple((renumber[b], c, p) for b, c, p in table[a]) for a in order
        )
        tge = Tge(self.partition, len(order), 0, self.k, 0, transitions)
        self.stats["tge_states"] = len(order)
        if self.config.verify:
            res = verify_tge(tge, self.phi)
            if not res.realizes:
                raise SynthesisError("extracted TGE fails verification")
            self.stats["verified"] = True
        return tge


def _contains(W: Antichain, f: np.ndarray) -> bool:
    return W.dominated(canonical(f)) or W.dominated(f)


def _same(a: Antichain, b: Antichain) -> bool:
    return len(a) == len(b) and {x.tobytes() for x in a.items} == {x.tobytes() for x in b.items}


def solve(phi: Formula, partition: SignalPartition, config: SolverConfig | None = None) -> SynthesisOutcome:
    """Decide bounded realizability with memory ``config.memory`` and extract a TGE."""
    config = config or SolverConfig()
    return Solver(phi, partition, config).solve()


def extract_tge(solver: Solver, W: Antichain, bound: int) -> Tge:
    return solver.extract(W, bound)

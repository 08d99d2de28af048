"""Seeded random generators for formulas, words and machines."""
from __future__ import annotations

import random

from sge.automata import LassoWord
from sge.logic import (
    FALSE,
    TRUE,
    Always,
    And,
    Atom,
    Eventually,
    Iff,
    Implies,
    Next,
    Not,
    Or,
    SignalPartition,
    Until,
    assignments,
    discrete_classes,
    size,
)
from sge.tge import Program, Tge, Transducer

UNARY = (Not, Next, Eventually, Always)
BINARY = (And, Or, Implies, Iff, Until)


def formula(rng: random.Random, names, max_size: int = 8, propositional: bool = False):
    """A formula with at most ``max_size`` nodes over ``names``."""

    def build(budget: int):
        if budget <= 1 or rng.random() < 0.25:
            r = rng.random()
            if r < 0.08:
                return TRUE if rng.random() < 0.5 else FALSE
            return Atom(rng.choice(names))
        unary = (Not,) if propositional else UNARY
        binary = (And, Or, Implies, Iff) if propositional else BINARY
        if budget == 2 or rng.random() < 0.4:
            return rng.choice(unary)(build(budget - 1))
        left = rng.randint(1, budget - 2)
        return rng.choice(binary)(build(left), build(budget - 1 - left))

    phi = build(rng.randint(1, max_size))
    assert size(phi) <= max_size
    return phi


def lasso(rng: random.Random, names, max_prefix: int = 6, max_period: int = 6) -> LassoWord:
    letters = assignments(names)
    prefix = [rng.choice(letters) for _ in range(rng.randint(0, max_prefix))]
    period = [rng.choice(letters) for _ in range(rng.randint(1, max_period))]
    return LassoWord(prefix, period)


def partition(rng: random.Random, max_signals: int = 5, min_signals: int = 1) -> SignalPartition:
    n = rng.randint(min_signals, max_signals)
    groups: list[list[str]] = [[], [], [], []]
    prefixes = "vhcg"
    for j in range(n):
        g = rng.randrange(4)
        groups[g].append(f"{prefixes[g]}{j}")
    return SignalPartition(*groups)


def program(rng: random.Random, index, k: int, guided) -> Program:
    options = [(m2, g) for m2 in range(k) for g in assignments(guided)]
    rows = tuple(tuple(rng.choice(options) for _ in range(index.num_classes)) for _ in range(k))
    return Program(index, rows)


def tge(rng: random.Random, part: SignalPartition, max_states: int = 3, max_memory: int = 3, n_programs: int = 3) -> Tge:
    """A TGE with full (discrete) programs drawn from a small pool."""
    n = rng.randint(1, max_states)
    k = rng.randint(1, max_memory)
    index = discrete_classes(part)
    pool = [program(rng, index, k, part.guided) for _ in range(n_programs)]
    controlled = assignments(part.controlled)
    rows = tuple(
        tuple((rng.randrange(n), rng.choice(controlled), rng.choice(pool)) for _ in assignments(part.visible))
        for _ in range(n)
    )
    return Tge(part, n, rng.randrange(n), k, rng.randrange(k), rows)


def transducer(rng: random.Random, inputs, outputs, max_states: int = 4) -> Transducer:
    n = rng.randint(1, max_states)
    outs = assignments(outputs)
    rows = tuple(tuple((rng.randrange(n), rng.choice(outs)) for _ in assignments(inputs)) for _ in range(n))
    return Transducer(tuple(inputs), tuple(outputs), n, rng.randrange(n), rows)

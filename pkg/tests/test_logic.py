import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gen
from sge.automata import LassoWord, eval_ltl_lasso
from sge.logic import (
    FALSE,
    TRUE,
    Always,
    And,
    Atom,
    FormulaSyntaxError,
    Iff,
    Next,
    Not,
    Or,
    SignalPartition,
    UndeclaredSignalError,
    Until,
    assignments,
    atoms,
    cl_hidden,
    cl_hidden_f,
    eval_predicate,
    format_assignment,
    from_bits,
    hidden_classes,
    parse_formula,
    pretty,
    prop_set,
    size,
    to_bits,
)

P_IO = SignalPartition(hidden=("i",), guided=("o",))
RUNNING = SignalPartition(("v1",), ("h1", "h2", "h3"), ("c1",), ("d1", "d2"))


def p(text, partition=None):
    return parse_formula(text, partition)


# -- parsing --------------------------------------------------------------


def test_parse_basic():
    assert p("G (i <-> o)", P_IO) == Always(Iff(Atom("i"), Atom("o")))
    assert p("G (i <-> X o)", P_IO) == Always(Iff(Atom("i"), Next(Atom("o"))))


def test_precedence_and_associativity():
    assert p("a | b & c") == Or(Atom("a"), And(Atom("b"), Atom("c")))
    assert p("a U b U c") == Until(Atom("a"), Until(Atom("b"), Atom("c")))
    assert p("a -> b -> c") == p("a -> (b -> c)")
    assert p("a <-> b -> c") == Iff(Atom("a"), p("b -> c"))
    assert p("!a U b") == Until(Not(Atom("a")), Atom("b"))
    assert p("a & b U c") == And(Atom("a"), Until(Atom("b"), Atom("c")))
    assert p("X X o") == Next(Next(Atom("o")))
    assert p("true & false") == And(TRUE, FALSE)


def test_undeclared_signal():
    with pytest.raises(UndeclaredSignalError, match="x"):
        p("G (i & x)", P_IO)


@pytest.mark.parametrize("text", ["G (i <-> o", "i &", "(", "i o", "i $ o", "X", "G (X)"])
def test_syntax_errors_carry_position(text):
    with pytest.raises(FormulaSyntaxError) as exc:
        p(text)
    assert exc.value.position >= 0


def test_keywords_are_not_atoms():
    with pytest.raises(FormulaSyntaxError):
        p("G & o")


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False))
def test_pretty_parse_roundtrip(rng):
    phi = gen.formula(rng, ["a", "b", "c"], max_size=10)
    assert p(pretty(phi)) == phi
    assert p("  " + pretty(phi).replace(" ", "   ") + " ") == phi


def test_size_counts_every_node():
    assert size(p("G (i <-> o)")) == 4
    assert size(p("!a")) == 2
    assert size(p("a -> b")) == 3
    assert atoms(p("b & a & b")) == ("b", "a")


# -- assignments -----------------------------------------------------------


def test_assignment_enumeration_order():
    assert assignments(("a", "b")) == [frozenset(), frozenset("b"), frozenset("a"), frozenset("ab")]
    for bits, a in enumerate(assignments(("a", "b", "c"))):
        assert to_bits(a, ("a", "b", "c")) == bits
        assert from_bits(bits, ("a", "b", "c")) == a
    assert format_assignment({"b", "a"}, ("a", "b")) == "{a,b}"
    assert format_assignment(set()) == "{}"


def test_partition_rejects_overlap():
    with pytest.raises(ValueError):
        SignalPartition(("a",), ("a",), (), ())


# -- predicate analysis ----------------------------------------------------


def test_eval_predicate():
    assert eval_predicate(p("i1 & i2"), {"i1", "i2"})
    assert not eval_predicate(p("i1 & i2"), {"i1"})
    assert eval_predicate(p("i1 | o"), {"o"})


def test_prop_set_is_syntax_sensitive():
    assert prop_set(p("(i1 | o) & X i2")) == (p("i1 | o"), p("i2"))
    assert set(prop_set(p("(i1 & X i2) | (o & X i2)"))) == {p("i1"), p("i2"), p("o")}
    assert prop_set(p("i")) == (p("i"),)


def test_cl_hidden_examples():
    part = SignalPartition((), ("i1", "i2", "i3"), (), ("o",))
    assert cl_hidden(p("(i1 | i2) & (i3 | o)"), part) == (p("i1 | i2"), p("i3"))
    part2 = SignalPartition((), ("i1", "i2"), (), ("o",))
    assert cl_hidden(p("(i1 & i2) <-> !o"), part2) == (p("i1 & i2"),)
    assert cl_hidden(p("G (o -> X o)"), part2) == ()
    assert cl_hidden(p("G true"), part2) == ()


def test_cl_hidden_groups_associative_chains():
    phi = p("G ((v1 & h1 & h3) | d1) & F ((c1 | h2) & d2)")
    assert cl_hidden(phi, RUNNING) == (p("h1 & h3"), p("h2"))
    # the grouping does not depend on how the chain is parenthesized
    assert cl_hidden(p("(h1 & v1) & h3"), RUNNING) == (p("h1 & h3"),)


def test_cl_hidden_f_table():
    phi = p("G ((v1 & h1 & h3) | d1) & F ((c1 | h2) & d2)")
    assert cl_hidden_f(phi, RUNNING, set()) == (p("h2"),)
    assert cl_hidden_f(phi, RUNNING, {"c1"}) == ()
    assert cl_hidden_f(phi, RUNNING, {"v1"}) == (p("h1 & h3"), p("h2"))
    assert cl_hidden_f(phi, RUNNING, {"v1", "c1"}) == (p("h1 & h3"),)


def test_hidden_classes_examples():
    index = hidden_classes([p("i1 & i2")], ("i1", "i2"))
    assert index.num_classes == 2
    assert set(index.members(0)) == {frozenset(), frozenset({"i1"}), frozenset({"i2"})}
    assert index.members(1) == [frozenset({"i1", "i2"})]
    assert index.rep({"i2"}) == frozenset()
    assert hidden_classes([], ("a", "b")).num_classes == 1
    assert hidden_classes([p("i")], ("i",)).num_classes == 2


def _hidden_strategy():
    return st.randoms(use_true_random=False)


@settings(max_examples=200, deadline=None)
@given(_hidden_strategy())
def test_class_index_matches_pairwise_agreement(rng):
    hidden = tuple(f"h{j}" for j in range(rng.randint(1, 4)))
    preds = [gen.formula(rng, list(hidden), max_size=5, propositional=True) for _ in range(rng.randint(0, 3))]
    index = hidden_classes(preds, hidden)
    assert index.num_classes <= min(2 ** len(hidden), 2 ** len(preds))
    for a, b in itertools.product(assignments(hidden), repeat=2):
        agree = all(eval_predicate(q, a) == eval_predicate(q, b) for q in preds)
        assert agree == (index.classify(a) == index.classify(b))
    for a in assignments(hidden):
        r = index.rep(a)
        assert index.classify(r) == index.classify(a)
        assert index.rep(r) == r
        assert to_bits(r, hidden) <= to_bits(a, hidden)


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_cl_hidden_mentions_only_hidden(rng):
    part = gen.partition(rng, max_signals=5)
    names = list(part.signals)
    phi = gen.formula(rng, names, max_size=8)
    for theta in cl_hidden(phi, part):
        assert set(atoms(theta)) <= set(part.hidden)
    f = frozenset(x for x in part.visible + part.controlled if rng.random() < 0.5)
    for theta in cl_hidden_f(phi, part, f):
        assert set(atoms(theta)) <= set(part.hidden)


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_agreement_on_classes_preserves_verdict(rng):
    """Swapping hidden values within a class never changes satisfaction."""
    part = gen.partition(rng, max_signals=5)
    names = list(part.signals)
    phi = gen.formula(rng, names, max_size=8)
    index = hidden_classes(cl_hidden(phi, part), part)
    w = gen.lasso(rng, names, max_prefix=4, max_period=4)
    hidden = frozenset(part.hidden)

    def mutate(letter):
        h = letter & hidden
        others = index.members(index.classify(h))
        return (letter - hidden) | random.Random(rng.random()).choice(others)

    w2 = LassoWord([mutate(a) for a in w.prefix], [mutate(a) for a in w.period])
    assert eval_ltl_lasso(phi, w) == eval_ltl_lasso(phi, w2)


def test_cl_hidden_f_rows_refine_nothing_new():
    """Every f-row predicate simplifies a predicate that ``prop`` already contains."""
    phi = p("G ((v1 & h1 & h3) | d1) & F ((c1 | h2) & d2)")
    full = hidden_classes(cl_hidden(phi, RUNNING), RUNNING)
    for f in assignments(("v1", "c1")):
        row = hidden_classes(cl_hidden_f(phi, RUNNING, f), RUNNING)
        assert row.num_classes <= full.num_classes
        # the full classes refine each f-row's classes
        for a, b in itertools.product(assignments(RUNNING.hidden), repeat=2):
            if full.classify(a) == full.classify(b):
                assert row.classify(a) == row.classify(b)

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gen
from sge.automata import LassoWord, eval_ltl_lasso
from sge.logic import (
    Atom,
    SignalPartition,
    assignments,
    cl_hidden,
    cl_hidden_f,
    discrete_classes,
    hidden_classes,
    parse_formula,
    to_bits,
)
from sge.tge import (
    Program,
    Tge,
    Transducer,
    constant_program,
    count_programs,
    delegate_outputs,
    reveal_inputs,
    run_tge,
    tge_from_dict,
    tge_to_dict,
    tge_to_dot,
    tge_to_transducer,
    tighten_program,
    tighten_tge,
    transducer_to_tge,
    verify_tge,
    verify_transducer,
)

P_IO = SignalPartition(hidden=("i",), guided=("o",))
I_CLASSES = hidden_classes([Atom("i")], ("i",))
O = frozenset({"o"})
E = frozenset()


def copy_tge():
    """One state, no memory, program ``o := i``."""
    p = Program(I_CLASSES, (((0, E), (0, O)),))
    return Tge(P_IO, 1, 0, 1, 0, (((0, E, p),),))


def register_tge():
    """One state, one register: store i, output the stored value."""
    p = Program(I_CLASSES, (((0, E), (1, E)), ((0, O), (1, O))))
    return Tge(P_IO, 1, 0, 2, 0, (((0, E, p),),))


def outputs(comp):
    return [st.guided for st in comp.steps]


def test_copy_run():
    comp = run_tge(copy_tge(), [{"i"}, set(), {"i"}])
    assert outputs(comp) == [O, E, O]
    assert comp.trace() == ((0, 0),) * 4


def test_register_run_lags_by_one():
    comp = run_tge(register_tge(), LassoWord((), ({"i"},)))
    letters = comp.unroll(4)
    assert [("o" in a) for a in letters] == [False, True, True, True]


def test_empty_word():
    comp = run_tge(copy_tge(), [])
    assert comp.steps == ()
    assert comp.trace() == ((0, 0),)


def test_verify_examples():
    phi1 = parse_formula("G (i <-> o)")
    phi2 = parse_formula("G (i <-> X o)")
    assert verify_tge(copy_tge(), phi1).realizes
    res = verify_tge(copy_tge(), phi2)
    assert not res.realizes
    assert not eval_ltl_lasso(phi2, run_tge(copy_tge(), res.counterexample).word())
    assert verify_tge(register_tge(), phi2).realizes
    const = Tge(P_IO, 1, 0, 1, 0, (((0, E, constant_program(("i",), 1, (), memory=0)),),))
    assert verify_tge(const, parse_formula("true")).realizes


def counter_transducer(k=3):
    """Counts occurrences of i1; from the last state it copies i1 to o1."""
    rows = []
    for s in range(k):
        if s < k - 1:
            rows.append(((s, E), (s + 1, E)))
        else:
            rows.append(((s, E), (s, frozenset({"o1"}))))
    return Transducer(("i1",), ("o1",), k, 0, tuple(rows))


def test_transducer_to_tge_uses_memory():
    t = counter_transducer(3)
    g = transducer_to_tge(t)
    assert (g.num_states, g.memory_size, g.initial_memory) == (1, 3, 0)
    const = Transducer((), ("o",), 1, 0, (((0, O),),))
    g2 = transducer_to_tge(const)
    assert (g2.num_states, g2.memory_size) == (1, 1)


def test_tge_to_transducer_product_size():
    t = tge_to_transducer(register_tge())
    assert t.num_states == 2
    assert verify_transducer(t, parse_formula("G (i <-> X o)")).empty


def test_reveal_and_delegate_identities():
    t = copy_tge()
    rng = random.Random(3)
    for action in (lambda x: reveal_inputs(x, ()), lambda x: delegate_outputs(x, ())):
        t2 = action(t)
        assert t2.partition == t.partition
        for _ in range(20):
            w = gen.lasso(rng, ["i"])
            assert run_tge(t, w).unroll(20) == run_tge(t2, w).unroll(20)
    revealed = reveal_inputs(t, ["i"])
    assert revealed.partition == SignalPartition(("i",), (), (), ("o",))
    assert verify_tge(revealed, parse_formula("G (i <-> o)")).realizes
    with pytest.raises(ValueError):
        reveal_inputs(t, ["o"])
    with pytest.raises(ValueError):
        delegate_outputs(t, ["i"])


SIMPLIFY = SignalPartition((), ("i1", "i2"), (), ("o",))


def test_tighten_example_program():
    index = discrete_classes(SIMPLIFY)
    # rows (i1, i2): FF -> o, FT -> o, TF -> no o, TT -> o
    table = {E: O, frozenset({"i2"}): O, frozenset({"i1"}): E, frozenset({"i1", "i2"}): O}
    p = Program(index, (tuple((0, table[index.rep_of_class(c)]) for c in range(index.num_classes)),))
    phi = parse_formula("(i1 & i2) <-> !o")
    tight_index = hidden_classes([parse_formula("i1 & i2")], SIMPLIFY)
    q = tighten_program(p, tight_index)
    assert q.index.num_classes == 2
    assert q.rows == (((0, O), (0, O)),)
    t = Tge(SIMPLIFY, 1, 0, 1, 0, (((0, E, p),),))
    t2 = tighten_tge(t, phi)
    assert t2.transitions[0][0][2] == q
    # tightening a tight TGE changes nothing
    assert tighten_tge(t2, phi) == t2


def test_count_programs():
    assert count_programs(1, 2, 1) == 16
    assert count_programs(1, 2, 1, 2) == 4
    assert count_programs(1, 3, 0) == 1
    assert count_programs(3, 6, 4) == math.inf


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2))
def test_count_tight_at_most_full(k, h, g):
    full = count_programs(k, h, g)
    for classes in range(1, 2**h + 1):
        tight = count_programs(k, h, g, classes)
        assert tight <= full
        if full != math.inf:
            assert (tight == full) == (classes == 2**h or k * 2**g == 1)


def test_serialization_roundtrip():
    rng = random.Random(5)
    for _ in range(30):
        part = gen.partition(rng, max_signals=4)
        t = gen.tge(rng, part)
        data = json.loads(json.dumps(tge_to_dict(t)))
        t2 = tge_from_dict(data)
        assert tge_to_dict(t2) == data
        for _ in range(5):
            w = gen.lasso(rng, part.inputs)
            assert run_tge(t, w).unroll(15) == run_tge(t2, w).unroll(15)


def test_dot_labels():
    dot = tge_to_dot(copy_tge())
    assert '"{} / [{}, p0]"' in dot
    assert "init -> s0" in dot


def test_from_dict_rejects_partial_programs():
    data = tge_to_dict(copy_tge())
    data["programs"][0]["rows"].pop()
    with pytest.raises(ValueError):
        tge_from_dict(data)
    with pytest.raises(ValueError):
        tge_from_dict({"format": "transducer"})


def test_from_dict_accepts_rep_rows_and_dontcare():
    data = tge_to_dict(register_tge())
    for row in data["programs"][0]["rows"]:
        del row["class"]
    data["programs"][0]["rows"][0]["dontcare"] = True
    t = tge_from_dict(data)
    assert t.transitions[0][0][2].same_function(register_tge().transitions[0][0][2])
    assert tge_to_dict(t)["programs"][0]["rows"][0]["dontcare"] is True


# -- properties ------------------------------------------------------------


def _equal_runs(run_a, run_b, rng, inputs, n=6):
    for _ in range(n):
        w = gen.lasso(rng, inputs)
        assert run_a(w) == run_b(w)


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_transformations_preserve_computations(rng):
    part = gen.partition(rng, max_signals=5)
    t = gen.tge(rng, part)
    horizon = 30
    as_transducer = tge_to_transducer(t)
    assert as_transducer.num_states == t.num_states * t.memory_size

    def tge_run(x):
        return lambda w: run_tge(x, w).unroll(horizon)

    def transducer_run(w):
        letters = w.unroll(horizon)
        return [frozenset(a) for a in as_transducer.run(letters)]

    _equal_runs(tge_run(t), transducer_run, rng, part.inputs)
    revealed = [x for x in part.hidden if rng.random() < 0.5]
    _equal_runs(tge_run(t), tge_run(reveal_inputs(t, revealed)), rng, part.inputs)
    delegated = [x for x in part.controlled if rng.random() < 0.5]
    _equal_runs(tge_run(t), tge_run(delegate_outputs(t, delegated)), rng, part.inputs)

    m = gen.transducer(rng, part.inputs, part.outputs)
    g = transducer_to_tge(m)
    _equal_runs(lambda w: [frozenset(a) for a in m.run(w.unroll(horizon))], tge_run(g), rng, part.inputs)


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_lasso_run_closes_correctly(rng):
    part = gen.partition(rng, max_signals=4)
    t = gen.tge(rng, part)
    w = gen.lasso(rng, part.inputs)
    comp = run_tge(t, w)
    n = len(comp.steps) + 3 * (len(comp.steps) - comp.loop_start)
    assert tuple(comp.unroll(n)) == run_tge(t, w.unroll(n)).letters


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False))
def test_counterexamples_replay(rng):
    part = gen.partition(rng, max_signals=4)
    t = gen.tge(rng, part)
    phi = gen.formula(rng, list(part.signals), max_size=6)
    res = verify_tge(t, phi)
    if not res.realizes:
        comp = run_tge(t, res.counterexample)
        assert not eval_ltl_lasso(phi, comp.word())
    else:
        for _ in range(5):
            assert eval_ltl_lasso(phi, run_tge(t, gen.lasso(rng, part.inputs)).word())


@settings(max_examples=200, deadline=None)
@given(st.randoms(use_true_random=False), st.sampled_from(["tight", "f-tight"]))
def test_tightening_keeps_realizing_tges_realizing(rng, mode):
    part = gen.partition(rng, max_signals=5)
    t = gen.tge(rng, part)
    phi = gen.formula(rng, list(part.signals), max_size=6)
    t2 = tighten_tge(t, phi, mode)
    for row in t2.transitions:
        for v in assignments(part.visible):
            _, c, p = row[to_bits(v, part.visible)]
            preds = cl_hidden(phi, part) if mode == "tight" else cl_hidden_f(phi, part, v | c)
            assert p.is_tight_for(hidden_classes(preds, part))
    if verify_tge(t, phi).realizes:
        assert verify_tge(t2, phi).realizes

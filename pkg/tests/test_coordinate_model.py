"""Unit tests for pattern spaces, realizations, topology classification,
and the brute-force semantics oracle."""

import random

import pytest

from projqe import coordinate_model as cm, formula_ir as ir
from projqe.errors import FormulaError, SpaceMismatch

from conftest import plain_closed_formula, random_closed_set, random_pattern_set


def _atom(name, c, neq=False):
    return ir.CoordAtom(ir.VarRef(name, None, c), neq=neq)


def test_space_and_membership_guards():
    space = cm.space_from_arities([2, 2])
    with pytest.raises(FormulaError):
        cm.pattern_set_from_doc({
            "space": [{"label": "A", "arity": 2}],
            "patterns": [["0x0"]],  # zero block forbidden
        })
    a = cm.PatternSet(space, frozenset({(1, 1)}))
    b = cm.PatternSet(cm.space_from_arities([2]), frozenset({(1,)}))
    with pytest.raises(SpaceMismatch):
        cm.union(a, b)


def test_patterns_of_matches_bruteforce(rng):
    blocks = (ir.Block("X", 2), ir.Block("Y", 2))
    for _ in range(50):
        f = plain_closed_formula(rng, blocks)
        fast = cm.patterns_of(f.core, cm.space_of(f))
        brute = cm.realization_bruteforce(f)
        assert fast.members == brute.members


def test_set_algebra(rng):
    for _ in range(30):
        a = random_pattern_set(rng, [2, 2])
        b = random_pattern_set(rng, [2, 2])
        assert cm.complement(cm.complement(a)).members == a.members
        assert cm.intersection(a, b).members == (a.members & b.members)
        assert cm.union(a, b).members == (a.members | b.members)


def test_classify_topology(rng):
    space = cm.space_from_arities([3])
    full = cm.PatternSet(space, frozenset(cm._all_patterns(space)))
    assert cm.classify_topology(full) == cm.CLOSED  # clopen: closed wins
    closed = cm.downward_closure(space, [(0b011,)])
    assert cm.is_closed(closed)
    assert cm.classify_topology(cm.complement(closed)) == cm.OPEN
    neither = cm.PatternSet(space, frozenset({(0b011,)}))
    assert cm.classify_topology(neither) == cm.NEITHER


def test_downward_closure_and_antichain(rng):
    for _ in range(30):
        a = random_closed_set(rng, [2, 3])
        msup = cm.max_supports(a, assume_closed=True)
        rebuilt = cm.downward_closure(a.space, msup)
        assert rebuilt.members == a.members
        assert cm.antichain(msup) == sorted(msup)


def test_eliminate_exists_forall():
    space = cm.space_from_arities([2, 2], ["X", "Y"])
    a = cm.PatternSet(space, frozenset({(1, 1), (2, 1), (2, 2)}))
    ex = cm.eliminate("exists", "Y", a)
    assert ex.members == {(1,), (2,)}
    fa = cm.eliminate("forall", "Y", a)
    assert fa.members == set()  # no X row covers all three Y patterns


def test_formula_of_roundtrip(rng):
    for _ in range(30):
        a = random_pattern_set(rng, [2, 2])
        f = cm.formula_of(a)
        assert cm.patterns_of(f, a.space).members == a.members


def test_decide_sentence_bruteforce():
    y = ir.Block("Y", 2)
    # exists Y . Y_0 = 0 is true; forall Y . Y_0 = 0 is false
    core = _atom("Y", 0)
    t = ir.ShapedFormula((), (), (), ((ir.EXISTS, y),), core, ir.CLOSED)
    f = ir.ShapedFormula((), (), (), ((ir.FORALL, y),), core, ir.CLOSED)
    assert cm.decide_sentence_bruteforce(t) is True
    assert cm.decide_sentence_bruteforce(f) is False


def test_pattern_doc_roundtrip(rng):
    for _ in range(20):
        a = random_pattern_set(rng, [3, 2])
        assert cm.pattern_set_from_doc(a.to_doc()).members == a.members

"""Unit tests for the formula IR: construction, negation, instantiation,
shape expansion, and document round-trips."""

import random

import pytest

from projqe import coordinate_model as cm, formula_ir as ir
from projqe.errors import FormulaError

from conftest import plain_closed_formula


def _atom(name, c, neq=False):
    return ir.CoordAtom(ir.VarRef(name, None, c), neq=neq)


def test_lattice_normalization():
    x = _atom("X", 0)
    assert ir.f_and([x]) == x
    assert ir.f_and([x, ir.TRUE]) == x
    assert ir.f_and([x, ir.FALSE]) == ir.FALSE
    assert ir.f_or([x, ir.TRUE]) == ir.TRUE
    assert ir.f_or([]) == ir.FALSE
    assert ir.f_and([]) == ir.TRUE


def test_atom_count_and_fragment():
    core = ir.f_and([_atom("X", 0), ir.f_or([_atom("X", 1), _atom("Y", 0)])])
    assert ir.atom_count(core) == 3
    assert ir.is_coordinate_fragment(core)


def test_negate_is_complement_on_patterns(rng):
    blocks = (ir.Block("X", 2), ir.Block("Y", 2))
    for _ in range(50):
        f = plain_closed_formula(rng, blocks)
        neg = ir.negate(f.core, ir.core_units(f))
        a = cm.patterns_of(f.core, cm.space_of(f))
        b = cm.patterns_of(neg, cm.space_of(f))
        assert b.members == cm.complement(a).members


def test_instantiate_commutes_with_negate(rng):
    blocks = (ir.Block("X", 2), ir.Block("Y", 2))
    yspace = cm.space_from_arities([2], ["Y"])
    for _ in range(50):
        f = plain_closed_formula(rng, blocks)
        neg = ir.ShapedFormula(f.free_blocks, (), (), (),
                               ir.negate(f.core, ir.core_units(f)),
                               ir.UNVERIFIED)
        for mask in (1, 2, 3):
            supp = {c for c in range(2) if (mask >> c) & 1}
            left = ir.instantiate(neg, "X", supp)
            right = ir.instantiate(f, "X", supp)
            la = cm.patterns_of(left.core, yspace)
            ra = cm.patterns_of(right.core, yspace)
            # negation of the instantiated formula relative to Y's ambient
            assert la.members == cm.complement(ra).members


def test_instantiate_point_and_pattern():
    f = ir.ShapedFormula((ir.Block("X", 2),), (), (), (),
                         ir.f_or([_atom("X", 0), _atom("X", 1)]), ir.CLOSED)
    g = ir.instantiate(f, "X", {0, 1})
    assert g.core == ir.FALSE
    h = ir.instantiate(f, "X", (0, 1))
    assert h.core == ir.TRUE  # X_0 = 0 holds at the point (0 : 1)
    with pytest.raises(FormulaError):
        ir.instantiate(f, "X", (0, 0))
    with pytest.raises(FormulaError):
        ir.instantiate(f, "X", set())


def test_shape_expand_counts():
    # shape [(OR, 2), (AND, 2)] -> four instantiated cores
    fam = ir.BlockFamily("W", 1, (2, 2), 1)
    f = ir.ShapedFormula((), ((ir.OR_OP, 2), (ir.AND_OP, 2)), (fam,), (),
                         ir.CoordAtom(ir.VarRef("W", None, 0)), ir.CLOSED)
    expanded = ir.shape_expand(f)
    assert ir.atom_count(expanded) == 4
    assert isinstance(expanded, ir.Or)


def test_formula_doc_roundtrip(rng):
    blocks = (ir.Block("X", 2), ir.Block("Y", 3))
    for _ in range(50):
        f = plain_closed_formula(rng, blocks)
        assert ir.parse_formula(ir.formula_to_doc(f)) == f


def test_quantified_doc_roundtrip():
    f = ir.ShapedFormula(
        (ir.Block("X", 2),), (), (),
        ((ir.FORALL, ir.Block("Y", 2)), (ir.EXISTS, ir.Block("Z", 2))),
        ir.f_and([_atom("X", 0), _atom("Y", 0), _atom("Z", 1)]), ir.CLOSED)
    assert ir.parse_formula(ir.formula_to_doc(f)) == f


def test_validate_multihomogeneous_fragment():
    f = ir.plain_formula(_atom("X", 0), [ir.Block("X", 2)], ir.CLOSED)
    ir.validate_multihomogeneous(f)

"""Unit tests for syntactic joins: coordinate layout, realization
identities, and the generalized fibered join induction step."""

import pytest

from projqe import coordinate_model as cm, formula_ir as ir, join_engine as je
from projqe.errors import FormulaError


def _full(name, arity):
    return ir.plain_formula(ir.TRUE, [ir.Block(name, arity)], ir.CLOSED)


def test_join_of_projective_spaces_is_projective_space():
    # R(J_C(P^k, P^l)) = P^{k+l+1} as pattern sets
    j = je.complex_join(_full("A", 2), _full("B", 3))
    space = cm.space_of(j)
    assert [u.arity for u in space.units] == [5]
    got = cm.patterns_of(j.core, space)
    assert got.members == frozenset((m,) for m in range(1, 1 << 5))


def test_complex_join_coordinate_layout():
    phi = ir.plain_formula(ir.CoordAtom(ir.VarRef("A", None, 1)),
                           [ir.Block("A", 2)], ir.CLOSED)
    psi = ir.plain_formula(ir.CoordAtom(ir.VarRef("B", None, 0)),
                           [ir.Block("B", 2)], ir.CLOSED)
    j = je.complex_join(phi, psi)
    refs = [a.ref.coord for a in ir.iter_atoms(j.core)]
    assert refs == [1, 2]  # psi shifted past phi's block


def test_iterated_join_block_and_atoms():
    phi = ir.plain_formula(ir.CoordAtom(ir.VarRef("A", None, 0)),
                           [ir.Block("A", 2)], ir.CLOSED)
    j = je.iterated_join(phi, 3)
    assert j.free_blocks[0].arity == 8
    assert ir.atom_count(j.core) == 4
    assert je.iterated_join(phi, 0).free_blocks[0].arity == 2
    with pytest.raises(FormulaError):
        je.iterated_join(phi, -1)


def test_fibered_join_keeps_first_block():
    core = ir.f_or([ir.CoordAtom(ir.VarRef("X", None, 0)),
                    ir.CoordAtom(ir.VarRef("Y", None, 0))])
    phi = ir.plain_formula(core, [ir.Block("X", 2), ir.Block("Y", 2)],
                           ir.CLOSED)
    j = je.fibered_join(phi, 1)
    assert [b.arity for b in j.free_blocks] == [2, 4]
    assert ir.atom_count(j.core) == 4


def test_fibered_join_fiber_over_a_point_is_iterated_join():
    core = ir.f_or([ir.CoordAtom(ir.VarRef("X", None, 0)),
                    ir.CoordAtom(ir.VarRef("Y", None, 0))])
    phi = ir.plain_formula(core, [ir.Block("X", 2), ir.Block("Y", 2)],
                           ir.CLOSED)
    p = 2
    j = je.fibered_join(phi, p)
    fiber = ir.instantiate(j, "X", {1})  # X_0 != 0: clause falls to Y copies
    single = ir.instantiate(phi, "X", {1})
    expect = je.iterated_join(
        ir.plain_formula(single.core, [ir.Block("Y", 2)], ir.CLOSED), p)
    a = cm.patterns_of(fiber.core, cm.space_of(fiber))
    b = cm.patterns_of(expect.core, cm.space_of(expect))
    assert a.members == b.members


def test_generalized_fibered_join_absorbs_quantifier():
    y = ir.Block("Y", 2)
    f = ir.ShapedFormula((), (), (), ((ir.EXISTS, y),),
                         ir.CoordAtom(ir.VarRef("Y", None, 0)), ir.CLOSED)
    g = je.generalized_fibered_join(f, 3)
    assert g.quantifiers == ()
    assert g.shape == ir.TRIVIAL_SHAPE + ((ir.AND_OP, 4),)
    fam = g.families[0]
    assert (fam.name, fam.member_arity) == ("Y", 2)
    with pytest.raises(FormulaError):
        je.generalized_fibered_join(g, 1)

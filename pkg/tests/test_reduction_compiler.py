"""Unit tests for the reduction compiler: stage geometry, worked
examples, bookkeeping, fiberwise exactness, and the decision procedures."""

import pytest

from projqe import coordinate_model as cm, formula_ir as ir
from projqe import poincare_algebra as pa, reduction_compiler as rc
from projqe.errors import FormulaError, TopologyError

from conftest import plain_closed_formula


def _atom(name, c, neq=False):
    return ir.CoordAtom(ir.VarRef(name, None, c), neq=neq)


def _sentence(quants, core):
    return ir.ShapedFormula((), (), (), tuple(quants), core, ir.CLOSED)


# -- worked examples --------------------------------------------------------


def test_exists_point_in_p1():
    # exists Y in P^1 . (Y_0 = 0 and Y_1 = 0): false (no projective zero)
    y = ir.Block("Y", 2)
    f = _sentence([(ir.EXISTS, y)], ir.f_and([_atom("Y", 0), _atom("Y", 1)]))
    out = rc.compile(f)
    assert out.trace == (rc.StageParams(rc.CASE_EXISTS, 0, 1, 1),)
    assert out.pipeline.stages == (pa.MulBy(pa.one_minus_t_power(1)),
                                   pa.Trunc(0))
    assert out.theta.quantifiers == ()
    assert rc.verdict(out) is False
    # exists Y . Y_0 = 0 is satisfiable
    g = _sentence([(ir.EXISTS, y)], _atom("Y", 0))
    assert rc.decide(g) is True


def test_forall_in_p1():
    y = ir.Block("Y", 2)
    t = _sentence([(ir.FORALL, y)], ir.TRUE)
    out = rc.compile(t)
    assert out.trace[0].case == rc.CASE_FORALL
    assert out.parity == ir.OPEN
    assert isinstance(out.pipeline.stages[-1], pa.SubFrom)
    assert rc.verdict(out) is True
    assert rc.decide(_sentence([(ir.FORALL, y)], _atom("Y", 0))) is False


def test_free_block_stage_geometry():
    # f(X) = exists Y . (X_0=0 and Y_0=0) or (X_1=0 and Y_1=0)
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    core = ir.f_or([ir.f_and([_atom("X", 0), _atom("Y", 0)]),
                    ir.f_and([_atom("X", 1), _atom("Y", 1)])])
    f = ir.ShapedFormula((x,), (), (), ((ir.EXISTS, y),), core, ir.CLOSED)
    out = rc.compile(f)
    assert out.trace == (rc.StageParams(rc.CASE_EXISTS, 1, 1, 3),)
    fam = out.theta.families[0]
    assert (fam.name, fam.member_arity, fam.index_arities) == ("Y", 2, (1, 4))
    assert out.theta.shape[-1] == (ir.AND_OP, 4)


def test_fiber_values_are_exact_indicators():
    # on every fiber the pipeline value is the constant 1 or the zero
    # polynomial, matching brute-force truth of the instantiated sentence
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    cores = [
        ir.f_or([ir.f_and([_atom("X", 0), _atom("Y", 0)]),
                 ir.f_and([_atom("X", 1), _atom("Y", 1)])]),
        ir.f_and([_atom("X", 0), _atom("Y", 1)]),
        ir.TRUE,
    ]
    for quant in (ir.EXISTS, ir.FORALL):
        for core in cores:
            f = ir.ShapedFormula((x,), (), (), ((quant, y),), core, ir.CLOSED)
            for mask in (1, 2, 3):
                supp = {c for c in range(2) if (mask >> c) & 1}
                inst = ir.instantiate(f, "X", supp)
                want = cm.decide_sentence_bruteforce(inst)
                got = rc.fiber_value(f, {"X": supp})
                assert got == (pa.poly([1]) if want else pa.ZERO)


def test_forall_true_fiber_regression():
    # the shared free-compiled pipeline is wrong on this fiber; the
    # fiber's own compilation must return the exact indicator 1
    x, y = ir.Block("X", 2), ir.Block("Y", 1)
    f = ir.ShapedFormula((x,), (), (), ((ir.FORALL, y),), ir.TRUE, ir.CLOSED)
    assert rc.fiber_value(f, {"X": {0, 1}}) == pa.poly([1])


# -- bookkeeping ------------------------------------------------------------


def test_predicted_sizes_match_actual(rng):
    x, y, z = ir.Block("X", 2), ir.Block("Y", 2), ir.Block("Z", 2)
    for _ in range(25):
        core = plain_closed_formula(rng, (x, y, z)).core
        for quants in (((ir.EXISTS, y), (ir.FORALL, z)),
                       ((ir.FORALL, y), (ir.EXISTS, z)),
                       ((ir.FORALL, y), (ir.FORALL, z))):
            f = ir.ShapedFormula((x,), (), (), quants, core, ir.UNVERIFIED)
            try:
                out = rc.compile(f)
            except TopologyError:
                continue  # closedness precondition fails: not a test case
            assert len(out.trace) == len(quants)
            assert (rc.predict_theta_sizes(f, out.trace)
                    == rc.theta_sizes(out.theta))


def test_trace_mismatch_is_rejected():
    y = ir.Block("Y", 2)
    f = _sentence([(ir.EXISTS, y)], _atom("Y", 0))
    bad = (rc.StageParams(rc.CASE_EXISTS, 1, 1, 2),)
    with pytest.raises(FormulaError):
        rc.predict_theta_sizes(f, bad)


# -- serialization ----------------------------------------------------------


def test_reduction_doc_roundtrip():
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    core = ir.f_and([_atom("X", 0), _atom("Y", 0)])
    f = ir.ShapedFormula((x,), (), (), ((ir.FORALL, y),), core, ir.CLOSED)
    out = rc.compile(f)
    again = rc.reduction_from_doc(out.to_doc())
    assert again == out


# -- decision procedures ----------------------------------------------------


def test_decide_matches_bruteforce(rng):
    y, z = ir.Block("Y", 2), ir.Block("Z", 2)
    for _ in range(20):
        core = plain_closed_formula(rng, (y, z)).core
        for quants in (((ir.EXISTS, y), (ir.EXISTS, z)),
                       ((ir.EXISTS, y), (ir.FORALL, z)),
                       ((ir.FORALL, y), (ir.EXISTS, z))):
            f = ir.ShapedFormula((), (), (), quants, core, ir.UNVERIFIED)
            try:
                got = rc.decide(f)
            except TopologyError:
                continue
            assert got == cm.decide_sentence_bruteforce(f)


def test_decide_requires_sentence():
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    f = ir.ShapedFormula((x,), (), (), ((ir.EXISTS, y),),
                         ir.f_and([_atom("X", 0), _atom("Y", 0)]), ir.CLOSED)
    with pytest.raises(FormulaError):
        rc.decide(f)


def test_compile_rejects_non_closed_core():
    y = ir.Block("Y", 2)
    f = _sentence([(ir.EXISTS, y)], _atom("Y", 0, neq=True))
    with pytest.raises(TopologyError):
        rc.compile(f)


def test_gdp_solve_shapes():
    y = ir.Block("Y", 2)
    sent = _sentence([(ir.EXISTS, y)], _atom("Y", 0))
    res = rc.gdp_solve(ir.formula_to_doc(sent))
    assert res["verdict"] is True
    assert res["oracle_required"] is False
    x = ir.Block("X", 2)
    free = ir.ShapedFormula((x,), (), (), ((ir.EXISTS, y),),
                            ir.f_and([_atom("X", 0), _atom("Y", 0)]),
                            ir.CLOSED)
    res = rc.gdp_solve(free)
    assert res["verdict"] is None
    assert res["oracle_required"] is True
    assert "reduction" in res


def test_membership_pattern_and_point():
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    core = ir.f_and([_atom("X", 0), _atom("Y", 0)])
    f = ir.ShapedFormula((x,), (), (), ((ir.EXISTS, y),), core, ir.CLOSED)
    assert rc.membership(f, {"X": {1}}) is True   # X_0 = 0 holds
    assert rc.membership(f, {"X": {0}}) is False
    assert rc.membership(f, {"X": (0, 1)}) is True
    assert rc.membership(f, {"X": (1, 1)}) is False


def test_dualize_realizes_the_complement(rng):
    x, y = ir.Block("X", 2), ir.Block("Y", 2)
    for _ in range(25):
        f = plain_closed_formula(rng, (x, y))
        dual = rc._dualize(f)
        space = cm.space_of(f)
        a = cm.patterns_of(f.core, space)
        b = cm.patterns_of(dual.core, space)
        assert b.members == cm.complement(a).members

"""Syntactic complex joins, iterated joins, and (generalized) fibered joins.

In coordinates the complex join of X = R(phi) in P^k and Y = R(psi) in P^l
is realized inside P^{k+l+1} by  phi(Z_0..Z_k) AND psi(Z_{k+1}..Z_{k+l+1});
the iterated join J^p glues p+1 renamed copies of phi into one fresh block,
and the fibered join does the same to the second factor of a two-block
formula while fixing the first.  The generalized form absorbs the leading
quantifier block of a ShapedFormula into a new W-family of depth sigma+1
while appending an (AND, p+1) shape stage -- the induction step of the
compiler.

All operations allocate fresh blocks deterministically (copy i of a block
occupies coordinates [i*(arity), (i+1)*(arity)) of the fresh block,
copy-major) and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import replace

from . import formula_ir as ir
from .errors import FormulaError


def _single_block(f: ir.ShapedFormula, who: str) -> ir.Block:
    if (f.quantifiers or f.families or len(f.free_blocks) != 1
            or f.shape != ir.TRIVIAL_SHAPE):
        raise FormulaError(f"{who} requires a plain single-block formula")
    return f.free_blocks[0]


def _rename_into(core: ir.QFFormula, old: str, new: str, offset: int) -> ir.QFFormula:
    def fn(ref: ir.VarRef) -> ir.VarRef:
        if ref.owner == old:
            return ir.VarRef(new, None, ref.coord + offset)
        return ref

    return ir.map_refs(core, fn)


def complex_join(phi: ir.ShapedFormula, psi: ir.ShapedFormula) -> ir.ShapedFormula:
    """phi(Z_0..Z_k) AND psi(Z_{k+1}..Z_{k+l+1}) over one fresh block."""
    a = _single_block(phi, "complex_join")
    b = _single_block(psi, "complex_join")
    name = f"{a.name}*{b.name}"
    block = ir.Block(name, a.arity + b.arity)
    core = ir.f_and([
        _rename_into(phi.core, a.name, name, 0),
        _rename_into(psi.core, b.name, name, a.arity),
    ])
    closedness = phi.closedness if phi.closedness == psi.closedness else ir.UNVERIFIED
    return ir.plain_formula(core, [block], closedness)


def iterated_join(phi: ir.ShapedFormula, p: int) -> ir.ShapedFormula:
    """(p+1)-fold iterated complex join of R(phi) with itself: a conjunction
    of p+1 renamed copies over one fresh block of (p+1)(k+1) coordinates.
    J^0 is phi up to renaming; an empty input realizes the empty set."""
    if p < 0:
        raise FormulaError("iterated_join: p must be >= 0")
    a = _single_block(phi, "iterated_join")
    name = f"{a.name}^{p}"
    block = ir.Block(name, (p + 1) * a.arity)
    core = ir.f_and([
        _rename_into(phi.core, a.name, name, i * a.arity) for i in range(p + 1)
    ])
    return ir.plain_formula(core, [block], phi.closedness)


def fibered_join(phi: ir.ShapedFormula, p: int) -> ir.ShapedFormula:
    """Fiberwise iterated join over the projection to the first of exactly
    two blocks: the X block is untouched, the Y block becomes a fresh block
    of (l+1)(p+1) coordinates carrying p+1 copies of phi."""
    if (phi.quantifiers or phi.families or len(phi.free_blocks) != 2
            or phi.shape != ir.TRIVIAL_SHAPE):
        raise FormulaError("fibered_join requires a plain two-block formula")
    if p < 0:
        raise FormulaError("fibered_join: p must be >= 0")
    x, y = phi.free_blocks
    name = f"{y.name}^{p}"
    yblock = ir.Block(name, (p + 1) * y.arity)
    core = ir.f_and([
        _rename_into(phi.core, y.name, name, i * y.arity) for i in range(p + 1)
    ])
    return ir.plain_formula(core, [x, yblock], phi.closedness)


def generalized_fibered_join(f: ir.ShapedFormula, p: int) -> ir.ShapedFormula:
    """Absorb the leading quantifier block Z^1 (distributed per index tuple)
    into a new family of depth sigma+1 under a fresh (AND, p+1) shape stage.

    The new family keeps Z^1's name, so core references to the current
    member need no rewriting; each group is one projective block of
    dimension arity(Z^1)*(p+1) - 1, grouped per index-tuple prefix.
    """
    if not f.quantifiers:
        raise FormulaError("generalized_fibered_join: no quantifier to absorb")
    if p < 0:
        raise FormulaError("generalized_fibered_join: p must be >= 0")
    _, z1 = f.quantifiers[0]
    shape = f.shape + ((ir.AND_OP, p + 1),)
    arities = tuple(ar for _, ar in shape)
    family = ir.BlockFamily(z1.name, len(shape) - 1, arities, z1.arity)
    return replace(
        f,
        shape=shape,
        families=f.families + (family,),
        quantifiers=f.quantifiers[1:],
    )

"""Abstract syntax, validation, and elementary rewrites for multi-homogeneous
first-order formulas over products of complex projective spaces.

The IR mirrors the shape of the compiler's intermediate formulas: a
``ShapedFormula`` is

    Lambda^0_{i_0} ... Lambda^sigma_{i_sigma}  (Q_1 Z^1) ... (Q_omega Z^omega)
        core(X; W^0_{i_0}; ...; W^sigma_{i_0..i_sigma}; Z^1..Z^omega)

where each Lambda^t is a lattice operation (AND/OR) of arity alpha_t+1, the
W^j are block *families* indexed by tuples (i_0..i_j), and the core is a
quantifier-free AND/OR tree over atoms.  Homogeneity units are: each free
block, each W-group (all members of a family sharing an index-tuple prefix,
laid out member-major in increasing last index), and each quantified block.

Variable references carry an owner plus a member selector:

    member=None        the member at the current Lambda index tuple
    member=int k       the member with last index k in the current group
    member=(i_0..i_j)  an absolute member (only in shape-expanded formulas)

Plain (non-family) blocks always use member=None.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from math import prod
from typing import Iterator, Optional, Sequence, Union

from .errors import FormulaError, FragmentError, ValidationError

# ---------------------------------------------------------------------------
# Blocks and families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    name: str
    arity: int  # number of homogeneous coordinates, k+1

    def __post_init__(self):
        if self.arity < 1:
            raise FormulaError(f"block {self.name!r}: arity must be >= 1")


@dataclass(frozen=True)
class BlockFamily:
    """Family W^j: members W^j_{i_0..i_j}, 0 <= i_t <= alpha_t.

    A homogeneity *group* is the set of members sharing a prefix
    (i_0..i_{j-1}); it is one projective block of
    member_arity * index_arities[-1] coordinates, members concatenated in
    increasing last index.  There are prod(index_arities[:-1]) groups.
    """

    name: str
    depth: int
    index_arities: tuple  # (alpha_0+1, ..., alpha_depth+1)
    member_arity: int

    def __post_init__(self):
        if self.depth < 0 or len(self.index_arities) != self.depth + 1:
            raise FormulaError(f"family {self.name!r}: depth/index_arities mismatch")
        if any(a < 1 for a in self.index_arities) or self.member_arity < 1:
            raise FormulaError(f"family {self.name!r}: arities must be >= 1")

    @property
    def group_count(self) -> int:
        return prod(self.index_arities[:-1])

    @property
    def group_arity(self) -> int:
        """Coordinates per group: (a_j+1)(alpha_j+1)."""
        return self.member_arity * self.index_arities[-1]

    def group_prefixes(self) -> Iterator[tuple]:
        """All group prefixes (i_0..i_{j-1}) in lexicographic order."""

        def rec(t):
            if t == self.depth:
                yield ()
                return
            for i in range(self.index_arities[t]):
                for rest in rec(t + 1):
                    yield (i,) + rest

        yield from rec(0)


# ---------------------------------------------------------------------------
# Formula nodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VarRef:
    owner: str
    member: Union[None, int, tuple]
    coord: int


@dataclass(frozen=True)
class Monomial:
    coeff: int
    exps: tuple  # sorted tuple of (VarRef, power), power >= 1


@dataclass(frozen=True)
class Poly:
    monomials: tuple  # tuple of Monomial


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class FalseF:
    pass


@dataclass(frozen=True)
class CoordAtom:
    ref: VarRef
    neq: bool = False


@dataclass(frozen=True)
class PolyAtom:
    poly: Poly
    neq: bool = False


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


QFFormula = Union[TrueF, FalseF, CoordAtom, PolyAtom, And, Or]

TRUE = TrueF()
FALSE = FalseF()


def f_and(children: Sequence[QFFormula]) -> QFFormula:
    kids = [c for c in children if not isinstance(c, TrueF)]
    if any(isinstance(c, FalseF) for c in kids):
        return FALSE
    if not kids:
        return TRUE
    if len(kids) == 1:
        return kids[0]
    return And(tuple(kids))


def f_or(children: Sequence[QFFormula]) -> QFFormula:
    kids = [c for c in children if not isinstance(c, FalseF)]
    if any(isinstance(c, TrueF) for c in kids):
        return TRUE
    if not kids:
        return FALSE
    if len(kids) == 1:
        return kids[0]
    return Or(tuple(kids))


def iter_atoms(f: QFFormula) -> Iterator[Union[CoordAtom, PolyAtom]]:
    if isinstance(f, (CoordAtom, PolyAtom)):
        yield f
    elif isinstance(f, (And, Or)):
        for c in f.children:
            yield from iter_atoms(c)


def atom_count(f: QFFormula) -> int:
    return sum(1 for _ in iter_atoms(f))


def is_coordinate_fragment(f: QFFormula) -> bool:
    return not any(isinstance(a, PolyAtom) for a in iter_atoms(f))


def map_refs(f: QFFormula, fn) -> QFFormula:
    """Rewrite every VarRef through fn (structure preserved)."""
    if isinstance(f, CoordAtom):
        return CoordAtom(fn(f.ref), f.neq)
    if isinstance(f, PolyAtom):
        monos = tuple(
            Monomial(m.coeff, tuple(sorted(((fn(r), p) for r, p in m.exps),
                                           key=_ref_sort_key)))
            for m in f.poly.monomials
        )
        return PolyAtom(Poly(monos), f.neq)
    if isinstance(f, And):
        return And(tuple(map_refs(c, fn) for c in f.children))
    if isinstance(f, Or):
        return Or(tuple(map_refs(c, fn) for c in f.children))
    return f


def _ref_sort_key(item):
    ref, p = item
    member = ref.member
    if member is None:
        mkey = (0,)
    elif isinstance(member, int):
        mkey = (1, member)
    else:
        mkey = (2,) + tuple(member)
    return (ref.owner, mkey, ref.coord, p)


# ---------------------------------------------------------------------------
# ShapedFormula
# ---------------------------------------------------------------------------

AND_OP = "and"
OR_OP = "or"
EXISTS = "exists"
FORALL = "forall"

CLOSED = "closed"
OPEN = "open"
UNVERIFIED = "unverified"

TRIVIAL_SHAPE = ((AND_OP, 1),)


@dataclass(frozen=True)
class ShapedFormula:
    free_blocks: tuple  # tuple of Block
    shape: tuple  # ((op, arity), ...) for Lambda^0..Lambda^sigma
    families: tuple  # tuple of BlockFamily
    quantifiers: tuple  # ((EXISTS|FORALL, Block), ...)
    core: QFFormula
    closedness: str = UNVERIFIED

    def __post_init__(self):
        names = [b.name for b in self.free_blocks]
        names += [f.name for f in self.families]
        names += [b.name for _, b in self.quantifiers]
        if len(set(names)) != len(names):
            raise FormulaError("duplicate block/family name")
        if not self.shape:
            object.__setattr__(self, "shape", TRIVIAL_SHAPE)
        for op, ar in self.shape:
            if op not in (AND_OP, OR_OP) or ar < 1:
                raise FormulaError(f"bad shape stage ({op!r}, {ar})")
        sigma = len(self.shape) - 1
        shape_arities = tuple(ar for _, ar in self.shape)
        for fam in self.families:
            if fam.depth > sigma:
                raise FormulaError(
                    f"family {fam.name!r}: depth {fam.depth} exceeds shape length")
            if fam.index_arities != shape_arities[: fam.depth + 1]:
                raise FormulaError(
                    f"family {fam.name!r}: index arity mismatch with shape")
        for q, _ in self.quantifiers:
            if q not in (EXISTS, FORALL):
                raise FormulaError(f"bad quantifier {q!r}")
        _check_refs(self)

    @property
    def sigma(self) -> int:
        return len(self.shape) - 1

    @property
    def omega(self) -> int:
        return len(self.quantifiers)

    def family(self, name: str) -> BlockFamily:
        for fam in self.families:
            if fam.name == name:
                return fam
        raise FormulaError(f"no family named {name!r}")


def _check_refs(f: ShapedFormula) -> None:
    blocks = {b.name: b for b in f.free_blocks}
    blocks.update({b.name: b for _, b in f.quantifiers})
    fams = {fam.name: fam for fam in f.families}
    for atom in iter_atoms(f.core):
        refs = [atom.ref] if isinstance(atom, CoordAtom) else [
            r for m in atom.poly.monomials for r, _ in m.exps]
        for ref in refs:
            if ref.owner in blocks:
                if ref.member is not None:
                    raise FormulaError(
                        f"plain block {ref.owner!r} used with member selector")
                if not 0 <= ref.coord < blocks[ref.owner].arity:
                    raise FormulaError(f"coordinate out of range in {ref!r}")
            elif ref.owner in fams:
                fam = fams[ref.owner]
                if isinstance(ref.member, int):
                    if not 0 <= ref.member < fam.index_arities[-1]:
                        raise FormulaError(f"member index out of range in {ref!r}")
                elif isinstance(ref.member, tuple):
                    if len(ref.member) != fam.depth + 1 or any(
                            not 0 <= i < a for i, a in zip(ref.member, fam.index_arities)):
                        raise FormulaError(f"member tuple out of range in {ref!r}")
                if not 0 <= ref.coord < fam.member_arity:
                    raise FormulaError(f"coordinate out of range in {ref!r}")
            else:
                raise FormulaError(f"unknown owner {ref.owner!r}")


def plain_formula(core: QFFormula, blocks: Sequence[Block],
                  closedness: str = UNVERIFIED) -> ShapedFormula:
    """Quantifier-free single-shape wrapper around a core over plain blocks."""
    return ShapedFormula(tuple(blocks), TRIVIAL_SHAPE, (), (), core, closedness)


def sentence(core: QFFormula, quantifiers: Sequence[tuple],
             closedness: str = UNVERIFIED) -> ShapedFormula:
    """Fully quantified sentence with trivial shape and no free blocks."""
    return ShapedFormula((), TRIVIAL_SHAPE, (), tuple(quantifiers), core, closedness)


# ---------------------------------------------------------------------------
# Homogeneity units
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitRefs:
    """One homogeneity unit of the core at the current index tuple: a label
    plus the full list of its coordinate references."""

    label: str
    refs: tuple  # tuple of VarRef


def core_units(f: ShapedFormula) -> tuple:
    """All homogeneity units visible to the core at one index tuple:
    free blocks, each family's current group, quantified blocks."""
    units = []
    for b in f.free_blocks:
        units.append(UnitRefs(
            b.name, tuple(VarRef(b.name, None, c) for c in range(b.arity))))
    for fam in f.families:
        refs = tuple(
            VarRef(fam.name, t, c)
            for t in range(fam.index_arities[-1])
            for c in range(fam.member_arity)
        )
        units.append(UnitRefs(fam.name, refs))
    for _, b in f.quantifiers:
        units.append(UnitRefs(
            b.name, tuple(VarRef(b.name, None, c) for c in range(b.arity))))
    return tuple(units)


def unit_of_ref(f: ShapedFormula, ref: VarRef) -> str:
    """Label of the homogeneity unit a reference belongs to (at core level
    every family contributes exactly one group, so the family name is the
    unit label)."""
    return ref.owner


# ---------------------------------------------------------------------------
# negate
# ---------------------------------------------------------------------------


def boolean_negate(f: QFFormula) -> QFFormula:
    """Plain De Morgan negation (the tilde of the paper's convention)."""
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, CoordAtom):
        return CoordAtom(f.ref, not f.neq)
    if isinstance(f, PolyAtom):
        return PolyAtom(f.poly, not f.neq)
    if isinstance(f, And):
        return f_or([boolean_negate(c) for c in f.children])
    if isinstance(f, Or):
        return f_and([boolean_negate(c) for c in f.children])
    raise FormulaError(f"cannot negate {f!r}")


def negate(f: QFFormula, units: Sequence[UnitRefs]) -> QFFormula:
    """The multi-homogeneous negation: tilde(f) OR (block_i = 0 for some i),
    whose realization is the exact complement of R(f) in the ambient
    product (projective points never have an all-zero block, so the added
    disjuncts only repair the strata a plain Boolean negation misses)."""
    parts = [boolean_negate(f)]
    for unit in units:
        parts.append(f_and([CoordAtom(r, False) for r in unit.refs]))
    return f_or(parts)


def negate_shaped(f: ShapedFormula) -> ShapedFormula:
    """negate() applied at core level with the formula's own units."""
    return replace(f, core=negate(f.core, core_units(f)),
                   closedness=_flip_closedness(f.closedness))


def _flip_closedness(c: str) -> str:
    return {CLOSED: OPEN, OPEN: CLOSED}.get(c, UNVERIFIED)


# ---------------------------------------------------------------------------
# shape_expand
# ---------------------------------------------------------------------------


def resolve_refs_at(f: ShapedFormula, idx: tuple):
    """Ref rewriter fixing the Lambda index tuple: family refs become
    absolute member tuples."""
    fams = {fam.name: fam for fam in f.families}

    def fn(ref: VarRef) -> VarRef:
        fam = fams.get(ref.owner)
        if fam is None:
            return ref
        if isinstance(ref.member, tuple):
            return ref
        last = idx[fam.depth] if ref.member is None else ref.member
        return VarRef(ref.owner, idx[: fam.depth] + (last,), ref.coord)

    return fn


def shape_expand(f: ShapedFormula) -> QFFormula:
    """Explicit AND/OR tree instantiating the core at every index tuple.

    Requires omega = 0.  Family references in the result carry absolute
    member tuples; the ambient is the product of all W-groups (and free
    blocks), with group coordinates laid out member-major.
    """
    if f.quantifiers:
        raise FormulaError("shape_expand requires a quantifier-free ShapedFormula")
    return _expand_levels(f, ())


def _expand_levels(f: ShapedFormula, idx: tuple) -> QFFormula:
    t = len(idx)
    if t == len(f.shape):
        return map_refs(f.core, resolve_refs_at(f, idx))
    op, arity = f.shape[t]
    kids = [_expand_levels(f, idx + (i,)) for i in range(arity)]
    return f_and(kids) if op == AND_OP else f_or(kids)


def group_label(family_name: str, prefix: tuple) -> str:
    """Canonical unit label of a W-group: 'name' or 'name@i.j'."""
    if not prefix:
        return family_name
    return family_name + "@" + ".".join(map(str, prefix))


def expanded_units(f: ShapedFormula, include_quantified: bool = True) -> list:
    """Ordered unit list of the shape-expanded ambient:
    [(label, key, ncoords)] where key identifies the unit for reference
    resolution: ("block", name) or ("group", family, prefix)."""
    units = []
    for b in f.free_blocks:
        units.append((b.name, ("block", b.name), b.arity))
    for fam in f.families:
        for prefix in fam.group_prefixes():
            units.append((group_label(fam.name, prefix),
                          ("group", fam.name, prefix), fam.group_arity))
    if include_quantified:
        for _, b in f.quantifiers:
            units.append((b.name, ("block", b.name), b.arity))
    return units


def concrete_ref_locator(f: ShapedFormula):
    """Returns fn(ref) -> (unit_key, coord offset within the unit) for
    references appearing in shape-expanded formulas."""
    fams = {fam.name: fam for fam in f.families}

    def fn(ref: VarRef):
        fam = fams.get(ref.owner)
        if fam is None:
            return ("block", ref.owner), ref.coord
        if not isinstance(ref.member, tuple):
            raise FormulaError(f"unresolved family reference {ref!r}")
        prefix, last = ref.member[:-1], ref.member[-1]
        return ("group", fam.name, prefix), last * fam.member_arity + ref.coord

    return fn


# ---------------------------------------------------------------------------
# instantiate
# ---------------------------------------------------------------------------


def instantiate(f: ShapedFormula, block_name: str, value) -> ShapedFormula:
    """Substitute a free block by an exact rational projective point
    (sequence of Fraction/int) or, in the coordinate fragment, by a support
    pattern (set/frozenset of coordinate indices)."""
    block = next((b for b in f.free_blocks if b.name == block_name), None)
    if block is None:
        raise FormulaError(f"{block_name!r} is not a free block")
    if isinstance(value, (set, frozenset)):
        supp = frozenset(value)
        if not supp or any(not 0 <= c < block.arity for c in supp):
            raise FormulaError("pattern must be a nonempty subset of coordinates")
        core = _instantiate_pattern(f.core, block_name, supp)
    else:
        point = tuple(Fraction(v) for v in value)
        if len(point) != block.arity:
            raise FormulaError("arity mismatch in instantiation point")
        if all(v == 0 for v in point):
            raise FormulaError("zero vector is not a projective point")
        core = _instantiate_point(f.core, block_name, point)
    return replace(
        f,
        free_blocks=tuple(b for b in f.free_blocks if b.name != block_name),
        core=core,
        closedness=UNVERIFIED if f.closedness == UNVERIFIED else f.closedness,
    )


def _instantiate_pattern(f: QFFormula, name: str, supp: frozenset) -> QFFormula:
    if isinstance(f, CoordAtom) and f.ref.owner == name:
        vanishes = f.ref.coord not in supp
        return TRUE if vanishes != f.neq else FALSE
    if isinstance(f, PolyAtom):
        mentions = any(r.owner == name for m in f.poly.monomials for r, _ in m.exps)
        if mentions:
            raise FragmentError(
                "pattern instantiation requires the coordinate fragment")
        return f
    if isinstance(f, And):
        return f_and([_instantiate_pattern(c, name, supp) for c in f.children])
    if isinstance(f, Or):
        return f_or([_instantiate_pattern(c, name, supp) for c in f.children])
    return f


def _instantiate_point(f: QFFormula, name: str, point: tuple) -> QFFormula:
    if isinstance(f, CoordAtom) and f.ref.owner == name:
        vanishes = point[f.ref.coord] == 0
        return TRUE if vanishes != f.neq else FALSE
    if isinstance(f, PolyAtom):
        return _substitute_poly_atom(f, name, point)
    if isinstance(f, And):
        return f_and([_instantiate_point(c, name, point) for c in f.children])
    if isinstance(f, Or):
        return f_or([_instantiate_point(c, name, point) for c in f.children])
    return f


def _substitute_poly_atom(atom: PolyAtom, name: str, point: tuple) -> QFFormula:
    acc = {}
    for m in atom.poly.monomials:
        c = Fraction(m.coeff)
        rest = []
        for ref, p in m.exps:
            if ref.owner == name:
                c *= point[ref.coord] ** p
            else:
                rest.append((ref, p))
        if c == 0:
            continue
        key = tuple(rest)
        acc[key] = acc.get(key, Fraction(0)) + c
    acc = {k: v for k, v in acc.items() if v != 0}
    if not acc:
        # polynomial collapsed to the zero polynomial
        return TRUE if not atom.neq else FALSE
    # clear denominators (scaling never changes the realization)
    denom = 1
    for v in acc.values():
        denom = denom * v.denominator // _gcd(denom, v.denominator)
    monos = tuple(
        Monomial(int(v * denom), k)
        for k, v in sorted(acc.items(), key=lambda kv: [_ref_sort_key(e) for e in kv[0]])
    )
    if not any(m.exps for m in monos) and len(monos) == 1:
        # constant nonzero polynomial
        return FALSE if not atom.neq else TRUE
    return PolyAtom(Poly(monos), atom.neq)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return abs(a)


# ---------------------------------------------------------------------------
# validate_multihomogeneous
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    errors: tuple = ()
    zero_block_mode: str = "patterns"  # "patterns" | "syntactic"
    zero_block_status: str = "verified"  # "verified" | "inconclusive" | "failed"
    warnings: tuple = ()

    def to_doc(self) -> dict:
        return {
            "ok": self.ok,
            "errors": list(self.errors),
            "zero_block": {"mode": self.zero_block_mode,
                           "status": self.zero_block_status},
            "warnings": list(self.warnings),
        }


def validate_multihomogeneous(f: ShapedFormula,
                              pattern_cap: int = 1 << 16) -> ValidationReport:
    """Check per-unit homogeneity of every polynomial atom and the
    zero-block admissibility condition (a multi-homogeneous formula must be
    satisfied whenever any one homogeneity unit is entirely zero).

    In the coordinate fragment the zero-block condition is decided exactly
    on support patterns (when the residual pattern space fits under
    ``pattern_cap``); otherwise it is checked by substitute-and-simplify
    and reported as a syntactic pass when inconclusive.
    """
    errors = []
    units = core_units(f)
    unit_of = {}
    for u in units:
        for r in u.refs:
            unit_of[r.owner] = u.label
    for i, atom in enumerate(iter_atoms(f.core)):
        if isinstance(atom, PolyAtom):
            err = _check_atom_homogeneous(atom, unit_of, i)
            if err:
                errors.append(err)
    if errors:
        return ValidationReport(False, tuple(errors))

    in_fragment = is_coordinate_fragment(f.core)
    mode = "patterns" if in_fragment else "syntactic"
    status = "verified"
    warnings = []
    for unit in units:
        simplified = _zero_out_unit(f.core, unit)
        if isinstance(simplified, TrueF):
            continue
        if isinstance(simplified, FalseF):
            errors.append(
                f"zero-block condition fails for unit {unit.label!r}")
            status = "failed"
            continue
        if in_fragment:
            if _is_pattern_tautology(f, simplified, unit, pattern_cap):
                continue
            errors.append(
                f"zero-block condition fails for unit {unit.label!r}")
            status = "failed"
        else:
            warnings.append(
                f"zero-block condition inconclusive for unit {unit.label!r}")
            status = "inconclusive"
    ok = not errors
    return ValidationReport(ok, tuple(errors), mode, status, tuple(warnings))


def _check_atom_homogeneous(atom: PolyAtom, unit_of: dict, idx: int):
    degrees = None
    for m in atom.poly.monomials:
        by_unit = {}
        for ref, p in m.exps:
            label = unit_of.get(ref.owner)
            if label is None:
                return f"atom #{idx}: unknown owner {ref.owner!r}"
            by_unit[label] = by_unit.get(label, 0) + p
        if degrees is None:
            degrees = by_unit
        elif degrees != by_unit:
            offending = set(degrees) ^ set(by_unit) or {
                u for u in degrees if degrees[u] != by_unit.get(u)}
            return (f"atom #{idx}: inhomogeneous in unit(s) "
                    f"{sorted(offending)}")
    return None


def _zero_out_unit(f: QFFormula, unit: UnitRefs) -> QFFormula:
    """Substitute every coordinate of the unit by zero and simplify."""
    refs = set(unit.refs)

    def go(node):
        if isinstance(node, CoordAtom):
            if node.ref in refs:
                return FALSE if node.neq else TRUE
            return node
        if isinstance(node, PolyAtom):
            monos = tuple(m for m in node.poly.monomials
                          if not any(r in refs for r, _ in m.exps))
            if not monos:
                return FALSE if node.neq else TRUE
            return PolyAtom(Poly(monos), node.neq)
        if isinstance(node, And):
            return f_and([go(c) for c in node.children])
        if isinstance(node, Or):
            return f_or([go(c) for c in node.children])
        return node

    return go(f)


def _is_pattern_tautology(f: ShapedFormula, residual: QFFormula,
                          zero_unit: UnitRefs, cap: int) -> bool:
    from . import coordinate_model as cm  # local import to avoid a cycle

    units = [u for u in core_units(f) if u.label != zero_unit.label]
    total = 1
    for u in units:
        total *= (1 << len(u.refs)) - 1
    if total > cap:
        raise ValidationError(
            "zero-block pattern check exceeds the enumeration cap")
    return cm.is_tautology_over_units(residual, units)


# ---------------------------------------------------------------------------
# JSON documents (fmt 1)
# ---------------------------------------------------------------------------


def _member_to_json(member):
    if member is None:
        return None
    if isinstance(member, int):
        return member
    return list(member)


def _member_from_json(doc):
    if doc is None:
        return None
    if isinstance(doc, int):
        return doc
    if isinstance(doc, list):
        return tuple(int(i) for i in doc)
    raise FormulaError(f"bad member selector {doc!r}")


def _ref_to_json(ref: VarRef) -> list:
    return [ref.owner, _member_to_json(ref.member), ref.coord]


def _ref_from_json(doc) -> VarRef:
    if not isinstance(doc, list) or len(doc) not in (2, 3):
        raise FormulaError(f"bad variable reference {doc!r}")
    if len(doc) == 2:
        owner, coord = doc
        member = None
    else:
        owner, member, coord = doc
    return VarRef(str(owner), _member_from_json(member), int(coord))


def _poly_to_json(p: Poly) -> list:
    return [
        {"coeff": str(m.coeff),
         "exps": [_ref_to_json(r) + [pw] for r, pw in m.exps]}
        for m in p.monomials
    ]


def _poly_from_json(doc) -> Poly:
    if not isinstance(doc, list) or not doc:
        raise FormulaError("polynomial must be a non-empty monomial list")
    monos = []
    for m in doc:
        coeff = int(str(m["coeff"]))
        exps = []
        for e in m.get("exps", []):
            if not isinstance(e, list) or len(e) != 4:
                raise FormulaError(f"bad exponent entry {e!r}")
            exps.append((VarRef(str(e[0]), _member_from_json(e[1]), int(e[2])),
                         int(e[3])))
        if any(p < 1 for _, p in exps):
            raise FormulaError("exponents must be >= 1")
        monos.append(Monomial(coeff, tuple(sorted(exps, key=_ref_sort_key))))
    return Poly(tuple(monos))


def _matrix_to_json(f: QFFormula):
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, CoordAtom):
        if f.neq:
            single = Poly((Monomial(1, ((f.ref, 1),)),))
            return {"neq0": _poly_to_json(single)}
        return {"var_eq0": _ref_to_json(f.ref)}
    if isinstance(f, PolyAtom):
        key = "neq0" if f.neq else "eq0"
        return {key: _poly_to_json(f.poly)}
    if isinstance(f, And):
        return {"and": [_matrix_to_json(c) for c in f.children]}
    if isinstance(f, Or):
        return {"or": [_matrix_to_json(c) for c in f.children]}
    raise FormulaError(f"cannot serialize {f!r}")


def _normalize_atom(p: Poly, neq: bool) -> QFFormula:
    """A single-monomial, single-variable polynomial atom is a coordinate
    atom (x^k = 0 iff x = 0 over an integral domain)."""
    if len(p.monomials) == 1:
        m = p.monomials[0]
        if m.coeff != 0 and len(m.exps) == 1:
            return CoordAtom(m.exps[0][0], neq)
        if m.coeff != 0 and len(m.exps) == 0:
            return FALSE if not neq else TRUE  # nonzero constant
        if m.coeff == 0:
            return TRUE if not neq else FALSE
    return PolyAtom(p, neq)


def _matrix_from_json(doc) -> QFFormula:
    if doc == "true":
        return TRUE
    if doc == "false":
        return FALSE
    if not isinstance(doc, dict) or len(doc) != 1:
        raise FormulaError(f"bad matrix node {doc!r}")
    (kind, payload), = doc.items()
    if kind == "and":
        return f_and([_matrix_from_json(c) for c in payload])
    if kind == "or":
        return f_or([_matrix_from_json(c) for c in payload])
    if kind == "var_eq0":
        return CoordAtom(_ref_from_json(payload), False)
    if kind in ("eq0", "neq0"):
        return _normalize_atom(_poly_from_json(payload), kind == "neq0")
    raise FormulaError(f"unknown matrix node kind {kind!r}")


def formula_to_doc(f: ShapedFormula) -> dict:
    return {
        "fmt": 1,
        "free_blocks": [{"name": b.name, "arity": b.arity} for b in f.free_blocks],
        "shape": [{"op": op, "arity": ar} for op, ar in f.shape],
        "families": [
            {"name": fam.name, "depth": fam.depth,
             "index_arities": list(fam.index_arities),
             "member_arity": fam.member_arity}
            for fam in f.families
        ],
        "quantifiers": [
            {"q": q, "block": {"name": b.name, "arity": b.arity}}
            for q, b in f.quantifiers
        ],
        "matrix": _matrix_to_json(f.core),
        "closedness": f.closedness,
    }


def parse_formula(doc) -> ShapedFormula:
    """Parse and validate a formula document (dict or JSON text)."""
    if isinstance(doc, (str, bytes)):
        import json

        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise FormulaError(f"syntax error at position {exc.pos}: {exc.msg}")
    if not isinstance(doc, dict):
        raise FormulaError("formula document must be a JSON object")
    if doc.get("fmt") != 1:
        raise FormulaError("unsupported or missing schema version (want fmt 1)")
    try:
        free_blocks = tuple(
            Block(str(b["name"]), int(b["arity"])) for b in doc.get("free_blocks", []))
        shape = tuple(
            (str(s["op"]), int(s["arity"])) for s in doc.get("shape", []))
        families = tuple(
            BlockFamily(str(fm["name"]), int(fm["depth"]),
                        tuple(int(a) for a in fm["index_arities"]),
                        int(fm["member_arity"]))
            for fm in doc.get("families", []))
        quantifiers = tuple(
            (str(q["q"]), Block(str(q["block"]["name"]), int(q["block"]["arity"])))
            for q in doc.get("quantifiers", []))
        core = _matrix_from_json(doc["matrix"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormulaError(f"malformed formula document: {exc}") from None
    closedness = doc.get("closedness", UNVERIFIED)
    if closedness not in (CLOSED, OPEN, UNVERIFIED):
        raise FormulaError(f"bad closedness flag {closedness!r}")
    return ShapedFormula(free_blocks, shape, families, quantifiers, core, closedness)

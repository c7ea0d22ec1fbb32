"""Exact finite semantics for the coordinate fragment.

A point of a product of projective spaces is classified, as far as
coordinate-vanishing atoms can see, by its *support pattern*: the set of
indices of nonzero coordinates, one nonempty subset per homogeneity unit.
Realizations of coordinate formulas are therefore finite sets of patterns;
this module provides that semantics (``patterns_of``), the Boolean algebra,
topology classification (closed = downward closed under support shrinking),
maximal supports, and brute-force quantifier elimination --- the ground
truth against which the compiler is differentially tested.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels, formula_ir as ir
from .errors import (FormulaError, FragmentError, OracleBudgetError,
                     SpaceMismatch, TopologyError)

CLOSED = "Closed"
OPEN = "Open"
NEITHER = "Neither"

ENUM_CAP = 1 << 22  # max explicitly enumerated patterns


# ---------------------------------------------------------------------------
# Spaces and pattern sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Unit:
    label: str
    arity: int  # coordinate count
    refs: tuple  # concrete VarRef per coordinate (for formula_of)


def _plain_unit(label: str, arity: int) -> Unit:
    return Unit(label, arity,
                tuple(ir.VarRef(label, None, c) for c in range(arity)))


@dataclass(frozen=True)
class PatternSpace:
    units: tuple  # tuple of Unit

    @property
    def sizes(self) -> tuple:
        return tuple(u.arity for u in self.units)

    @property
    def total_coords(self) -> int:
        return sum(u.arity for u in self.units)

    @property
    def npatterns(self) -> int:
        n = 1
        for u in self.units:
            n *= (1 << u.arity) - 1
        return n

    def index_of(self, label: str) -> int:
        for i, u in enumerate(self.units):
            if u.label == label:
                return i
        raise SpaceMismatch(f"no unit labelled {label!r}")

    def drop(self, label: str) -> "PatternSpace":
        i = self.index_of(label)
        return PatternSpace(self.units[:i] + self.units[i + 1:])

    def full_pattern(self) -> tuple:
        return tuple((1 << u.arity) - 1 for u in self.units)


def space_from_arities(arities, labels=None) -> PatternSpace:
    labels = labels or [f"B{i}" for i in range(len(arities))]
    return PatternSpace(tuple(_plain_unit(l, a) for l, a in zip(labels, arities)))


def space_of(f: ir.ShapedFormula, include_quantified: bool = False) -> PatternSpace:
    """Pattern space of the shape-expanded ambient of f (free blocks and all
    W-groups; optionally the quantified blocks too)."""
    fams = {fam.name: fam for fam in f.families}
    units = []
    for label, key, ncoords in ir.expanded_units(f, include_quantified):
        if key[0] == "block":
            units.append(_plain_unit(key[1], ncoords))
        else:
            _, fname, prefix = key
            fam = fams[fname]
            refs = tuple(
                ir.VarRef(fname, prefix + (last,), c)
                for last in range(fam.index_arities[-1])
                for c in range(fam.member_arity)
            )
            units.append(Unit(label, ncoords, refs))
    return PatternSpace(tuple(units))


@dataclass(frozen=True)
class PatternSet:
    space: PatternSpace
    members: frozenset  # of tuples of int bitmasks, all nonzero

    def __contains__(self, pattern) -> bool:
        return tuple(pattern) in self.members

    def __len__(self) -> int:
        return len(self.members)

    @property
    def is_empty(self) -> bool:
        return not self.members

    def sorted_members(self) -> list:
        return sorted(self.members)

    def to_doc(self) -> dict:
        return {
            "space": [{"label": u.label, "arity": u.arity} for u in self.space.units],
            "patterns": [[hex(m) for m in pat] for pat in self.sorted_members()],
        }


def pattern_set_from_doc(doc) -> PatternSet:
    space = space_from_arities(
        [u["arity"] for u in doc["space"]], [u["label"] for u in doc["space"]])
    members = frozenset(
        tuple(int(m, 16) for m in pat) for pat in doc["patterns"])
    ps = PatternSet(space, members)
    _check_members(ps)
    return ps


def _check_members(a: PatternSet) -> None:
    for pat in a.members:
        if len(pat) != len(a.space.units):
            raise SpaceMismatch("pattern length does not match space")
        for m, u in zip(pat, a.space.units):
            if not 0 < m < (1 << u.arity):
                raise FormulaError(f"bad support mask {m:#x} for unit {u.label!r}")


# ---------------------------------------------------------------------------
# Evaluation and realization
# ---------------------------------------------------------------------------


def _locator(space: PatternSpace, f: Optional[ir.ShapedFormula] = None):
    """ref -> (unit index, coordinate offset) for concrete references."""
    by_label = {u.label: i for i, u in enumerate(space.units)}
    ref_pos = {}
    for i, u in enumerate(space.units):
        for c, r in enumerate(u.refs):
            ref_pos[r] = (i, c)

    def fn(ref: ir.VarRef):
        hit = ref_pos.get(ref)
        if hit is not None:
            return hit
        if ref.member is None and ref.owner in by_label:
            return by_label[ref.owner], ref.coord
        raise FragmentError(f"reference {ref!r} not resolvable in this space")

    return fn


def compile_on(f: ir.QFFormula, space: PatternSpace) -> np.ndarray:
    if not ir.is_coordinate_fragment(f):
        bad = next(a for a in ir.iter_atoms(f) if isinstance(a, ir.PolyAtom))
        raise FragmentError(f"non-coordinate atom: {bad.poly!r}")
    return _kernels.compile_program(f, _locator(space))


def eval_on(f: ir.QFFormula, space: PatternSpace, pattern) -> bool:
    return _kernels.eval_program_single(compile_on(f, space), tuple(pattern))


def patterns_of(f, space: Optional[PatternSpace] = None,
                cap: int = ENUM_CAP) -> PatternSet:
    """Exact realization of a coordinate formula as a PatternSet.

    Accepts a quantifier-free ShapedFormula (shape-expanded first) or a
    QFFormula with concrete references plus an explicit space.
    """
    if isinstance(f, ir.ShapedFormula):
        space = space_of(f)
        qf = ir.shape_expand(f)
    else:
        if space is None:
            raise FormulaError("patterns_of(QFFormula) needs an explicit space")
        qf = f
    prog = compile_on(qf, space)
    cols = _kernels.enumerate_support_columns(space.sizes, cap)
    keep = _kernels.eval_program(prog, cols)
    members = frozenset(
        tuple(int(cols[u, i]) for u in range(len(space.units)))
        for i in np.nonzero(keep)[0]
    )
    return PatternSet(space, members)


def is_tautology_over_units(f: ir.QFFormula, units: Sequence[ir.UnitRefs]) -> bool:
    """True when f holds on every pattern over the given core-level units
    (used by the zero-block validation)."""
    space = PatternSpace(tuple(
        Unit(u.label, len(u.refs), tuple(u.refs)) for u in units))
    prog = _kernels.compile_program(f, _locator(space))
    cols = _kernels.enumerate_support_columns(space.sizes)
    return bool(np.all(_kernels.eval_program(prog, cols)))


def formula_of(a: PatternSet) -> ir.QFFormula:
    """Exact DNF formula with patterns_of(formula_of(A)) == A."""
    terms = []
    for pat in a.sorted_members():
        lits = []
        for mask, unit in zip(pat, a.space.units):
            for c in range(unit.arity):
                lits.append(ir.CoordAtom(unit.refs[c], neq=bool((mask >> c) & 1)))
        terms.append(ir.f_and(lits))
    return ir.f_or(terms)


# ---------------------------------------------------------------------------
# Set algebra
# ---------------------------------------------------------------------------


def _same_space(a: PatternSet, b: PatternSet) -> PatternSpace:
    if a.space.sizes != b.space.sizes or \
            [u.label for u in a.space.units] != [u.label for u in b.space.units]:
        raise SpaceMismatch("pattern sets live in different spaces")
    return a.space


def union(a: PatternSet, b: PatternSet) -> PatternSet:
    return PatternSet(_same_space(a, b), a.members | b.members)


def intersection(a: PatternSet, b: PatternSet) -> PatternSet:
    return PatternSet(_same_space(a, b), a.members & b.members)


def complement(a: PatternSet) -> PatternSet:
    space = a.space
    if space.npatterns > ENUM_CAP:
        raise OracleBudgetError("complement enumeration exceeds cap")
    all_pats = _all_patterns(space)
    return PatternSet(space, frozenset(all_pats) - a.members)


def product(a: PatternSet, b: PatternSet) -> PatternSet:
    space = PatternSpace(a.space.units + b.space.units)
    return PatternSet(space, frozenset(
        p + q for p in a.members for q in b.members))


def equal(a: PatternSet, b: PatternSet) -> bool:
    return _same_space(a, b) is not None and a.members == b.members


def _all_patterns(space: PatternSpace) -> list:
    pats = [()]
    for u in space.units:
        pats = [p + (m,) for p in pats for m in range(1, 1 << u.arity)]
    return pats


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


def is_closed(a: PatternSet) -> bool:
    """Downward closure under shrinking any unit support to a nonempty
    subset; checking single-bit removals suffices by induction."""
    members = a.members
    for pat in members:
        for i, mask in enumerate(pat):
            if mask & (mask - 1) == 0:
                continue  # singleton support, nothing to shrink
            m = mask
            while m:
                bit = m & -m
                m ^= bit
                if pat[:i] + (mask ^ bit,) + pat[i + 1:] not in members:
                    return False
    return True


def classify_topology(a: PatternSet) -> str:
    if is_closed(a):
        return CLOSED
    if is_closed(complement(a)):
        return OPEN
    return NEITHER


def max_supports(a: PatternSet, assume_closed: bool = False) -> list:
    """Antichain of componentwise-maximal patterns of a closed set."""
    if not assume_closed and not is_closed(a):
        raise TopologyError("max_supports requires a closed pattern set")
    return antichain(a.members)


def antichain(patterns: Iterable[tuple]) -> list:
    """Componentwise-maximal elements (no member dominated by another)."""
    pats = sorted(set(patterns), key=lambda p: sum(bin(m).count("1") for m in p),
                  reverse=True)
    out = []
    for p in pats:
        if not any(all(pm & qm == pm for pm, qm in zip(p, q)) for q in out):
            out.append(p)
    return sorted(out)


def downward_closure(space: PatternSpace, generators: Iterable[tuple]) -> PatternSet:
    """Smallest closed set containing the generators."""
    seen = set()
    stack = [tuple(g) for g in generators]
    while stack:
        pat = stack.pop()
        if pat in seen:
            continue
        seen.add(pat)
        for i, mask in enumerate(pat):
            m = mask
            while m:
                bit = m & -m
                m ^= bit
                if mask ^ bit:
                    stack.append(pat[:i] + (mask ^ bit,) + pat[i + 1:])
    return PatternSet(space, frozenset(seen))


# ---------------------------------------------------------------------------
# Quantifier elimination (brute force)
# ---------------------------------------------------------------------------


def eliminate(q: str, unit_label: str, a: PatternSet) -> PatternSet:
    """Exact projective quantifier elimination over one unit.

    EXISTS: project the patterns (some nonempty support works).
    FORALL: keep the reduced patterns for which every nonempty support of
    the unit occurs (projective points never have an all-zero block).
    """
    i = a.space.index_of(unit_label)
    new_space = a.space.drop(unit_label)
    if q == ir.EXISTS:
        members = frozenset(p[:i] + p[i + 1:] for p in a.members)
        return PatternSet(new_space, members)
    if q == ir.FORALL:
        needed = (1 << a.space.units[i].arity) - 1
        seen = {}
        for p in a.members:
            rest = p[:i] + p[i + 1:]
            seen.setdefault(rest, set()).add(p[i])
        members = frozenset(r for r, supps in seen.items()
                            if len(supps) == needed)
        return PatternSet(new_space, members)
    raise FormulaError(f"bad quantifier {q!r}")


def realization_bruteforce(f: ir.ShapedFormula, cap: int = ENUM_CAP) -> PatternSet:
    """Realization of a ShapedFormula over its free+family ambient by
    exhaustive recursion: for each ambient pattern, evaluate the Lambda
    lattice with each index tuple's quantifier prefix evaluated by
    enumeration over the (per-tuple, independently bound) Z blocks."""
    space = space_of(f)
    if space.npatterns > cap:
        raise OracleBudgetError("brute-force realization exceeds enumeration cap")
    members = set()
    for pat in _all_patterns(space):
        if _eval_shaped(f, space, pat):
            members.add(pat)
    return PatternSet(space, frozenset(members))


def decide_sentence_bruteforce(f: ir.ShapedFormula) -> bool:
    """Ground-truth verdict for a sentence (no free blocks, no families)."""
    if f.free_blocks or f.families:
        raise FormulaError("decide_sentence_bruteforce requires a sentence")
    space = space_of(f)  # empty ambient: the single empty pattern
    return _eval_shaped(f, space, ())


def _eval_shaped(f: ir.ShapedFormula, space: PatternSpace, pattern) -> bool:
    assignment = dict(zip((u.label for u in space.units), pattern))
    return _eval_lattice(f, assignment, ())


def _eval_lattice(f: ir.ShapedFormula, assignment: dict, idx: tuple) -> bool:
    t = len(idx)
    if t == len(f.shape):
        core = ir.map_refs(f.core, ir.resolve_refs_at(f, idx))
        return _eval_quantified(f, core, assignment, 0, {})
    op, arity = f.shape[t]
    results = (_eval_lattice(f, assignment, idx + (i,)) for i in range(arity))
    return all(results) if op == ir.AND_OP else any(results)


def _eval_quantified(f: ir.ShapedFormula, core: ir.QFFormula,
                     assignment: dict, qi: int, zsupp: dict) -> bool:
    if qi == len(f.quantifiers):
        return _eval_concrete(f, core, assignment, zsupp)
    q, block = f.quantifiers[qi]
    full = (1 << block.arity) - 1
    results = (
        _eval_quantified(f, core, assignment, qi + 1,
                         {**zsupp, block.name: s})
        for s in range(1, full + 1)
    )
    return any(results) if q == ir.EXISTS else all(results)


def _eval_concrete(f: ir.ShapedFormula, core: ir.QFFormula,
                   assignment: dict, zsupp: dict) -> bool:
    fams = {fam.name: fam for fam in f.families}

    def truth(node) -> bool:
        if isinstance(node, ir.TrueF):
            return True
        if isinstance(node, ir.FalseF):
            return False
        if isinstance(node, ir.And):
            return all(truth(c) for c in node.children)
        if isinstance(node, ir.Or):
            return any(truth(c) for c in node.children)
        if isinstance(node, ir.CoordAtom):
            ref = node.ref
            if ref.owner in zsupp:
                inside = bool((zsupp[ref.owner] >> ref.coord) & 1)
            elif ref.owner in fams:
                fam = fams[ref.owner]
                prefix, last = ref.member[:-1], ref.member[-1]
                label = ir.group_label(fam.name, prefix)
                bit = last * fam.member_arity + ref.coord
                inside = bool((assignment[label] >> bit) & 1)
            else:
                inside = bool((assignment[ref.owner] >> ref.coord) & 1)
            return inside if node.neq else not inside
        raise FragmentError(f"non-coordinate atom {node!r}")

    return truth(core)

"""Shared helpers: deterministic random generators for coordinate sets
and formulas used across the unit and acceptance suites."""

from __future__ import annotations

import random

import pytest

from projqe import coordinate_model as cm, formula_ir as ir


def random_closed_set(rng: random.Random, arities) -> cm.PatternSet:
    """A random nonempty closed (downward-closed) pattern set: the
    downward closure of a few random generator patterns."""
    space = cm.space_from_arities(list(arities))
    gens = []
    for _ in range(rng.randint(1, 4)):
        gens.append(tuple(rng.randint(1, (1 << a) - 1) for a in arities))
    return cm.downward_closure(space, gens)


def random_pattern_set(rng: random.Random, arities) -> cm.PatternSet:
    """A random constructible set: every nonzero pattern kept with
    probability 1/2."""
    space = cm.space_from_arities(list(arities))
    members = frozenset(p for p in cm._all_patterns(space)
                        if rng.random() < 0.5)
    return cm.PatternSet(space, members)


def plain_closed_formula(rng: random.Random, blocks) -> ir.ShapedFormula:
    """A random vanish-atom AND/OR core over the blocks (always closed)."""
    atoms = [ir.CoordAtom(ir.VarRef(b.name, None, c))
             for b in blocks for c in range(b.arity)]

    def tree(depth):
        if depth == 0 or rng.random() < 0.4:
            return rng.choice(atoms)
        op = ir.f_and if rng.random() < 0.5 else ir.f_or
        return op([tree(depth - 1) for _ in range(rng.randint(2, 3))])

    return ir.ShapedFormula(tuple(blocks), (), (), (), tree(2), ir.CLOSED)


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)

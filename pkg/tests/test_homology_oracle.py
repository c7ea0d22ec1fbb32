"""Unit tests for the homology oracle: ground truths, windows, duality,
the strata-colimit engine, the affine link engine, and the join/Gysin
fast path -- each cross-checked against an independent source."""

import itertools
import random

import pytest

from projqe import coordinate_model as cm, formula_ir as ir
from projqe import homology_oracle as ho, poincare_algebra as pa
from projqe.errors import TopologyError

from conftest import random_closed_set, random_pattern_set


def _set(arities, members):
    return cm.PatternSet(cm.space_from_arities(list(arities)),
                         frozenset(members))


def _closure(arities, gens):
    return cm.downward_closure(cm.space_from_arities(list(arities)), gens)


# -- ground truths ----------------------------------------------------------


def test_triangle_of_lines():
    a = _closure([3], [(0b011,), (0b110,), (0b101,)])
    assert ho.betti_closed(a).b == (1, 1, 3)


def test_four_cycle_of_lines():
    a = _closure([4], [(0b0011,), (0b0110,), (0b1100,), (0b1001,)])
    assert ho.betti_closed(a).b == (1, 1, 4)


def test_projective_spaces():
    for k in range(4):
        a = _closure([k + 1], [((1 << (k + 1)) - 1,)])
        assert list(ho.poincare_closed(a)) == [1, 0] * k + [1]


def test_kunneth_products():
    # single multi-subspace: P^1 x P^2 inside P^2 x P^2
    a = _closure([3, 3], [(0b011, 0b111)])
    p = ho.poincare_closed(a)
    assert p == pa.mul(pa.projective_space_poly(1),
                       pa.projective_space_poly(2))


def test_euler_random_closed(rng):
    for _ in range(50):
        a = random_closed_set(rng, [rng.randint(2, 3), rng.randint(2, 3)])
        assert ho.euler_check(a).ok


# -- duality and windows ----------------------------------------------------


def test_pseudo_open_hand_derived():
    # affine line inside P^1: complement of one point
    affine = _set([2], [(0b10,), (0b11,)])
    assert ho.pseudo_open(affine) == (1,)
    # C* inside P^1: complement of two points
    cstar = _set([2], [(0b11,)])
    assert ho.pseudo_open(cstar) == (1, -1)
    # full ambient is open too (and closed); empty open set
    full = _set([2], [(0b01,), (0b10,), (0b11,)])
    assert ho.pseudo_open(full) == (1, 1)
    assert ho.pseudo_open(_set([2], [])) == pa.ZERO


def test_ambient_duality_on_random_closed(rng):
    for _ in range(50):
        a = random_closed_set(rng, [3])
        k = 2
        q_open = ho.pseudo_open(cm.complement(a))
        q_closed = ho.pseudo_closed(a)
        _, q_amb = pa.projective_product_polys([k])
        assert q_open == pa.sub(q_amb, pa.rec(pa.trunc(q_closed, k), k))


def test_betti_windows_agree_with_full(rng):
    for _ in range(20):
        a = random_closed_set(rng, [2, 3])
        cs = ho.CoordSet.from_pattern_set(a)
        full = ho.betti_closed(a).b
        low = ho.betti_low_window(cs, 3)
        for d in range(4):
            want = full[d] if d < len(full) else 0
            assert low.get(d, 0) == want


def test_pseudo_open_requires_open():
    a = _set([3], [(0b011,)])  # a line minus two points: neither
    with pytest.raises(TopologyError):
        ho.pseudo_open(a)


# -- the strata-colimit engine ----------------------------------------------


def test_constructible_matches_nerve_on_closed(rng):
    for _ in range(15):
        a = random_closed_set(rng, [3])
        assert ho.betti_constructible(a) == list(ho.betti_closed(a).b)


def test_constructible_euler_additivity(rng):
    # chi equals the number of strata with all supports singletons
    for _ in range(20):
        a = random_pattern_set(rng, [3])
        if not a.members:
            continue
        b = ho.betti_constructible(a)
        chi = sum((-1) ** i * c for i, c in enumerate(b))
        pts = sum(1 for (m,) in a.members if m & (m - 1) == 0)
        assert chi == pts


def test_constructible_known_sets():
    # C* in P^1: circle up to homotopy
    assert ho.betti_constructible(_set([2], [(0b11,)])) == [1, 1]
    # P^1 with one point removed: a point up to homotopy
    assert ho.betti_constructible(_set([2], [(0b10,), (0b11,)])) == [1]
    # two disjoint points
    assert ho.betti_constructible(_set([2], [(0b01,), (0b10,)])) == [2]


def test_pseudo_exact_matches_both_paths(rng):
    for _ in range(15):
        a = random_pattern_set(rng, [3])
        if not a.members:
            continue
        ho._PSEUDO_CACHE.clear()
        q = ho.pseudo_exact(a)
        b = ho.betti_constructible(a)
        top = (len(b) + 1) // 2
        direct = pa.poly([(b[2 * j] if 2 * j < len(b) else 0)
                          - (b[2 * j - 1] if 0 <= 2 * j - 1 < len(b) else 0)
                          for j in range(top + 1)])
        assert q == pa.trunc(direct, 2)


# -- the affine engine and the join/Gysin fast path -------------------------


AFFINE_CASES = [
    # (members, betti): hand-derived homotopy types
    ([0b01], [1, 1]),                      # C*
    ([0b11], [1, 2, 1]),                   # torus
    ([0b01, 0b11], [1, 1]),                # C* x C
    ([0b01, 0b10, 0b11], [1, 0, 0, 1]),    # C^2 minus 0
    ([0b01, 0b10], [2, 2]),                # two punctured axes
    ([0b111], [1, 3, 3, 1]),               # 3-torus
    ([0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111],
     [1, 0, 0, 0, 0, 1]),                  # C^3 minus 0
]


def test_betti_affine_catalogue():
    for members, want in AFFINE_CASES:
        assert ho.betti_affine(members) == want


def test_join_product_value_matches_engine():
    # punctured products of sphere-link cones, small enough for the
    # engine: the fast path must agree with the honest computation
    for copies in (2, 3):
        members = []
        for combo in itertools.product((0b01, 0b11, 0), repeat=copies):
            m = 0
            for i, g in enumerate(combo):
                m |= g << (2 * i)
            if m:
                members.append((m,))
        a = _set([2 * copies], members)
        fast = ho.join_product_value(a)
        assert fast == pa.poly([1] * copies)
        b = ho.betti_constructible(a)
        engine = pa.poly([(b[2 * j] if 2 * j < len(b) else 0)
                          - (b[2 * j - 1] if 0 <= 2 * j - 1 < len(b) else 0)
                          for j in range(copies)])
        assert fast == engine


def test_join_product_value_heavy_type():
    # the 4-copy case: too big for the engine in test time, but the link
    # is S^1 * S^1 * S^1 * S^1 = S^7 and Gysin pins the quotient
    members = []
    for combo in itertools.product((0b01, 0b11, 0), repeat=4):
        m = 0
        for i, g in enumerate(combo):
            m |= g << (2 * i)
        if m:
            members.append((m,))
    assert ho.join_product_value(_set([8], members)) == (1, 1, 1, 1)


def test_join_product_value_declines_torus_factors():
    # factors with torus links are not rational spheres: no fast path
    members = [(m,) for m in (0b0011, 0b1100, 0b1111)]
    assert ho.join_product_value(_set([4], members)) is None


def test_punctured_split():
    members = [m for m in range(1, 16)]
    assert len(ho._punctured_split(members, 4)) == 4  # full product
    coupled = [0b01, 0b10]  # exactly one of two bits: no factorization
    assert len(ho._punctured_split(coupled, 2)) == 1


# -- links ------------------------------------------------------------------


def test_link_of_point_and_line():
    pt = _closure([2], [(0b01,)])
    assert ho.link_betti(pt).b == (1, 1)  # S^1
    line = _closure([2], [(0b11,)])
    assert ho.link_betti(line).b == (1, 0, 0, 1)  # S^3


def test_link_of_two_points():
    two = _closure([2], [(0b01,), (0b10,)])
    assert ho.link_betti(two).b == (2, 2)  # two disjoint circles


# -- rank kernels -----------------------------------------------------------


def test_rank_mod_agrees_with_exact(rng):
    from projqe import _kernels
    for _ in range(40):
        nrows = rng.randint(1, 12)
        ncols = rng.randint(1, 12)
        rows = []
        for _ in range(nrows):
            row = {c: rng.randint(-5, 5) for c in range(ncols)
                   if rng.random() < 0.4}
            rows.append({c: v for c, v in row.items() if v})
        exact = ho.matrix_rank_exact([dict(r) for r in rows])
        for prime in ho._RANK_PRIMES:
            assert _kernels.rank_mod([dict(r) for r in rows],
                                     ncols, prime) == exact
            assert ho.matrix_rank_mod([dict(r) for r in rows],
                                      prime) == exact


# -- request documents ------------------------------------------------------


def test_answer_request_roundtrip():
    doc = {"patterns": _closure([3], [(0b011,), (0b110,), (0b101,)]).to_doc(),
           "want": ["betti", "poincare", "pseudo"]}
    resp = ho.answer_request(doc)
    assert resp["betti"] == [1, 1, 3]
    assert resp["poincare"] == ["1", "1", "3"]
    assert resp["pseudo"] == ["1", "2"]
    assert resp["checks"]["euler"] is True

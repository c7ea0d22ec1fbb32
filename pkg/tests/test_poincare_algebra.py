"""Unit tests for the exact polynomial algebra and pipeline documents."""

import random

import pytest

from projqe import poincare_algebra as pa
from projqe.errors import DegreeError


def rand_poly(rng, max_deg=8, lo=-9, hi=9):
    return pa.poly([rng.randint(lo, hi) for _ in range(rng.randint(0, max_deg + 1))])


def test_poly_normalization():
    assert pa.poly([1, 0, 0]) == (1,)
    assert pa.poly([]) == pa.ZERO
    assert pa.poly([0]) == pa.ZERO
    assert pa.degree(pa.ZERO) == -1


def test_arithmetic_small():
    p = pa.poly([1, 2])
    q = pa.poly([1, -1])
    assert pa.mul(p, q) == (1, 1, -2)
    assert pa.add(p, q) == (2, 1)
    assert pa.sub(p, p) == pa.ZERO
    assert pa.power(q, 2) == (1, -2, 1)
    assert pa.eval_at(p, 3) == 7


def test_rec_involution(rng):
    for _ in range(200):
        q = rand_poly(rng, max_deg=6)
        n = pa.degree(q) + rng.randint(0, 3) if q else rng.randint(0, 3)
        assert pa.rec(pa.rec(q, n), n) == q


def test_rec_degree_guard():
    with pytest.raises(DegreeError):
        pa.rec(pa.poly([1, 1, 1]), 1)


def test_trunc_idempotent(rng):
    for _ in range(200):
        q = rand_poly(rng)
        m = rng.randint(0, 10)
        assert pa.trunc(pa.trunc(q, m), m) == pa.trunc(q, m)


def test_even_odd_reconstruction(rng):
    for _ in range(200):
        p = rand_poly(rng)
        ev, od = pa.even_odd_split(p)
        rebuilt = [0] * (pa.degree(p) + 1)
        for j, c in enumerate(ev):
            rebuilt[2 * j] = c
        for j, c in enumerate(od):
            rebuilt[2 * j + 1] = c
        assert pa.poly(rebuilt) == p


def test_pseudo_from_poincare():
    # P of P^2: (1, 0, 1, 0, 1) -> Q = (1, 1, 1)
    assert pa.pseudo_from_poincare(pa.projective_space_poly(2)) == (1, 1, 1)


def test_projective_product_polys():
    p, q = pa.projective_product_polys([1, 2])
    assert q == (1, 2, 2, 1)
    assert p == (1, 0, 2, 0, 2, 0, 1)


def test_duality_matches_ambient_identity(rng):
    for _ in range(100):
        dims = [rng.randint(0, 2) for _ in range(rng.randint(1, 2))]
        k = sum(dims)
        qc = pa.trunc(rand_poly(rng, max_deg=k, lo=0, hi=3), k)
        _, q_amb = pa.projective_product_polys(dims)
        assert pa.duality_pseudo(qc, dims, k) == \
            pa.sub(q_amb, pa.rec(pa.trunc(qc, k), k))


def test_pipeline_eval_and_compose(rng):
    f = pa.pipeline(pa.MulBy(pa.poly([1, -1])), pa.Trunc(2))
    g = pa.pipeline(pa.Rec(2), pa.SubFrom(pa.poly([1, 1, 1])))
    q = pa.poly([1, 2, 3])
    assert pa.pipeline_eval(pa.pipeline_compose(f, g), q) == \
        pa.pipeline_eval(g, pa.pipeline_eval(f, q))


def test_required_input_degree():
    f = pa.pipeline(pa.MulBy(pa.poly([1, -1])), pa.Trunc(3), pa.Rec(3))
    # Rec needs the whole window; MulBy has unit diagonal
    assert pa.required_input_degree(f, 0) == 3


def test_pipeline_roundtrip(rng):
    for _ in range(50):
        stages = []
        for _ in range(rng.randint(1, 5)):
            kind = rng.randrange(5)
            if kind == 0:
                stages.append(pa.Identity())
            elif kind == 1:
                stages.append(pa.Trunc(rng.randint(0, 6)))
            elif kind == 2:
                stages.append(pa.Rec(rng.randint(0, 6)))
            elif kind == 3:
                stages.append(pa.MulBy(rand_poly(rng, 4)))
            else:
                stages.append(pa.SubFrom(rand_poly(rng, 4)))
        f = pa.pipeline(*stages)
        assert pa.pipeline_io_roundtrip(f) == f

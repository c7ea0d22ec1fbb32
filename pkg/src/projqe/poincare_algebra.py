"""Exact integer polynomial arithmetic in T and the serializable map F.

Polynomials in the single variable T are represented densely as tuples of
arbitrary-precision integers, constant term first, with trailing zeros
stripped (the zero polynomial is the empty tuple).  On top of them live the
three operators

    Rec_n(Q)  = T^n Q(1/T)      (coefficient reversal inside degree window n)
    Trunc_m(Q) = sum_{i<=m} a_i T^i
    M_P(Q)    = P * Q

together with the pseudo-Poincare calculus (Q_S = P^even - T P^odd applied
to Poincare polynomials), the product-of-projective-spaces tables, the
Alexander-Lefschetz duality transform for open/closed complements, and
``PolyMapPipeline`` -- a serializable composition of stages
Identity | Trunc(m) | Rec(n) | MulBy(P) | SubFrom(C), evaluated innermost
first, which is the compiler's output map F.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from .errors import DegreeError, PipelineError

# ---------------------------------------------------------------------------
# PolyT: dense integer polynomials in T
# ---------------------------------------------------------------------------

PolyT = tuple  # tuple of ints, constant first, normalized (no trailing zeros)

ZERO: PolyT = ()
ONE: PolyT = (1,)


def poly(coeffs: Iterable[int]) -> PolyT:
    """Build a normalized PolyT from a coefficient iterable (constant first)."""
    c = list(coeffs)
    while c and c[-1] == 0:
        c.pop()
    return tuple(int(x) for x in c)


def degree(q: PolyT) -> int:
    """Degree of q; the zero polynomial has degree -1."""
    return len(q) - 1


def coeff(q: PolyT, i: int) -> int:
    return q[i] if 0 <= i < len(q) else 0


def add(p: PolyT, q: PolyT) -> PolyT:
    n = max(len(p), len(q))
    return poly(coeff(p, i) + coeff(q, i) for i in range(n))


def sub(p: PolyT, q: PolyT) -> PolyT:
    n = max(len(p), len(q))
    return poly(coeff(p, i) - coeff(q, i) for i in range(n))


def mul(p: PolyT, q: PolyT) -> PolyT:
    """Exact product (the operator M_P)."""
    if not p or not q:
        return ZERO
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] += a * b
    return poly(out)


def scale(p: PolyT, c: int) -> PolyT:
    return poly(a * c for a in p)


def power(p: PolyT, n: int) -> PolyT:
    if n < 0:
        raise ValueError("negative power")
    out = ONE
    base = p
    while n:
        if n & 1:
            out = mul(out, base)
        base = mul(base, base)
        n >>= 1
    return out


def eval_at(q: PolyT, t: int) -> int:
    """Exact integer evaluation q(t) (Horner)."""
    acc = 0
    for a in reversed(q):
        acc = acc * t + a
    return acc


def rec(q: PolyT, n: int) -> PolyT:
    """Rec_n(Q) = T^n Q(1/T).  Requires deg(Q) <= n."""
    if degree(q) > n:
        raise DegreeError(f"rec: degree {degree(q)} exceeds window {n}")
    return poly(coeff(q, n - i) for i in range(n + 1))


def trunc(q: PolyT, m: int) -> PolyT:
    """Trunc_m(Q): drop all coefficients above degree m."""
    if m < 0:
        raise DegreeError("trunc: negative degree window")
    return poly(q[: m + 1])


def congruent_mod(p: PolyT, q: PolyT, m: int) -> bool:
    """p == q mod T^m (agreement of coefficients below degree m)."""
    return all(coeff(p, i) == coeff(q, i) for i in range(m))


def one_minus_t_power(alpha: int) -> PolyT:
    """(1 - T)^alpha."""
    return power((1, -1), alpha)


# ---------------------------------------------------------------------------
# Poincare / pseudo-Poincare calculus
# ---------------------------------------------------------------------------


def even_odd_split(p: PolyT) -> tuple[PolyT, PolyT]:
    """Split P = P^even(T^2) + T * P^odd(T^2); returns (P^even, P^odd)."""
    return poly(p[0::2]), poly(p[1::2])


def pseudo_from_poincare(p: PolyT) -> PolyT:
    """Q = P^even - T * P^odd, i.e. the degree-j coefficient of Q is
    b_{2j} - b_{2j-1} (with b_{-1} = 0).  In particular Q(0) = b_0."""
    ev, od = even_odd_split(p)
    return sub(ev, mul((0, 1), od))


def projective_space_poly(d: int) -> PolyT:
    """P of P^d: 1 + T^2 + ... + T^{2d}."""
    out = [0] * (2 * d + 1)
    out[0::2] = [1] * (d + 1)
    return poly(out)


def projective_product_polys(dims: Sequence[int]) -> tuple[PolyT, PolyT]:
    """(P, Q) of prod_i P^{d_i} by the Kunneth product."""
    p_total = ONE
    q_total = ONE
    for d in dims:
        p_total = mul(p_total, projective_space_poly(d))
        q_total = mul(q_total, poly([1] * (d + 1)))
    return p_total, q_total


def duality_pseudo(q_complement: PolyT, ambient_dims: Sequence[int], k: int) -> PolyT:
    """Q_S = Q_ambient - Rec_k(Q_complement) for S closed/open with
    complement valued by q_complement; k = total complex dimension."""
    if k != sum(ambient_dims):
        raise DegreeError("duality_pseudo: k must equal the total complex dimension")
    if degree(q_complement) > k:
        raise DegreeError("duality_pseudo: complement degree exceeds ambient dimension")
    _, q_amb = projective_product_polys(ambient_dims)
    return sub(q_amb, rec(q_complement, k))


# ---------------------------------------------------------------------------
# PolyMapPipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class Trunc:
    m: int


@dataclass(frozen=True)
class Rec:
    n: int


@dataclass(frozen=True)
class MulBy:
    poly: PolyT


@dataclass(frozen=True)
class SubFrom:
    poly: PolyT  # Q -> poly - Q


Stage = Union[Identity, Trunc, Rec, MulBy, SubFrom]


@dataclass(frozen=True)
class PolyMapPipeline:
    """Ordered stages, innermost (first applied) first."""

    stages: tuple

    def __iter__(self):
        return iter(self.stages)


IDENTITY_PIPELINE = PolyMapPipeline((Identity(),))


def pipeline(*stages: Stage) -> PolyMapPipeline:
    return PolyMapPipeline(tuple(stages))


def pipeline_eval(f: PolyMapPipeline, q: PolyT) -> PolyT:
    """Apply stages innermost-first."""
    for stage in f.stages:
        if isinstance(stage, Identity):
            pass
        elif isinstance(stage, Trunc):
            q = trunc(q, stage.m)
        elif isinstance(stage, Rec):
            q = rec(q, stage.n)
        elif isinstance(stage, MulBy):
            q = mul(stage.poly, q)
        elif isinstance(stage, SubFrom):
            q = sub(stage.poly, q)
        else:  # pragma: no cover
            raise PipelineError(f"unknown stage {stage!r}")
    return q


def pipeline_compose(f: PolyMapPipeline, g: PolyMapPipeline) -> PolyMapPipeline:
    """Compose so that f runs first, then g (innermost-first concatenation)."""
    return PolyMapPipeline(f.stages + g.stages)


def required_input_degree(f: PolyMapPipeline, out_degree: int | None = None) -> int | None:
    """Degree window of the input that the full-precision output depends on.

    ``None`` means "all of it".  Walk the stages outermost-first: Trunc(m)
    caps the requirement at m; MulBy(P) with P(0) != 0 is lower-triangular
    with unit diagonal, so it preserves the requirement; Rec(n) needs the
    whole window n; SubFrom preserves the requirement.  This is what lets
    the decision procedure ask the oracle only for the Betti numbers it
    will actually consume.
    """
    need = out_degree
    for stage in reversed(f.stages):
        if isinstance(stage, Trunc):
            need = stage.m if need is None else min(need, stage.m)
        elif isinstance(stage, Rec):
            need = stage.n
        elif isinstance(stage, MulBy):
            if coeff(stage.poly, 0) == 0:
                # T | P: output degree r depends on input degrees < r only;
                # keeping `need` unchanged is a safe over-approximation.
                pass
        # Identity, SubFrom: unchanged
    return need


# --- serialization ----------------------------------------------------------


def poly_to_json(p: PolyT) -> list[str]:
    """Coefficient array of decimal strings, constant term first."""
    return [str(c) for c in p]


def poly_from_json(doc) -> PolyT:
    if not isinstance(doc, list):
        raise PipelineError("polynomial must be a list of decimal strings")
    try:
        return poly(int(str(c)) for c in doc)
    except ValueError as exc:
        raise PipelineError(f"bad polynomial coefficient: {exc}") from None


def pipeline_to_doc(f: PolyMapPipeline) -> dict:
    ops = []
    for stage in f.stages:
        if isinstance(stage, Identity):
            ops.append({"op": "id"})
        elif isinstance(stage, Trunc):
            ops.append({"op": "trunc", "m": stage.m})
        elif isinstance(stage, Rec):
            ops.append({"op": "rec", "n": stage.n})
        elif isinstance(stage, MulBy):
            ops.append({"op": "mul", "poly": poly_to_json(stage.poly)})
        elif isinstance(stage, SubFrom):
            ops.append({"op": "sub_from", "poly": poly_to_json(stage.poly)})
        else:  # pragma: no cover
            raise PipelineError(f"unknown stage {stage!r}")
    return {"pipeline": ops}


def pipeline_from_doc(doc) -> PolyMapPipeline:
    if not isinstance(doc, dict) or "pipeline" not in doc:
        raise PipelineError('pipeline document must be {"pipeline": [...]}')
    stages = []
    for i, op in enumerate(doc["pipeline"]):
        if not isinstance(op, dict) or "op" not in op:
            raise PipelineError(f"stage {i}: missing op")
        kind = op["op"]
        try:
            if kind == "id":
                stages.append(Identity())
            elif kind == "trunc":
                stages.append(Trunc(int(op["m"])))
            elif kind == "rec":
                stages.append(Rec(int(op["n"])))
            elif kind == "mul":
                stages.append(MulBy(poly_from_json(op["poly"])))
            elif kind == "sub_from":
                stages.append(SubFrom(poly_from_json(op["poly"])))
            else:
                raise PipelineError(f"stage {i}: unknown op {kind!r}")
        except KeyError as exc:
            raise PipelineError(f"stage {i}: missing field {exc}") from None
    return PolyMapPipeline(tuple(stages))


def pipeline_io_roundtrip(f: PolyMapPipeline) -> PolyMapPipeline:
    """Serialize then parse (used by tests; io must round-trip exactly)."""
    return pipeline_from_doc(json.loads(json.dumps(pipeline_to_doc(f))))

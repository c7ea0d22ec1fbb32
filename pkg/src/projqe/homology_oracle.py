"""Exact Betti numbers of coordinate constructible sets in products of
projective spaces, with independent cross-checks.

A closed coordinate set A is the union of its maximal multi-subspaces
(products of coordinate subspaces, one per maximal support pattern).  Cover
A by them and form the closed-cover descent (Mayer-Vietoris) E_1 array

    E_1^{p,q} = (+)_{|sigma|=p+1} H^q( prod_i P^{A_sigma,i} )

over the nerve: sigma is a face when the componentwise intersection
A_sigma is nonempty in every unit.  H^* of a product of projective spaces
has one generator per multidegree d bounded by the component dimensions,
and the restriction maps send generator to generator (or to zero when the
class is absent), so the E_1 rows split into one combinatorial cochain
complex per multidegree d: the subcomplex N_{>=d} of nerve faces whose
intersection keeps >= d_i+1 coordinates in every unit, and

    b_n(A) = sum_{p + 2|d| = n} rank H^p( N_{>=d} ).

Correctness rests on rational E_2-degeneration of this sequence for unions
of smooth projective multi-subspaces (classical weight purity, external to
the source material); because of that the oracle always carries redundant
certificates: an Euler-characteristic cross-check on every full table, and
link cross-checks where applicable.

All ranks are computed by exact fraction-free integer elimination; there is
no floating point anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels, coordinate_model as cm, formula_ir as ir
from . import poincare_algebra as pa
from .errors import (FormulaError, FragmentError, OracleBudgetError,
                     OracleError, TopologyError)

FACE_BUDGET = 400_000
DNF_BUDGET = 120_000
SINGLETON_BUDGET = 4096


# ---------------------------------------------------------------------------
# CoordSet: explicit or formula-backed coordinate sets
# ---------------------------------------------------------------------------


@dataclass
class CoordSet:
    """A coordinate constructible set given by a concrete formula over a
    pattern space, optionally with an explicit pattern enumeration."""

    space: cm.PatternSpace
    formula: ir.QFFormula
    explicit: Optional[cm.PatternSet] = None
    _prog: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_pattern_set(cls, a: cm.PatternSet) -> "CoordSet":
        return cls(a.space, cm.formula_of(a), a)

    @classmethod
    def from_formula(cls, space: cm.PatternSpace, f: ir.QFFormula) -> "CoordSet":
        return cls(space, f, None)

    @classmethod
    def from_shaped(cls, f: ir.ShapedFormula) -> "CoordSet":
        return cls(cm.space_of(f), ir.shape_expand(f), None)

    @property
    def prog(self) -> np.ndarray:
        if self._prog is None:
            self._prog = cm.compile_on(self.formula, self.space)
        return self._prog

    @property
    def ambient_dims(self) -> tuple:
        return tuple(u.arity - 1 for u in self.space.units)

    def contains(self, pattern) -> bool:
        if self.explicit is not None:
            return tuple(pattern) in self.explicit.members
        return _kernels.eval_program_single(self.prog, tuple(pattern))

    def eval_batch(self, cols: np.ndarray) -> np.ndarray:
        return _kernels.eval_program(self.prog, cols)

    def max_supports(self, cap: int = DNF_BUDGET) -> list:
        if self.explicit is not None:
            return cm.antichain(self.explicit.members)
        return _max_supports_from_formula(self.formula, self.space, cap)

    def complement(self) -> "CoordSet":
        if self.explicit is not None:
            return CoordSet.from_pattern_set(cm.complement(self.explicit))
        units = [ir.UnitRefs(u.label, u.refs) for u in self.space.units]
        return CoordSet(self.space, ir.negate(self.formula, units), None)

    def singleton_members(self, cap: int = SINGLETON_BUDGET) -> list:
        """Members whose every unit support is a singleton (the chi-carrying
        strata)."""
        total = 1
        for u in self.space.units:
            total *= u.arity
        if total > cap:
            raise OracleBudgetError(
                f"singleton enumeration {total} exceeds cap {cap}")
        sings = [()]
        for u in self.space.units:
            sings = [s + (1 << c,) for s in sings for c in range(u.arity)]
        if not self.space.units:
            sings = [()]
        cols = np.array(list(zip(*sings)), dtype=np.uint64) if self.space.units \
            else np.empty((0, len(sings)), dtype=np.uint64)
        keep = self.eval_batch(cols)
        return [s for s, k in zip(sings, keep) if k]


# ---------------------------------------------------------------------------
# Signed-cube DNF and maximal supports for formula-backed sets
# ---------------------------------------------------------------------------


def _max_supports_from_formula(f: ir.QFFormula, space: cm.PatternSpace,
                               cap: int) -> list:
    """Maximal support patterns of R(f) without enumerating R(f).

    Rewrite f into a union of signed cubes (P = must-vanish mask, N =
    must-not-vanish mask per unit); every pattern of the cube lies below
    comp(P), and comp(P) itself is in the cube (P and N are disjoint), so
    the maximal supports of R(f) are exactly the antichain of the
    comp(P)'s over cubes with comp(P) nonempty in every unit.  This is
    valid for arbitrary coordinate formulas, closed or not.
    """
    locator = cm._locator(space)
    sizes = space.sizes
    zeros = (0,) * len(sizes)

    def absorb(terms: list) -> list:
        kept = []
        for t in sorted(set(terms),
                        key=lambda t: sum(bin(m).count("1") for m in t[0] + t[1])):
            tp, tn = t
            if not any(all(kp & p == kp and kn & n == kn
                           for kp, p, kn, n in zip(k[0], tp, k[1], tn))
                       for k in kept):
                kept.append(t)
        return kept

    def go(node) -> list:
        if isinstance(node, ir.TrueF):
            return [(zeros, zeros)]
        if isinstance(node, ir.FalseF):
            return []
        if isinstance(node, ir.CoordAtom):
            u, c = locator(node.ref)
            mask = tuple(1 << c if i == u else 0 for i in range(len(sizes)))
            return [(zeros, mask)] if node.neq else [(mask, zeros)]
        if isinstance(node, ir.Or):
            out = []
            for child in node.children:
                out.extend(go(child))
                if len(out) > cap:
                    raise OracleBudgetError("DNF term budget exceeded")
            return absorb(out)
        if isinstance(node, ir.And):
            terms = [(zeros, zeros)]
            for child in node.children:
                nxt = []
                for p1, n1 in terms:
                    for p2, n2 in go(child):
                        p = tuple(a | b for a, b in zip(p1, p2))
                        n = tuple(a | b for a, b in zip(n1, n2))
                        if any(a & b for a, b in zip(p, n)):
                            continue
                        nxt.append((p, n))
                if len(nxt) > cap:
                    raise OracleBudgetError("DNF term budget exceeded")
                terms = absorb(nxt)
            return terms
        raise FragmentError(f"non-coordinate atom {node!r}")

    supports = []
    full = tuple((1 << n) - 1 for n in sizes)
    for p, _n in go(f):
        comp = tuple(fm & ~pm for fm, pm in zip(full, p))
        if all(comp):
            supports.append(comp)
    return cm.antichain(supports)


# ---------------------------------------------------------------------------
# Exact integer rank
# ---------------------------------------------------------------------------


def matrix_rank_exact(rows: Iterable[dict]) -> int:
    """Rank over Q of a sparse integer matrix (rows as {col: value}) by
    fraction-free echelon elimination with gcd normalization.

    Each pivot row is stored under its minimal column and never modified
    afterwards, so eliminating the minimal column of an incoming row only
    introduces strictly larger columns and the reduction terminates.
    """
    pivots = {}  # min column -> row dict whose minimal column is that column
    for row in rows:
        row = {c: v for c, v in row.items() if v}
        while row:
            col = min(row)
            piv = pivots.get(col)
            if piv is None:
                g = 0
                for v in row.values():
                    g = _gcd(g, v)
                if g > 1:
                    row = {c: v // g for c, v in row.items()}
                pivots[col] = row
                break
            a, b = piv[col], row[col]
            new = {c: a * v for c, v in row.items()}
            for c, v in piv.items():
                new[c] = new.get(c, 0) - b * v
            row = {c: v for c, v in new.items() if v}
            g = 0
            for v in row.values():
                g = _gcd(g, v)
            if g > 1:
                row = {c: v // g for c, v in row.items()}
    return len(pivots)


def _gcd(a: int, b: int) -> int:
    a, b = abs(a), abs(b)
    while b:
        a, b = b, a % b
    return a


# two fixed large primes for the Monte Carlo rank; a wrong answer requires
# BOTH to divide the same nonzero product of invariant factors
_RANK_PRIMES = (2147483629, 2147483587)
_EXACT_RANK_NNZ = 20_000


def matrix_rank_mod(rows: Iterable[dict], prime: int) -> int:
    """Rank over GF(prime) of a sparse integer matrix (rows as {col: value}).

    Always a lower bound for the rank over Q, with equality unless prime
    divides a nonzero invariant factor of the matrix.  Same elimination
    order as matrix_rank_exact, but entries stay machine-sized.
    """
    pivots = {}  # min column -> row normalized to pivot value 1
    for row in rows:
        row = {c: v % prime for c, v in row.items() if v % prime}
        while row:
            col = min(row)
            piv = pivots.get(col)
            if piv is None:
                inv = pow(row[col], prime - 2, prime)
                pivots[col] = {c: (v * inv) % prime for c, v in row.items()}
                break
            b = row[col]
            new = dict(row)
            for c, v in piv.items():
                w = (new.get(c, 0) - b * v) % prime
                if w:
                    new[c] = w
                else:
                    new.pop(c, None)
            row = new
    return len(pivots)


def _rank_sparse(rows: list) -> int:
    """Rank over Q of a sparse integer matrix.

    Small matrices go through the fraction-free exact elimination; larger
    ones (where coefficient growth dominates) use two independent large
    primes and fall back to the exact path if the modular ranks disagree.
    """
    if sum(len(r) for r in rows) <= _EXACT_RANK_NNZ:
        return matrix_rank_exact(rows)
    ncols = 1 + max(max(r) for r in rows if r)
    r1 = _kernels.rank_mod(rows, ncols, _RANK_PRIMES[0])
    r2 = _kernels.rank_mod(rows, ncols, _RANK_PRIMES[1])
    if r1 != r2:
        return matrix_rank_exact(rows)
    return r1


# ---------------------------------------------------------------------------
# Nerve face enumeration and per-multidegree sheets
# ---------------------------------------------------------------------------


def enumerate_nerve_faces(msup: Sequence[tuple], max_size: int,
                          budget: int = FACE_BUDGET) -> list:
    """All nerve faces up to max_size vertices: subsets of the maximal
    supports with nonempty componentwise intersection, together with that
    intersection.  Returns [(verts tuple, meet tuple)]."""
    n = len(msup)
    faces = []

    def dfs(start: int, verts: tuple, meet: tuple):
        for v in range(start, n):
            new_meet = tuple(a & b for a, b in zip(meet, msup[v]))
            if not all(new_meet):
                continue
            face = verts + (v,)
            faces.append((face, new_meet))
            if len(faces) > budget:
                raise OracleBudgetError(
                    f"nerve face budget {budget} exceeded")
            if len(face) < max_size:
                dfs(v + 1, face, new_meet)

    full = tuple(-1 for _ in (msup[0] if msup else ()))
    if msup:
        dfs(0, (), full)
    return faces


def _sheet_cohomology(faces_by_size: dict, p_max: int) -> list:
    """h^p for 0 <= p <= p_max of the cochain complex of a simplicial
    complex given by faces grouped by vertex count."""
    index = {}
    for size, fl in faces_by_size.items():
        index[size] = {f: i for i, (f, _) in enumerate(fl)}
    ranks = {}
    for p in range(0, p_max + 1):
        rows = []
        for f, _ in faces_by_size.get(p + 2, []):
            row = {}
            sign = 1
            for j in range(len(f)):
                sub = f[:j] + f[j + 1:]
                row[index[p + 1][sub]] = sign
                sign = -sign
            rows.append(row)
        ranks[p] = matrix_rank_exact(rows) if rows else 0
    out = []
    for p in range(0, p_max + 1):
        dim_cp = len(faces_by_size.get(p + 1, []))
        h = dim_cp - ranks.get(p, 0) - (ranks.get(p - 1, 0) if p else 0)
        out.append(h)
    return out


def split_independent_units(msup: Sequence[tuple]) -> list:
    """Partition the unit indices into groups over which the support set is
    a product: msup == prod of its per-group projections.  Returns a list
    of (unit index tuple, projected supports) pairs.

    A one-unit group {i} splits off when |proj_i| * |proj_rest| == |msup|
    (equality forces msup to be the full product since it is contained in
    it).  Each split is sound individually, so greedy repetition yields a
    valid (not necessarily finest) factorization."""
    units = list(range(len(msup[0]) if msup else 0))
    cur = [tuple(m) for m in msup]
    out = []
    changed = True
    while changed and len(units) > 1:
        changed = False
        for pos, u in enumerate(units):
            proj_u = {m[pos] for m in cur}
            rest = {m[:pos] + m[pos + 1:] for m in cur}
            if len(proj_u) * len(rest) == len(cur):
                out.append(((u,), sorted((m,) for m in proj_u)))
                units.pop(pos)
                cur = sorted(rest)
                changed = True
                break
    out.append((tuple(units), cur))
    return out


def _betti_one_group(msup: Sequence[tuple], arities: Sequence[int],
                     max_degree: Optional[int],
                     budget: int = FACE_BUDGET) -> list:
    """Betti numbers of the union of maximal multi-subspaces over one
    (non-factorable) unit group, by the sheeted nerve method."""
    if not msup:
        return []
    k_total = sum(a - 1 for a in arities)
    d_full = 2 * k_total
    d_max = d_full if max_degree is None else min(max_degree, d_full)
    faces = enumerate_nerve_faces(msup, d_max + 2, budget)
    # available multidegrees are bounded by the largest vertex supports
    unit_caps = [max(bin(m[i]).count("1") for m in msup) - 1
                 for i in range(len(arities))]
    b = [0] * (d_max + 1)
    for d in _multidegrees(unit_caps, d_max // 2):
        need = tuple(di + 1 for di in d)
        sub = {}
        for f, meet in faces:
            if all(bin(m).count("1") >= ni for m, ni in zip(meet, need)):
                sub.setdefault(len(f), []).append((f, meet))
        if 1 not in sub:
            continue
        p_max = d_max - 2 * sum(d)
        hs = _sheet_h(sub, p_max, need)
        for p, h in enumerate(hs):
            if h:
                b[2 * sum(d) + p] += h
    while b and b[-1] == 0 and max_degree is None:
        b.pop()
    return b


def _sheet_h(sub: dict, p_max: int, need: tuple) -> list:
    """h^p of one sheet subcomplex, with the full-simplex shortcut: if the
    meet of ALL sheet vertices still dominates the multidegree, every
    vertex subset is a face and the complex is contractible."""
    verts = sub.get(1, [])
    total = verts[0][1]
    for _, meet in verts[1:]:
        total = tuple(a & b for a, b in zip(total, meet))
    if all(bin(m).count("1") >= ni for m, ni in zip(total, need)):
        return [1] + [0] * p_max
    return _sheet_cohomology(sub, p_max)


def _betti_from_max_supports(msup: Sequence[tuple], arities: Sequence[int],
                             max_degree: Optional[int],
                             budget: int = FACE_BUDGET) -> list:
    """Betti numbers b_0..b_D of the union of the maximal multi-subspaces.

    The set is first factored across independent unit groups; each factor's
    FULL table is computed by the nerve method and the tables are combined
    by the Kunneth product (exact over Q), truncating at the end."""
    if not msup:
        return []
    k_total = sum(a - 1 for a in arities)
    d_full = 2 * k_total
    d_max = d_full if max_degree is None else min(max_degree, d_full)
    p_total = pa.ONE
    for unit_idx, sub_msup in split_independent_units(msup):
        sub_arities = [arities[u] for u in unit_idx]
        sub_b = _betti_one_group(sub_msup, sub_arities, None, budget)
        p_total = pa.mul(p_total, pa.poly(sub_b))
    b = list(pa.trunc(p_total, d_max))
    if max_degree is not None:
        b += [0] * (d_max + 1 - len(b))
    return b


def _multidegrees(caps: Sequence[int], total_cap: int) -> Iterable[tuple]:
    def rec(i, left):
        if i == len(caps):
            yield ()
            return
        for di in range(0, min(caps[i], left) + 1):
            for rest in rec(i + 1, left - di):
                yield (di,) + rest

    yield from rec(0, total_cap)


def _multidegrees_at_least(caps: Sequence[int], floor_sum: int) -> Iterable[tuple]:
    """Multidegrees d <= caps with sum(d) >= floor_sum, pruned by the
    remaining capacity of the suffix."""
    suffix = [0] * (len(caps) + 1)
    for i in range(len(caps) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + caps[i]

    def rec(i, still_needed):
        if i == len(caps):
            yield ()
            return
        lo = max(0, still_needed - suffix[i + 1])
        for di in range(lo, caps[i] + 1):
            for rest in rec(i + 1, still_needed - di):
                yield (di,) + rest

    yield from rec(0, floor_sum)


# ---------------------------------------------------------------------------
# BettiTable and the public oracle operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BettiTable:
    b: tuple  # b[i] = i-th Betti number
    ambient_dims: tuple  # complex dimensions of the ambient factors
    max_degree: Optional[int] = None  # None = full table

    @property
    def truncated(self) -> bool:
        return self.max_degree is not None

    def poincare(self) -> pa.PolyT:
        return pa.poly(self.b)

    def pseudo(self) -> pa.PolyT:
        return pa.pseudo_from_poincare(pa.poly(self.b))

    def pseudo_degree_window(self) -> Optional[int]:
        """Degrees of the pseudo polynomial that are trustworthy: j such
        that both b_{2j} and b_{2j-1} are inside the computed window."""
        if self.max_degree is None:
            return None
        return (self.max_degree - 1) // 2 if self.max_degree >= 1 else None


def _as_coordset(a) -> CoordSet:
    if isinstance(a, CoordSet):
        return a
    if isinstance(a, cm.PatternSet):
        return CoordSet.from_pattern_set(a)
    if isinstance(a, ir.ShapedFormula):
        return CoordSet.from_shaped(a)
    raise FormulaError(f"cannot interpret {type(a).__name__} as a coordinate set")


def betti_closed(a, max_degree: Optional[int] = None, verify: bool = True,
                 assume_closed: bool = False,
                 budget: int = FACE_BUDGET) -> BettiTable:
    """Exact Betti table of a closed coordinate set (explicit PatternSet,
    quantifier-free ShapedFormula, or CoordSet).

    In verification mode every full table is cross-checked against the
    stratified Euler characteristic; a mismatch raises OracleError.
    """
    cs = _as_coordset(a)
    if cs.explicit is not None and not assume_closed:
        if not cm.is_closed(cs.explicit):
            raise TopologyError("betti_closed requires a closed set")
    if max_degree is not None and max_degree >= 2 * sum(cs.ambient_dims):
        max_degree = None  # the window covers everything: a full table
    msup = cs.max_supports()
    b = _betti_from_max_supports(msup, [u.arity for u in cs.space.units],
                                 max_degree, budget)
    table = BettiTable(tuple(b), cs.ambient_dims, max_degree)
    if verify and max_degree is None:
        chk = euler_check_table(cs, table)
        if not chk.ok:
            raise OracleError(
                f"euler cross-check failed: P(-1)={chk.from_poincare} "
                f"but {chk.from_strata} singleton strata")
    return table


def poincare_closed(a, **kw) -> pa.PolyT:
    return betti_closed(a, **kw).poincare()


def pseudo_closed(a, **kw) -> pa.PolyT:
    return betti_closed(a, **kw).pseudo()


def pseudo_open(a, verify: bool = True, budget: int = FACE_BUDGET) -> pa.PolyT:
    """Pseudo-Poincare polynomial of an OPEN coordinate set, valued by the
    duality corollary from its closed complement (a definition-by-duality:
    Q_A = Q_ambient - Rec_k(Q_complement))."""
    cs = _as_coordset(a)
    if cs.explicit is not None and \
            not cm.is_closed(cm.complement(cs.explicit)):
        raise TopologyError("pseudo_open requires an open set")
    comp = cs.complement()
    q_comp = betti_closed(comp, verify=verify, assume_closed=True,
                          budget=budget).pseudo()
    k = sum(cs.ambient_dims)
    if pa.degree(q_comp) > k:
        raise OracleError("complement pseudo degree exceeds ambient dimension")
    return pa.duality_pseudo(q_comp, cs.ambient_dims, k)


@dataclass(frozen=True)
class EulerCheck:
    ok: bool
    from_poincare: int
    from_strata: int


def euler_check_table(a, table: BettiTable) -> EulerCheck:
    """chi from the Betti table vs. the stratification count: every torus
    stratum (C*)^m has chi = 0 except the m = 0 strata, which are exactly
    the members with all-singleton supports."""
    cs = _as_coordset(a)
    chi_p = pa.eval_at(table.poincare(), -1)
    chi_s = len(cs.singleton_members())
    return EulerCheck(chi_p == chi_s, chi_p, chi_s)


def euler_check(a, max_degree: Optional[int] = None) -> EulerCheck:
    cs = _as_coordset(a)
    table = betti_closed(cs, max_degree=max_degree, verify=False)
    return euler_check_table(cs, table)


# ---------------------------------------------------------------------------
# Fast b_0 paths (used by the decision procedure, which only ever needs the
# constant coefficient of Q for top-level sentences)
# ---------------------------------------------------------------------------


def b0_closed(a, cap: int = SINGLETON_BUDGET) -> int:
    """Number of connected components of a closed coordinate set.

    Two members of A lie in the same component iff they are linked through
    singleton-support members: every pattern deforms within A onto its
    singletons, and singletons s, s' bound a common irreducible stratum
    exactly when their componentwise union is still in A.  So b_0 is the
    number of components of the graph on singleton members with edges
    (s, s') whenever union(s, s') in A."""
    cs = _as_coordset(a)
    sings = cs.singleton_members(cap)
    if not sings:
        return 0
    n = len(sings)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if pairs:
        arr = np.array(
            [[si | sj for u, (si, sj) in enumerate(zip(sings[i], sings[j]))]
             for i, j in pairs], dtype=np.uint64).T
        if arr.size == 0:
            arr = np.empty((len(cs.space.units), len(pairs)), dtype=np.uint64)
        keep = cs.eval_batch(arr)
        for (i, j), k in zip(pairs, keep):
            if k:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    return len({find(i) for i in range(n)})


def b0_open(a) -> int:
    """b_0 of an open coordinate set: an open set is a complement of a
    proper closed subvariety in the irreducible ambient product, hence
    connected whenever non-empty; and it is non-empty iff the full-support
    pattern satisfies it (the complement is closed, so missing the full
    pattern means missing everything)."""
    cs = _as_coordset(a)
    if not cs.space.units:
        return 1 if cs.contains(()) else 0
    return 1 if cs.contains(cs.space.full_pattern()) else 0


# ---------------------------------------------------------------------------
# Degree-windowed pseudo-Poincare values (what the decision procedure asks)
# ---------------------------------------------------------------------------


def _covectors(arities: Sequence[int], total_cap: int):
    """Codimension vectors c with 0 <= c_i <= arity_i - 1 and sum <= cap."""
    def gen(i: int, left: int, prefix: tuple):
        if i == len(arities):
            yield prefix
            return
        for ci in range(min(left, arities[i] - 1) + 1):
            yield from gen(i + 1, left - ci, prefix + (ci,))

    yield from gen(0, total_cap, ())


def _direct_h(cos: Sequence[tuple], caps: Sequence[int], p_lo: int,
              p_hi: int, budget: int) -> dict:
    """{p: h^p} for p in [p_lo, p_hi] of the sheet nerve whose vertices
    carry the given co-masks: a vertex set is a face iff the union of its
    co-masks stays within caps per unit.  Only faces of p_hi + 2 or fewer
    vertices are enumerated (that bounds every rank the window touches),
    and faces smaller than p_lo vertices are never kept."""
    n = len(cos)
    keep_min = max(1, p_lo)
    keep_max = p_hi + 2
    faces: dict = {}
    count = 0

    def dfs(start: int, face: tuple, co: tuple):
        nonlocal count
        for v in range(start, n):
            new_co = tuple(a | b for a, b in zip(co, cos[v]))
            if any(bin(x).count("1") > cap for x, cap in zip(new_co, caps)):
                continue
            cur = face + (v,)
            count += 1
            if count > budget:
                raise OracleBudgetError(
                    f"sheet face budget {budget} exceeded")
            if len(cur) >= keep_min:
                faces.setdefault(len(cur), []).append(cur)
            if len(cur) < keep_max:
                dfs(v + 1, cur, new_co)

    dfs(0, (), tuple(0 for _ in caps))
    index = {s: {f: i for i, f in enumerate(fs)} for s, fs in faces.items()}
    ranks = {}
    for p in range(max(0, p_lo - 1), p_hi + 1):
        rows = []
        for f in faces.get(p + 2, []):
            row = {}
            sign = 1
            for j in range(len(f)):
                sub = f[:j] + f[j + 1:]
                if len(sub) >= keep_min:
                    row[index[p + 1][sub]] = sign
                sign = -sign
            rows.append(row)
        ranks[p] = matrix_rank_exact(rows) if rows else 0
    out = {}
    for p in range(p_lo, p_hi + 1):
        dim_cp = len(faces.get(p + 1, []))
        out[p] = dim_cp - ranks.get(p, 0) - (ranks.get(p - 1, 0) if p else 0)
    return out


def _sheet_dim_bound(cos: Sequence[tuple], caps: Sequence[int]) -> int:
    """h^p = 0 above sum(caps) - min |co|: the sheet nerve is homotopy
    equivalent to the order complex of its intersection poset (meets of
    pieces correspond to unions of co-masks), whose chains strictly grow
    their co-mask from at least the smallest piece co-mask up to the
    budget."""
    minco = min(sum(bin(m).count("1") for m in v) for v in cos)
    return sum(caps) - minco


def _h_poly(cos: Sequence[tuple], caps: Sequence[int], budget: int) -> list:
    """Full unreduced Betti list of the sheet nerve on co-masks cos with
    per-unit budgets caps, decomposing exactly where possible:

    * a vertex with an all-zero co-mask cones the complex (contractible);
    * vertices whose co-masks touch disjoint unit groups span the JOIN of
      the per-group complexes (reduced Kunneth with a degree shift);
    * a vertex set that is a product across unit groups gives the
      categorical product complex, whose realization has the homotopy type
      of the product (its projection has convex point fibers), so Betti
      numbers multiply.
    """
    if any(not any(v) for v in cos):
        return [1]
    active = [i for i, c in enumerate(caps) if c]
    cos = [tuple(v[i] for i in active) for v in cos]
    caps = [caps[i] for i in active]
    if not caps:
        return [1] if cos else []
    nu = len(caps)
    # unit-coupling components
    parent = list(range(nu))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for v in cos:
        touched = [i for i in range(nu) if v[i]]
        for i in touched[1:]:
            parent[find(i)] = find(touched[0])
    groups: dict = {}
    for i in range(nu):
        groups.setdefault(find(i), []).append(i)
    comps = [g for g in groups.values()
             if any(any(v[i] for i in g) for v in cos)]
    if len(comps) > 1:
        # join across groups: reduced Betti polynomials multiply with a
        # one-degree shift per extra factor
        red = pa.ONE
        for g in comps:
            sub = [v for v in cos if any(v[i] for i in g)]
            gcos = [tuple(v[i] for i in g) for v in sub]
            b = _h_poly(gcos, [caps[i] for i in g], budget)
            if not b:
                return []
            red = pa.mul(red, pa.sub(pa.poly(b), pa.ONE))
        joined = [0] * (len(comps) - 1) + list(red)
        unred = list(pa.add(pa.poly(tuple(joined)), pa.ONE))
        return unred
    # single group: try a product factorization of the vertex co-tuples
    if nu > 1 and len(cos) > 1:
        for pos in range(nu):
            proj = {v[pos] for v in cos}
            rest = {v[:pos] + v[pos + 1:] for v in cos}
            if len(proj) > 1 and len(rest) > 1 \
                    and len(proj) * len(rest) == len(cos):
                b1 = _h_poly([(m,) for m in sorted(proj)], [caps[pos]], budget)
                rcaps = caps[:pos] + caps[pos + 1:]
                b2 = _h_poly(sorted(rest), rcaps, budget)
                return list(pa.mul(pa.poly(b1), pa.poly(b2)))
    p_hi = _sheet_dim_bound(cos, caps)
    hs = _direct_h(cos, caps, 0, p_hi, budget)
    out = [hs.get(p, 0) for p in range(p_hi + 1)]
    while out and out[-1] == 0:
        out.pop()
    return out


def _sheet_h_window(cos: Sequence[tuple], caps: Sequence[int], p_lo: int,
                    p_hi: int, budget: int) -> dict:
    """{p: h^p} on [p_lo, p_hi] of the sheet nerve, via an exact join or
    product decomposition when one applies (computing the small factors in
    full), falling back to windowed direct enumeration."""
    if any(not any(v) for v in cos):
        return {p: (1 if p == 0 else 0) for p in range(p_lo, p_hi + 1)}
    active = [i for i, c in enumerate(caps) if c]
    rcos = [tuple(v[i] for i in active) for v in cos]
    rcaps = [caps[i] for i in active]
    decomposable = False
    nu = len(rcaps)
    if nu > 1 and len(rcos) > 1:
        touched_sets = [frozenset(i for i in range(nu) if v[i]) for v in rcos]
        all_units = set().union(*touched_sets) if touched_sets else set()
        # more than one coupling component?
        seen = set()
        stack = [next(iter(all_units))] if all_units else []
        while stack:
            i = stack.pop()
            if i in seen:
                continue
            seen.add(i)
            for t in touched_sets:
                if i in t:
                    stack.extend(t - seen)
        if all_units - seen:
            decomposable = True
        else:
            for pos in range(nu):
                proj = {v[pos] for v in rcos}
                rest = {v[:pos] + v[pos + 1:] for v in rcos}
                if len(proj) > 1 and len(rest) > 1 \
                        and len(proj) * len(rest) == len(rcos):
                    decomposable = True
                    break
    if decomposable:
        b = _h_poly(rcos, rcaps, budget)
        return {p: (b[p] if p < len(b) else 0) for p in range(p_lo, p_hi + 1)}
    return _direct_h(rcos, rcaps, p_lo, p_hi, budget)


def betti_top_window(cs: CoordSet, floor_degree: int,
                     budget: int = FACE_BUDGET) -> dict:
    """{n: b_n} of a closed set for every n >= floor_degree.

    Works sheet by sheet in CODIMENSION coordinates.  Each multidegree
    sheet's nerve is homotopy equivalent to the order complex of the
    meet-closure of its dominating pieces (nerve vs intersection poset),
    and a chain there gains at least one coordinate per step, so
    h^p(N_{>=d}) = 0 for p > |c| where c_i = (arity_i - 1) - d_i.  A sheet
    reaches degree 2|d| + p >= floor only when |c| <= 2K - floor, which
    keeps the computation confined to low-codimension pieces."""
    msup = cs.max_supports()
    if not msup:
        return {}
    arities = [u.arity for u in cs.space.units]
    k_total = sum(a - 1 for a in arities)
    co_cap = 2 * k_total - floor_degree
    if co_cap < 0:
        return {}
    out: dict = {}
    for c in _covectors(arities, co_cap):
        need = tuple(a - ci for a, ci in zip(arities, c))
        sheet_deg = 2 * sum(a - 1 - ci for a, ci in zip(arities, c))

        def dominates(x: tuple) -> bool:
            return all(bin(m).count("1") >= ni for m, ni in zip(x, need))

        verts = [m for m in msup if dominates(m)]
        if not verts:
            continue
        # every chain in the sheet's intersection poset strictly grows its
        # co-mask, starting no smaller than the least piece codimension and
        # ending within the sheet budget |c|, so its length is at most
        # |c| - minco + 1 and h^p vanishes above that
        co_total = sum(c)
        minco = min(sum(a - bin(m[i]).count("1") for i, a in enumerate(arities))
                    for m in verts)
        p_min = max(0, floor_degree - sheet_deg)
        p_max = co_total - minco
        if p_min > p_max:
            continue
        full = [(1 << a) - 1 for a in arities]
        cos = [tuple(fu & ~m for fu, m in zip(full, v)) for v in verts]
        hs = _sheet_h_window(cos, c, p_min, p_max, budget)
        for p, h in hs.items():
            n = sheet_deg + p
            if h and n >= floor_degree:
                out[n] = out.get(n, 0) + h
    return out


def _betti_group_low_window(msup: Sequence[tuple], arities: Sequence[int],
                            max_degree: int, budget: int) -> list:
    """b_0..b_{max_degree} of the union over one non-factorable unit group,
    sheet by sheet: only multidegrees with 2|d| <= max_degree contribute,
    and each sheet is asked for h^p on p <= max_degree - 2|d| only (with
    the intersection-poset chain bound as a second cap)."""
    full = [(1 << a) - 1 for a in arities]
    out = [0] * (max_degree + 1)
    for d in _multidegrees([a - 1 for a in arities], max_degree // 2):
        need = tuple(di + 1 for di in d)
        verts = [m for m in msup
                 if all(bin(mi).count("1") >= ni for mi, ni in zip(m, need))]
        if not verts:
            continue
        sheet_deg = 2 * sum(d)
        caps = tuple(a - 1 - di for a, di in zip(arities, d))
        cos = [tuple(fu & ~m for fu, m in zip(full, v)) for v in verts]
        minco = min(sum(bin(x).count("1") for x in co) for co in cos)
        p_max = min(max_degree - sheet_deg, sum(caps) - minco)
        if p_max < 0:
            continue
        union = [0] * len(caps)
        for co in cos:
            union = [u | x for u, x in zip(union, co)]
        if all(bin(u).count("1") <= cap for u, cap in zip(union, caps)):
            # the whole vertex set is a face: the sheet nerve is a simplex
            out[sheet_deg] += 1
            continue
        hs = _sheet_h_window(cos, caps, 0, p_max, budget)
        for p, h in hs.items():
            if h:
                out[sheet_deg + p] += h
    return out


def betti_low_window(a, max_degree: int, budget: int = FACE_BUDGET) -> dict:
    """{n: b_n} of a closed set for every n <= max_degree, the low-degree
    companion of betti_top_window: independent unit groups factor by the
    Kunneth product (exact on the window, since degrees only add), and each
    factor is computed sheet by sheet without building full tables."""
    cs = _as_coordset(a)
    msup = cs.max_supports()
    if not msup:
        return {}
    arities = [u.arity for u in cs.space.units]
    if max_degree >= 2 * sum(a_ - 1 for a_ in arities):
        b = _betti_from_max_supports(msup, arities, None, budget)
        return {n: bn for n, bn in enumerate(b) if bn}
    p_total = pa.ONE
    for unit_idx, sub_msup in split_independent_units(msup):
        sub_ar = [arities[u] for u in unit_idx]
        sub_b = _betti_group_low_window(sub_msup, sub_ar, max_degree, budget)
        p_total = pa.trunc(pa.mul(p_total, pa.poly(sub_b)), max_degree)
    return {n: c for n, c in enumerate(p_total) if c}


def pseudo_window(a, topology: str, need: int,
                  budget: int = FACE_BUDGET) -> pa.PolyT:
    """Pseudo-Poincare polynomial, exact on degrees <= need (coefficients
    above the window are zeroed).  topology is "closed" or "open" and must
    correctly describe the set; for need = 0 this reduces to the fast
    connected-component counts."""
    cs = _as_coordset(a)
    if topology == "closed":
        if need == 0:
            return pa.poly((b0_closed(cs),))
        low = betti_low_window(cs, 2 * need, budget)
        return pa.poly([low.get(2 * j, 0) - low.get(2 * j - 1, 0)
                        for j in range(need + 1)])
    if topology != "open":
        raise TopologyError(f"bad topology {topology!r}")
    if need == 0:
        return pa.poly((b0_open(cs),))
    k = sum(cs.ambient_dims)
    comp = cs.complement()
    # only the top window [k-need .. k] of Q_complement survives Rec_k
    # into degrees <= need of Q (the unknown lower part lands above the
    # window and is truncated away)
    top = betti_top_window(comp, max(0, 2 * (k - need) - 1), budget)
    if any(n > 2 * k for n in top):
        raise OracleError("complement Betti degree exceeds ambient dimension")
    q_comp_top = [0] * (k + 1)
    for j in range(max(0, k - need), k + 1):
        q_comp_top[j] = top.get(2 * j, 0) - top.get(2 * j - 1, 0)
    _, q_amb = pa.projective_product_polys(cs.ambient_dims)
    return pa.trunc(pa.sub(q_amb, pa.rec(pa.poly(q_comp_top), k)), need)


# ---------------------------------------------------------------------------
# Arbitrary constructible sets: the strata-colimit model
# ---------------------------------------------------------------------------
#
# A coordinate constructible set S is the disjoint union of its pattern
# strata; the stratum of pattern t is the compact torus T_t = prod_u
# T^{t_u}/S^1 (one diagonal circle per unit), and S deformation-collapses
# onto the homotopy colimit of the diagram t |-> T_t over the pattern poset
# of S, with the coordinate-forgetting projections T_t -> T_{t'} (t' <= t)
# as structure maps: the exit neighborhood of a deeper stratum retracts
# radially (coordinate-wise |z| scaling) onto it, which is exactly the
# colimit gluing.  The simplicial replacement of that colimit gives a chain
# model whose n-chains are strictly decreasing flags t_0 > t_1 > ... > t_n
# of patterns of S with coefficients in H_*(T_{t_0}) = Lambda(V_{t_0}),
# V_t = (+)_u Q^{t_u}/diagonal; the boundary drops flag entries with
# alternating signs, applying Lambda of the projection when the top entry
# is dropped.  The exterior degree ell is preserved, so homology is
# computed one ell at a time by exact integer rank.
#
# This model needs no closedness hypothesis at all; on closed sets it is
# cross-checked against the nerve oracle above, and on every set against
# Euler-characteristic additivity (chi = number of all-singleton patterns).


def _product_split(members: list, n_units: int) -> list:
    """Partition [0..n_units) into groups such that the member set is the
    product of its projections onto the groups (greedy single-unit splits)."""
    groups = []
    remaining = list(range(n_units))
    changed = True
    while changed and len(remaining) > 1:
        changed = False
        for u in list(remaining):
            rest = [v for v in remaining if v != u]
            pu = {m[u] for m in members}
            prest = {tuple(m[v] for v in rest) for m in members}
            if len(pu) * len(prest) == len({tuple(m[v] for v in remaining)
                                            for m in members}):
                groups.append([u])
                remaining = rest
                members = members  # projections recomputed per iteration
                changed = True
                break
    groups.append(remaining)
    return [g for g in groups if g]


def _pattern_leq(a: tuple, b: tuple) -> bool:
    return all((x & y) == x for x, y in zip(a, b))


def _slots_of(t: tuple) -> tuple:
    """Basis slots of V_t: per unit, the support bits above the anchor
    (lowest set bit); returns a tuple of (unit, coord) pairs."""
    out = []
    for u, mask in enumerate(t):
        anchor = mask & -mask
        rest = mask & ~anchor
        c = 0
        while rest:
            if rest & 1:
                out.append((u, c))
            rest >>= 1
            c += 1
    return tuple(out)


def _proj_matrix(t0: tuple, t1: tuple) -> list:
    """Columns of the induced map V_{t0} -> V_{t1} in slot bases.  The slot
    (u, c) stands for the class [e_c] in Q^{supp}/diagonal; {[e_c]: c above
    the anchor} is an integral basis, with coordinate extraction
    x_d([r]) = r_d - r_anchor, and the quotient maps are functorial."""
    cols = []
    index1 = {s: i for i, s in enumerate(_slots_of(t1))}
    for (u, c) in _slots_of(t0):
        s1 = t1[u]
        col = {}
        if s1 >> c & 1:
            a1_bit = (s1 & -s1).bit_length() - 1
            if c == a1_bit:
                # [e_anchor] = -sum of the basis classes of that unit
                for (uu, d), i in index1.items():
                    if uu == u:
                        col[i] = -1
            else:
                col[index1[(u, c)]] = 1
        cols.append(col)
    return cols


def _wedge_image(cols: list, n_target: int, subset: tuple) -> dict:
    """Image of the basis wedge e_{subset} under the exterior power of the
    map with the given sparse columns: {target subset: determinant}."""
    from itertools import combinations

    ell = len(subset)
    if ell == 0:
        return {(): 1}
    sel = [cols[j] for j in subset]
    support = sorted({i for col in sel for i in col})
    if len(support) < ell:
        return {}
    out = {}
    for tgt in combinations(support, ell):
        mat = [[col.get(i, 0) for i in tgt] for col in sel]
        det = _det_int(mat)
        if det:
            out[tgt] = det
    return out


def _det_int(mat: list) -> int:
    """Exact determinant of a small integer matrix (fraction-free)."""
    n = len(mat)
    if n == 1:
        return mat[0][0]
    if n == 2:
        return mat[0][0] * mat[1][1] - mat[0][1] * mat[1][0]
    m = [row[:] for row in mat]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            for i in range(k + 1, n):
                if m[i][k]:
                    m[k], m[i] = m[i], m[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[k][k] * m[i][j] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def _flags_of_poset(members: list, budget: int) -> list:
    """All strictly decreasing chains (as tuples of member indices), the
    n-simplices of the order complex."""
    n = len(members)
    below = [[j for j in range(n) if j != i
              and _pattern_leq(members[j], members[i])] for i in range(n)]
    flags = []
    stack = [(i,) for i in range(n)]
    while stack:
        flag = stack.pop()
        flags.append(flag)
        if len(flags) > budget:
            raise OracleBudgetError(
                f"constructible flag complex exceeds budget {budget}")
        for j in below[flag[-1]]:
            stack.append(flag + (j,))
    return flags


def betti_constructible(a, budget: int = FACE_BUDGET) -> list:
    """Exact rational Betti numbers of an arbitrary coordinate constructible
    set (no closedness assumption), via the strata-colimit chain model.
    Independent units factor through the Kunneth product first."""
    from itertools import combinations

    if isinstance(a, CoordSet):
        a = a.explicit if a.explicit is not None else a.patterns()
    members = sorted(a.members) if hasattr(a, "members") else sorted(a)
    if not members:
        return []
    n_units = len(members[0])
    groups = _product_split(members, n_units) if n_units > 1 else [[0]]
    if len(groups) > 1:
        poly = pa.ONE
        for g in groups:
            sub = sorted({tuple(m[u] for u in g) for m in members})
            poly = pa.mul(poly, pa.poly(_betti_one_factor(sub, budget)))
        return list(poly)
    return _betti_one_factor(members, budget)


def _betti_one_factor(members: list, budget: int) -> list:
    from itertools import combinations

    flags = _flags_of_poset(members, budget)
    slots = {i: _slots_of(t) for i, t in enumerate(members)}
    dims = {i: len(s) for i, s in slots.items()}
    max_ell = max(dims.values())
    max_n = max(len(f) for f in flags) - 1
    proj_cache = {}
    wedge_cache = {}

    def proj(i0: int, i1: int) -> list:
        key = (i0, i1)
        if key not in proj_cache:
            proj_cache[key] = _proj_matrix(members[i0], members[i1])
        return proj_cache[key]

    def wedge(i0: int, i1: int, subset: tuple) -> dict:
        key = (i0, i1, subset)
        if key not in wedge_cache:
            wedge_cache[key] = _wedge_image(
                proj(i0, i1), dims[i1], subset)
        return wedge_cache[key]

    flags_by_len = {}
    for f in flags:
        flags_by_len.setdefault(len(f) - 1, []).append(f)

    betti = [0] * (max_n + max_ell + 2)
    for ell in range(max_ell + 1):
        # basis of C_n at exterior degree ell: (flag, subset of slots(t_0))
        basis = {}
        index = {}
        for n, fl in flags_by_len.items():
            bn = []
            for f in fl:
                d = dims[f[0]]
                if d < ell:
                    continue
                for sub in combinations(range(d), ell):
                    index[(f, sub)] = len(bn)
                    bn.append((f, sub))
            basis[n] = bn
        ranks = {}
        for n in range(1, max_n + 1):
            rows = []
            for (f, sub) in basis.get(n, ()):
                row = {}

                def add(key, val):
                    if key in index:
                        col = index[key]
                        # columns are numbered within their own chain degree;
                        # boundary targets live in degree n-1 only
                        row[col] = row.get(col, 0) + val

                # drop t_0: apply the projection to the coefficient
                img = wedge(f[0], f[1], sub)
                for tgt, det in img.items():
                    add((f[1:], tgt), det)
                # drop t_i, i >= 1
                sign = -1
                for i in range(1, len(f)):
                    g = f[:i] + f[i + 1:]
                    add((g, sub), sign)
                    sign = -sign
                if row:
                    rows.append(row)
            ranks[n] = _rank_sparse(rows) if rows else 0
        for n in range(0, max_n + 1):
            dim_n = len(basis.get(n, ()))
            b = dim_n - ranks.get(n, 0) - ranks.get(n + 1, 0)
            betti[n + ell] += b
    while betti and betti[-1] == 0:
        betti.pop()
    return betti


def pseudo_constructible(a, budget: int = FACE_BUDGET) -> pa.PolyT:
    """Pseudo-Poincare polynomial of an arbitrary constructible set from
    its full honest Betti table."""
    b = betti_constructible(a, budget)
    top = (len(b) + 1) // 2
    return pa.poly([(b[2 * j] if 2 * j < len(b) else 0)
                    - (b[2 * j - 1] if 0 <= 2 * j - 1 < len(b) else 0)
                    for j in range(top + 1)])


# ---------------------------------------------------------------------------
# Punctured products: join decomposition and the Gysin sphere fast path
# ---------------------------------------------------------------------------
#
# The complement of a join-structure base is typically a punctured product:
# its affine cone is a product of per-copy affine cones C_u, so the cone
# minus the origin is (prod_u C_u) \ 0, which deformation-retracts onto the
# join of the links of the factors.  When every factor link is a rational
# homology sphere of odd dimension d_u, the join is a rational
# S^{sum d_u + (#factors - 1)}; the projective set is the quotient of that
# sphere by the free scalar circle, and the Gysin sequence forces its
# rational cohomology to be that of P^{D-1} (D = half of sphere dim + 1/2):
# Q = 1 + T + ... + T^{D-1} exactly.  The factor links are tiny affine
# pattern sets valued honestly by the same colimit engine with full-torus
# coefficients (no diagonal quotient, since nothing is projectivized).


def _punctured_split(members: list, nbits: int) -> list:
    """Partition the coordinate bits into groups such that the affine cone
    of the member set (members plus the origin) is the product of its
    per-group projections.  Starts from the pairwise-marginal partition and
    merges until the product identity holds exactly (size certificate);
    returns a single group when no factorization exists."""
    s0 = set(members) | {0}
    bits = [b for b in range(nbits) if any(m >> b & 1 for m in members)]
    if len(bits) <= 1:
        return [bits]

    def gmask(g):
        m = 0
        for b in g:
            m |= 1 << b
        return m

    def independent(g, h):
        mg, mh = gmask(g), gmask(h)
        joint = {m & (mg | mh) for m in s0}
        return len(joint) == len({m & mg for m in s0}) * len(
            {m & mh for m in s0})

    groups = [[b] for b in bits]
    i = 0
    while i < len(groups):
        j = i + 1
        while j < len(groups):
            if not independent(groups[i], groups[j]):
                groups[i] = groups[i] + groups.pop(j)
                j = i + 1
            else:
                j += 1
        i += 1
    while len(groups) > 1:
        size = 1
        for g in groups:
            size *= len({m & gmask(g) for m in s0})
        if size == len(s0):
            return groups
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if not independent(groups[i], groups[j]):
                    groups[i] = groups[i] + groups.pop(j)
                    merged = True
                    break
            if merged:
                break
        if not merged:
            groups = [sorted({b for g in groups for b in g})]
    return groups


_AFFINE_CACHE: dict = {}


def betti_affine(members: Sequence[int], budget: int = FACE_BUDGET) -> list:
    """Exact rational Betti numbers of a punctured affine pattern cone: the
    union of the orbit strata (C*)^{supp t} x {0}^rest over the given
    nonzero support masks, with the origin removed.  Same strata-colimit
    model as the projective engine, but the stratum of t collapses onto the
    full compact torus T^{|t|} (no diagonal circle is quotiented away), so
    the coefficient system is Lambda(Z^{supp t}) with coordinate-drop
    projections, all of which act on basis wedges by 0 or +1."""
    from itertools import combinations

    key = tuple(sorted(members))
    hit = _AFFINE_CACHE.get(key)
    if hit is not None:
        return hit
    members = sorted(members)
    if not members:
        return []
    wrapped = [(m,) for m in members]
    flags = _flags_of_poset(wrapped, budget)
    bits = {i: tuple(c for c in range(m.bit_length()) if m >> c & 1)
            for i, m in enumerate(members)}
    max_ell = max(len(b) for b in bits.values())
    max_n = max(len(f) for f in flags) - 1
    flags_by_len = {}
    for f in flags:
        flags_by_len.setdefault(len(f) - 1, []).append(f)
    betti = [0] * (max_n + max_ell + 2)
    for ell in range(max_ell + 1):
        basis = {}
        index = {}
        for n, fl in flags_by_len.items():
            bn = []
            for f in fl:
                for sub in combinations(bits[f[0]], ell):
                    index[(f, sub)] = len(bn)
                    bn.append((f, sub))
            basis[n] = bn
        ranks = {}
        for n in range(1, max_n + 1):
            rows = []
            for (f, sub) in basis.get(n, ()):
                row = {}
                # drop t_0: the coordinate-drop projection keeps the wedge
                # verbatim when all its bits survive, else kills it
                m1 = members[f[1]]
                if all(m1 >> c & 1 for c in sub):
                    col = index[(f[1:], sub)]
                    row[col] = row.get(col, 0) + 1
                sign = -1
                for i in range(1, len(f)):
                    g = f[:i] + f[i + 1:]
                    col = index[(g, sub)]
                    row[col] = row.get(col, 0) + sign
                    sign = -sign
                if row:
                    rows.append(row)
            ranks[n] = _rank_sparse(rows) if rows else 0
        for n in range(0, max_n + 1):
            dim_n = len(basis.get(n, ()))
            betti[n + ell] += dim_n - ranks.get(n, 0) - ranks.get(n + 1, 0)
    while betti and betti[-1] == 0:
        betti.pop()
    _AFFINE_CACHE[key] = betti
    return betti


def _sphere_link_dim(b: list) -> Optional[int]:
    """If the Betti table is that of a rational homology sphere S^d with
    d odd (connected, reduced homology a single class in odd top degree),
    return d; else None."""
    if not b or b[0] != 1:
        return None
    d = len(b) - 1
    if d == 0 or d % 2 == 0 or b[d] != 1:
        return None
    if any(b[j] for j in range(1, d)):
        return None
    return d


def join_product_value(a: cm.PatternSet,
                       budget: int = FACE_BUDGET) -> Optional[pa.PolyT]:
    """Exact pseudo-Poincare polynomial of a single-unit set whose affine
    cone factors as a product of at least two smaller cones, each with a
    rational-homology-sphere link; returns None when the structure is
    absent (the caller falls back to the general engine)."""
    if len(a.space.sizes) != 1 or not a.members:
        return None
    nbits = a.space.sizes[0]
    members = [m[0] for m in a.members]
    groups = _punctured_split(members, nbits)
    if len(groups) < 2:
        return None
    total, nfac = 0, 0
    for g in groups:
        gm = 0
        for bbit in g:
            gm |= 1 << bbit
        fac = sorted({m & gm for m in members} - {0})
        if not fac:
            continue
        # compress the factor onto its own bit positions
        pos = {bbit: i for i, bbit in enumerate(sorted(g))}
        local = []
        for m in fac:
            lm = 0
            for bbit in g:
                if m >> bbit & 1:
                    lm |= 1 << pos[bbit]
            local.append(lm)
        d = _sphere_link_dim(betti_affine(local, budget))
        if d is None:
            return None
        total += d
        nfac += 1
    if nfac < 2:
        return None
    dim = total + (nfac - 1)
    if dim % 2 == 0:
        return None
    return pa.poly([1] * ((dim + 1) // 2))


_PSEUDO_CACHE: dict = {}


def pseudo_exact(a, budget: int = FACE_BUDGET) -> pa.PolyT:
    """Full pseudo-Poincare polynomial of an enumerable constructible set
    of arbitrary topology.

    Closed and open sets go through the nerve fast paths.  A set that is
    neither is valued by the strata-colimit engine on whichever of the set
    or its complement has the smaller pattern poset, transported through
    the ambient duality identity Q_S = Q_amb - Rec_k(Q_{S^c}); results are
    cached by pattern content, so repeated bases across a corpus cost one
    computation."""
    if isinstance(a, CoordSet):
        a = a.explicit if a.explicit is not None \
            else cm.patterns_of(a.formula, a.space)
    key = (a.space.sizes, a.members)
    hit = _PSEUDO_CACHE.get(key)
    if hit is not None:
        return hit
    topology = cm.classify_topology(a)
    k = sum(n - 1 for n in a.space.sizes)
    if topology == cm.CLOSED:
        q = pseudo_closed(a, budget=budget)
    elif topology == cm.OPEN:
        q = pseudo_open(a, budget=budget)
    else:
        comp = cm.complement(a)
        if len(comp.members) < len(a.members):
            q_comp = join_product_value(comp, budget)
            if q_comp is None:
                q_comp = pa.trunc(pseudo_constructible(comp, budget), k)
            _, q_amb = pa.projective_product_polys(
                [n - 1 for n in a.space.sizes])
            q = pa.sub(q_amb, pa.rec(pa.trunc(q_comp, k), k))
        else:
            q = join_product_value(a, budget)
            if q is None:
                q = pseudo_constructible(a, budget)
    q = pa.trunc(q, k)
    _PSEUDO_CACHE[key] = q
    return q


# ---------------------------------------------------------------------------
# Structural valuation of join formulas
# ---------------------------------------------------------------------------


def _eliminate_current_member(core: ir.QFFormula, name: str,
                              arity: int) -> ir.QFFormula:
    """EXISTS over the named unit's current member as a projective point:
    the disjunction of the core over all nonempty support patterns of the
    member (exact in pattern semantics)."""
    return ir.f_or([
        ir._instantiate_pattern(core, name,
                                frozenset(c for c in range(arity)
                                          if (s >> c) & 1))
        for s in range(1, 1 << arity)
    ])


def peel_last_family(theta: ir.ShapedFormula) -> tuple:
    """Split a join formula Theta at its innermost stage.

    Theta's realization is the generalized fibered join J of a set A living
    over the base B' spanned by the remaining groups: the innermost (AND, p+1)
    stage glues p+1 copies of the innermost family's member per group.
    Returns (B, N, M, p) where B is the quantifier-free ShapedFormula whose
    realization is the projection pr(A) of A to the base, N the number of
    joined groups and M their projective dimension.
    """
    if theta.quantifiers or not theta.shape:
        raise FragmentError("peel_last_family requires a quantifier-free "
                            "formula with at least one shape stage")
    depth = len(theta.shape) - 1
    fam = next((f for f in theta.families if f.depth == depth), None)
    if fam is None:
        raise FragmentError("innermost shape stage carries no family")
    op, arity = theta.shape[-1]
    if op != ir.AND_OP:
        raise FragmentError("innermost shape stage is not a join (AND) stage")
    for atom in ir.iter_atoms(theta.core):
        if isinstance(atom, ir.CoordAtom) and atom.ref.owner == fam.name \
                and atom.ref.member is not None:
            raise FragmentError(
                "core references a sibling member of the innermost "
                "family; cannot peel")
    core = _eliminate_current_member(theta.core, fam.name, fam.member_arity)
    base = ir.ShapedFormula(
        theta.free_blocks, theta.shape[:-1],
        tuple(f for f in theta.families if f.name != fam.name),
        (), core, ir.UNVERIFIED)
    return base, fam.group_count, fam.group_arity - 1, arity - 1


def _value_flat(cs: CoordSet, topology_hint: str, need: int,
                budget: int) -> pa.PolyT:
    """Q mod T^{need+1} of a stage-free set, honestly.

    When the realization is enumerable the topology is classified from the
    patterns and any constructible set is valued exactly (pseudo_exact);
    the hint is ignored.  Beyond the enumeration cap the windowed nerve
    machinery is used and the hint must be correct (it comes from the
    compiler's core parity, which is only trustworthy for stage-free
    realizations, exactly this case)."""
    if cs.explicit is not None:
        pats = cs.explicit
    else:
        try:
            pats = cm.patterns_of(cs.formula, cs.space)
        except OracleBudgetError:
            return pseudo_window(cs, topology_hint, need, budget)
    return pa.trunc(pseudo_exact(pats, budget), need)


def value_join_formula(theta: ir.ShapedFormula, matrix_topology: str,
                       need: Optional[int] = None,
                       budget: int = FACE_BUDGET) -> pa.PolyT:
    """Q_{R(Theta)} mod T^{need+1} for the compiler's join formulas.

    The innermost (AND, p+1) stage is peeled: on degrees q < p the joined
    set is indistinguishable from B x (P^M)^N over its base B = pr(A), so

        Q_Theta = Q_B * (1 + T + ... + T^M)^N   mod T^{need+1},

    valid whenever 2*need < p, which the compiler's choice p = 2m+1 with
    need <= m always satisfies; the connectivity argument is topology-free,
    so no assumption on the core is needed.  The base (and any remaining
    outer stages it carries) is then valued honestly: bases of compiled
    multi-quantifier formulas are generally NEITHER open nor closed (the
    eliminated stage contributes partial cone points), so the base is
    enumerated, classified, and valued by topology-appropriate machinery
    (pseudo_exact).  matrix_topology, the parity of the compiled core, is
    used only as a fallback hint for non-enumerable stage-free sets.
    """
    if theta.quantifiers:
        raise FragmentError("value_join_formula requires a quantifier-free "
                            "formula")
    if not ir.is_coordinate_fragment(theta.core):
        raise FragmentError("value_join_formula handles only the "
                            "coordinate fragment")
    if need is None:
        cs = CoordSet.from_shaped(theta)
        need = sum(cs.ambient_dims)
    if not theta.shape:
        return _value_flat(CoordSet.from_shaped(theta), matrix_topology,
                           need, budget)
    try:
        base, n_groups, m_dim, p = peel_last_family(theta)
    except FragmentError:
        base = None
    if base is None or 2 * need >= p:
        # no peelable stage, or the window reaches join degrees: the only
        # honest route is valuing the realization in place
        return _value_flat(CoordSet.from_shaped(theta), matrix_topology,
                           need, budget)
    if base.shape:
        q_base = value_join_formula(base, matrix_topology, need, budget)
    else:
        q_base = _value_flat(CoordSet.from_shaped(base), matrix_topology,
                             need, budget)
    factor = pa.poly([1] * (min(need, m_dim) + 1))
    q = q_base
    for _ in range(n_groups):
        q = pa.trunc(pa.mul(q, factor), need)
    return q


# ---------------------------------------------------------------------------
# Link complexes (Hopf preimages)
# ---------------------------------------------------------------------------

# faces of the triangle-boundary triangulation of the circle, as bitmasks
# over its 3 vertices: 3 vertices and 3 edges (never the full triangle)
_CIRCLE_FACES = [(0b001, 1), (0b010, 1), (0b100, 1),
                 (0b011, 2), (0b110, 2), (0b101, 2)]


def link_faces(a: cm.PatternSet, max_vertices: Optional[int] = None,
               budget: int = FACE_BUDGET) -> dict:
    """Faces of the LinkComplex of a single-block closed set, grouped by
    vertex count.  Vertices: 3 per coordinate (circle i on vertices
    3i..3i+2); faces: unions over a support s in Delta of one nonempty
    circle face per coordinate of s."""
    if len(a.space.units) != 1:
        raise FragmentError("link_betti requires a single-block set")
    n = a.space.units[0].arity
    cap = max_vertices if max_vertices is not None else 2 * n
    out = {}
    count = 0
    for (supp,) in a.members:
        coords = [c for c in range(n) if (supp >> c) & 1]
        if len(coords) > cap:
            continue

        def rec(i, verts, size):
            nonlocal count
            if i == len(coords):
                out.setdefault(size, set()).add(verts)
                count += 1
                if count > budget:
                    raise OracleBudgetError("link face budget exceeded")
                return
            left = len(coords) - i - 1
            for mask, msize in _CIRCLE_FACES:
                if size + msize + left <= cap:
                    rec(i + 1, verts | (mask << (3 * coords[i])), size + msize)

        rec(0, 0, 0)
    return {size: sorted(faces) for size, faces in out.items()}


def link_betti(a: cm.PatternSet, max_degree: Optional[int] = None,
               verify: bool = True, budget: int = FACE_BUDGET) -> BettiTable:
    """Simplicial homology (over Q) of the link -- the Hopf preimage of a
    single-block closed set in the unit sphere.  When the table is full,
    chi(link) = 0 is asserted for non-empty sets (an odd-dimensional
    circle bundle)."""
    if not cm.is_closed(a):
        raise TopologyError("link_betti requires a closed set")
    n = a.space.units[0].arity if a.space.units else 0
    full_dim = 2 * n - 1  # top possible simplex dimension
    d_max = full_dim if max_degree is None else min(max_degree, full_dim)
    faces = link_faces(a, d_max + 2, budget)
    # boundary ranks: del_i : C_i -> C_{i-1} on faces by vertex count i+1
    index = {size: {f: i for i, f in enumerate(fl)} for size, fl in faces.items()}
    ranks = {}
    for i in range(1, d_max + 2):
        rows = []
        for f in faces.get(i + 1, []):
            bits = [b for b in range(f.bit_length()) if (f >> b) & 1]
            row = {}
            sign = 1
            for j in range(len(bits)):
                sub = f & ~(1 << bits[j])
                row[index[i][sub]] = sign
                sign = -sign
            rows.append(row)
        ranks[i] = matrix_rank_exact(rows) if rows else 0
    b = []
    for i in range(0, d_max + 1):
        dim_ci = len(faces.get(i + 1, []))
        h = dim_ci - ranks.get(i, 0) - ranks.get(i + 1, 0)
        b.append(h)
    while b and b[-1] == 0 and max_degree is None:
        b.pop()
    table = BettiTable(tuple(b), (n - 1,), max_degree)
    if verify and max_degree is None and not a.is_empty:
        chi = pa.eval_at(table.poincare(), -1)
        if chi != 0:
            raise OracleError(f"link euler check failed: chi = {chi}")
    return table


# ---------------------------------------------------------------------------
# Oracle request/response documents
# ---------------------------------------------------------------------------


def answer_request(doc: dict) -> dict:
    """Serve one oracle request.

    Request: {"patterns": <pattern-set doc>} or {"formula": <formula doc>},
    "ambient": [arities] (checked against the set), "want": subset of
    ["betti", "poincare", "pseudo"], optional "topology": "closed"|"open"
    (default closed), optional "max_degree".  Response: the requested
    values plus {"checks": {...}}.
    """
    want = doc.get("want", ["betti", "poincare", "pseudo"])
    topology = doc.get("topology", "closed")
    max_degree = doc.get("max_degree")
    if "patterns" in doc:
        cs = CoordSet.from_pattern_set(cm.pattern_set_from_doc(doc["patterns"]))
    elif "formula" in doc:
        f = ir.parse_formula(doc["formula"])
        if f.quantifiers:
            raise FormulaError("oracle requests must be quantifier-free")
        if f.shape:
            # a join formula: realize through the structural valuation (its
            # realization is generally neither open nor closed, so the flat
            # closed/open paths below would not be sound for it)
            need = max_degree // 2 if max_degree is not None else None
            q = value_join_formula(f, topology, need)
            resp = {"pseudo": [str(c) for c in q], "checks": {}}
            if max_degree is not None:
                resp["truncated_at"] = max_degree
            return resp
        cs = CoordSet.from_shaped(f)
    else:
        raise FormulaError('oracle request needs "patterns" or "formula"')
    ambient = doc.get("ambient")
    if ambient is not None and list(ambient) != [u.arity for u in cs.space.units]:
        raise FormulaError("ambient mismatch with the supplied set")
    resp: dict = {"checks": {}}
    if topology == "open":
        q = pseudo_open(cs)
        resp["pseudo"] = [str(c) for c in q]
        resp["checks"]["duality"] = True
        chk = euler_check_table(
            cs.complement(), betti_closed(cs.complement(), verify=False,
                                          assume_closed=True))
        resp["checks"]["euler"] = chk.ok
        return resp
    table = betti_closed(cs, max_degree=max_degree, verify=False)
    if max_degree is None:
        chk = euler_check_table(cs, table)
        resp["checks"]["euler"] = chk.ok
        if not chk.ok:
            raise OracleError("euler cross-check failed")
    else:
        resp["truncated_at"] = max_degree
    if "betti" in want:
        resp["betti"] = list(table.b)
    if "poincare" in want:
        resp["poincare"] = [str(c) for c in table.poincare()]
    if "pseudo" in want:
        resp["pseudo"] = [str(c) for c in table.pseudo()]
    return resp

"""Corpus generation and the end-to-end verification harness.

Two corpora drive the reduction soundness checks:

* the exhaustive small corpus: every coordinate instance with at most two
  quantified blocks, block arities at most 2, and cores built from
  single-coordinate vanishing atoms by AND/OR nodes of fan-in at most 2 and
  nesting depth at most 2, over all quantifier prefixes, with zero or one
  free block.  Cores are deduplicated by their pattern semantics (two cores
  realizing the same set of satisfying support-pattern tuples are the same
  instance for every check below), which keeps the corpus exact while
  pruning the syntactic blow-up;

* seeded random larger instances: same shape of construction but with more
  atoms, fan-in up to 4, depth up to 3, free arity up to 3 and inner
  quantified arity up to 3.  The outermost quantified block keeps arity
  at most 2, which bounds the base ambient the valuation has to sweep.

Every instance is verified end to end: compiled, its Theta bookkeeping
checked against the closed-form trace prediction, its verdict compared
with the brute-force pattern-semantics decision (sentences), and the
headline identity Q_{R(f(x;.))} = F(Q_{R(Theta(x;.))}) checked exactly at
every free instantiation (free instances).  Failures carry a shrunken
counterexample document.
"""

from __future__ import annotations

import itertools
import random
from typing import Callable, Iterable, Iterator, Optional

from . import coordinate_model as cm, formula_ir as ir
from . import poincare_algebra as pa, reduction_compiler as rc

SCHEMA = "projqe-corpus-report/1"

FREE_NAME = "X"
QUANT_NAMES = ("Y", "Z", "W")


# ---------------------------------------------------------------------------
# Core enumeration with semantic deduplication
# ---------------------------------------------------------------------------


def _vanish_atoms(blocks: Iterable[ir.Block]) -> list:
    return [ir.CoordAtom(ir.VarRef(b.name, None, c))
            for b in blocks for c in range(b.arity)]


def _eval_core(f: ir.QFFormula, assign: dict) -> bool:
    """Pattern semantics: assign maps block name -> support mask."""
    if isinstance(f, ir.CoordAtom):
        vanishes = not (assign[f.ref.owner] >> f.ref.coord) & 1
        return vanishes != f.neq
    if isinstance(f, ir.And):
        return all(_eval_core(c, assign) for c in f.children)
    if isinstance(f, ir.Or):
        return any(_eval_core(c, assign) for c in f.children)
    if isinstance(f, ir.TrueF):
        return True
    if isinstance(f, ir.FalseF):
        return False
    raise ir.FormulaError(f"cannot evaluate {type(f).__name__} on patterns")


def _pattern_tuples(blocks) -> list:
    """All support assignments: one nonzero mask per block."""
    axes = [range(1, 1 << b.arity) for b in blocks]
    return [dict(zip([b.name for b in blocks], combo))
            for combo in itertools.product(*axes)]


def _semantic_key(core: ir.QFFormula, tuples: list) -> tuple:
    return tuple(_eval_core(core, t) for t in tuples)


def core_pool(blocks, depth: int = 2, fanin: int = 2) -> list:
    """All cores over the blocks' vanishing atoms with the given AND/OR
    fan-in and nesting depth, one representative per pattern-semantic
    class (first in construction order, so representatives are minimal)."""
    tuples = _pattern_tuples(blocks)
    seen = {}

    def keep(core):
        key = _semantic_key(core, tuples)
        if key not in seen:
            seen[key] = core

    keep(ir.TRUE)
    keep(ir.FALSE)
    level = list(_vanish_atoms(blocks))
    for a in level:
        keep(a)
    pool = list(level)
    for _ in range(depth):
        new = []
        for i, a in enumerate(pool):
            for b in pool[i:]:
                for op in (ir.f_and, ir.f_or):
                    for children in _fanins((a, b), fanin):
                        new.append(op(children))
        for core in new:
            keep(core)
        pool = pool + new
        # beyond semantic saturation further levels only re-derive classes;
        # trim the pool to representatives to keep the growth polynomial
        pool = list(dict.fromkeys(
            seen[_semantic_key(c, tuples)] for c in pool))
    return list(seen.values())


def _fanins(pair: tuple, fanin: int) -> list:
    return [pair] if fanin >= 2 else []


# ---------------------------------------------------------------------------
# The exhaustive small corpus
# ---------------------------------------------------------------------------


def exhaustive_corpus(max_omega: int = 2, max_arity: int = 2,
                      depth: int = 2, fanin: int = 2) -> Iterator[ir.ShapedFormula]:
    """Deterministic enumeration of the exhaustive corpus instances."""
    arities = range(1, max_arity + 1)
    for free_ar in (None, *arities):
        free = (() if free_ar is None
                else (ir.Block(FREE_NAME, free_ar),))
        for omega in range(1, max_omega + 1):
            for q_ars in itertools.product(arities, repeat=omega):
                quant_blocks = tuple(ir.Block(QUANT_NAMES[i], a)
                                     for i, a in enumerate(q_ars))
                cores = core_pool(free + quant_blocks, depth, fanin)
                for prefix in itertools.product((ir.FORALL, ir.EXISTS),
                                                repeat=omega):
                    quants = tuple(zip(prefix, quant_blocks))
                    for core in cores:
                        yield ir.ShapedFormula(free, (), (), quants, core,
                                               ir.CLOSED)


# ---------------------------------------------------------------------------
# Seeded random larger instances
# ---------------------------------------------------------------------------


def _random_core(rng: random.Random, atoms: list, depth: int,
                 fanin: int) -> ir.QFFormula:
    if depth == 0 or rng.random() < 0.3:
        return rng.choice(atoms)
    k = rng.randint(2, fanin)
    op = ir.f_and if rng.random() < 0.5 else ir.f_or
    return op([_random_core(rng, atoms, depth - 1, fanin)
               for _ in range(k)])


def random_instance(rng: random.Random) -> ir.ShapedFormula:
    omega = rng.choice((1, 1, 2, 2, 2))
    has_free = rng.random() < 0.4
    free = ((ir.Block(FREE_NAME, rng.randint(1, 3)),) if has_free else ())
    q_ars = [rng.randint(1, 2)]  # outermost block stays small
    for _ in range(omega - 1):
        q_ars.append(rng.randint(1, 3))
    quant_blocks = tuple(ir.Block(QUANT_NAMES[i], a)
                         for i, a in enumerate(q_ars))
    prefix = tuple(rng.choice((ir.FORALL, ir.EXISTS)) for _ in range(omega))
    atoms = _vanish_atoms(free + quant_blocks)
    core = _random_core(rng, atoms, depth=rng.randint(2, 3),
                        fanin=rng.randint(2, 4))
    return ir.ShapedFormula(free, (), (), tuple(zip(prefix, quant_blocks)),
                            core, ir.CLOSED)


def random_corpus(seed: int, count: int) -> Iterator[ir.ShapedFormula]:
    rng = random.Random(seed)
    for _ in range(count):
        yield random_instance(rng)


# ---------------------------------------------------------------------------
# Per-instance verification
# ---------------------------------------------------------------------------


def _instantiate_all(f: ir.ShapedFormula, assign: dict) -> ir.ShapedFormula:
    g = f
    for name, mask in assign.items():
        supp = {c for c in range(64) if (mask >> c) & 1}
        g = ir.instantiate(g, name, supp)
    return g


def _mask_assignments(blocks) -> list:
    return _pattern_tuples(blocks)


def check_instance(f: ir.ShapedFormula,
                   oracle: Optional[Callable] = None) -> dict:
    """Verify one corpus instance end to end; returns a report dict with
    ok/failures and, for sentences, the verdict pair."""
    report = {"ok": True, "failures": []}

    def fail(kind, **extra):
        report["ok"] = False
        report["failures"].append({"kind": kind, **extra})

    out = rc.compile(f)
    predicted = rc.predict_theta_sizes(f, out.trace)
    actual = rc.theta_sizes(out.theta)
    if predicted != actual:
        fail("bookkeeping", predicted=predicted, actual=actual)
    if len(out.trace) != len(f.quantifiers):
        fail("trace-length", trace=len(out.trace),
             omega=len(f.quantifiers))
    if not f.free_blocks:
        got = rc.verdict(out, oracle)
        want = cm.decide_sentence_bruteforce(f)
        report["verdict"] = got
        report["bruteforce"] = want
        if got != want:
            fail("verdict", got=got, want=want)
        return report
    fibers = 0
    for assign in _mask_assignments(f.free_blocks):
        sentence = _instantiate_all(f, assign)
        want = pa.poly([1]) if cm.decide_sentence_bruteforce(sentence) \
            else pa.poly([])
        got = rc.fiber_value(f, {n: {c for c in range(64) if (m >> c) & 1}
                                 for n, m in assign.items()}, oracle)
        fibers += 1
        if got != want:
            fail("fiber-identity", x=assign, got=list(got),
                 want=list(want))
    report["fibers"] = fibers
    if len(f.quantifiers) == 1:
        _check_global_identity(f, out, fail)
    return report


def _check_global_identity(f: ir.ShapedFormula, out, fail: Callable) -> None:
    """The projection-set form of the headline identity, over the free
    blocks as a whole: Q_{R(f)} = F(Q_{R(Theta)}) mod T^{m+1}, m the
    outermost trace dimension.  Theta keeps its free blocks, so its
    realization couples the free unit with the join unit; for one
    quantifier that stays enumerable and the structural valuation is
    exact, which is why the check is restricted to omega = 1."""
    from . import homology_oracle as ho

    m = out.trace[0].m
    need = pa.required_input_degree(out.pipeline, m)
    q_theta = ho.value_join_formula(out.theta, out.parity, need)
    rhs = pa.trunc(pa.pipeline_eval(out.pipeline, q_theta), m)
    lhs = pa.trunc(ho.pseudo_exact(cm.realization_bruteforce(f)), m)
    if lhs != rhs:
        fail("global-identity", lhs=list(lhs), rhs=list(rhs), window=m)


# ---------------------------------------------------------------------------
# Counterexample shrinking
# ---------------------------------------------------------------------------


def _subtree_variants(core: ir.QFFormula) -> Iterator[ir.QFFormula]:
    """Strictly simpler cores: each node replaced by a constant, each
    AND/OR node by one of its children (applied at every position)."""
    if isinstance(core, (ir.And, ir.Or)):
        yield ir.TRUE
        yield ir.FALSE
        for i, child in enumerate(core.children):
            yield child
            rebuild = ir.f_and if isinstance(core, ir.And) else ir.f_or
            for v in _subtree_variants(child):
                yield rebuild(core.children[:i] + (v,)
                              + core.children[i + 1:])
    elif isinstance(core, (ir.CoordAtom, ir.PolyAtom)):
        yield ir.TRUE
        yield ir.FALSE


def shrink_instance(f: ir.ShapedFormula,
                    oracle: Optional[Callable] = None,
                    rounds: int = 32) -> ir.ShapedFormula:
    """Greedy minimization: keep applying the first core simplification
    that still fails verification."""
    current = f
    for _ in range(rounds):
        for variant in _subtree_variants(current.core):
            candidate = ir.ShapedFormula(
                current.free_blocks, current.shape, current.families,
                current.quantifiers, variant, current.closedness)
            try:
                if not check_instance(candidate, oracle)["ok"]:
                    current = candidate
                    break
            except Exception:  # noqa: BLE001 - a crashing shrink is kept out
                continue
        else:
            return current
    return current


# ---------------------------------------------------------------------------
# The corpus runner
# ---------------------------------------------------------------------------


def _check_doc(doc: dict) -> dict:
    f = ir.parse_formula(doc)
    try:
        report = check_instance(f)
    except Exception as exc:  # noqa: BLE001 - harness boundary
        report = {"ok": False,
                  "failures": [{"kind": "error", "error": repr(exc)}]}
    report["formula"] = doc
    return report


def run_corpus(instances: Iterable[ir.ShapedFormula], jobs: int = 1,
               seed: Optional[int] = None,
               shrink: bool = True) -> dict:
    """Verify every instance; returns a deterministic JSON-able summary
    (aggregation is by input order regardless of the worker pool)."""
    docs = [ir.formula_to_doc(f) for f in instances]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_check_doc, docs, chunksize=16))
    else:
        reports = [_check_doc(d) for d in docs]
    failures = []
    for doc, report in zip(docs, reports):
        if report["ok"]:
            continue
        entry = {"formula": doc, "failures": report["failures"]}
        if shrink:
            try:
                entry["minimized"] = ir.formula_to_doc(
                    shrink_instance(ir.parse_formula(doc)))
            except Exception:  # noqa: BLE001 - shrinking is best-effort
                pass
        failures.append(entry)
    summary = {"schema": SCHEMA, "cases": len(docs),
               "failures": len(failures), "failed": failures}
    if seed is not None:
        summary["seed"] = seed
    return summary

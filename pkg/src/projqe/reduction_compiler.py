"""The constructive core: compiling a quantified ShapedFormula into a
quantifier-free join formula Theta and a serializable polynomial map F with

    Q_{R(f)} = pipeline_eval(F, Q_{R(Theta)}),

plus the decision procedures built on top of it ("one call to the oracle at
the end").

The recursion removes one quantifier block per stage.  With m the complex
dimension of the current free ambient (free blocks plus W-group factors),
alpha the number of index tuples of the current shape, and p = 2m+1:

  Case 1 (leading EXISTS):  absorb Z^1 into a new W-family by the
      generalized fibered join at parameter p and recurse;
      F = Trunc_m . M_{(1-T)^alpha} . G.
  Case 2 (leading FORALL):  dualize (negate the core over all homogeneity
      units, flip every lattice op and every remaining quantifier), proceed
      as Case 1 on the dual, and undo the complement on the polynomial
      level:  F = SubFrom(Q_U) . Rec_m . Trunc_m . M_{(1-T)^alpha} . G,
      with Q_U the pseudo-Poincare polynomial of the free ambient U.

p is intentionally re-derived from the *current* stage's m, which counts
free blocks as well as W-groups; the larger join parameter never hurts the
congruence window, and the final truncation at m is exact because the
realization lives in a product of dimension <= m.  The closed/open parity
alternates exactly with the Case-2 stages and is recorded in the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Callable, Optional

from . import coordinate_model as cm, formula_ir as ir, join_engine as je
from . import homology_oracle as ho, poincare_algebra as pa
from .errors import FormulaError, FragmentError, OracleError, TopologyError

CASE_BASE = "Base"
CASE_EXISTS = "Exists"
CASE_FORALL = "Forall"

CLOSEDNESS_CHECK_CAP = 1 << 16


# ---------------------------------------------------------------------------
# Stage parameters and the compiler output
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageParams:
    case: str  # Base | Exists | Forall
    m: int  # complex dimension of the free ambient U at this stage
    alpha: int  # number of index tuples (copies of the pulled-out block)
    p: int  # join parameter, always 2m+1

    def to_doc(self) -> dict:
        return {"case": self.case, "m": self.m, "alpha": self.alpha, "p": self.p}


def stage_from_doc(doc: dict) -> StageParams:
    return StageParams(str(doc["case"]), int(doc["m"]), int(doc["alpha"]),
                       int(doc["p"]))


@dataclass(frozen=True)
class ReductionOutput:
    theta: ir.ShapedFormula  # quantifier-free (omega = 0)
    pipeline: pa.PolyMapPipeline
    trace: tuple  # tuple of StageParams, outermost stage first
    # ir.CLOSED | ir.OPEN: parity of Theta's compiled core (flipped once per
    # Forall stage).  It classifies the matrix-level set only; the
    # realization of Theta itself mixes joined copies with partial cone
    # points and is in general neither open nor closed, so the valuation
    # treats this flag as nothing more than a fallback hint.
    parity: str
    warnings: tuple = field(default=())

    def to_doc(self) -> dict:
        doc = {
            "theta": ir.formula_to_doc(self.theta),
            "pipeline": pa.pipeline_to_doc(self.pipeline),
            "trace": [s.to_doc() for s in self.trace],
            "parity": self.parity,
        }
        if self.warnings:
            doc["warnings"] = list(self.warnings)
        return doc


def reduction_from_doc(doc: dict) -> ReductionOutput:
    return ReductionOutput(
        ir.parse_formula(doc["theta"]),
        pa.pipeline_from_doc(doc["pipeline"]),
        tuple(stage_from_doc(s) for s in doc["trace"]),
        str(doc["parity"]),
        tuple(doc.get("warnings", ())),
    )


# ---------------------------------------------------------------------------
# Stage geometry
# ---------------------------------------------------------------------------


def dim_U(f: ir.ShapedFormula) -> int:
    """Complex dimension of the free ambient U: the product of the free
    blocks and of one projective factor of dimension (a_j+1)(alpha_j+1)-1
    per W-group."""
    m = sum(b.arity - 1 for b in f.free_blocks)
    for fam in f.families:
        m += fam.group_count * (fam.group_arity - 1)
    return m


def _free_ambient_dims(f: ir.ShapedFormula) -> list:
    dims = [b.arity - 1 for b in f.free_blocks]
    for fam in f.families:
        dims.extend([fam.group_arity - 1] * fam.group_count)
    return dims


def _pseudo_of_free_ambient(f: ir.ShapedFormula) -> pa.PolyT:
    _, q = pa.projective_product_polys(_free_ambient_dims(f))
    return q


def _dualize(f: ir.ShapedFormula) -> ir.ShapedFormula:
    """The complement formula: negated core (with the zero-block repair
    terms over every homogeneity unit), all lattice ops flipped, all
    remaining quantifiers flipped, closedness parity flipped."""
    core = ir.negate(f.core, ir.core_units(f))
    shape = tuple((ir.OR_OP if op == ir.AND_OP else ir.AND_OP, ar)
                  for op, ar in f.shape)
    quants = tuple((ir.FORALL if q == ir.EXISTS else ir.EXISTS, b)
                   for q, b in f.quantifiers)
    return ir.ShapedFormula(f.free_blocks, shape, f.families, quants, core,
                            ir._flip_closedness(f.closedness))


# ---------------------------------------------------------------------------
# compile
# ---------------------------------------------------------------------------


def compile(f: ir.ShapedFormula, check: bool = True,
            pattern_cap: int = CLOSEDNESS_CHECK_CAP) -> ReductionOutput:
    """Compile f into (Theta, F) with Q_{R(f)} = F(Q_{R(Theta)}).

    The precondition that the core realizes a closed set is decided exactly
    in the coordinate fragment (when the core-level pattern space fits
    under pattern_cap); outside the fragment the formula's own closedness
    flag is trusted and UNVERIFIED produces a warning.
    """
    warnings = []
    if check:
        warnings = _check_core_closed(f, pattern_cap)
    theta, stages, trace, flips = _compile_rec(f)
    if not stages:
        stages = [pa.Identity()]
    parity = ir.CLOSED if flips % 2 == 0 else ir.OPEN
    return ReductionOutput(theta, pa.PolyMapPipeline(tuple(stages)),
                           tuple(trace), parity, tuple(warnings))


def _check_core_closed(f: ir.ShapedFormula, pattern_cap: int) -> list:
    if ir.is_coordinate_fragment(f.core):
        units = ir.core_units(f)
        total = 1
        for u in units:
            total *= (1 << len(u.refs)) - 1
        if total > pattern_cap:
            return [f"core closedness not checked: {total} patterns exceed cap"]
        space = cm.PatternSpace(tuple(
            cm.Unit(u.label, len(u.refs), tuple(u.refs)) for u in units))
        realized = cm.patterns_of(f.core, space)
        if not cm.is_closed(realized):
            raise TopologyError(
                "the core must realize a closed set (Case analysis "
                "requires the closed/open alternation to start closed)")
        return []
    if f.closedness == ir.CLOSED:
        return []
    if f.closedness == ir.OPEN:
        raise TopologyError("the core must define a closed set")
    return ["core closedness unverified outside the coordinate fragment"]


def _compile_rec(f: ir.ShapedFormula):
    """Returns (theta, stages innermost-first, trace outermost-first,
    number of Case-2 stages)."""
    if not f.quantifiers:
        return f, [], [], 0
    m = dim_U(f)
    alpha = prod(ar for _, ar in f.shape)
    p = 2 * m + 1
    q1 = f.quantifiers[0][0]
    if q1 == ir.EXISTS:
        theta, stages, trace, flips = _compile_rec(
            je.generalized_fibered_join(f, p))
        stages += [pa.MulBy(pa.one_minus_t_power(alpha)), pa.Trunc(m)]
        trace = [StageParams(CASE_EXISTS, m, alpha, p)] + trace
        return theta, stages, trace, flips
    q_u = _pseudo_of_free_ambient(f)
    theta, stages, trace, flips = _compile_rec(
        je.generalized_fibered_join(_dualize(f), p))
    stages += [pa.MulBy(pa.one_minus_t_power(alpha)), pa.Trunc(m),
               pa.Rec(m), pa.SubFrom(q_u)]
    trace = [StageParams(CASE_FORALL, m, alpha, p)] + trace
    return theta, stages, trace, flips + 1


# ---------------------------------------------------------------------------
# Predicted Theta sizes (the polynomial-time bookkeeping check)
# ---------------------------------------------------------------------------


def predict_theta_sizes(f: ir.ShapedFormula, trace) -> dict:
    """Closed-form block/coordinate/atom counts of Theta from the input
    formula and the trace alone: {"units", "coords", "atoms"} of the
    shape-expanded Theta.

    Atom bookkeeping: a Case-2 stage rewrites the core into its negation,
    which maps atoms one-to-one and adds one all-zero conjunction per
    homogeneity unit (so + sum of unit sizes); constant cores follow the
    same rule except that a FALSE core negates to the constant TRUE.
    Expansion multiplies by the number of index tuples.
    """
    shape_arities = [ar for _, ar in f.shape]
    free = [b.arity for b in f.free_blocks]
    fams = [(fam.group_count, fam.group_arity) for fam in f.families]
    quants = [b.arity for _, b in f.quantifiers]
    atoms = ir.atom_count(f.core)
    const = (f.core if isinstance(f.core, (ir.TrueF, ir.FalseF)) else None)
    for stage in trace:
        if stage.case == CASE_FORALL:
            unit_sizes = free + [ga for _, ga in fams] + quants
            if isinstance(const, ir.FalseF):
                atoms, const = 0, ir.TRUE
            else:
                atoms = atoms + sum(unit_sizes)
                const = None if unit_sizes else (
                    ir.FALSE if isinstance(const, ir.TrueF) else const)
        if not quants:
            raise FormulaError("trace longer than the quantifier prefix")
        z_arity = quants.pop(0)
        alpha_now = prod(shape_arities)
        if alpha_now != stage.alpha or stage.p != 2 * stage.m + 1:
            raise FormulaError("trace inconsistent with the formula")
        fams.append((alpha_now, z_arity * (stage.p + 1)))
        shape_arities.append(stage.p + 1)
    return {
        "units": len(free) + sum(gc for gc, _ in fams),
        "coords": sum(free) + sum(gc * ga for gc, ga in fams),
        "atoms": atoms * prod(shape_arities),
    }


def theta_sizes(theta: ir.ShapedFormula) -> dict:
    """Actual unit/coordinate/atom counts of a compiled Theta."""
    units = ir.expanded_units(theta, include_quantified=False)
    return {
        "units": len(units),
        "coords": sum(n for _, _, n in units),
        "atoms": ir.atom_count(ir.shape_expand(theta)),
    }


# ---------------------------------------------------------------------------
# Oracle plumbing and the decision procedures
# ---------------------------------------------------------------------------


def _needed_window(out: ReductionOutput) -> Optional[int]:
    """Input degree window of Q_Theta that the verdict F(Q)(0) consumes."""
    return pa.required_input_degree(out.pipeline, 0)


def _value_theta_internal(out: ReductionOutput, need: Optional[int]) -> pa.PolyT:
    theta = out.theta
    if not ir.is_coordinate_fragment(theta.core):
        raise OracleError(
            "the internal oracle handles only the coordinate fragment; "
            "supply an external oracle")
    topology = "closed" if out.parity == ir.CLOSED else "open"
    return ho.value_join_formula(theta, topology, need)


def _value_theta_external(out: ReductionOutput, oracle: Callable,
                          need: Optional[int]) -> pa.PolyT:
    theta = out.theta
    space = cm.space_of(theta)
    request = {
        "formula": ir.formula_to_doc(theta),
        "ambient": [u.arity for u in space.units],
        "want": ["pseudo"],
        "topology": "closed" if out.parity == ir.CLOSED else "open",
    }
    if need is not None:
        request["max_degree"] = 2 * need + 1
    response = oracle(request)
    if not isinstance(response, dict) or "pseudo" not in response:
        raise OracleError("oracle response lacks a pseudo polynomial")
    q = pa.poly_from_json(response["pseudo"])
    if need is not None:
        q = pa.trunc(q, need)
    return q


def value_theta(out: ReductionOutput, oracle: Optional[Callable] = None) -> pa.PolyT:
    """Q_{R(Theta)} on the degree window the pipeline consumes."""
    need = _needed_window(out)
    if oracle is None:
        q = _value_theta_internal(out, need)
    else:
        q = _value_theta_external(out, oracle, need)
    if pa.coeff(q, 0) < 0:
        raise OracleError(f"oracle returned negative b_0: {pa.coeff(q, 0)}")
    return q


def decide(f: ir.ShapedFormula, oracle: Optional[Callable] = None,
           check: bool = True) -> bool:
    """Truth of a sentence: F(Q_{R(Theta)})(0) > 0, with one oracle call."""
    if f.free_blocks:
        raise FormulaError("decide requires a sentence (no free blocks); "
                           "use membership() to instantiate first")
    out = compile(f, check=check)
    return verdict(out, oracle)


def verdict(out: ReductionOutput, oracle: Optional[Callable] = None) -> bool:
    q = value_theta(out, oracle)
    return pa.eval_at(pa.pipeline_eval(out.pipeline, q), 0) > 0


def gdp_solve(doc, oracle: Optional[Callable] = None) -> dict:
    """Solve a sentence document: always emit the reduction artifact; emit
    the verdict when some oracle (internal fragment or external) applies."""
    f = doc if isinstance(doc, ir.ShapedFormula) else ir.parse_formula(doc)
    out = compile(f)
    result = {"reduction": out.to_doc(), "oracle_required": False}
    if f.free_blocks:
        result["verdict"] = None
        result["oracle_required"] = ir.is_coordinate_fragment(out.theta.core)
        return result
    if oracle is None and not ir.is_coordinate_fragment(out.theta.core):
        result["verdict"] = None
        result["oracle_required"] = True
        return result
    result["verdict"] = verdict(out, oracle)
    return result


def fiber_value(f: ir.ShapedFormula, assignment: dict,
                oracle: Optional[Callable] = None) -> pa.PolyT:
    """F(Q_{R(Theta(x; .))}) for an instantiation x of the free blocks,
    where (Theta(x; .), F) is the compilation of the instantiated formula
    f(x; .).

    The fiberwise form of the headline identity needs the fiber's own
    pipeline: every stage's window parameters (m, p, the SubFrom ambient)
    are dimensions of the current free ambient, which shrinks when x is
    fixed.  The pipeline compiled with the blocks free satisfies the
    identity globally -- Q of the projection SET from Q of Theta as sets
    over x -- and complementing inside the full free ambient is exactly
    what makes it wrong fiberwise (already for `forall Y . TRUE` with one
    free block, the global SubFrom returns the ambient Q on every fiber).

    The result must equal Q_{R(f(x; .))}: the constant polynomial 1 or 0,
    exactly in every degree."""
    g = f
    for name, value in assignment.items():
        g = ir.instantiate(g, name, value)
    if g.free_blocks:
        missing = [b.name for b in g.free_blocks]
        raise FormulaError(f"free blocks not instantiated: {missing}")
    out = compile(g)
    q = value_theta(out, oracle)
    return pa.pipeline_eval(out.pipeline, q)


def membership(f: ir.ShapedFormula, x: dict,
               oracle: Optional[Callable] = None) -> bool:
    """x in R(f)?  x maps every free block name to a projective point
    (sequence of rationals) or, in the fragment, a support pattern."""
    g = f
    for name, value in x.items():
        g = ir.instantiate(g, name, value)
    if g.free_blocks:
        missing = [b.name for b in g.free_blocks]
        raise FormulaError(f"free blocks not instantiated: {missing}")
    return decide(g, oracle)

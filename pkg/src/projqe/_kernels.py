"""Vectorized evaluation of coordinate formulas over batches of patterns.

A coordinate formula is compiled once into a postfix program (int64 rows of
``(op, a, b)``):

    op 0: push test  -- a = unit index, b = coordinate bit; pushes True when
                        the coordinate is OUTSIDE the support (i.e. the
                        var_eq0 atom holds on the stratum)
    op 1: push NOT of test (var_neq0)
    op 2: AND of the top a stack entries
    op 3: OR of the top a stack entries
    op 4: push constant (a = 0/1)

Patterns are given as one uint64 support-bitmask column per unit.  This is
the hot loop of brute-force differential testing (pattern enumeration,
component graphs), so it carries a numba @njit kernel with a pure-numpy
fallback; set PTODA_NO_NUMBA=1 to force the fallback.  ``bench/`` compares
the two paths.
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("PTODA_NO_NUMBA", "") not in ("1", "true", "yes")

OP_TEST = 0
OP_TEST_NEG = 1
OP_AND = 2
OP_OR = 3
OP_CONST = 4


def compile_program(f, locator) -> np.ndarray:
    """Compile a QFFormula with concrete references into a postfix program.

    ``locator(ref) -> (unit_index, coordinate_offset)``.
    """
    from . import formula_ir as ir

    rows = []

    def go(node):
        if isinstance(node, ir.TrueF):
            rows.append((OP_CONST, 1, 0))
        elif isinstance(node, ir.FalseF):
            rows.append((OP_CONST, 0, 0))
        elif isinstance(node, ir.CoordAtom):
            unit, bit = locator(node.ref)
            rows.append((OP_TEST_NEG if node.neq else OP_TEST, unit, bit))
        elif isinstance(node, ir.And):
            for c in node.children:
                go(c)
            rows.append((OP_AND, len(node.children), 0))
        elif isinstance(node, ir.Or):
            for c in node.children:
                go(c)
            rows.append((OP_OR, len(node.children), 0))
        else:
            from .errors import FragmentError

            raise FragmentError(f"non-coordinate atom in program: {node!r}")

    go(f)
    return np.array(rows, dtype=np.int64)


def max_stack_depth(prog: np.ndarray) -> int:
    depth = 0
    peak = 0
    for op, a, _ in prog:
        if op in (OP_TEST, OP_TEST_NEG, OP_CONST):
            depth += 1
        else:
            depth -= a - 1
        peak = max(peak, depth)
    return peak


def _eval_numpy(prog: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """cols: (n_units, n_patterns) uint64; returns bool (n_patterns,)."""
    stack = []
    for op, a, b in prog:
        if op == OP_TEST:
            stack.append((cols[a] >> np.uint64(b)) & np.uint64(1) == 0)
        elif op == OP_TEST_NEG:
            stack.append((cols[a] >> np.uint64(b)) & np.uint64(1) != 0)
        elif op == OP_CONST:
            stack.append(np.full(cols.shape[1], bool(a)))
        elif op == OP_AND:
            acc = stack[-a]
            for k in range(1, a):
                acc = acc & stack[-a + k]
            del stack[-a:]
            stack.append(acc)
        elif op == OP_OR:
            acc = stack[-a]
            for k in range(1, a):
                acc = acc | stack[-a + k]
            del stack[-a:]
            stack.append(acc)
    return stack[-1]


if USE_NUMBA:
    try:
        from numba import njit

        @njit(cache=True)
        def _eval_numba(prog, cols, depth):  # pragma: no cover - jitted
            n = cols.shape[1]
            out = np.empty(n, dtype=np.bool_)
            stack = np.empty(depth, dtype=np.bool_)
            for i in range(n):
                sp = 0
                for r in range(prog.shape[0]):
                    op = prog[r, 0]
                    a = prog[r, 1]
                    b = prog[r, 2]
                    if op == 0:
                        stack[sp] = (cols[a, i] >> np.uint64(b)) & np.uint64(1) == 0
                        sp += 1
                    elif op == 1:
                        stack[sp] = (cols[a, i] >> np.uint64(b)) & np.uint64(1) != 0
                        sp += 1
                    elif op == 4:
                        stack[sp] = a != 0
                        sp += 1
                    elif op == 2:
                        acc = True
                        for k in range(sp - a, sp):
                            acc = acc and stack[k]
                        sp -= a
                        stack[sp] = acc
                        sp += 1
                    else:
                        acc = False
                        for k in range(sp - a, sp):
                            acc = acc or stack[k]
                        sp -= a
                        stack[sp] = acc
                        sp += 1
                out[i] = stack[0]
            return out

    except ImportError:  # pragma: no cover
        USE_NUMBA = False


def eval_program(prog: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Evaluate the program on all pattern columns; dispatches to the numba
    kernel when available (PTODA_NO_NUMBA=1 selects the numpy path)."""
    cols = np.ascontiguousarray(cols, dtype=np.uint64)
    if USE_NUMBA and cols.shape[1] >= 256:
        return _eval_numba(prog, cols, max_stack_depth(prog))
    return _eval_numpy(prog, cols)


def eval_program_single(prog: np.ndarray, masks) -> bool:
    """Evaluate on one pattern (tuple of int masks) without numpy overhead."""
    stack = []
    for op, a, b in prog:
        if op == OP_TEST:
            stack.append((masks[a] >> b) & 1 == 0)
        elif op == OP_TEST_NEG:
            stack.append((masks[a] >> b) & 1 == 1)
        elif op == OP_CONST:
            stack.append(bool(a))
        elif op == OP_AND:
            acc = all(stack[-a:])
            del stack[-a:]
            stack.append(acc)
        else:
            acc = any(stack[-a:])
            del stack[-a:]
            stack.append(acc)
    return bool(stack[-1])


def enumerate_support_columns(sizes, cap: int = 1 << 22) -> np.ndarray:
    """All patterns of a space with the given unit sizes, as a
    (n_units, N) uint64 array; unit 0 varies slowest."""
    from .errors import OracleBudgetError

    total = 1
    for n in sizes:
        total *= (1 << n) - 1
    if total > cap:
        raise OracleBudgetError(
            f"pattern enumeration of {total} patterns exceeds cap {cap}")
    cols = []
    before = 1
    after = total
    for n in sizes:
        m = (1 << n) - 1
        after //= m
        supports = np.arange(1, m + 1, dtype=np.uint64)
        cols.append(np.tile(np.repeat(supports, after), before))
        before *= m
    return np.array(cols, dtype=np.uint64) if cols else \
        np.empty((0, 1), dtype=np.uint64)


# ---------------------------------------------------------------------------
# Sparse rank over GF(prime)
# ---------------------------------------------------------------------------
#
# The strata-colimit homology engine reduces to ranks of large sparse
# integer matrices; over GF(prime) the entries stay machine-sized, so the
# elimination is the second numba hot loop (same PTODA_NO_NUMBA fallback
# contract as the pattern evaluator; the fallback is the dict-based
# elimination in homology_oracle.matrix_rank_mod).


def _rank_mod_python(indptr: np.ndarray, indices: np.ndarray,
                     data: np.ndarray, ncols: int, prime: int) -> int:
    """Reference implementation of the CSR rank kernel."""
    pivots = {}
    for r in range(len(indptr) - 1):
        row = {}
        for k in range(indptr[r], indptr[r + 1]):
            v = int(data[k]) % prime
            if v:
                row[int(indices[k])] = v
        while row:
            col = min(row)
            piv = pivots.get(col)
            if piv is None:
                inv = pow(row[col], prime - 2, prime)
                pivots[col] = {c: (v * inv) % prime for c, v in row.items()}
                break
            b = row.pop(col)
            for c, v in piv.items():
                if c == col:
                    continue
                w = (row.get(c, 0) - b * v) % prime
                if w:
                    row[c] = w
                else:
                    row.pop(c, None)
    return len(pivots)


if USE_NUMBA:
    from numba import njit as _njit

    @_njit(cache=True)
    def _rank_mod_numba(indptr, indices, data, ncols, prime):  # pragma: no cover
        # pivot rows, stored normalized (leading value 1) in a growable pool
        pivot_of = np.full(ncols, -1, dtype=np.int64)
        cap = max(4 * len(indices) + 16, 1024)
        pool_cols = np.empty(cap, dtype=np.int64)
        pool_vals = np.empty(cap, dtype=np.int64)
        pool_top = 0
        npiv_cap = 1024
        pstart = np.empty(npiv_cap, dtype=np.int64)
        plen = np.empty(npiv_cap, dtype=np.int64)
        npiv = 0

        work = np.zeros(ncols, dtype=np.int64)
        heap = np.empty(max(1024, ncols), dtype=np.int64)
        gather = np.empty(ncols, dtype=np.int64)

        for r in range(len(indptr) - 1):
            hn = 0
            for k in range(indptr[r], indptr[r + 1]):
                c = indices[k]
                v = data[k] % prime
                if v == 0:
                    continue
                if work[c] == 0:
                    # heap push
                    if hn == len(heap):
                        heap = np.concatenate((heap, np.empty(len(heap),
                                                              dtype=np.int64)))
                    heap[hn] = c
                    i = hn
                    hn += 1
                    while i > 0:
                        par = (i - 1) >> 1
                        if heap[par] > heap[i]:
                            heap[par], heap[i] = heap[i], heap[par]
                            i = par
                        else:
                            break
                work[c] = (work[c] + v) % prime
            while hn > 0:
                col = heap[0]
                # heap pop
                hn -= 1
                heap[0] = heap[hn]
                i = 0
                while True:
                    l = 2 * i + 1
                    if l >= hn:
                        break
                    m = l
                    if l + 1 < hn and heap[l + 1] < heap[l]:
                        m = l + 1
                    if heap[m] < heap[i]:
                        heap[m], heap[i] = heap[i], heap[m]
                        i = m
                    else:
                        break
                v = work[col]
                if v == 0:
                    continue
                pid = pivot_of[col]
                if pid < 0:
                    # new pivot: drain the remaining support, normalize, store
                    g = 0
                    gather[g] = col
                    g += 1
                    while hn > 0:
                        c2 = heap[0]
                        hn -= 1
                        heap[0] = heap[hn]
                        i = 0
                        while True:
                            l = 2 * i + 1
                            if l >= hn:
                                break
                            m = l
                            if l + 1 < hn and heap[l + 1] < heap[l]:
                                m = l + 1
                            if heap[m] < heap[i]:
                                heap[m], heap[i] = heap[i], heap[m]
                                i = m
                            else:
                                break
                        if work[c2] != 0 and c2 != col:
                            gather[g] = c2
                            g += 1
                    # modular inverse by binary powmod
                    inv = 1
                    base = v % prime
                    e = prime - 2
                    while e > 0:
                        if e & 1:
                            inv = (inv * base) % prime
                        base = (base * base) % prime
                        e >>= 1
                    while pool_top + g > len(pool_cols):
                        pool_cols = np.concatenate(
                            (pool_cols, np.empty(len(pool_cols),
                                                 dtype=np.int64)))
                        pool_vals = np.concatenate(
                            (pool_vals, np.empty(len(pool_vals),
                                                 dtype=np.int64)))
                    if npiv == npiv_cap:
                        npiv_cap *= 2
                        ps = np.empty(npiv_cap, dtype=np.int64)
                        pl = np.empty(npiv_cap, dtype=np.int64)
                        ps[:npiv] = pstart[:npiv]
                        pl[:npiv] = plen[:npiv]
                        pstart = ps
                        plen = pl
                    pstart[npiv] = pool_top
                    plen[npiv] = g
                    for t in range(g):
                        c2 = gather[t]
                        pool_cols[pool_top] = c2
                        pool_vals[pool_top] = (work[c2] * inv) % prime
                        pool_top += 1
                        work[c2] = 0
                    pivot_of[col] = npiv
                    npiv += 1
                    break
                # eliminate with the stored pivot row
                work[col] = 0
                s = pstart[pid]
                for t in range(plen[pid]):
                    c2 = pool_cols[s + t]
                    if c2 == col:
                        continue
                    old = work[c2]
                    w = (old - v * pool_vals[s + t]) % prime
                    if old == 0 and w != 0:
                        if hn == len(heap):
                            heap = np.concatenate(
                                (heap, np.empty(len(heap), dtype=np.int64)))
                        heap[hn] = c2
                        i = hn
                        hn += 1
                        while i > 0:
                            par = (i - 1) >> 1
                            if heap[par] > heap[i]:
                                heap[par], heap[i] = heap[i], heap[par]
                                i = par
                            else:
                                break
                    work[c2] = w
        return npiv


def rank_mod(rows, ncols: int, prime: int) -> int:
    """Rank over GF(prime) of sparse rows ({col: int} dicts); dispatches to
    the numba kernel when available."""
    indptr = np.empty(len(rows) + 1, dtype=np.int64)
    nnz = sum(len(r) for r in rows)
    indices = np.empty(nnz, dtype=np.int64)
    data = np.empty(nnz, dtype=np.int64)
    k = 0
    indptr[0] = 0
    for i, row in enumerate(rows):
        for c, v in row.items():
            indices[k] = c
            data[k] = v % prime
            k += 1
        indptr[i + 1] = k
    if USE_NUMBA:
        return int(_rank_mod_numba(indptr, indices, data, ncols, prime))
    return _rank_mod_python(indptr, indices, data, ncols, prime)

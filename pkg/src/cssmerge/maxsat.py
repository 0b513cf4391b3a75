"""Picking the best single merge with weighted partial Max-SAT.

Given a trimmed covering, its edge order, and an enumeration of
orderable bicliques, we look for the cheapest rewrite of the form
"insert one merged rule, then trim".  The search space — which
biclique, which of its sub-bicliques (node exclusions), and which
insertion position — is encoded so that:

* hard clauses admit exactly the rewrites whose result is again a
  valid covering (insertable biclique, position within its orderable
  range, cascade order preserved), and
* soft clauses charge the weight of every node that survives the
  rewrite, so an optimal model's violated weight *is* the weight of
  the rewritten stylesheet.

Decoding an optimal model therefore yields an optimal merging
opportunity.  A brute-force oracle over all sub-bicliques and
positions backs this up in the tests.
"""

import itertools
import logging
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from .biclique import (Biclique, OrderableEnumeration,
                       enumerate_maximal_bicliques, is_orderable,
                       order_properties)
from .graph import (Edge, MergingOpportunity, OrderPair, Rule,
                    apply_opportunity, is_valid_covering, total_weight)
from .selector import node_weight
from .solvers.wcnf import MaxSatFailure, Wcnf, emit_dimacs, parse_output, solve

log = logging.getLogger(__name__)

# Formulas are nested tuples: ("lit", l), ("not", f), ("and", (f, ...)),
# ("or", (f, ...)), TRUE, FALSE.  Hashable, so definition variables in
# the CNF conversion can be shared across repeated subformulas.
Formula = tuple

TRUE: Formula = ("true",)
FALSE: Formula = ("false",)


def f_lit(l):
    return ("lit", l)


def f_not(f):
    if f == TRUE:
        return FALSE
    if f == FALSE:
        return TRUE
    if f[0] == "lit":
        return ("lit", -f[1])
    if f[0] == "not":
        return f[1]
    return ("not", f)


def f_and(fs):
    out = []
    for f in fs:
        if f == FALSE:
            return FALSE
        if f == TRUE:
            continue
        if f[0] == "and":
            out.extend(f[1])
        else:
            out.append(f)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return ("and", tuple(out))


def f_or(fs):
    out = []
    for f in fs:
        if f == TRUE:
            return TRUE
        if f == FALSE:
            continue
        if f[0] == "or":
            out.extend(f[1])
        else:
            out.append(f)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return ("or", tuple(out))


def f_imp(a, b):
    return f_or([f_not(a), b])


@dataclass(frozen=True)
class IntVar:
    """A bounded integer, binary-encoded: value = lo + sum(bit_k * 2^k).

    ``bits`` lists DIMACS variables least-significant first; a range
    clause (emitted by :func:`encode`) keeps the raw bit value within
    ``hi - lo``.
    """

    name: str
    lo: int
    hi: int
    bits: Tuple[int, ...]


def _ge_bits(bits_msb, c):
    # Unsigned comparison of the raw bit value against a constant,
    # recursing most-significant bit first.
    if c <= 0:
        return TRUE
    if not bits_msb:
        return FALSE
    w = 1 << (len(bits_msb) - 1)
    if c >= (w << 1):
        return FALSE
    head, rest = bits_msb[0], bits_msb[1:]
    if c >= w:
        return f_and([f_lit(head), _ge_bits(rest, c - w)])
    return f_or([f_lit(head), _ge_bits(rest, c)])


def range_formula(iv):
    """Raw bit patterns above ``hi`` are forbidden."""
    return f_not(_ge_bits(tuple(reversed(iv.bits)), iv.hi - iv.lo + 1))


def ge_formula(iv, c):
    """``iv >= c`` (assumes the range clause holds)."""
    if c <= iv.lo:
        return TRUE
    if c > iv.hi:
        return FALSE
    return _ge_bits(tuple(reversed(iv.bits)), c - iv.lo)


def le_formula(iv, c):
    return f_not(ge_formula(iv, c + 1))


def lt_formula(iv, c):
    return f_not(ge_formula(iv, c))


def eq_formula(iv, c):
    if not iv.lo <= c <= iv.hi:
        return FALSE
    v = c - iv.lo
    return f_and([f_lit(b if (v >> k) & 1 else -b)
                  for k, b in enumerate(iv.bits)])


def int_value(iv, model):
    """Read the integer back out of a model."""
    return iv.lo + sum((1 << k) for k, b in enumerate(iv.bits)
                       if model.get(b, False))


# ---------------------------------------------------------------------------
# Encoding


@dataclass
class Encoding:
    """A merge-search instance plus everything needed to decode models.

    ``inpos`` is the insertion position (0..m, counting rules before
    the insertion point), ``bc`` the chosen biclique (1..K), ``pool``
    the shared exclusion variables, and ``rho[i-1]`` maps biclique i's
    node texts to 1-based pool slots (nodes without a slot can never
    be excluded).
    """

    covering: Tuple[Rule, ...]
    order: Tuple[OrderPair, ...]
    enum: OrderableEnumeration
    inpos: IntVar
    bc: IntVar
    pool: Tuple[int, ...]
    rho: Tuple[Dict[str, int], ...]
    num_vars: int
    hard: List[Formula] = field(default_factory=list)
    soft: List[Tuple[Formula, int]] = field(default_factory=list)


def _last_index_map(covering):
    idx: Dict[Edge, int] = {}
    for i, rule in enumerate(covering, 1):
        for s in rule.selectors:
            for p in rule.declarations:
                idx[(s, p)] = i
    return idx


def _first_seen_selectors(covering):
    seen: Dict[str, int] = {}
    for rule in covering:
        for s in rule.selectors:
            seen.setdefault(s, len(seen))
    return seen


def encode(covering, order, enum, *, exclusion="all", allowed=None):
    """Build the Max-SAT formulas for one merge search.

    :param covering: trimmed rule sequence (rule i pins every node the
        soft clauses charge to rule i).
    :param order: the extracted edge-order pairs.
    :param enum: an :class:`OrderableEnumeration` over the covering's
        graph; candidate merges are sub-bicliques of its entries.
    :param exclusion: ``"all"`` gives every biclique node an exclusion
        variable (exact search over all sub-bicliques); ``"order"``
        restricts them to nodes appearing in the edge order, which
        shrinks the instance but can miss some sub-biclique optima.
    :param allowed: optional collection of 1-based biclique indices the
        chosen biclique must come from (partitioned search).
    """
    bicliques = enum.bicliques
    if not bicliques:
        raise ValueError("cannot encode an empty biclique enumeration")
    m = len(covering)
    K = len(bicliques)
    order = tuple(sorted(order))
    idx_map = _last_index_map(covering)

    counter = itertools.count(1)

    def new_bits(n):
        return tuple(next(counter) for _ in range(n))

    inpos = IntVar("inpos", 0, m, new_bits(m.bit_length()))
    bc = IntVar("bc", 1, K, new_bits((K - 1).bit_length()))

    if exclusion == "order":
        excludable = {n for pair in order for e in pair for n in e}
    elif exclusion == "all":
        excludable = None
    else:
        raise ValueError("exclusion must be 'all' or 'order'")

    def numbered(b):
        nodes = sorted(b.sels) + sorted(b.props)
        if excludable is None:
            return nodes
        return [n for n in nodes if n in excludable]

    rho: List[Dict[str, int]] = []
    for b in bicliques:
        rho.append({n: k for k, n in enumerate(numbered(b), 1)})
    pool_size = max((len(r) for r in rho), default=0)
    pool = new_bits(pool_size)

    enc = Encoding(covering=tuple(covering), order=order, enum=enum,
                   inpos=inpos, bc=bc, pool=pool, rho=tuple(rho),
                   num_vars=next(counter) - 1)

    enc.hard.append(range_formula(inpos))
    enc.hard.append(range_formula(bc))
    if allowed is not None:
        enc.hard.append(f_or([eq_formula(bc, i) for i in sorted(allowed)]))

    # Per-biclique position window.  Below the second rule containing
    # one of its edges no insertion can free two rules' worth of nodes,
    # and past the last such rule nothing further can be freed, so the
    # window [second, last] loses no savings; the orderability cap from
    # the enumeration tightens the top end further.
    containing: Dict[int, List[int]] = {}
    for bi, b in enumerate(bicliques, 1):
        hit = [ri for ri, rule in enumerate(covering, 1)
               if any(s in rule.selectors and p in rule.declarations
                      for s in b.sels for p in b.props)]
        containing[bi] = hit
        lo = hit[1] if len(hit) > 1 else hit[0]
        hi = min(hit[-1], enum.position_cap(bi - 1, m))
        enc.hard.append(f_imp(eq_formula(bc, bi),
                              f_and([ge_formula(inpos, lo),
                                     le_formula(inpos, hi)])))

    # Edge coverage: (s, p) ends up in the inserted rule iff the chosen
    # biclique contains it and neither endpoint is excluded.
    holders: Dict[Edge, List[int]] = {}
    for bi, b in enumerate(bicliques, 1):
        for s in b.sels:
            for p in b.props:
                holders.setdefault((s, p), []).append(bi)

    he_memo: Dict[Edge, Formula] = {}

    def he(e):
        if e not in he_memo:
            parts = []
            for bi in holders.get(e, ()):
                terms = [eq_formula(bc, bi)]
                for n in e:
                    slot = rho[bi - 1].get(n)
                    if slot is not None:
                        terms.append(f_lit(-pool[slot - 1]))
                parts.append(f_and(terms))
            he_memo[e] = f_or(parts)
        return he_memo[e]

    # Cascade preservation: covering an edge may push it past a later
    # ordered partner only if the partner comes along too.
    for e1, e2 in order:
        h1 = he(e1)
        if h1 == FALSE:
            continue
        enc.hard.append(f_imp(h1, f_or([lt_formula(inpos, idx_map[e2]),
                                        he(e2)])))

    # Soft side: charge every surviving node.  A biclique node costs
    # its weight unless excluded; a covering node in rule i goes free
    # exactly when the insertion lands at or past i and covers every
    # edge pinning it there.
    for bi, b in enumerate(bicliques, 1):
        sel_bc = eq_formula(bc, bi)
        for n in sorted(b.sels) + sorted(b.props):
            slot = rho[bi - 1].get(n)
            keep = f_lit(pool[slot - 1]) if slot is not None else FALSE
            enc.soft.append((f_imp(sel_bc, keep), node_weight(n)))
    for ri, rule in enumerate(covering, 1):
        at_or_past = ge_formula(inpos, ri)
        for s in rule.selectors:
            pins = [he((s, p)) for p in rule.declarations
                    if idx_map[(s, p)] == ri]
            enc.soft.append((f_and([at_or_past] + pins), node_weight(s)))
        for p in rule.declarations:
            pins = [he((s, p)) for s in rule.selectors
                    if idx_map[(s, p)] == ri]
            enc.soft.append((f_and([at_or_past] + pins), node_weight(p)))
    return enc


def to_wcnf(enc):
    """Convert the encoding to weighted partial CNF.

    Structural conversion: each distinct compound subformula gets one
    definition variable constrained to be equivalent to it, so shared
    subformulas (edge coverage, integer comparisons) are defined once.
    Soft formulas become unit soft clauses on their definition
    literals, weight for weight.
    """
    w = Wcnf(num_vars=enc.num_vars)
    memo: Dict[Formula, int] = {}
    true_var: List[int] = []

    def true_lit():
        if not true_var:
            true_var.append(w.new_var())
            w.add_hard(true_var[0])
        return true_var[0]

    def lit_of(f):
        kind = f[0]
        if kind == "lit":
            return f[1]
        if kind == "true":
            return true_lit()
        if kind == "false":
            return -true_lit()
        if f in memo:
            return memo[f]
        if kind == "not":
            v = -lit_of(f[1])
        else:
            subs = [lit_of(g) for g in f[1]]
            v = w.new_var()
            if kind == "and":
                for l in subs:
                    w.add_hard(-v, l)
                w.add_hard(v, *[-l for l in subs])
            elif kind == "or":
                for l in subs:
                    w.add_hard(v, -l)
                w.add_hard(-v, *subs)
            else:
                raise ValueError("unknown formula kind %r" % (kind,))
        memo[f] = v
        return v

    def assert_hard(f):
        kind = f[0]
        if kind == "true":
            return
        if kind == "false":
            w.hard.append(())
            return
        if kind == "and":
            for g in f[1]:
                assert_hard(g)
            return
        if kind == "or":
            w.add_hard(*[lit_of(g) for g in f[1]])
            return
        w.add_hard(lit_of(f))

    for f in enc.hard:
        assert_hard(f)
    for f, weight in enc.soft:
        w.add_soft(weight, lit_of(f))
    return w


def parse_model(text):
    """Parse external solver output (s/o/v lines) into a result."""
    return parse_output(text)


# ---------------------------------------------------------------------------
# Decoding


def decode(enc, model):
    """Turn a hard-satisfying model into a merging opportunity.

    Returns None when the model excludes one whole side of the chosen
    biclique (the "merge nothing" escape hatch).  The inserted rule
    lists selectors in first-appearance order and declarations in an
    order compatible with the edge order at the insertion position —
    such an order exists for every sub-biclique the hard clauses
    admit.
    """
    j = int_value(enc.inpos, model)
    bi = int_value(enc.bc, model)
    b = enc.enum.bicliques[bi - 1]
    rho_i = enc.rho[bi - 1]

    def included(n):
        slot = rho_i.get(n)
        return slot is None or not model.get(enc.pool[slot - 1], False)

    sels = frozenset(s for s in b.sels if included(s))
    props = frozenset(p for p in b.props if included(p))
    if not sels or not props:
        return None
    sub = Biclique(sels, props)
    ys = order_properties(sub, j, enc.covering, set(enc.order))
    seen = _first_seen_selectors(enc.covering)
    xs = tuple(sorted(sels, key=lambda s: (seen.get(s, len(seen)), s)))
    return MergingOpportunity(Rule(xs, tuple(ys)), j)


# ---------------------------------------------------------------------------
# Search drivers


@dataclass
class MergeSearchResult:
    """Outcome of one best-merge search over a covering.

    ``cost`` is the covering's weight after applying ``opportunity``
    (the baseline weight when there is nothing to apply); ``saving`` is
    baseline - cost.  ``status`` is "optimal", "feasible" (timeout with
    an incumbent), "none" (no candidate at all), or "unknown".
    """

    status: str
    cost: int
    saving: int = 0
    opportunity: Optional[MergingOpportunity] = None


def find_best_opportunity(covering, graph, enum, *, exclusion="all",
                          timeout=None, allowed=None, solver_cmd=None,
                          emit_wcnf=None):
    """Best single merge by encode → solve → decode.

    The decoded result is re-applied and re-weighed, and the rewritten
    covering is checked against the graph; a mismatch means the
    encoding broke its own contract and raises :class:`MaxSatFailure`.

    :param solver_cmd: argv prefix of an external Max-SAT solver; None
        uses the bundled one.
    :param emit_wcnf: optional callable fed the DIMACS text before
        solving (used by the CLI's --emit-wcnf).
    """
    covering = tuple(covering)
    baseline = total_weight(covering)
    if not enum.bicliques:
        return MergeSearchResult("none", baseline)
    enc = encode(covering, graph.order, enum,
                 exclusion=exclusion, allowed=allowed)
    wcnf = to_wcnf(enc)
    if emit_wcnf is not None:
        emit_wcnf(emit_dimacs(wcnf))
    res = solve(wcnf, cmd=solver_cmd, timeout=timeout)
    if res.status == "unsat":
        return MergeSearchResult("none", baseline)
    if res.status == "unknown":
        return MergeSearchResult("unknown", baseline)
    opp = decode(enc, res.model)
    if opp is None:
        return MergeSearchResult(res.status, baseline)
    after = apply_opportunity(covering, opp)
    if not is_valid_covering(after, graph):
        raise MaxSatFailure("decoded opportunity %s @%d broke the covering"
                            % (opp.rule.text, opp.position))
    cost = total_weight(after)
    return MergeSearchResult(res.status, cost, baseline - cost, opp)


def _partition_indices(K, groups):
    # Round-robin so every partition mixes early and late bicliques.
    buckets: List[List[int]] = [[] for _ in range(groups)]
    for i in range(1, K + 1):
        buckets[(i - 1) % groups].append(i)
    return [b for b in buckets if b]


def find_best_opportunity_partitioned(covering, graph, enum, *, workers=1,
                                      partitions=1, exclusion="all",
                                      timeout=None, grace=0.1,
                                      solver_cmd=None):
    """Partitioned search: split the bicliques, solve each slice, keep
    the best completed answer.

    With a timeout, once the first slice finishes the rest get a grace
    window of ``grace * timeout`` seconds; slices still running after
    that are abandoned (their answers are merely candidates, so losing
    one can cost quality but never correctness).  Use a single
    worker/partition for deterministic runs.
    """
    covering = tuple(covering)
    K = len(enum.bicliques)
    groups = _partition_indices(K, max(1, workers * partitions))
    if len(groups) <= 1:
        return find_best_opportunity(covering, graph, enum,
                                     exclusion=exclusion, timeout=timeout,
                                     solver_cmd=solver_cmd)
    start = time.monotonic()

    def solve_group(allowed):
        return find_best_opportunity(covering, graph, enum,
                                     exclusion=exclusion, timeout=timeout,
                                     allowed=allowed, solver_cmd=solver_cmd)

    results: List[MergeSearchResult] = []
    ex = ThreadPoolExecutor(max_workers=max(1, workers))
    try:
        pending = {ex.submit(solve_group, g) for g in groups}
        deadline = None
        while pending:
            waitfor = None
            if deadline is not None:
                waitfor = max(0.0, deadline - time.monotonic())
            elif timeout is not None:
                waitfor = max(0.0, start + timeout - time.monotonic())
            done, pending = wait(pending, timeout=waitfor,
                                 return_when=FIRST_COMPLETED)
            if not done:
                break
            for fut in done:
                try:
                    results.append(fut.result())
                except MaxSatFailure:
                    raise
                except Exception:
                    log.warning("partition solve failed", exc_info=True)
            if deadline is None and timeout is not None:
                deadline = time.monotonic() + grace * timeout
    finally:
        # Slices still running are abandoned: the pool is released
        # without waiting and their late answers are dropped.
        ex.shutdown(wait=False, cancel_futures=True)
    usable = [r for r in results if r.status in ("optimal", "feasible")]
    if not usable:
        if any(r.status == "unknown" for r in results):
            return MergeSearchResult("unknown", total_weight(covering))
        return MergeSearchResult("none", total_weight(covering))
    return min(usable, key=lambda r: (r.cost, r.opportunity is None))


# ---------------------------------------------------------------------------
# Brute-force oracle


def _nonempty_subsets(items):
    for r in range(1, len(items) + 1):
        yield from itertools.combinations(items, r)


def brute_force_best_opportunity(covering, graph, order=None):
    """Exhaustively try every sub-biclique at every position.

    Returns the strictly-improving opportunity with the smallest
    resulting weight (ties: smallest position, then rule text), or
    None when no merge shrinks the covering.  Exponential in biclique
    size — meant as a test oracle for small graphs.
    """
    covering = tuple(covering)
    if order is None:
        order = graph.order
    m = len(covering)
    baseline = total_weight(covering)
    seen: Set[Tuple[FrozenSet[str], FrozenSet[str]]] = set()
    first = _first_seen_selectors(covering)
    best = None
    best_key = (baseline, -1, "")
    for b in enumerate_maximal_bicliques(graph):
        for xs in _nonempty_subsets(sorted(b.sels)):
            for ys in _nonempty_subsets(sorted(b.props)):
                key = (frozenset(xs), frozenset(ys))
                if key in seen:
                    continue
                seen.add(key)
                sub = Biclique(*key)
                sel_order = tuple(sorted(xs, key=lambda s:
                                         (first.get(s, len(first)), s)))
                for j in range(m + 1):
                    if not is_orderable(sub, j, covering, order):
                        break  # unorderable stays unorderable further on
                    rule = Rule(sel_order,
                                tuple(order_properties(sub, j, covering,
                                                       order)))
                    opp = MergingOpportunity(rule, j)
                    cand = apply_opportunity(covering, opp)
                    if not is_valid_covering(cand, graph):
                        continue
                    cand_key = (total_weight(cand), j, rule.text)
                    if cand_key < best_key:
                        best, best_key = opp, cand_key
    return best

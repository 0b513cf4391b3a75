"""Non-emptiness checking for CSS automata.

Two interchangeable backends decide ``L(A) != {}``:

* :func:`check_nonempty_full` builds one quantifier-free linear integer
  arithmetic formula describing an accepting run of length ``|trans|``
  (:func:`encode_nonemptiness`) and hands it to a solver.
* :func:`check_nonempty_optimized` (the default) walks backwards from
  the final state with a worklist, keeping per-row sibling-position
  constraints symbolic and everything else concrete.  Only the small
  positional systems and the final ID-distinctness check ever reach a
  solver.

Attribute-value reasoning is shared by both: each ``(namespace, attr)``
pair accumulates a set of (possibly negated) value constraints, and a
:class:`ConstraintWordAutomaton` — a deterministic automaton over
marker-padded factor windows — answers satisfiability and produces
shortest witness words (:func:`solve_attr_set`).

Formulas are represented as solver-protocol term strings over declared
integer variables; :func:`emit_smtlib` wraps them into a deterministic,
complete query.
"""

import itertools
import os
import subprocess
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Tuple

from .automata import (CHILD, LAST, NEIGHBOUR, SIBLING, CssAutomaton,
                       Tran, is_any)
from .selector import (AttrTest, CompoundSelector, Negation, Positional,
                       PseudoTest, TypePart)
from .solvers import lia

# Markers never present in attribute values; they delimit word start/end
# inside the constraint word automaton.
START = "\x02"
END = "\x03"

# Element/namespace sentinel for nodes whose type no selector pins down.
NULL_ELE = "\x00null"


class SolverFailure(RuntimeError):
    """A solver query timed out, crashed, or returned unknown."""


# ---------------------------------------------------------------------------
# Formula strings
#
# Formulas are plain SMT-LIB2 term strings; a VarPool records which
# integer variables they may mention (and their domain assertions), so a
# finished query type-checks by construction.


def _and(parts):
    parts = [p for p in parts if p != "true"]
    if any(p == "false" for p in parts):
        return "false"
    if not parts:
        return "true"
    if len(parts) == 1:
        return parts[0]
    return "(and %s)" % " ".join(parts)


def _or(parts):
    parts = [p for p in parts if p != "false"]
    if any(p == "true" for p in parts):
        return "true"
    if not parts:
        return "false"
    if len(parts) == 1:
        return parts[0]
    return "(or %s)" % " ".join(parts)


def _not(f):
    if f == "true":
        return "false"
    if f == "false":
        return "true"
    return "(not %s)" % f


def _implies(a, b):
    if a == "true":
        return b
    if a == "false" or b == "true":
        return "true"
    return "(=> %s %s)" % (a, b)


def _num(n):
    return str(n) if n >= 0 else "(- %d)" % -n


def _eq(a, b):
    return "(= %s %s)" % (a, b)


def _plus(*terms):
    terms = [t for t in terms if t != "0"]
    if not terms:
        return "0"
    if len(terms) == 1:
        return terms[0]
    return "(+ %s)" % " ".join(terms)


class VarPool:
    """Ordered registry of integer variables and domain assertions."""

    def __init__(self):
        self.names = []
        self._seen = set()
        self.domain = []
        self._counters = {}

    def var(self, name, lo=None, hi=None):
        if name not in self._seen:
            self._seen.add(name)
            self.names.append(name)
            if lo is not None:
                self.domain.append("(<= %s %s)" % (_num(lo), name))
            if hi is not None:
                self.domain.append("(<= %s %s)" % (name, _num(hi)))
        return name

    def fresh(self, stem, lo=None, hi=None):
        k = self._counters.get(stem, 0)
        self._counters[stem] = k + 1
        return self.var("%s%d" % (stem, k), lo, hi)


@dataclass(frozen=True)
class IlaFormula:
    """A closed solver query: declared variables plus assertions."""
    variables: Tuple[str, ...]
    assertions: Tuple[str, ...]

    def __bool__(self):  # pragma: no cover - guard against misuse
        raise TypeError("IlaFormula is not a truth value; solve it")


def emit_smtlib(f: IlaFormula) -> str:
    """Render a formula as a deterministic solver query.

    Declarations appear in creation order and assertions in build
    order, so identical inputs emit byte-identical queries.
    """
    lines = ["(set-logic QF_LIA)"]
    for name in f.variables:
        lines.append("(declare-fun %s () Int)" % name)
    for a in f.assertions:
        lines.append("(assert %s)" % a)
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Attribute constraint sets
#
# A constraint is (op, value, positive) with op None for bare presence.
# Sets are grouped per (namespace, attribute); matching semantics follow
# the document model oracle: ~= with an empty or space-containing value
# never matches, every other operator reads as its plain string
# predicate.


def _as_constraint(item):
    if isinstance(item, tuple) and len(item) == 3:
        return item
    if isinstance(item, AttrTest):
        return (item.op, item.value, True)
    if isinstance(item, Negation) and isinstance(item.inner, AttrTest):
        return (item.inner.op, item.inner.value, False)
    raise TypeError("not an attribute constraint: %r" % (item,))


def _bad_tilde(op, value):
    return op == "~=" and (value == "" or " " in value)


def _fresh_char(used):
    for ch in "abcdefghijklmnopqrstuvwxyz0123456789":
        if ch not in used:
            return ch
    k = 0x21
    while chr(k) in used or chr(k) in (START, END):
        k += 1
    return chr(k)


def _set_alphabet(constraints):
    """Characters worth considering when solving one constraint set.

    Value characters, plus the separators the operators inspect, plus
    one representative character outside every value (any other outside
    character behaves identically, so one suffices).
    """
    used = set()
    need_space = False
    need_dash = False
    for op, value, _pos in constraints:
        if value:
            used.update(value)
        if op == "~=":
            need_space = True
        if op == "|=":
            need_dash = True
    if need_space:
        used.add(" ")
    if need_dash:
        used.add("-")
    used.add(_fresh_char(used))
    return "".join(sorted(used))


class ConstraintWordAutomaton:
    """Deterministic word automaton for one attribute constraint set.

    States are the marker-padded factor windows ``c1 + v + c2`` where
    ``v`` is a prefix of some constraint value and ``c1``, ``c2`` range
    over the alphabet, the start/end markers, or nothing.  Reading a
    character moves to the longest suffix of ``state + char`` that is a
    state, so the state always shows the longest relevant suffix of the
    input.  A constraint's pattern is a factor of the window exactly
    when it just occurred in the input, which lets the run accumulate
    satisfied positive constraints and prune on any violated negative.
    """

    def __init__(self, constraints, alphabet=None):
        self.constraints = tuple(_as_constraint(c) for c in constraints)
        self.impossible = any(_bad_tilde(op, value) and pos
                              for op, value, pos in self.constraints)
        # ~= with an unusable value: positives make the set unsolvable,
        # negatives hold vacuously and are dropped.
        self.effective = tuple(
            c for c in self.constraints
            if not _bad_tilde(c[0], c[1]) and c[0] is not None)
        self.alphabet = alphabet if alphabet is not None \
            else _set_alphabet(self.effective)
        prefixes = {""}
        for _op, value, _pos in self.effective:
            for j in range(1, len(value) + 1):
                prefixes.add(value[:j])
        pads = list(self.alphabet) + ["", START, END]
        self.states = frozenset(
            c1 + v + c2 for v in prefixes for c1 in pads for c2 in pads)
        self.positives = tuple(i for i, c in enumerate(self.effective)
                               if c[2])
        self.negatives = tuple(i for i, c in enumerate(self.effective)
                               if not c[2])
        self._step_memo = {}
        self._fired_memo = {}

    @property
    def num_states(self):
        return len(self.states)

    def step(self, state, ch):
        key = (state, ch)
        got = self._step_memo.get(key)
        if got is None:
            w = state + ch
            for k in range(len(w)):
                if w[k:] in self.states:
                    got = w[k:]
                    break
            self._step_memo[key] = got
        return got

    def fired(self, state):
        """Constraint indices whose pattern is a factor of ``state``."""
        got = self._fired_memo.get(state)
        if got is None:
            hits = []
            for i, (op, value, _pos) in enumerate(self.effective):
                if self._holds(op, value, state):
                    hits.append(i)
            got = frozenset(hits)
            self._fired_memo[state] = got
        return got

    @staticmethod
    def _holds(op, value, window):
        if op == "=":
            return window == START + value + END
        if op == "~=":
            return any(c1 + value + c2 in window
                       for c1 in (START, " ") for c2 in (" ", END))
        if op == "|=":
            return any(START + value + c2 in window for c2 in (END, "-"))
        if op == "^=":
            return START + value in window
        if op == "$=":
            return value + END in window
        if op == "*=":
            return value in window
        raise ValueError("unknown attribute operator %r" % op)

    def solve(self, distinct_from=()):
        """Shortest word satisfying the set, skipping ``distinct_from``.

        # Strategy: breadth-first search over (window, satisfied
        # positives) configurations, expanding characters in sorted
        # order so words come out in shortlex order.  A configuration
        # may be reached by several different words; keeping the first
        # len(distinct_from) + 1 of them is enough, because words that
        # share a configuration share all accepting continuations.
        """
        if self.impossible:
            return None
        avoid = set(distinct_from)
        keep = len(avoid) + 1
        want = frozenset(self.positives)
        negs = frozenset(self.negatives)

        start = self.step("", START)
        fired = self.fired(start)
        if fired & negs:
            return None
        queue = [(start, fired & want, "")]
        visits = {(start, fired & want): 1}
        while queue:
            nxt = []
            for state, sat, word in queue:
                estate = self.step(state, END)
                efired = self.fired(estate)
                if not efired & negs and (sat | (efired & want)) == want:
                    if word not in avoid:
                        return word
                for ch in self.alphabet:
                    state2 = self.step(state, ch)
                    fired2 = self.fired(state2)
                    if fired2 & negs:
                        continue
                    sat2 = sat | (fired2 & want)
                    key = (state2, sat2)
                    seen = visits.get(key, 0)
                    if seen >= keep:
                        continue
                    visits[key] = seen + 1
                    nxt.append((state2, sat2, word + ch))
            queue = nxt
        return None


def solve_attr_set(constraints, distinct_from=()):
    """Find a word satisfying one attribute constraint set, or None.

    ``constraints`` may mix :class:`AttrTest` objects, negations of
    them, and raw ``(op, value, positive)`` triples; all must concern
    one ``(namespace, attribute)`` pair.  ``distinct_from`` lists words
    the answer must avoid.
    """
    return ConstraintWordAutomaton(constraints).solve(distinct_from)


def compute_attr_bound(sets) -> int:
    """Global length bound for satisfying attribute values.

    ``n * m * c + 1`` for ``n`` constraint sets, ``m`` the largest word
    automaton state count, ``c`` the largest constraint count per set;
    the + 1 reserves a trailing null slot.  An empty collection needs
    only the null.
    """
    sets = [tuple(_as_constraint(c) for c in s) for s in sets]
    if not sets:
        return 1
    n = len(sets)
    m = 0
    c = 0
    for s in sets:
        aut = ConstraintWordAutomaton(s)
        m = max(m, aut.num_states)
        c = max(c, len(s))
    return n * m * max(c, 1) + 1


# ---------------------------------------------------------------------------
# Type summary


@dataclass(frozen=True)
class TypeSummary:
    """Finite namespace/element universe sufficient for emptiness.

    ``eles`` always contains :data:`NULL_ELE`, the stand-in label for
    nodes no selector inspects.  ``assigned`` maps each transition whose
    selector is not the universal one to its representative type; the
    run can relabel uninspected parts of any accepted tree onto these
    without changing acceptance.
    """
    nss: Tuple[str, ...]
    eles: Tuple[str, ...]
    assigned: Tuple[Tuple[Tran, Tuple[str, str]], ...]

    def universe(self):
        """All (namespace, element) pairs counted by the encoding."""
        return [(ns, ele) for ns in self.nss for ele in self.eles]


def _fresh_name(stem, counter, taken):
    while True:
        name = "%s%d" % (stem, counter)
        counter += 1
        if name not in taken:
            return name, counter


def compute_type_summary(a: CssAutomaton) -> TypeSummary:
    """Build the finite type universe for an automaton.

    Mentioned fully-qualified types are kept as-is.  Every transition
    with a non-universal selector additionally gets a representative
    type: the mentioned pair when its selector pins both components,
    otherwise fresh names fill whichever components are free.  The
    sizes stay linear in the number of transitions.
    """
    trans = a.sorted_trans()
    mentioned_ns = set()
    mentioned_ele = set()
    for t in trans:
        tp = t.sel.type_part
        if tp.ns is not None:
            mentioned_ns.add(tp.ns)
        if tp.ele is not None:
            mentioned_ele.add(tp.ele)
        for cond in t.sel.conditions:
            if isinstance(cond, Negation) and isinstance(cond.inner, TypePart):
                if cond.inner.ns is not None:
                    mentioned_ns.add(cond.inner.ns)
                if cond.inner.ele is not None:
                    mentioned_ele.add(cond.inner.ele)

    nss = set()
    eles = set()
    for t in trans:
        tp = t.sel.type_part
        if tp.ns is not None and tp.ele is not None:
            nss.add(tp.ns)
            eles.add(tp.ele)

    assigned = []
    ns_ctr = ele_ctr = 0
    for t in trans:
        if is_any(t.sel):
            continue
        tp = t.sel.type_part
        if tp.ns is not None and tp.ele is not None:
            rep = (tp.ns, tp.ele)
        elif tp.ns is not None:
            ele, ele_ctr = _fresh_name("e", ele_ctr, mentioned_ele)
            mentioned_ele.add(ele)
            rep = (tp.ns, ele)
        elif tp.ele is not None:
            ns, ns_ctr = _fresh_name("n", ns_ctr, mentioned_ns)
            mentioned_ns.add(ns)
            rep = (ns, tp.ele)
        else:
            ns, ns_ctr = _fresh_name("n", ns_ctr, mentioned_ns)
            mentioned_ns.add(ns)
            ele, ele_ctr = _fresh_name("e", ele_ctr, mentioned_ele)
            mentioned_ele.add(ele)
            rep = (ns, ele)
        nss.add(rep[0])
        eles.add(rep[1])
        assigned.append((t, rep))

    if not nss:
        ns, ns_ctr = _fresh_name("n", ns_ctr, mentioned_ns)
        nss.add(ns)
    eles.add(NULL_ELE)
    return TypeSummary(tuple(sorted(nss)), tuple(sorted(eles)),
                       tuple(assigned))


# ---------------------------------------------------------------------------
# Negated periodic constraints


def _trunc_divmod(b, a):
    """b = a*b1 + b2 with |b2| < |a|, quotient rounded toward zero."""
    q, r = divmod(b, a)
    if r != 0 and (b < 0) != (a < 0):
        q += 1
        r -= a
    return q, r


def nomatch(x, a, b, pool=None, suffix=""):
    """Formula equivalent to ``not exists n >= 0 . x = a*n + b``.

    ``x`` is a term string.  Decompose ``b = a*b1 + b2`` with
    ``|b2| < |a|``; then either ``x`` lies strictly on the wrong side of
    ``b``, or ``x`` is ``a*n + a*b1 + b2'`` for a residue ``b2'`` with
    ``0 < |b2' - b2| < |a|`` — a different residue class mod ``a``, so
    ``x`` provably never meets the progression.  Fresh variables are
    drawn from ``pool`` when given, else named by ``suffix``.

    :returns: ``(extra_variable_names, formula_string)``.
    """
    if a == 0:
        return [], _or(["(< %s %s)" % (x, _num(b)),
                        "(> %s %s)" % (x, _num(b))])
    b1, b2 = _trunc_divmod(b, a)
    if pool is not None:
        nv = pool.fresh("nm_n", lo=0)
        rv = pool.fresh("nm_r", lo=-(abs(a) - 1), hi=abs(a) - 1)
        extra = []
    else:
        nv = "nm_n%s" % suffix
        rv = "nm_r%s" % suffix
        extra = [nv, rv]
    wrong_side = ["(< %s %s)" % (x, _num(b)) if a > 0
                  else "(> %s %s)" % (x, _num(b))]
    residue = ["(<= 0 %s)" % nv,
               "(< %s %s)" % (rv, _num(abs(a))),
               "(< %s %s)" % (_num(-abs(a)), rv),
               "(<= %s %s)" % ("(- %s %s)" % (rv, _num(b2)),
                               _num(abs(a) - 1)),
               "(<= %s %s)" % ("(- %s %s)" % (_num(b2), rv),
                               _num(abs(a) - 1)),
               _not(_eq(rv, _num(b2))),
               _eq(x, _plus("(* %s %s)" % (_num(a), nv),
                            _num(a * b1), rv))]
    return extra, _or(wrong_side + [_and(residue)])


# ---------------------------------------------------------------------------
# Attribute grouping
#
# Attribute tests of one compound selector are grouped per semantic
# (namespace, attribute) slot.  An unqualified positive test quantifies
# existentially over namespaces, so each occurrence gets a private slot
# (a fresh namespace can always host it, and nothing else ever needs to
# look inside that namespace).  An unqualified negative test ranges over
# every namespace and therefore lands in all materialized slots of its
# attribute; against unmaterialized namespaces it holds vacuously
# because the witness document simply omits the attribute there.  A
# presence negation meeting a materialized slot is a contradiction.

_EXIST = "\x00exist%d"


def _sel_attr_groups(sel):
    """Group the attribute tests of a compound selector.

    :returns: dict ``(ns_label, attr) -> tuple of (op, value, positive)``
        with ``ns_label`` a namespace name or a private existential slot
        label, or None when the tests are structurally unsatisfiable.
    """
    groups = {}
    slot_ord = {}
    for cond in sel.conditions:
        if isinstance(cond, AttrTest):
            ns = cond.sem_ns()
            if ns is None:
                k = slot_ord.get(cond.attr, 0)
                slot_ord[cond.attr] = k + 1
                key = (_EXIST % k, cond.attr)
            else:
                key = (ns, cond.attr)
            groups.setdefault(key, []).append((cond.op, cond.value, True))
    for cond in sel.conditions:
        if not (isinstance(cond, Negation)
                and isinstance(cond.inner, AttrTest)):
            continue
        t = cond.inner
        ns = t.sem_ns()
        presence = t.op is None
        if ns is None:
            hits = [key for key in groups if key[1] == t.attr]
            if presence and hits:
                return None
            for key in hits:
                if not presence:
                    groups[key].append((t.op, t.value, False))
        elif (ns, t.attr) in groups:
            if presence:
                return None
            groups[(ns, t.attr)].append((t.op, t.value, False))
    return {key: tuple(v) for key, v in groups.items()}


def _op_word_formula(op, value, w, codes, space_code, dash_code):
    """Formula over the padded character vector ``w`` for one test.

    ``w`` lists the vector's variable names (slot ``s`` is ``w[s-1]``);
    slots hold character codes, 0 meaning null.  Nulls are canonical (a
    null is only ever followed by nulls), so the vector spells out the
    word exactly and negation is plain logical negation.
    """
    b = len(w)
    if op is None:
        return "true"
    k = len(value)

    def chars(start):
        """Value occupies slots ``start .. start+k-1`` (1-based)."""
        return [_eq(w[start + j - 1], _num(codes[value[j]]))
                for j in range(k)]

    def ends_at(slot):
        """Word stops right before 1-based ``slot``."""
        return _eq(w[slot - 1], "0")

    if op == "=":
        if k > b - 1:
            return "false"
        return _and(chars(1) + [ends_at(k + 1)])
    if op == "^=":
        if k == 0:
            return "true"
        if k > b - 1:
            return "false"
        return _and(chars(1))
    if op == "$=":
        if k == 0:
            return "true"
        if k > b - 1:
            return "false"
        return _or([_and(chars(s + 1) + [ends_at(s + k + 1)])
                    for s in range(0, b - k)])
    if op == "*=":
        if k == 0:
            return "true"
        if k > b - 1:
            return "false"
        return _or([_and(chars(s + 1)) for s in range(0, b - k)])
    if op == "|=":
        exact = _op_word_formula("=", value, w, codes, space_code, dash_code)
        if k > b - 1 or dash_code is None:
            return exact
        return _or([exact, _and(chars(1) + [_eq(w[k], _num(dash_code))])])
    if op == "~=":
        if k == 0 or " " in value:
            return "false"  # needle can never be a whole list item
        if k > b - 1:
            return "false"
        sp = _num(space_code) if space_code is not None else None

        def boundary(slot):
            opts = [ends_at(slot)]
            if sp is not None:
                opts.append(_eq(w[slot - 1], sp))
            return _or(opts)

        opts = [_and(chars(1) + [boundary(k + 1)])]
        if sp is not None:
            for q in range(2, b - k + 1):
                opts.append(_and([_eq(w[q - 2], sp)] + chars(q)
                                 + [boundary(q + k)]))
        return _or(opts)
    raise ValueError("unknown attribute operator %r" % op)


# ---------------------------------------------------------------------------
# Compound selector classification


@dataclass(frozen=True)
class _SelInfo:
    """Pre-chewed view of a compound selector's conditions."""
    pos_pseudo: FrozenSet[str]
    neg_pseudo: FrozenSet[str]
    positionals: Tuple[Tuple[Positional, bool], ...]
    groups: Optional[Dict[Tuple[str, str], tuple]]
    type_dead: bool


_SEL_INFO_CACHE: Dict[CompoundSelector, _SelInfo] = {}


def _type_dead(sel):
    """Does a type negation cover the positive type part entirely?"""
    tp = sel.type_part
    for cond in sel.conditions:
        if isinstance(cond, Negation) and isinstance(cond.inner, TypePart):
            nns, nele = cond.inner.ns, cond.inner.ele
            ns_cov = nns is None or (tp.ns is not None and tp.ns == nns)
            ele_cov = nele is None or (tp.ele is not None and tp.ele == nele)
            if ns_cov and ele_cov:
                return True
    return False


def classify_selector(sel) -> _SelInfo:
    info = _SEL_INFO_CACHE.get(sel)
    if info is not None:
        return info
    pos_pseudo = set()
    neg_pseudo = set()
    positionals = []
    for cond in sel.conditions:
        if isinstance(cond, PseudoTest):
            pos_pseudo.add(cond.name)
        elif isinstance(cond, Positional):
            positionals.append((cond, True))
        elif isinstance(cond, Negation):
            if isinstance(cond.inner, PseudoTest):
                neg_pseudo.add(cond.inner.name)
            elif isinstance(cond.inner, Positional):
                positionals.append((cond.inner, False))
    info = _SelInfo(frozenset(pos_pseudo), frozenset(neg_pseudo),
                    tuple(positionals), _sel_attr_groups(sel),
                    _type_dead(sel))
    _SEL_INFO_CACHE[sel] = info
    return info


def _sel_unusable(info: _SelInfo) -> bool:
    """Is the selector dead regardless of position?

    Covered type negations, attribute contradictions, and pseudo-class
    sets that no valid document can realize.
    """
    if info.type_dead or info.groups is None:
        return True
    if info.pos_pseudo & info.neg_pseudo:
        return True
    if {"link", "visited"} <= info.pos_pseudo:
        return True
    if {"enabled", "disabled"} <= info.pos_pseudo:
        return True
    return False


def _needs_type_tracking(a: CssAutomaton) -> bool:
    """Do any selectors in the automaton count siblings by type?"""
    for t in a.sorted_trans():
        for cond, _pos in classify_selector(t.sel).positionals:
            if "of-type" in cond.kind:
                return True
    return False


# ---------------------------------------------------------------------------
# The full run encoding
#
# One formula describes an accepting run over at most n = |trans| steps:
# position 0 is the document root in the initial state, each position
# i < n either fires a transition (checking its node selector at i and
# doing the direction's sibling-position bookkeeping between i and i+1)
# or has already reached the final state, and position n is final.
# Attribute values are padded character vectors; ID vectors of the same
# namespace must differ pairwise unless null (null = attribute absent).


class _Encoder:
    def __init__(self, a: CssAutomaton, summary: Optional[TypeSummary],
                 bound: Optional[int]):
        self.a = a
        self.trans = a.sorted_trans()
        self.n = len(self.trans)
        self.summary = summary if summary is not None \
            else compute_type_summary(a)
        self.track = _needs_type_tracking(a)
        self.pool = VarPool()
        self.extra = []
        states = sorted(a.states)
        self.scode = {s: i for i, s in enumerate(states)}
        self.ns_code = {ns: i for i, ns in enumerate(self.summary.nss)}
        self.ele_code = {e: i for i, e in enumerate(self.summary.eles)}
        self.universe = self.summary.universe()
        self._build_groups(bound)
        self.id_positions = {}

    # -- attribute group registry ------------------------------------

    def _build_groups(self, bound):
        instances = {}
        for t in self.trans:
            info = classify_selector(t.sel)
            if info.groups is None:
                continue
            for key, cons in sorted(info.groups.items()):
                bucket = instances.setdefault(key, [])
                if cons not in bucket:
                    bucket.append(cons)
        self.group_ord = {}
        self.group_codes = {}
        self.group_bound = {}
        for ordinal, key in enumerate(sorted(instances)):
            alphabet = set()
            lengths = [0]
            kk = self.n + 1
            for cons in instances[key]:
                auto = ConstraintWordAutomaton(cons)
                alphabet.update(auto.alphabet)
                if key[1] == "id":
                    words = []
                    w = auto.solve()
                    while w is not None and len(words) < kk:
                        words.append(w)
                        w = auto.solve(distinct_from=words)
                    lengths.extend(len(x) for x in words)
                else:
                    w = auto.solve()
                    if w is not None:
                        lengths.append(len(w))
            self.group_ord[key] = ordinal
            self.group_codes[key] = {ch: j + 1
                                     for j, ch in enumerate(sorted(alphabet))}
            self.group_bound[key] = bound if bound is not None \
                else max(lengths) + 1

    def _wvars(self, key, i):
        """Materialize the padded vector for group ``key`` at ``i``."""
        b = self.group_bound[key]
        m = len(self.group_codes[key])
        ordinal = self.group_ord[key]
        fresh = "w%d_%d_1" % (ordinal, i) not in self.pool._seen
        names = [self.pool.var("w%d_%d_%d" % (ordinal, i, j), 0, m)
                 for j in range(1, b + 1)]
        if fresh:
            # Canonical padding: nulls only ever trail the word.
            self.extra.append(_eq(names[b - 1], "0"))
            for j in range(b - 1):
                self.extra.append(_implies(_eq(names[j], "0"),
                                           _eq(names[j + 1], "0")))
            if key[1] == "id":
                # A presence bit, pinned to 1 by any rule selector that
                # constrains this id; positions the run never really
                # visits leave it 0 and duck the distinctness clause.
                pr = self.pool.var("pr%d_%d" % (ordinal, i), 0, 1)
                self.id_positions.setdefault(key[0], []).append(
                    (i, names, pr))
        return names

    def _id_presence(self, key, i):
        return self.pool.var("pr%d_%d" % (self.group_ord[key], i), 0, 1)

    # -- per-position variables --------------------------------------

    def _q(self, i):
        return self.pool.var("q%d" % i, 0, len(self.scode) - 1)

    def _ns(self, i):
        return self.pool.var("ns%d" % i, 0, len(self.ns_code) - 1)

    def _ele(self, i):
        return self.pool.var("e%d" % i, 0, len(self.ele_code) - 1)

    def _flag(self, i, name):
        return self.pool.var("p%d_%s" % (i, name), 0, 1)

    def _x(self, i):
        return self.pool.var("x%d" % i, 1)

    def _y(self, i):
        return self.pool.var("y%d" % i, 1)

    def _xt(self, i, tc):
        return self.pool.var("x%d_t%d" % (i, tc), 0)

    def _yt(self, i, tc):
        return self.pool.var("y%d_t%d" % (i, tc), 0)

    def _is_type(self, i, pair):
        return _and([_eq(self._ns(i), _num(self.ns_code[pair[0]])),
                     _eq(self._ele(i), _num(self.ele_code[pair[1]]))])

    # -- node selector encoding --------------------------------------

    def _type_formula(self, sel, i):
        parts = []
        tp = sel.type_part
        if tp.ns is not None:
            parts.append(_eq(self._ns(i), _num(self.ns_code[tp.ns])))
        if tp.ele is not None:
            parts.append(_eq(self._ele(i), _num(self.ele_code[tp.ele])))
        for cond in sel.conditions:
            if isinstance(cond, Negation) and isinstance(cond.inner,
                                                         TypePart):
                neg = cond.inner
                eqs = []
                if neg.ns is not None:
                    if neg.ns not in self.ns_code:
                        continue  # outside the universe: never equal
                    eqs.append(_eq(self._ns(i), _num(self.ns_code[neg.ns])))
                if neg.ele is not None:
                    if neg.ele not in self.ele_code:
                        continue
                    eqs.append(_eq(self._ele(i),
                                   _num(self.ele_code[neg.ele])))
                parts.append(_not(_and(eqs)))
        return _and(parts)

    def _positional_formula(self, cond, positive, i):
        kind, a, b = cond.kind, cond.a, cond.b
        if i == 0:
            return "false" if positive else "true"
        x = self._x(i)
        y = self._y(i)
        if kind == "nth-child":
            if positive:
                nn = self.pool.fresh("en", lo=0)
                return _eq(x, _plus("(* %s %s)" % (_num(a), nn), _num(b)))
            _, f = nomatch(x, a, b, pool=self.pool)
            return f
        if kind == "nth-last-child":
            if positive:
                nn = self.pool.fresh("en", lo=0)
                return _eq(y, _plus("(* %s %s)" % (_num(a), nn), _num(b)))
            _, f = nomatch(y, a, b, pool=self.pool)
            return f
        if kind == "only-child":
            both = _and([_eq(x, "1"), _eq(y, "1")])
            return both if positive else _not(both)
        # Of-type kinds: resolved per candidate type of the node.
        parts = []
        for tc, pair in enumerate(self.universe):
            is_t = self._is_type(i, pair)
            if kind == "nth-of-type":
                term = _plus(self._xt(i, tc), "1")
                if positive:
                    nn = self.pool.fresh("en", lo=0)
                    body = _eq(term, _plus("(* %s %s)" % (_num(a), nn),
                                           _num(b)))
                else:
                    _, body = nomatch(term, a, b, pool=self.pool)
            elif kind == "nth-last-of-type":
                term = _plus(self._yt(i, tc), "1")
                if positive:
                    nn = self.pool.fresh("en", lo=0)
                    body = _eq(term, _plus("(* %s %s)" % (_num(a), nn),
                                           _num(b)))
                else:
                    _, body = nomatch(term, a, b, pool=self.pool)
            elif kind == "only-of-type":
                body = _and([_eq(self._xt(i, tc), "0"),
                             _eq(self._yt(i, tc), "0")])
                if not positive:
                    body = _not(body)
            else:
                raise ValueError("unknown positional %r" % kind)
            if positive:
                parts.append(_and([is_t, body]))
            else:
                parts.append(_implies(is_t, body))
        return _or(parts) if positive else _and(parts)

    def _group_formula(self, key, cons, i):
        w = self._wvars(key, i)
        codes = self.group_codes[key]
        space = codes.get(" ")
        dash = codes.get("-")
        parts = []
        if key[1] == "id":
            parts.append(_eq(self._id_presence(key, i), "1"))
        for op, value, positive in cons:
            f = _op_word_formula(op, value, w, codes, space, dash)
            parts.append(f if positive else _not(f))
        return _and(parts)

    def _sigma_formula(self, sel, i):
        info = classify_selector(sel)
        if _sel_unusable(info):
            return "false"
        parts = [self._type_formula(sel, i)]
        for name in sorted(info.pos_pseudo):
            if name == "root":
                if i != 0:
                    return "false"
            else:
                parts.append(_eq(self._flag(i, name), "1"))
        for name in sorted(info.neg_pseudo):
            if name == "root":
                if i == 0:
                    return "false"
            else:
                parts.append(_eq(self._flag(i, name), "0"))
        for cond, positive in info.positionals:
            parts.append(self._positional_formula(cond, positive, i))
        for key in sorted(info.groups):
            parts.append(self._group_formula(key, info.groups[key], i))
        return _and(parts)

    # -- direction bookkeeping ---------------------------------------

    def _move_formula(self, t, i):
        d = t.direction
        if d == LAST:
            return "true"
        if d == CHILD:
            parts = [_eq(self._flag(i, "empty"), "0"),
                     _eq(self._x(i + 1), "1")]
            if self.track:
                for tc in range(len(self.universe)):
                    parts.append(_eq(self._xt(i + 1, tc), "0"))
            return _and(parts)
        if i == 0:
            return "false"  # the root has no siblings
        if d == NEIGHBOUR:
            parts = [_eq(self._x(i + 1), _plus(self._x(i), "1")),
                     _eq(self._y(i), _plus(self._y(i + 1), "1"))]
            if self.track:
                for tc, pair in enumerate(self.universe):
                    old = self._is_type(i, pair)
                    new = self._is_type(i + 1, pair)
                    step = _eq(self._xt(i + 1, tc),
                               _plus(self._xt(i, tc), "1"))
                    keep = _eq(self._xt(i + 1, tc), self._xt(i, tc))
                    parts.append(_implies(old, step))
                    parts.append(_implies(_not(old), keep))
                    ystep = _eq(self._yt(i, tc),
                                _plus(self._yt(i + 1, tc), "1"))
                    ykeep = _eq(self._yt(i, tc), self._yt(i + 1, tc))
                    parts.append(_implies(new, ystep))
                    parts.append(_implies(_not(new), ykeep))
            return _and(parts)
        if d == SIBLING:
            dl = self.pool.fresh("dl", lo=1)
            parts = [_eq(self._x(i + 1), _plus(self._x(i), dl)),
                     _eq(self._y(i), _plus(self._y(i + 1), dl))]
            if self.track:
                contribs = []
                for tc, pair in enumerate(self.universe):
                    ct = self.pool.fresh("ct", lo=0)
                    ut = self.pool.fresh("ut", lo=0, hi=1)
                    vt = self.pool.fresh("vt", lo=0, hi=1)
                    old = self._is_type(i, pair)
                    new = self._is_type(i + 1, pair)
                    parts.append(_implies(old, _eq(ut, "1")))
                    parts.append(_implies(_not(old), _eq(ut, "0")))
                    parts.append(_implies(new, _eq(vt, "1")))
                    parts.append(_implies(_not(new), _eq(vt, "0")))
                    parts.append(_eq(self._xt(i + 1, tc),
                                     _plus(self._xt(i, tc), ct, ut)))
                    parts.append(_eq(self._yt(i, tc),
                                     _plus(self._yt(i + 1, tc), ct, vt)))
                    contribs.extend([ct, ut])
                parts.append(_eq(_plus(*contribs), dl))
            return _and(parts)
        raise ValueError("unknown direction %r" % d)

    # -- assembly ----------------------------------------------------

    def encode(self) -> IlaFormula:
        n = self.n
        a = self.a
        asserts = []
        q0c = _num(self.scode[a.q0])
        qfc = _num(self.scode[a.qf])
        asserts.append(_eq(self._q(0), q0c))

        reach = [{a.q0}]
        for i in range(n):
            nxt = {t.target for t in self.trans if t.source in reach[i]}
            if a.qf in reach[i]:
                nxt.add(a.qf)
            reach.append(nxt)

        for i in range(n):
            disjuncts = []
            for t in self.trans:
                if t.source not in reach[i]:
                    continue
                sigma = self._sigma_formula(t.sel, i)
                if sigma == "false":
                    continue
                move = self._move_formula(t, i)
                if move == "false":
                    continue
                disjuncts.append(_and([
                    _eq(self._q(i), _num(self.scode[t.source])),
                    _eq(self._q(i + 1), _num(self.scode[t.target])),
                    sigma, move]))
            if a.qf in reach[i]:
                disjuncts.append(_and([_eq(self._q(i), qfc),
                                       _eq(self._q(i + 1), qfc)]))
            asserts.append(_or(disjuncts))
        asserts.append(_eq(self._q(n), qfc))

        # Sibling-count consistency under per-type tracking.
        if self.track:
            for i in range(1, n + 1):
                if "x%d" % i not in self.pool._seen:
                    continue
                xs = [self._xt(i, tc) for tc in range(len(self.universe))]
                ys = [self._yt(i, tc) for tc in range(len(self.universe))]
                asserts.append(_eq(self._x(i), _plus("1", *xs)))
                asserts.append(_eq(self._y(i), _plus("1", *ys)))

        # Pseudo-class exclusivity.
        for i in range(n + 1):
            for one, other in (("link", "visited"), ("enabled", "disabled")):
                if ("p%d_%s" % (i, one) in self.pool._seen
                        and "p%d_%s" % (i, other) in self.pool._seen):
                    asserts.append(_not(_and([
                        _eq(self._flag(i, one), "1"),
                        _eq(self._flag(i, other), "1")])))
        targets = [i for i in range(n + 1)
                   if "p%d_target" % i in self.pool._seen]
        for ai in range(len(targets)):
            for bi in range(ai + 1, len(targets)):
                asserts.append(_not(_and([
                    _eq(self._flag(targets[ai], "target"), "1"),
                    _eq(self._flag(targets[bi], "target"), "1")])))

        # Distinct nodes of one namespace never share an id value.
        for ns in sorted(self.id_positions):
            vecs = self.id_positions[ns]
            for ai in range(len(vecs)):
                for bi in range(ai + 1, len(vecs)):
                    _, wa, pa = vecs[ai]
                    _, wb, pb = vecs[bi]
                    diff = [_not(_eq(wa[j], wb[j]))
                            for j in range(min(len(wa), len(wb)))]
                    asserts.append(_or([_eq(pa, "0"), _eq(pb, "0"),
                                        _or(diff)]))

        return IlaFormula(tuple(self.pool.names),
                          tuple(self.pool.domain + self.extra + asserts))


def encode_nonemptiness(a: CssAutomaton, summary: Optional[TypeSummary]
                        = None, bound: Optional[int] = None) -> IlaFormula:
    """Encode ``L(a) != {}`` as one linear-integer-arithmetic formula.

    :param summary: type universe; computed from ``a`` when None.
    :param bound: override for every attribute vector length; the
        default derives a tight per-group bound from shortest witness
        words (ID groups get headroom for pairwise-distinct choices).
    :returns: :class:`IlaFormula`; satisfiable iff some document tree
        has a node accepted by ``a``.
    """
    return _Encoder(a, summary, bound).encode()


# ---------------------------------------------------------------------------
# Solver access


@dataclass
class EmptinessConfig:
    """Knobs shared by the emptiness backends.

    :param backend: "optimized", "full", or "both" ("both" runs the two
        and raises if they ever disagree).
    :param timeout: per-query wall clock budget in seconds.
    :param int_bound: variable magnitude cap for the bundled solver.
    :param solver_cmd: external solver command fed one query on stdin;
        its first output line must be ``sat`` or ``unsat``.  None keeps
        solving in-process.
    :param emit_smt_dir: when set, every emitted query is also written
        there under a stable sequential name for offline replay.
    """
    backend: str = "optimized"
    timeout: Optional[float] = None
    int_bound: int = 10 ** 6
    solver_cmd: Optional[Tuple[str, ...]] = None
    emit_smt_dir: Optional[str] = None


class SolverClient:
    """Answers satisfiability queries per an :class:`EmptinessConfig`."""

    def __init__(self, cfg: Optional[EmptinessConfig] = None):
        self.cfg = cfg if cfg is not None else EmptinessConfig()
        self._seq = itertools.count()

    def solve(self, f: IlaFormula, tag: str = "query") -> bool:
        if self.cfg.emit_smt_dir is not None:
            self._dump(emit_smtlib(f), tag)
        if self.cfg.solver_cmd is not None:
            return self._solve_subprocess(f)
        return self._solve_inprocess(f)

    def _dump(self, text, tag):
        os.makedirs(self.cfg.emit_smt_dir, exist_ok=True)
        path = os.path.join(self.cfg.emit_smt_dir,
                            "%s%05d.smt2" % (tag, next(self._seq)))
        with open(path, "w") as fh:
            fh.write(text)

    def _solve_inprocess(self, f: IlaFormula) -> bool:
        status, _model = lia.solve(
            lia.parse_sexprs(" ".join(f.assertions)),
            set(f.variables), int_bound=self.cfg.int_bound,
            time_limit=self.cfg.timeout)
        if status == "sat":
            return True
        if status == "unsat":
            return False
        raise SolverFailure("bundled solver answered %r" % status)

    def _solve_subprocess(self, f: IlaFormula) -> bool:
        try:
            proc = subprocess.run(
                list(self.cfg.solver_cmd), input=emit_smtlib(f),
                capture_output=True, text=True, timeout=self.cfg.timeout)
        except (subprocess.TimeoutExpired, OSError) as exc:
            raise SolverFailure("external solver failed: %s" % exc)
        lines = proc.stdout.strip().splitlines()
        first = lines[0].strip() if lines else ""
        if first == "sat":
            return True
        if first == "unsat":
            return False
        raise SolverFailure("external solver answered %r" % first)


def check_nonempty_full(a: CssAutomaton,
                        cfg: Optional[EmptinessConfig] = None,
                        client: Optional[SolverClient] = None) -> bool:
    """Decide ``L(a) != {}`` through the monolithic run encoding."""
    if client is None:
        client = SolverClient(cfg)
    return client.solve(encode_nonemptiness(a), tag="full")


# ---------------------------------------------------------------------------
# The optimized backward walk
#
# Starting from the final state, un-apply transitions one at a time.
# Each un-applied non-final step introduces one concrete new node (the
# predecessor in the run) whose selector is checked immediately;
# whatever cannot be decided on the spot — sibling-position systems for
# the row being closed, and document-wide ID distinctness at the very
# end — is carried symbolically.  Most branches die on cheap structural
# guards before any solver runs.


@dataclass(frozen=True)
class WorklistItem:
    """One backward-walk configuration (hashable for the done set).

    ``index`` is the remaining step budget; ``cur`` names the current
    node and ``row`` its sibling row (ints used to mint variable
    names).  ``position_constraints``/``row_vars`` describe only the
    still-open row.  The ``node_*`` flags summarize what the current
    node's selectors demanded, so root candidacy is a field check.
    """
    state: str
    must_root: bool
    has_siblings: bool
    seen_target: bool
    used_loops: FrozenSet[Tran]
    id_constraints: FrozenSet[Tuple[str, int, tuple]]
    position_constraints: FrozenSet[str]
    index: int
    row: int
    cur: int
    row_vars: FrozenSet[Tuple[str, Optional[int], Optional[int]]]
    row_has_positional: bool
    node_positive_positional: bool
    node_nonroot: bool


class _Walk:
    def __init__(self, a: CssAutomaton, client: SolverClient):
        self.a = a
        self.trans = a.sorted_trans()
        self.n = len(self.trans)
        self.client = client
        self.track = _needs_type_tracking(a)
        if self.track:
            self.summary = compute_type_summary(a)
            self.universe = self.summary.universe()
            self.ns_code = {ns: i for i, ns in enumerate(self.summary.nss)}
            self.ele_code = {e: i for i, e in enumerate(self.summary.eles)}
        self.by_target: Dict[str, List[Tran]] = {}
        for t in self.trans:
            self.by_target.setdefault(t.target, []).append(t)
        self._group_sat_memo: Dict[tuple, bool] = {}
        self._words_memo: Dict[Tuple[tuple, int], Tuple[str, ...]] = {}
        self._sdr_memo: Dict[tuple, bool] = {}
        self._row_memo: Dict[tuple, bool] = {}

    # -- leaf decision procedures ------------------------------------

    def _group_sat(self, cons) -> bool:
        hit = self._group_sat_memo.get(cons)
        if hit is None:
            hit = solve_attr_set(cons) is not None
            self._group_sat_memo[cons] = hit
        return hit

    def _attr_words(self, cons, k):
        """Up to ``k`` shortest words satisfying ``cons`` (memoized)."""
        hit = self._words_memo.get((cons, k))
        if hit is None:
            words: List[str] = []
            w = solve_attr_set(cons, distinct_from=words)
            while w is not None and len(words) < k:
                words.append(w)
                w = solve_attr_set(cons, distinct_from=words)
            hit = tuple(words)
            self._words_memo[(cons, k)] = hit
        return hit

    def _ids_ok(self, id_constraints) -> bool:
        """Can every id-bearing node get a distinct satisfying value?

        Per namespace this is a system-of-distinct-representatives
        question; if one exists at all, one exists among each set's
        ``k`` shortest words (``k`` = number of nodes), so a bipartite
        matching over those candidates decides it.
        """
        by_ns: Dict[str, List[tuple]] = {}
        for ns, _pos, cons in id_constraints:
            by_ns.setdefault(ns, []).append(cons)
        for ns in sorted(by_ns):
            conss = sorted(by_ns[ns], key=repr)
            key = (ns, tuple(conss))
            hit = self._sdr_memo.get(key)
            if hit is None:
                hit = self._match_distinct(conss)
                self._sdr_memo[key] = hit
            if not hit:
                return False
        return True

    def _match_distinct(self, conss) -> bool:
        k = len(conss)
        cand = [self._attr_words(c, k) for c in conss]
        owner: Dict[str, int] = {}

        def assign(i, visited):
            for w in cand[i]:
                if w in visited:
                    continue
                visited.add(w)
                j = owner.get(w)
                if j is None or assign(j, visited):
                    owner[w] = i
                    return True
            return False

        return all(assign(i, set()) for i in range(k))

    def _solve_row(self, constraints, variables, pins) -> bool:
        key = (constraints, variables, tuple(pins))
        hit = self._row_memo.get(key)
        if hit is not None:
            return hit
        pool = VarPool()
        for name, lo, hi in sorted(variables):
            pool.var(name, lo, hi)
        asserts = tuple(pool.domain) + tuple(sorted(constraints)) \
            + tuple(pins)
        hit = self.client.solve(IlaFormula(tuple(pool.names), asserts),
                                tag="row")
        self._row_memo[key] = hit
        return hit

    # -- per-node constraint synthesis -------------------------------

    def _is_type(self, p, pair):
        return _and([_eq("ns%d" % p, _num(self.ns_code[pair[0]])),
                     _eq("e%d" % p, _num(self.ele_code[pair[1]]))])

    def _node_defaults(self, p, row):
        """Declare node ``p``'s row variables and their ties."""
        varl = [("x%d" % p, 1, None), ("tot%d" % row, 1, None)]
        forms = ["(<= x%d tot%d)" % (p, row)]
        if self.track:
            varl.append(("ns%d" % p, 0, len(self.ns_code) - 1))
            varl.append(("e%d" % p, 0, len(self.ele_code) - 1))
            xs = []
            tots = []
            for tc, pair in enumerate(self.universe):
                xt = "x%d_t%d" % (p, tc)
                tt = "tot%d_t%d" % (row, tc)
                varl.append((xt, 0, None))
                varl.append((tt, 0, None))
                xs.append(xt)
                tots.append(tt)
                is_t = self._is_type(p, pair)
                forms.append(_implies(is_t,
                                      "(<= (+ %s 1) %s)" % (xt, tt)))
                forms.append(_implies(_not(is_t), "(<= %s %s)" % (xt, tt)))
            forms.append(_eq("x%d" % p, _plus("1", *xs)))
            forms.append(_eq("tot%d" % row, _plus(*tots)))
        return forms, varl

    def _type_formula(self, sel, p):
        """Universe-coded type constraint (tracking mode only)."""
        parts = []
        tp = sel.type_part
        if tp.ns is not None:
            parts.append(_eq("ns%d" % p, _num(self.ns_code[tp.ns])))
        if tp.ele is not None:
            parts.append(_eq("e%d" % p, _num(self.ele_code[tp.ele])))
        for cond in sel.conditions:
            if isinstance(cond, Negation) and isinstance(cond.inner,
                                                         TypePart):
                neg = cond.inner
                eqs = []
                if neg.ns is not None:
                    if neg.ns not in self.ns_code:
                        continue
                    eqs.append(_eq("ns%d" % p, _num(self.ns_code[neg.ns])))
                if neg.ele is not None:
                    if neg.ele not in self.ele_code:
                        continue
                    eqs.append(_eq("e%d" % p, _num(self.ele_code[neg.ele])))
                parts.append(_not(_and(eqs)))
        return _and(parts)

    def _positional_formulas(self, info, sel, p, row):
        """Constraints selector ``sel`` puts on node ``p``'s position."""
        forms = []
        varl = []
        counter = itertools.count()

        def fresh(stem, lo=None, hi=None):
            name = "%s_%d_%d" % (stem, p, next(counter))
            varl.append((name, lo, hi))
            return name

        x = "x%d" % p
        tot = "tot%d" % row
        for cond, positive in info.positionals:
            kind, a, b = cond.kind, cond.a, cond.b
            if kind == "nth-child":
                if positive:
                    nn = fresh("en", lo=0)
                    forms.append(_eq(x, _plus("(* %s %s)" % (_num(a), nn),
                                              _num(b))))
                else:
                    extra, f = nomatch(x, a, b,
                                       suffix="_%d_%d" % (p, next(counter)))
                    varl.extend((v, None, None) for v in extra)
                    forms.append(f)
            elif kind == "nth-last-child":
                pos_from_end = "(+ (- %s %s) 1)" % (tot, x)
                if positive:
                    nn = fresh("en", lo=0)
                    forms.append(_eq(pos_from_end,
                                     _plus("(* %s %s)" % (_num(a), nn),
                                           _num(b))))
                else:
                    extra, f = nomatch(pos_from_end, a, b,
                                       suffix="_%d_%d" % (p, next(counter)))
                    varl.extend((v, None, None) for v in extra)
                    forms.append(f)
            elif kind == "only-child":
                both = _and([_eq(x, "1"), _eq(tot, "1")])
                forms.append(both if positive else _not(both))
            else:
                parts = []
                for tc, pair in enumerate(self.universe):
                    is_t = self._is_type(p, pair)
                    xt = "x%d_t%d" % (p, tc)
                    tt = "tot%d_t%d" % (row, tc)
                    if kind == "nth-of-type":
                        term = "(+ %s 1)" % xt
                    elif kind == "nth-last-of-type":
                        term = "(- %s %s)" % (tt, xt)
                    if kind == "only-of-type":
                        body = _and([_eq(xt, "0"), _eq(tt, "1")])
                        if not positive:
                            body = _not(body)
                    elif positive:
                        nn = fresh("en", lo=0)
                        body = _eq(term, _plus("(* %s %s)" % (_num(a), nn),
                                               _num(b)))
                    else:
                        extra, body = nomatch(
                            term, a, b, suffix="_%d_%d" % (p, next(counter)))
                        varl.extend((v, None, None) for v in extra)
                    if positive:
                        parts.append(_and([is_t, body]))
                    else:
                        parts.append(_implies(is_t, body))
                forms.append(_or(parts) if positive else _and(parts))
        if self.track:
            tf = self._type_formula(sel, p)
            if tf != "true":
                forms.append(tf)
        return forms, varl

    # -- the walk itself ---------------------------------------------

    def run(self) -> bool:
        init = WorklistItem(
            state=self.a.qf, must_root=False, has_siblings=False,
            seen_target=False, used_loops=frozenset(),
            id_constraints=frozenset(), position_constraints=frozenset(),
            index=self.n, row=self.n, cur=self.n, row_vars=frozenset(),
            row_has_positional=False, node_positive_positional=False,
            node_nonroot=False)
        stack = [init]
        done = {init}
        while stack:
            item = stack.pop()
            if item.state == self.a.q0 and self._accept(item):
                return True
            if item.index < 1:
                continue
            for t in self.by_target.get(item.state, ()):
                nxt = self._step(item, t)
                if nxt is not None and nxt not in done:
                    done.add(nxt)
                    stack.append(nxt)
        return False

    def _accept(self, item: WorklistItem) -> bool:
        # The current node must be placeable at the document root: no
        # known siblings, no positive positional demands, not already
        # marked non-root.  Negated positionals hold at the root
        # vacuously, so the open row needs no solving.
        if item.has_siblings or item.node_positive_positional \
                or item.node_nonroot:
            return False
        return self._ids_ok(item.id_constraints)

    def _step(self, item: WorklistItem, t: Tran) -> Optional[WorklistItem]:
        d = t.direction
        if t.is_loop() and t in item.used_loops:
            return None
        if item.must_root and d != LAST:
            return None
        info = classify_selector(t.sel)
        if _sel_unusable(info):
            return None
        for cons in info.groups.values():
            if not self._group_sat(cons):
                return None
        new_has_sib = d in (NEIGHBOUR, SIBLING) \
            or (d == LAST and item.has_siblings)
        if "root" in info.pos_pseudo and new_has_sib:
            return None
        if "target" in info.pos_pseudo and item.seen_target:
            return None
        if d == CHILD and "empty" in info.pos_pseudo:
            return None

        sigma_positive_positional = any(pos for _c, pos in info.positionals)
        sigma_has_positional = bool(info.positionals)
        p = item.cur if d == LAST else item.index - 1
        row = p if d == CHILD else item.row

        ids = set(item.id_constraints)
        for key, cons in info.groups.items():
            if key[1] == "id":
                ids.add((key[0], p, cons))

        if d == CHILD and item.row_has_positional:
            pins = [_eq("x%d" % item.cur, "1")]
            if self.track:
                for tc in range(len(self.universe)):
                    pins.append(_eq("x%d_t%d" % (item.cur, tc), "0"))
            if not self._solve_row(item.position_constraints,
                                   item.row_vars, pins):
                return None

        forms, varl = self._node_defaults(p, row)
        pf, pv = self._positional_formulas(info, t.sel, p, row)
        forms.extend(pf)
        varl.extend(pv)

        if d == NEIGHBOUR:
            forms.append(_eq("x%d" % item.cur, "(+ x%d 1)" % p))
            if self.track:
                for tc, pair in enumerate(self.universe):
                    is_t = self._is_type(p, pair)
                    step = _eq("x%d_t%d" % (item.cur, tc),
                               "(+ x%d_t%d 1)" % (p, tc))
                    keep = _eq("x%d_t%d" % (item.cur, tc),
                               "x%d_t%d" % (p, tc))
                    forms.append(_implies(is_t, step))
                    forms.append(_implies(_not(is_t), keep))
        elif d == SIBLING:
            dl = "dl%d" % p
            varl.append((dl, 1, None))
            forms.append(_eq("x%d" % item.cur, "(+ x%d %s)" % (p, dl)))
            if self.track:
                deltas = []
                for tc, pair in enumerate(self.universe):
                    xo = "x%d_t%d" % (p, tc)
                    xn = "x%d_t%d" % (item.cur, tc)
                    forms.append("(<= %s %s)" % (xo, xn))
                    forms.append(_implies(self._is_type(p, pair),
                                          "(<= (+ %s 1) %s)" % (xo, xn)))
                    deltas.append("(- %s %s)" % (xn, xo))
                forms.append(_eq(_plus(*deltas), dl))

        if d == LAST:
            constraints = item.position_constraints | set(forms)
            variables = item.row_vars | set(varl)
            return WorklistItem(
                state=t.source,
                must_root=item.must_root or "root" in info.pos_pseudo,
                has_siblings=new_has_sib,
                seen_target=item.seen_target
                or "target" in info.pos_pseudo,
                used_loops=self._loops_after(item, t),
                id_constraints=frozenset(ids),
                position_constraints=frozenset(constraints),
                index=item.index - 1, row=row, cur=p,
                row_vars=frozenset(variables),
                row_has_positional=item.row_has_positional
                or sigma_has_positional,
                node_positive_positional=item.node_positive_positional
                or sigma_positive_positional,
                node_nonroot=item.node_nonroot
                or "root" in info.neg_pseudo)
        if d == CHILD:
            constraints = frozenset(forms)
            variables = frozenset(varl)
            row_pos = sigma_has_positional
        else:
            constraints = item.position_constraints | set(forms)
            variables = item.row_vars | set(varl)
            row_pos = item.row_has_positional or sigma_has_positional
        return WorklistItem(
            state=t.source,
            must_root="root" in info.pos_pseudo,
            has_siblings=new_has_sib,
            seen_target=item.seen_target or "target" in info.pos_pseudo,
            used_loops=self._loops_after(item, t),
            id_constraints=frozenset(ids),
            position_constraints=constraints,
            index=item.index - 1, row=row, cur=p,
            row_vars=variables, row_has_positional=row_pos,
            node_positive_positional=sigma_positive_positional,
            node_nonroot="root" in info.neg_pseudo)

    @staticmethod
    def _loops_after(item: WorklistItem, t: Tran):
        if t.is_loop():
            return item.used_loops | {t}
        return frozenset()


def check_nonempty_optimized(a: CssAutomaton,
                             cfg: Optional[EmptinessConfig] = None,
                             client: Optional[SolverClient] = None) -> bool:
    """Decide ``L(a) != {}`` by the backward worklist walk."""
    if client is None:
        client = SolverClient(cfg)
    return _Walk(a, client).run()


def check_nonempty(a: CssAutomaton,
                   cfg: Optional[EmptinessConfig] = None) -> bool:
    """Decide ``L(a) != {}`` with the configured backend."""
    if cfg is None:
        cfg = EmptinessConfig()
    if cfg.backend == "optimized":
        return check_nonempty_optimized(a, cfg)
    if cfg.backend == "full":
        return check_nonempty_full(a, cfg)
    if cfg.backend == "both":
        fast = check_nonempty_optimized(a, cfg)
        slow = check_nonempty_full(a, cfg)
        if fast != slow:
            raise RuntimeError(
                "emptiness backends disagree on %s: optimized=%s full=%s"
                % (a, fast, slow))
        return fast
    raise ValueError("unknown backend %r" % cfg.backend)

"""Tree-walking automata over document trees.

An automaton has transitions ``(source, direction, node_selector,
target)`` with four directions: ``child`` (move to leftmost child),
``neighbour`` (move one sibling right), ``sibling`` (move one or more
siblings right) and ``last`` (read the subject node and stop).  The node
selector is checked at the *current* node before moving.

Validity conditions (checked by :func:`validate_automaton`):

1. the non-self-loop transition graph is acyclic (states descend a
   partial order);
2. ``sibling`` transitions are self-loops;
3. self-loops are labelled ``*`` (any) and are never ``neighbour``;
4. a transition targets the final state iff its direction is ``last``;
5. the final state has no outgoing transitions.

:func:`compile_selector` builds an automaton accepting exactly the
nodes a selector matches; :func:`intersect` builds the product
automaton, so selector intersection reduces to automaton emptiness.
"""

from collections import deque
from dataclasses import dataclass
from typing import FrozenSet, Tuple

from . import dom
from .selector import (
    CompoundSelector, Negation, Selector, TypePart,
    CHILD as C_CHILD, DESCENDANT, NEIGHBOUR as C_NEIGHBOUR,
    SIBLING as C_SIBLING, normalize,
)

CHILD = "child"
NEIGHBOUR = "neighbour"
SIBLING = "sibling"
LAST = "last"

ANY = CompoundSelector(TypePart(None, None), ())
# A node selector that matches nothing (incompatible type parts).
NEVER = CompoundSelector(TypePart(None, None),
                         (Negation(TypePart(None, None)),))


def is_any(sel):
    return sel.type_part == TypePart(None, None) and not sel.conditions


@dataclass(frozen=True)
class Tran:
    source: str
    direction: str
    sel: CompoundSelector
    target: str

    def is_loop(self):
        return self.source == self.target

    def __str__(self):
        return "%s --%s:%s--> %s" % (self.source, self.direction,
                                     self.sel, self.target)


@dataclass(frozen=True)
class CssAutomaton:
    states: FrozenSet[str]
    trans: FrozenSet[Tran]
    q0: str
    qf: str

    def outgoing(self, state):
        return sorted((t for t in self.trans if t.source == state),
                      key=str)

    def sorted_trans(self):
        return sorted(self.trans, key=str)


def compile_selector(selector):
    """Compile a selector into an equivalent automaton.

    The selector is normalized first; a pseudo-element tag does not
    affect the automaton (tags partition rules into channels upstream).

    :param selector: :class:`Selector`.
    :returns: :class:`CssAutomaton`.
    """
    sel = normalize(selector)
    parts = sel.parts
    n = len(parts)
    states = {"qf"}
    trans = set()

    def s(i):
        return "s%d" % i

    def mid(i):
        return "m%d" % i

    states.add(s(1))
    trans.add(Tran(s(1), CHILD, ANY, s(1)))
    trans.add(Tran(s(1), SIBLING, ANY, s(1)))
    for i in range(1, n):
        comb = sel.combinators[i - 1]
        sigma = parts[i - 1]
        states.add(s(i + 1))
        if comb == DESCENDANT:
            states.add(mid(i))
            trans.add(Tran(s(i), CHILD, sigma, s(i + 1)))
            trans.add(Tran(s(i), CHILD, sigma, mid(i)))
            trans.add(Tran(mid(i), CHILD, ANY, mid(i)))
            trans.add(Tran(mid(i), SIBLING, ANY, mid(i)))
            trans.add(Tran(mid(i), CHILD, ANY, s(i + 1)))
            trans.add(Tran(mid(i), NEIGHBOUR, ANY, s(i + 1)))
        elif comb == C_CHILD:
            states.add(mid(i))
            trans.add(Tran(s(i), CHILD, sigma, s(i + 1)))
            trans.add(Tran(s(i), CHILD, sigma, mid(i)))
            trans.add(Tran(mid(i), SIBLING, ANY, mid(i)))
            trans.add(Tran(mid(i), NEIGHBOUR, ANY, s(i + 1)))
        elif comb == C_NEIGHBOUR:
            trans.add(Tran(s(i), NEIGHBOUR, sigma, s(i + 1)))
        elif comb == C_SIBLING:
            states.add(mid(i))
            trans.add(Tran(s(i), NEIGHBOUR, sigma, s(i + 1)))
            trans.add(Tran(s(i), NEIGHBOUR, sigma, mid(i)))
            trans.add(Tran(mid(i), SIBLING, ANY, mid(i)))
            trans.add(Tran(mid(i), NEIGHBOUR, ANY, s(i + 1)))
        else:
            raise ValueError("unknown combinator %r" % comb)
    trans.add(Tran(s(n), LAST, parts[n - 1], "qf"))
    return CssAutomaton(frozenset(states), frozenset(trans), s(1), "qf")


# ---------------------------------------------------------------------------
# Node selector intersection


def intersect_node_selectors(s1, s2):
    """Conjunction of two node selectors.

    Merges the type parts (eight cases over wildcard/named namespace and
    element; incompatible names yield the never-matching ``:not(*)``)
    and unions the condition lists, first's order first.
    """
    t1, t2 = s1.type_part, s2.type_part
    if t1.ns is not None and t2.ns is not None and t1.ns != t2.ns:
        return NEVER
    if t1.ele is not None and t2.ele is not None and t1.ele != t2.ele:
        return NEVER
    ns = t1.ns if t1.ns is not None else t2.ns
    ele = t1.ele if t1.ele is not None else t2.ele
    conds = list(s1.conditions)
    for c in s2.conditions:
        if c not in conds:
            conds.append(c)
    return CompoundSelector(TypePart(ns, ele), tuple(conds))


def intersect(a1, a2):
    """Product automaton accepting the intersection of two automata.

    Same-direction transitions synchronize (``child``/``neighbour``/
    ``last`` conjoin their selectors; ``sibling`` self-loops pair up),
    and a ``neighbour`` on one side can ride the other side's
    ``sibling`` self-loop.  States outside a path from the initial pair
    to the final pair are pruned.

    :returns: :class:`CssAutomaton` (possibly with no transitions when
        the product has no accepting path skeleton).
    """
    # Strategy: BFS over reachable state pairs, generating synchronized
    # transitions; then keep only pairs co-reachable to the final pair.
    start = (a1.q0, a2.q0)
    final = (a1.qf, a2.qf)
    out1 = {}
    out2 = {}
    for t in a1.trans:
        out1.setdefault(t.source, []).append(t)
    for t in a2.trans:
        out2.setdefault(t.source, []).append(t)

    pair_trans = []
    seen = {start}
    queue = deque([start])
    while queue:
        q1, q2 = queue.popleft()
        ts1 = out1.get(q1, ())
        ts2 = out2.get(q2, ())
        produced = []
        for t1 in ts1:
            for t2 in ts2:
                if t1.direction == t2.direction:
                    if t1.direction == SIBLING:
                        # Both are any-labelled self-loops.
                        produced.append(((q1, q2), SIBLING, ANY, (q1, q2)))
                    else:
                        produced.append(((q1, q2), t1.direction,
                                         intersect_node_selectors(t1.sel,
                                                                  t2.sel),
                                         (t1.target, t2.target)))
                elif t1.direction == NEIGHBOUR and t2.direction == SIBLING:
                    produced.append(((q1, q2), NEIGHBOUR, t1.sel,
                                     (t1.target, q2)))
                elif t1.direction == SIBLING and t2.direction == NEIGHBOUR:
                    produced.append(((q1, q2), NEIGHBOUR, t2.sel,
                                     (q1, t2.target)))
        for src, d, sel, dst in produced:
            pair_trans.append((src, d, sel, dst))
            if dst not in seen:
                seen.add(dst)
                queue.append(dst)

    # Backward pruning: keep pairs that can reach the final pair.
    back = {}
    for src, _, _, dst in pair_trans:
        back.setdefault(dst, set()).add(src)
    keep = {final}
    queue = deque([final])
    while queue:
        cur = queue.popleft()
        for prev in back.get(cur, ()):
            if prev not in keep:
                keep.add(prev)
                queue.append(prev)
    keep.add(start)

    names = {}

    def name(pair):
        if pair not in names:
            if pair == final:
                names[pair] = "qf"
            elif pair == start:
                names[pair] = "u0"
            else:
                names[pair] = "u%d" % len(names)
        return names[pair]

    name(start)
    name(final)
    states = {name(start), name(final)}
    trans = set()
    for src, d, sel, dst in pair_trans:
        if src in keep and dst in keep:
            states.add(name(src))
            states.add(name(dst))
            trans.add(Tran(name(src), d, sel, name(dst)))
    return CssAutomaton(frozenset(states), frozenset(trans),
                        name(start), name(final))


# ---------------------------------------------------------------------------
# Runs and validation


def run_accepts(automaton, tree, pos):
    """Does the automaton accept node ``pos`` of ``tree``?

    Memoized breadth-first search over (state, position) pairs; every
    move strictly advances in document order, so the search space is
    finite without extra bookkeeping.
    """
    view = tree if isinstance(tree, dom.TreeView) else dom.TreeView(tree)
    out = {}
    for t in automaton.trans:
        out.setdefault(t.source, []).append(t)

    def sel_ok(sel, at):
        return dom.compound_matches(view, at, sel)

    start = (automaton.q0, ())
    seen = {start}
    queue = deque([start])
    while queue:
        state, at = queue.popleft()
        for t in out.get(state, ()):
            if t.direction == LAST:
                if at == pos and sel_ok(t.sel, at):
                    return True
                continue
            if not sel_ok(t.sel, at):
                continue
            nexts = []
            if t.direction == CHILD:
                cand = at + (1,)
                if view.has(cand):
                    nexts.append(cand)
            elif t.direction == NEIGHBOUR:
                if at:
                    cand = at[:-1] + (at[-1] + 1,)
                    if view.has(cand):
                        nexts.append(cand)
            elif t.direction == SIBLING:
                if at:
                    k = at[-1] + 1
                    while view.has(at[:-1] + (k,)):
                        nexts.append(at[:-1] + (k,))
                        k += 1
            for nxt in nexts:
                item = (t.target, nxt)
                if item not in seen:
                    seen.add(item)
                    queue.append(item)
    return False


def validate_automaton(automaton):
    """Check the five automaton validity conditions.

    :returns: list of violation strings; empty means valid.
    """
    out = []
    nonloop = {}
    for t in automaton.trans:
        if t.source == automaton.qf:
            out.append("final state has outgoing transition %s" % t)
        if (t.target == automaton.qf) != (t.direction == LAST):
            out.append("final-state/last mismatch on %s" % t)
        if t.is_loop():
            if t.direction == NEIGHBOUR:
                out.append("neighbour self-loop %s" % t)
            if t.direction == LAST:
                out.append("last self-loop %s" % t)
            if not is_any(t.sel):
                out.append("self-loop not labelled any: %s" % t)
        else:
            nonloop.setdefault(t.source, set()).add(t.target)
        if t.direction == SIBLING and not t.is_loop():
            out.append("sibling transition is not a self-loop: %s" % t)

    # Condition 1: non-self-loop graph must be acyclic.
    color = {}

    def dfs(u):
        color[u] = 1
        for v in nonloop.get(u, ()):
            if color.get(v) == 1:
                return False
            if color.get(v, 0) == 0 and not dfs(v):
                return False
        color[u] = 2
        return True

    for u in sorted(nonloop):
        if color.get(u, 0) == 0 and not dfs(u):
            out.append("cycle through non-self-loop transitions at %s" % u)
            break
    return out

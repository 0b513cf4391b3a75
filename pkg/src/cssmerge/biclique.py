"""Maximal bicliques and the orderable-biclique enumeration.

A biclique (X, Y) of the CSS-graph is a candidate merged rule: every
selector in X would carry every declaration in Y.  Whether the rule can
actually be inserted at position j depends on the edge order: the
declarations of Y must admit a total order consistent with every
ordered pair whose endpoints would have their last occurrence inside
the new rule.  This module enumerates the maximal bicliques, decides
that orderability question per position, orders a biclique's
properties, and builds the enumeration the Max-SAT encoding selects
from (including, per position, which bicliques first become
unorderable there).
"""

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from .graph import Edge


@dataclass(frozen=True)
class Biclique:
    """A complete bipartite subgraph (both sides nonempty)."""

    sels: FrozenSet[str]
    props: FrozenSet[str]

    def edges(self):
        return frozenset((s, p) for s in self.sels for p in self.props)

    def key(self):
        """Deterministic sort key (node texts) for reproducible runs."""
        return (tuple(sorted(self.sels)), tuple(sorted(self.props)))

    def __str__(self):
        return "({%s}, {%s})" % (",".join(sorted(self.sels)),
                                 ",".join(sorted(self.props)))


def make_biclique(sels, props):
    return Biclique(frozenset(sels), frozenset(props))


# ---------------------------------------------------------------------------
# Maximal biclique enumeration
#
# Strategy: maximal bicliques of a bipartite graph are exactly the
# formal concepts of the selector/property incidence relation with both
# sides nonempty, so we enumerate closed selector sets in lectic order
# (Ganter's NextClosure).  That yields every maximal biclique exactly
# once with polynomial delay, without materializing the subset lattice.


def enumerate_maximal_bicliques(graph):
    """All inclusion-maximal bicliques of ``graph``, sorted, no dups."""
    sels = sorted(graph.sels)
    props = sorted(graph.decls)
    pos = {s: k for k, s in enumerate(sels)}
    sel_adj = {s: set() for s in sels}
    prop_adj = {p: set() for p in props}
    for s, p in graph.edges:
        sel_adj[s].add(p)
        prop_adj[p].add(s)

    def common_props(xs):
        ys = set(props)
        for s in xs:
            ys &= sel_adj[s]
        return ys

    def common_sels(ys):
        xs = set(sels)
        for p in ys:
            xs &= prop_adj[p]
        return xs

    def closure(xs):
        return common_sels(common_props(xs))

    out = []

    def emit(xs):
        ys = common_props(xs)
        if xs and ys:
            out.append(make_biclique(xs, ys))

    if not sels:
        return out
    current = closure(set())
    emit(current)
    while True:
        nxt = None
        work = set(current)
        for i in reversed(range(len(sels))):
            s = sels[i]
            if s in work:
                work.discard(s)
            else:
                cand = closure(work | {s})
                if all(pos[t] >= i for t in cand - work):
                    nxt = cand
                    break
        if nxt is None:
            break
        emit(nxt)
        current = nxt
    out.sort(key=Biclique.key)
    return out


# ---------------------------------------------------------------------------
# Orderability
#
# EdgesLast(B, j) holds the edges of B whose last occurrence in the
# covering is at or before j: after inserting B there, those are the
# edges the new rule itself must realize last, so every edge-order pair
# (under transitive closure) between two of them turns into a
# requirement on the relative order of their two properties.  The
# biclique is orderable at j iff that induced property relation is
# acyclic.  Self-loops count as cycles: a chain between two EdgesLast
# edges of the same property necessarily passes through an edge outside
# the new rule, which no declaration order can fix.


class _OrderCtx:
    """Last-occurrence indices plus reachability in the order digraph."""

    def __init__(self, covering, order):
        self.idx: Dict[Edge, int] = {}
        for i, rule in enumerate(covering, 1):
            for s in rule.selectors:
                for p in rule.declarations:
                    self.idx[(s, p)] = i
        self.adj: Dict[Edge, List[Edge]] = {}
        self.node_set: Set[Edge] = set()
        for e1, e2 in order:
            self.adj.setdefault(e1, []).append(e2)
            self.node_set.add(e1)
            self.node_set.add(e2)
        self._reach: Dict[Edge, FrozenSet[Edge]] = {}

    def reach_from(self, e):
        """Edges reachable from ``e`` by one or more order steps."""
        hit = self._reach.get(e)
        if hit is not None:
            return hit
        seen: Set[Edge] = set()
        stack = list(self.adj.get(e, ()))
        while stack:
            nxt = stack.pop()
            if nxt in seen:
                continue
            seen.add(nxt)
            stack.extend(self.adj.get(nxt, ()))
        result = frozenset(seen)
        self._reach[e] = result
        return result


def _edges_last(b, j, ctx):
    return set(e for e in b.edges() if ctx.idx.get(e, j + 1) <= j)


def _prop_order(b, j, ctx):
    last = _edges_last(b, j, ctx)
    rel: Set[Tuple[str, str]] = set()
    for e1 in last & ctx.node_set:
        for e2 in ctx.reach_from(e1):
            if e2 in last:
                rel.add((e1[1], e2[1]))
    return rel


def _cand_nodes(b, j, ctx):
    last = _edges_last(b, j, ctx)
    cand: Set[str] = set()
    for e1 in last & ctx.node_set:
        for e2 in ctx.reach_from(e1):
            if e2 in last:
                cand.update((e1[0], e1[1], e2[0], e2[1]))
    return cand


def prop_order(biclique, j, covering, order):
    """The relation B's properties must respect when inserted at ``j``.

    Returns pairs ``(p1, p2)`` meaning p1 must be declared no later
    than p2; a self pair ``(p, p)`` means no order works at all.
    """
    return _prop_order(biclique, j, _OrderCtx(covering, order))


def find_cycle(rel):
    """A cycle in a binary relation, as a node list, or None.

    ``[p1, p2]`` is a two-cycle, and so on; ``[p]`` encodes a
    self-loop, reported only when no proper cycle exists (a proper
    cycle names the properties actually fighting over the order, which
    makes the better witness).
    """
    adj: Dict[str, List[str]] = {}
    selfloop = None
    for a, b in rel:
        if a == b:
            if selfloop is None or a < selfloop:
                selfloop = a
            continue
        adj.setdefault(a, []).append(b)
    color: Dict[str, int] = {}
    parent: Dict[str, Optional[str]] = {}

    for root in sorted(adj):
        if color.get(root):
            continue
        stack = [(root, iter(sorted(adj.get(root, ()))))]
        color[root] = 1
        parent[root] = None
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color.get(nxt) == 1:
                    # Walk parents back to nxt to spell out the cycle.
                    cycle = [node]
                    while cycle[-1] != nxt:
                        cycle.append(parent[cycle[-1]])
                    cycle.reverse()
                    return cycle
                if not color.get(nxt):
                    color[nxt] = 1
                    parent[nxt] = node
                    stack.append((nxt, iter(sorted(adj.get(nxt, ())))))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                stack.pop()
    if selfloop is not None:
        return [selfloop]
    return None


def is_orderable(biclique, j, covering, order):
    """Whether the biclique admits a valid declaration order at ``j``."""
    return find_cycle(prop_order(biclique, j, covering, order)) is None


def order_properties(biclique, j, covering, order):
    """A declaration order for the biclique, valid for insertion at ``j``.

    Topological sort of :func:`prop_order` with a deterministic
    tie-break: among the ready properties, the one whose first
    occurrence in the covering is earliest goes first.

    :raises ValueError: if the biclique is not orderable at ``j``.
    """
    rel = prop_order(biclique, j, covering, order)
    cycle = find_cycle(rel)
    if cycle is not None:
        raise ValueError("biclique not orderable at %d: cycle %s"
                         % (j, cycle))
    first_seen: Dict[str, int] = {}
    n = 0
    for rule in covering:
        for p in rule.declarations:
            if p not in first_seen:
                first_seen[p] = n
                n += 1

    def rank(p):
        return (first_seen.get(p, n), p)

    succ: Dict[str, Set[str]] = {p: set() for p in biclique.props}
    indeg: Dict[str, int] = {p: 0 for p in biclique.props}
    for a, b in rel:
        if a != b and b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1
    ready = sorted((p for p in biclique.props if not indeg[p]), key=rank)
    out: List[str] = []
    while ready:
        p = ready.pop(0)
        out.append(p)
        changed = False
        for q in succ[p]:
            indeg[q] -= 1
            if not indeg[q]:
                ready.append(q)
                changed = True
        if changed:
            ready.sort(key=rank)
    return tuple(out)


# ---------------------------------------------------------------------------
# Enumeration with forbidden positions


@dataclass
class OrderableEnumeration:
    """The biclique menu the encoding selects from.

    ``bicliques`` lists every biclique that is maximal and orderable at
    some position; ``first_unorderable`` maps a biclique's index to the
    smallest position where it stops being orderable (absent = valid
    everywhere).  Orderability is monotone downward, so biclique ``i``
    may be inserted exactly at positions ``0 .. position_cap(i, m)``.
    """

    bicliques: Tuple[Biclique, ...]
    first_unorderable: Dict[int, int]

    def forbidden_first(self, j):
        """Indices of bicliques first unorderable at position ``j``."""
        return tuple(i for i, fj in sorted(self.first_unorderable.items())
                     if fj == j)

    def forbidden(self, j):
        """Indices of all bicliques unorderable at position ``j``."""
        return tuple(i for i, fj in sorted(self.first_unorderable.items())
                     if fj <= j)

    def position_cap(self, i, m):
        """Largest legal insertion position for biclique ``i``."""
        return min(self.first_unorderable.get(i, m + 1) - 1, m)


def _remove(b, w):
    if w in b.sels:
        if len(b.sels) == 1:
            return None
        return Biclique(b.sels - {w}, b.props)
    if w in b.props:
        if len(b.props) == 1:
            return None
        return Biclique(b.sels, b.props - {w})
    return b


def _orderable(b, j, ctx):
    return find_cycle(_prop_order(b, j, ctx)) is None


def _orderable_subs(b, j, cand, ctx):
    # Strategy: only nodes feeding the property relation can break the
    # cycle, so try removing each of those alone; nodes whose single
    # removal fails are retried in pairs, triples, ... by recursing on
    # the failed set.  Nodes whose removal succeeded are not recursed
    # on -- removing more from an already-orderable biclique can only
    # produce non-maximal results.
    out: Set[Biclique] = set()
    failed: List[str] = []
    for w in sorted(cand):
        b2 = _remove(b, w)
        if b2 is None or b2 == b:
            continue
        if _orderable(b2, j, ctx):
            out.add(b2)
        else:
            failed.append(w)
    for w in failed:
        b2 = _remove(b, w)
        if b2 is None:
            continue
        out |= _orderable_subs(b2, j, set(failed) - {w}, ctx)
    return out


def build_enumeration(covering, graph, order, mode="fast"):
    """Build the :class:`OrderableEnumeration` for a trimmed covering.

    In ``"full"`` mode every maximal biclique that turns unorderable at
    some position is recorded there and replaced (for later positions)
    by its maximal orderable sub-bicliques, recursively.  In ``"fast"``
    mode bicliques unorderable anywhere are simply dropped -- cheaper,
    and exact on the common case of an empty or sparse edge order.
    """
    if mode not in ("fast", "full"):
        raise ValueError("unknown mode %r" % mode)
    ctx = _OrderCtx(covering, order)
    m = len(covering)
    maximal = enumerate_maximal_bicliques(graph)
    if mode == "fast":
        kept = [b for b in maximal if _orderable(b, m, ctx)]
        return OrderableEnumeration(tuple(kept), {})

    chosen: Dict[Biclique, object] = dict.fromkeys(maximal)
    first_un: Dict[Biclique, int] = {}
    # A biclique orderable at m is orderable at every smaller position,
    # so only the ones failing at m ever need per-position checks.
    pending = [b for b in chosen if not _orderable(b, m, ctx)]
    for j in range(1, m + 1):
        newly = [b for b in pending
                 if b not in first_un and not _orderable(b, j, ctx)]
        for b in newly:
            first_un[b] = j
            for b2 in sorted(_orderable_subs(b, j, _cand_nodes(b, j, ctx),
                                             ctx), key=Biclique.key):
                if b2 in chosen:
                    continue
                chosen[b2] = None
                if not _orderable(b2, m, ctx):
                    pending.append(b2)

    # Drop entries subsumed by a larger biclique that stays orderable
    # at least as long; the split recursion can emit such shadows.
    items = sorted(chosen, key=Biclique.key)
    edge_sets = {b: b.edges() for b in items}
    caps = {b: first_un.get(b, m + 2) for b in items}
    kept: List[Biclique] = []
    for b in items:
        shadowed = any(other is not b
                       and edge_sets[b] < edge_sets[other]
                       and caps[other] >= caps[b]
                       for other in items)
        if not shadowed:
            kept.append(b)
    return OrderableEnumeration(
        tuple(kept),
        {i: first_un[b] for i, b in enumerate(kept) if b in first_un})

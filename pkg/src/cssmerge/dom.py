"""Document-tree model: the ground-truth selector matching oracle.

A document tree is a finite, prefix-closed and preceding-sibling-closed
set of positions (tuples of ints, children numbered from 1; the root is
``()``), each carrying a label: namespace, element name, a partial
``(ns, attr) -> string`` map, and a set of pseudo-class flags.

:func:`matches` implements selector semantics directly over the tree and
is deliberately independent from the automata/solver pipeline, so the
two can be tested against each other.
"""

import functools
import itertools
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from .properties import is_shorthand_of
from .selector import (
    AttrTest, CompoundSelector, Negation, Positional, PseudoTest, Selector,
    TypePart, CHILD, DESCENDANT, NEIGHBOUR, SIBLING,
    normalize, specificity,
)


@dataclass(frozen=True)
class NodeLabel:
    """Label of one tree node.

    :param ns: namespace name.
    :param ele: element name.
    :param attrs: tuple of ``((ns, attr), value)`` pairs, sorted.
    :param pseudos: frozenset of pseudo-class names present on the node.
    """
    ns: str
    ele: str
    attrs: Tuple[Tuple[Tuple[str, str], str], ...] = ()
    pseudos: frozenset = frozenset()

    def attr_map(self):
        return dict(self.attrs)


def make_label(ns, ele, attrs=None, pseudos=()):
    """Convenience constructor; ``attrs`` is a ``{(ns, a): value}`` map."""
    items = tuple(sorted((attrs or {}).items()))
    return NodeLabel(ns, ele, items, frozenset(pseudos))


@dataclass(frozen=True)
class DocumentTree:
    """An ordered labelled tree, keyed by position tuples."""
    labels: Tuple[Tuple[Tuple[int, ...], NodeLabel], ...]

    @staticmethod
    def from_dict(mapping):
        return DocumentTree(tuple(sorted(mapping.items())))

    def label_map(self):
        return dict(self.labels)

    def nodes(self):
        return [pos for pos, _ in self.labels]

    def label(self, pos):
        return self.label_map()[pos]

    def children(self, pos):
        out = []
        k = 1
        index = self.label_map()
        while pos + (k,) in index:
            out.append(pos + (k,))
            k += 1
        return out

    def __len__(self):
        return len(self.labels)


class TreeView:
    """Cached accessors over a DocumentTree (dict lookups, child counts)."""

    def __init__(self, tree):
        self.index = dict(tree.labels)
        self.positions = sorted(self.index)

    def has(self, pos):
        return pos in self.index

    def label(self, pos):
        return self.index[pos]

    def child_count(self, pos):
        k = 1
        while pos + (k,) in self.index:
            k += 1
        return k - 1

    def siblings_total(self, pos):
        return self.child_count(pos[:-1])


def validate_tree(tree):
    """Check tree-shape and label consistency.

    :returns: list of violation strings; empty means valid.
    """
    out = []
    index = dict(tree.labels)
    if () not in index:
        out.append("missing root")
        return out
    for pos in index:
        if pos and pos[:-1] not in index:
            out.append("not prefix-closed at %r" % (pos,))
        if pos and pos[-1] > 1 and pos[:-1] + (pos[-1] - 1,) not in index:
            out.append("not sibling-closed at %r" % (pos,))
    seen_ids = {}
    targets = 0
    for pos, label in index.items():
        ps = label.pseudos
        if "link" in ps and "visited" in ps:
            out.append("link and visited at %r" % (pos,))
        if "enabled" in ps and "disabled" in ps:
            out.append("enabled and disabled at %r" % (pos,))
        if "target" in ps:
            targets += 1
        if ("root" in ps) != (pos == ()):
            out.append("root flag wrong at %r" % (pos,))
        if "empty" in ps and pos + (1,) in index:
            out.append("empty node with children at %r" % (pos,))
        for (ns, attr), value in label.attrs:
            if attr == "id":
                key = (ns, value)
                if key in seen_ids:
                    out.append("duplicate id %r in namespace %r" % (value, ns))
                seen_ids[key] = pos
    if targets > 1:
        out.append("more than one target node")
    return out


# ---------------------------------------------------------------------------
# Selector matching


def _nth_holds(x, a, b):
    """Does ``x = a*n + b`` hold for some integer n >= 0?"""
    if a == 0:
        return x == b
    return (x - b) % a == 0 and (x - b) // a >= 0


def _attr_op_holds(op, needle, value):
    if op is None:
        return True
    if op == "=":
        return value == needle
    if op == "~=":
        # An empty or space-containing needle can never be a word.
        if needle == "" or " " in needle:
            return False
        return needle in value.split(" ")
    if op == "|=":
        return value == needle or value.startswith(needle + "-")
    if op == "^=":
        return value.startswith(needle)
    if op == "$=":
        return value.endswith(needle)
    if op == "*=":
        return needle in value
    raise ValueError("unknown attribute operator %r" % op)


def _attr_test_holds(view, pos, test):
    label = view.label(pos)
    ns = test.sem_ns()
    if ns is not None:
        for (ans, aname), value in label.attrs:
            if ans == ns and aname == test.attr:
                return _attr_op_holds(test.op, test.value, value)
        return False
    # Existential namespace: some namespace's attribute satisfies the op.
    return any(
        aname == test.attr and _attr_op_holds(test.op, test.value, value)
        for (ans, aname), value in label.attrs
    )


def _type_holds(view, pos, tp):
    label = view.label(pos)
    if tp.ns is not None and label.ns != tp.ns:
        return False
    if tp.ele is not None and label.ele != tp.ele:
        return False
    return True


def _same_type(a, b):
    return a.ns == b.ns and a.ele == b.ele


def _positional_holds(view, pos, cond):
    if pos == ():
        return False
    total = view.siblings_total(pos)
    x = pos[-1]
    kind = cond.kind
    if kind == "nth-child":
        return _nth_holds(x, cond.a, cond.b)
    if kind == "nth-last-child":
        return _nth_holds(total - x + 1, cond.a, cond.b)
    if kind == "only-child":
        return total == 1
    mine = view.label(pos)
    same_before = sum(
        1 for k in range(1, x)
        if _same_type(view.label(pos[:-1] + (k,)), mine))
    same_after = sum(
        1 for k in range(x + 1, total + 1)
        if _same_type(view.label(pos[:-1] + (k,)), mine))
    if kind == "nth-of-type":
        return _nth_holds(same_before + 1, cond.a, cond.b)
    if kind == "nth-last-of-type":
        return _nth_holds(same_after + 1, cond.a, cond.b)
    if kind == "only-of-type":
        return same_before == 0 and same_after == 0
    raise ValueError("unknown positional %r" % kind)


def _condition_holds(view, pos, cond):
    if isinstance(cond, AttrTest):
        return _attr_test_holds(view, pos, cond)
    if isinstance(cond, PseudoTest):
        return cond.name in view.label(pos).pseudos
    if isinstance(cond, Positional):
        return _positional_holds(view, pos, cond)
    if isinstance(cond, Negation):
        inner = cond.inner
        if isinstance(inner, TypePart):
            return not _type_holds(view, pos, inner)
        return not _condition_holds(view, pos, inner)
    raise ValueError("unknown condition %r" % (cond,))


def _compound_holds(view, pos, compound):
    if not _type_holds(view, pos, compound.type_part):
        return False
    return all(_condition_holds(view, pos, c) for c in compound.conditions)


def _chain_holds(view, pos, parts, combinators, i):
    if not _compound_holds(view, pos, parts[i]):
        return False
    if i == 0:
        return True
    comb = combinators[i - 1]
    if comb == DESCENDANT:
        cands = [pos[:k] for k in range(len(pos) - 1, -1, -1)]
    elif comb == CHILD:
        cands = [pos[:-1]] if pos else []
    elif comb == NEIGHBOUR:
        cands = []
        if pos and pos[-1] > 1:
            cands = [pos[:-1] + (pos[-1] - 1,)]
    elif comb == SIBLING:
        cands = [pos[:-1] + (k,) for k in range(pos[-1] - 1, 0, -1)] \
            if pos else []
    else:
        raise ValueError("unknown combinator %r" % comb)
    return any(_chain_holds(view, c, parts, combinators, i - 1)
               for c in cands)


def compound_matches(tree, pos, compound):
    """Does a single compound selector hold at ``pos``?  (Used by the
    automata runner for transition labels.)"""
    view = tree if isinstance(tree, TreeView) else TreeView(tree)
    return _compound_holds(view, pos, compound)


@functools.lru_cache(maxsize=8192)
def _normalized(selector):
    return normalize(selector)


def matches(tree, pos, selector):
    """Does ``selector`` match the node at ``pos`` in ``tree``?

    The selector's pseudo-element tag, if any, is ignored here: matching
    is evaluated for the base selector (after normalization, so
    ``::first-line`` contributes its implied ``:not(:empty)``).  Channel
    bookkeeping is the cascade's job.

    :param tree: :class:`DocumentTree`.
    :param pos: node position tuple.
    :param selector: :class:`Selector`.
    """
    view = tree if isinstance(tree, TreeView) else TreeView(tree)
    sel = _normalized(selector)
    return _chain_holds(view, pos, sel.parts, sel.combinators,
                        len(sel.parts) - 1)


# ---------------------------------------------------------------------------
# Cascade


@dataclass(frozen=True)
class ComputedStyle:
    """Winning declarations per (pseudo-element channel, property name).

    ``winners`` maps ``(channel, prop)`` to
    ``(declared_name, value, important)``; ``channel`` is None for the
    element itself or a pseudo-element tag.
    """
    winners: Tuple[Tuple[Tuple[Optional[str], str],
                         Tuple[str, str, bool]], ...]

    def as_dict(self):
        return dict(self.winners)


def compute_cascade(tree, pos, stylesheet):
    """Cascade resolution for one node.

    A declaration named ``d`` competes for every property name ``p``
    (drawn from the names declared anywhere in the stylesheet) such that
    ``d`` sets ``p`` — equal, official shorthand pair, dash-prefix, or
    font/line-height.  The winner per ``(channel, p)`` is the maximum by
    (importance, specificity, rule position, declaration position).

    :param stylesheet: object with ``.rules`` or iterable of rules; each
        rule has ``.selectors`` and ``.decls`` (with ``prop``, ``value``,
        ``important``).
    :returns: :class:`ComputedStyle`.
    """
    rules = getattr(stylesheet, "rules", stylesheet)
    rules = list(rules)
    view = TreeView(tree)
    declared_names = sorted({d.prop for r in rules for d in r.decls})
    best = {}
    for ridx, rule in enumerate(rules):
        matching = [s for s in rule.selectors if matches(view, pos, s)]
        if not matching:
            continue
        for sel in matching:
            channel = sel.pseudo_element
            for didx, decl in enumerate(rule.decls):
                key_base = (decl.important, specificity(sel, decl.important),
                            ridx, didx)
                for p in declared_names:
                    if not is_shorthand_of(decl.prop, p):
                        continue
                    slot = (channel, p)
                    prev = best.get(slot)
                    if prev is None or key_base >= prev[0]:
                        best[slot] = (key_base,
                                      (decl.prop, decl.value, decl.important))
    return ComputedStyle(tuple(sorted(
        (slot, win) for slot, (_, win) in best.items())))


# ---------------------------------------------------------------------------
# Tree enumeration


@dataclass(frozen=True)
class TreeBounds:
    """Bounds driving exhaustive tree enumeration.

    ``attrs`` lists concrete ``(ns, name)`` attribute slots; each node
    independently either omits the slot or takes one of ``values``.
    ``alphabet``/``attr_len`` are used by :func:`words_over` to build a
    default value set when ``values`` is empty.
    """
    max_depth: int = 2
    max_branch: int = 2
    ns_set: Tuple[str, ...] = ("html",)
    ele_set: Tuple[str, ...] = ("div",)
    attrs: Tuple[Tuple[str, str], ...] = ()
    values: Tuple[str, ...] = ()
    alphabet: Tuple[str, ...] = ()
    attr_len: int = 0
    pseudo_classes: Tuple[str, ...] = ()

    def value_set(self):
        if self.values:
            return self.values
        if self.alphabet and self.attr_len:
            return tuple(words_over(self.alphabet, self.attr_len))
        return ()


def words_over(alphabet, max_len):
    """All words over ``alphabet`` up to ``max_len``, shortlex order."""
    out = [""]
    for n in range(1, max_len + 1):
        out.extend("".join(t) for t in
                   itertools.product(sorted(alphabet), repeat=n))
    return out


def _shapes(depth, branch):
    """Ordered tree shapes: nested tuples of child shapes."""
    if depth <= 1:
        yield ()
        return
    yield ()
    subs = list(_shapes(depth - 1, branch))
    for k in range(1, branch + 1):
        for combo in itertools.product(subs, repeat=k):
            yield combo


def _shape_positions(shape, base=()):
    yield base, shape
    for i, child in enumerate(shape, start=1):
        yield from _shape_positions(child, base + (i,))


def _flag_subsets(flags):
    """Subsets of free pseudo flags, conflicts excluded, stable order."""
    flags = [f for f in flags
             if f not in ("root", "empty", "target")]
    out = []
    for r in range(len(flags) + 1):
        for combo in itertools.combinations(flags, r):
            s = frozenset(combo)
            if {"link", "visited"} <= s or {"enabled", "disabled"} <= s:
                continue
            out.append(s)
    return out


def enumerate_trees(bounds):
    """Exhaustively enumerate valid labelled trees within ``bounds``.

    Deterministic order: shapes first (by depth-first construction),
    then label assignments in slot order.  Every yielded tree passes
    :func:`validate_tree`.

    :param bounds: :class:`TreeBounds`.
    :returns: generator of :class:`DocumentTree`.
    """
    values = bounds.value_set()
    flag_subsets = _flag_subsets(bounds.pseudo_classes)
    want_empty = "empty" in bounds.pseudo_classes
    want_target = "target" in bounds.pseudo_classes

    for shape in _shapes(bounds.max_depth, bounds.max_branch):
        positions = [p for p, _ in _shape_positions(shape)]
        has_children = {p: bool(s) for p, s in _shape_positions(shape)}

        per_node = []
        for p in positions:
            opts = []
            empties = [False, True] if (want_empty and not has_children[p]) \
                else [False]
            for ns in bounds.ns_set:
                for ele in bounds.ele_set:
                    for assignment in itertools.product(
                            *[[None] + list(values)
                              for _ in bounds.attrs]):
                        attrs = {
                            slot: val
                            for slot, val in zip(bounds.attrs, assignment)
                            if val is not None
                        }
                        for flags in flag_subsets:
                            for emp in empties:
                                opts.append((ns, ele, attrs, flags, emp))
            per_node.append(opts)

        target_slots = [None] + positions if want_target else [None]
        for combo in itertools.product(*per_node):
            for target_at in target_slots:
                labels = {}
                ok = True
                seen_ids = set()
                for p, (ns, ele, attrs, flags, emp) in zip(positions, combo):
                    ps = set(flags)
                    if p == ():
                        ps.add("root")
                    if emp:
                        ps.add("empty")
                    if target_at == p:
                        ps.add("target")
                    for (ans, aname), val in attrs.items():
                        if aname == "id":
                            key = (ans, val)
                            if key in seen_ids:
                                ok = False
                            seen_ids.add(key)
                    if not ok:
                        break
                    labels[p] = make_label(ns, ele, attrs, ps)
                if ok:
                    yield DocumentTree.from_dict(labels)


# ---------------------------------------------------------------------------
# Bounds derivation and brute-force intersection


def _walk_conditions(selector):
    for part in normalize(selector).parts:
        yield part.type_part, None
        for cond in part.conditions:
            if isinstance(cond, Negation):
                yield cond.inner, cond
            else:
                yield cond, None


def derive_bounds(selectors, max_depth=3, max_branch=3, max_values=16):
    """Build a small-but-relevant :class:`TreeBounds` for selectors.

    Collects mentioned namespaces/elements (plus one fresh element when
    a selector discriminates on types), attribute slots, candidate
    values (including pairwise space-joins for ``~=`` tests and
    operator-specific probes), and mentioned pseudo-classes.
    """
    ns_set = set()
    ele_set = set()
    attrs = set()
    values = {}
    pseudos = set()
    fresh_ele_needed = False
    for sel in selectors:
        for item, neg in _walk_conditions(sel):
            if isinstance(item, TypePart):
                if item.ns:
                    ns_set.add(item.ns)
                if item.ele:
                    ele_set.add(item.ele)
                if neg is not None:
                    fresh_ele_needed = True
            elif isinstance(item, AttrTest):
                ns = item.sem_ns() or "attrns"
                ns_set.add(ns)
                attrs.add((ns, item.attr))
                bucket = values.setdefault(item.attr, set())
                v = item.value
                if v is not None:
                    bucket.add(v)
                    if item.op == "|=":
                        bucket.add(v + "-q")
                    elif item.op in ("^=", "$=", "*="):
                        bucket.add("q" + v if item.op == "$=" else v + "q")
                bucket.add("")
            elif isinstance(item, PseudoTest):
                pseudos.add(item.name)
            elif isinstance(item, Positional):
                if "of-type" in item.kind:
                    fresh_ele_needed = True
        if sel.pseudo_element in ("first-line", "first-letter"):
            pseudos.add("empty")
    # Word joins so several ~= tests can hit one attribute value.
    for sel in selectors:
        for item, _ in _walk_conditions(sel):
            if isinstance(item, AttrTest) and item.op == "~=":
                bucket = values.setdefault(item.attr, set())
                words = sorted(set(
                    it2.value for s2 in selectors
                    for it2, _ in _walk_conditions(s2)
                    if isinstance(it2, AttrTest)
                    and it2.attr == item.attr and it2.op == "~="
                    and it2.value))
                for w1, w2 in itertools.permutations(words, 2):
                    bucket.add(w1 + " " + w2)
    if not ns_set:
        ns_set.add("html")
    if not ele_set or fresh_ele_needed:
        ele_set.add("zz")
    all_values = sorted(set().union(*values.values())) if values else []
    return TreeBounds(
        max_depth=max_depth,
        max_branch=max_branch,
        ns_set=tuple(sorted(ns_set)),
        ele_set=tuple(sorted(ele_set)),
        attrs=tuple(sorted(attrs)),
        values=tuple(all_values[:max_values]),
        pseudo_classes=tuple(sorted(pseudos)),
    )


def oracle_intersection(s1, s2, bounds=None):
    """Search exhaustively for a node matched by both selectors.

    :param bounds: :class:`TreeBounds`; derived from the selectors when
        None.
    :returns: ``(tree, pos)`` witness, or None if no witness exists in
        any enumerated tree (selectors with different pseudo-element
        tags are disjoint outright).
    """
    if s1.pseudo_element != s2.pseudo_element:
        return None
    if bounds is None:
        bounds = derive_bounds([s1, s2])
    n1, n2 = normalize(s1), normalize(s2)
    for tree in enumerate_trees(bounds):
        view = TreeView(tree)
        for pos in view.positions:
            if matches(view, pos, n1) and matches(view, pos, n2):
                return tree, pos
    return None

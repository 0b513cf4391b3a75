"""Stylesheet model and the CSS-graph it induces.

A stylesheet is a sequence of rules interleaved with opaque passthrough
blocks (at-rules and, in lenient mode, quarantined junk).  The rules
induce a bipartite graph between selector nodes and declaration nodes:
an edge ``(s, p)`` says "some rule applies declaration p to selector s".
On top of the graph sits a partial order on edges recording which
cascade decisions the file relies on; any rewrite of the file must keep
those decisions intact.

A *covering* is a rule sequence whose edges reproduce the graph
exactly.  The original file is one covering; the optimizer searches for
lighter ones.  This module provides parsing, graph construction, the
edge order extractor, and the covering calculus (index, trim, validity,
applying a merge, serialization, weight).
"""

import itertools
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Set, Tuple, Union

from .automata import compile_selector, intersect
from .emptiness import EmptinessConfig, SolverFailure, check_nonempty
from .selector import (
    AttrTest,
    Selector,
    SelectorParseError,
    node_weight,
    parse_selector_group,
    serialize_selector,
    specificity,
)

log = logging.getLogger(__name__)


class StylesheetParseError(ValueError):
    """Raised in strict mode when the input is not parseable CSS."""


# ---------------------------------------------------------------------------
# Declarations


_NAME_RE = re.compile(r"-{0,2}[A-Za-z_][A-Za-z0-9_-]*\Z")
_IMPORTANT_RE = re.compile(r"!\s*important\s*\Z", re.IGNORECASE)


def _collapse_ws(value):
    # Collapse runs of whitespace outside quoted strings to one space;
    # string contents are significant and pass through untouched.
    out = []
    i, n = 0, len(value)
    while i < n:
        ch = value[i]
        if ch in "'\"":
            j = _skip_string(value, i)
            out.append(value[i:j])
            i = j
        elif ch.isspace():
            out.append(" ")
            while i < n and value[i].isspace():
                i += 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class Declaration:
    """One ``name:value`` pair, optionally ``!important``.

    ``text`` is the canonical spelling used as the node identity:
    lowercased name, whitespace-collapsed value, and a normalized
    ``!important`` suffix.  Two declarations are the same graph node
    exactly when their canonical texts coincide.
    """

    name: str
    value: str
    important: bool = False

    @property
    def text(self):
        suffix = "!important" if self.important else ""
        return "%s:%s%s" % (self.name, self.value, suffix)

    def __str__(self):
        return self.text


def parse_declaration(text):
    """Parse one declaration from ``name: value [!important]`` text.

    :raises StylesheetParseError: on a missing colon, empty value, or a
        malformed property name.
    """
    name, colon, value = text.partition(":")
    if not colon:
        raise StylesheetParseError("missing ':' in declaration %r" % text.strip())
    name = name.strip().lower()
    if not _NAME_RE.match(name):
        raise StylesheetParseError("bad property name %r" % name)
    value = value.strip()
    important = False
    m = _IMPORTANT_RE.search(value)
    if m:
        important = True
        value = value[:m.start()].rstrip()
    value = _collapse_ws(value)
    if not value:
        raise StylesheetParseError("empty value for property %r" % name)
    return Declaration(name, value, important)


# ---------------------------------------------------------------------------
# Rules and stylesheets


@dataclass(frozen=True)
class Rule:
    """A selector group sharing an ordered declaration list.

    Both sides hold canonical node texts, not parse trees; the graph
    keeps the text-to-tree maps.  ``selectors`` is a set in spirit
    (duplicates are dropped at construction), ``declarations`` is
    ordered -- the order is the intra-rule fallback order the validity
    check consults.
    """

    selectors: Tuple[str, ...]
    declarations: Tuple[str, ...]

    @property
    def text(self):
        return "%s{%s}" % (",".join(self.selectors), ";".join(self.declarations))

    def __str__(self):
        return self.text


@dataclass(frozen=True)
class Passthrough:
    """Verbatim text the optimizer must not touch (at-rules, junk)."""

    text: str

    def __str__(self):
        return self.text


Item = Union[Rule, Passthrough]


@dataclass(frozen=True)
class Stylesheet:
    """Parsed stylesheet: rules and passthrough blocks in file order."""

    items: Tuple[Item, ...]
    sel_map: Dict[str, Selector] = field(default_factory=dict, compare=False)
    decl_map: Dict[str, Declaration] = field(default_factory=dict, compare=False)

    @property
    def rules(self):
        return tuple(it for it in self.items if isinstance(it, Rule))

    def segments(self):
        """Split the rule sequence at passthrough barriers.

        Returns ``len(passthroughs) + 1`` tuples of rules; rewriting is
        done per segment so no rule crosses an at-rule boundary.
        """
        out, cur = [], []
        for it in self.items:
            if isinstance(it, Rule):
                cur.append(it)
            else:
                out.append(tuple(cur))
                cur = []
        out.append(tuple(cur))
        return out

    def with_segments(self, segments):
        """Rebuild the item list from rewritten segments.

        The passthrough blocks stay in place; ``segments`` must have
        one entry per gap, i.e. ``len(passthroughs) + 1`` entries.
        """
        barriers = [it for it in self.items if isinstance(it, Passthrough)]
        if len(segments) != len(barriers) + 1:
            raise ValueError("expected %d segments, got %d"
                             % (len(barriers) + 1, len(segments)))
        items: List[Item] = []
        for seg, barrier in itertools.zip_longest(segments, barriers):
            items.extend(seg)
            if barrier is not None:
                items.append(barrier)
        return Stylesheet(tuple(items), dict(self.sel_map), dict(self.decl_map))


# ---------------------------------------------------------------------------
# Parsing
#
# Strategy: a single left-to-right scan with three string-aware helpers
# (skip string, skip comment, match brace).  At-rules become passthrough
# blocks ending at the first top-level ";" or the matching "}".  A rule
# is selector text up to "{" plus a ";"-separated body; any error inside
# a rule either aborts (strict) or quarantines that rule's source text
# as a passthrough (lenient), so one broken rule cannot take down a
# whole file.


def _skip_string(text, i):
    quote = text[i]
    i += 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\":
            i += 2
            continue
        if ch == quote:
            return i + 1
        i += 1
    return n


def _skip_comment(text, i):
    j = text.find("*/", i + 2)
    return len(text) if j < 0 else j + 2


def _skip_blank(text, i):
    n = len(text)
    while i < n:
        if text[i].isspace():
            i += 1
        elif text.startswith("/*", i):
            i = _skip_comment(text, i)
        else:
            break
    return i


def _scan_to(text, i, stops, nest_braces=False):
    """Index of the first stop char outside strings, comments, parens.

    With ``nest_braces`` braces nest and only a balancing close brace
    can stop the scan.  Returns ``len(text)`` if no stop occurs.
    """
    depth_paren = 0
    depth_brace = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            i = _skip_string(text, i)
            continue
        if text.startswith("/*", i):
            i = _skip_comment(text, i)
            continue
        if ch == "(":
            depth_paren += 1
        elif ch == ")":
            if depth_paren > 0:
                depth_paren -= 1
        elif depth_paren == 0:
            if nest_braces and ch == "{":
                depth_brace += 1
            elif nest_braces and ch == "}" and depth_brace > 0:
                depth_brace -= 1
            elif depth_brace == 0 and ch in stops:
                return i
        i += 1
    return n


def _match_brace(text, i):
    """Index of the "}" matching the "{" at ``i``, or -1."""
    j = _scan_to(text, i + 1, "}", nest_braces=True)
    return j if j < len(text) else -1


def _strip_comments(text):
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            j = _skip_string(text, i)
            out.append(text[i:j])
            i = j
        elif text.startswith("/*", i):
            i = _skip_comment(text, i)
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _split_level(text, sep):
    """Split on ``sep`` outside strings, comments, and parentheses."""
    parts = []
    i = 0
    while True:
        j = _scan_to(text, i, sep)
        parts.append(text[i:j])
        if j >= len(text):
            return parts
        i = j + 1


def _parse_rule(sel_text, body, sel_map, decl_map):
    selectors = []
    for sel in parse_selector_group(sel_text):
        canon = serialize_selector(sel)
        if canon not in selectors:
            selectors.append(canon)
        sel_map.setdefault(canon, sel)
    decls = []
    for chunk in _split_level(body, ";"):
        if not _strip_comments(chunk).strip():
            continue
        d = parse_declaration(_strip_comments(chunk))
        # A repeated identical declaration collapses onto its last
        # occurrence; that is the position the cascade actually uses.
        if d.text in decls:
            decls.remove(d.text)
        decls.append(d.text)
        decl_map.setdefault(d.text, d)
    if not selectors:
        raise StylesheetParseError("rule with empty selector group")
    if not decls:
        raise StylesheetParseError("rule with no declarations")
    return Rule(tuple(selectors), tuple(decls))


def parse_stylesheet(text, lenient=False):
    """Parse CSS source into a :class:`Stylesheet`.

    Comments and whitespace are dropped.  At-rules are kept verbatim as
    passthrough blocks -- their bodies are never entered.  In strict
    mode any malformed construct raises :class:`StylesheetParseError`
    with the offending offset; with ``lenient=True`` the broken rule is
    quarantined verbatim as a passthrough instead.
    """
    sel_map: Dict[str, Selector] = {}
    decl_map: Dict[str, Declaration] = {}
    items: List[Item] = []
    i, n = 0, len(text)
    while True:
        i = _skip_blank(text, i)
        if i >= n:
            break
        if text[i] == "@":
            j = _scan_to(text, i, ";{")
            if j < n and text[j] == "{":
                k = _match_brace(text, j)
                if k < 0:
                    if not lenient:
                        raise StylesheetParseError(
                            "unbalanced braces in at-rule at offset %d" % i)
                    items.append(Passthrough(text[i:].strip()))
                    break
                end = k + 1
            elif j < n:
                end = j + 1
            else:
                end = n
            items.append(Passthrough(text[i:end].strip()))
            i = end
            continue
        j = _scan_to(text, i, "{}")
        if j >= n or text[j] == "}":
            msg = "expected '{' after selector at offset %d" % i
            if not lenient:
                raise StylesheetParseError(msg)
            end = (j + 1) if j < n else n
            items.append(Passthrough(text[i:end].strip()))
            i = end
            continue
        k = _match_brace(text, j)
        if k < 0:
            msg = "unclosed rule body at offset %d" % j
            if not lenient:
                raise StylesheetParseError(msg)
            items.append(Passthrough(text[i:].strip()))
            break
        try:
            items.append(_parse_rule(_strip_comments(text[i:j]),
                                     text[j + 1:k], sel_map, decl_map))
        except (StylesheetParseError, SelectorParseError) as exc:
            if not lenient:
                raise StylesheetParseError(
                    "%s (rule at offset %d)" % (exc, i)) from exc
            log.warning("quarantining unparseable rule at offset %d: %s",
                        i, exc)
            items.append(Passthrough(text[i:k + 1].strip()))
        i = k + 1
    return Stylesheet(tuple(items), sel_map, decl_map)


# ---------------------------------------------------------------------------
# The CSS-graph


Edge = Tuple[str, str]
OrderPair = Tuple[Edge, Edge]


@dataclass
class CssGraph:
    """Bipartite selector/declaration graph with an edge order.

    ``sels`` and ``decls`` map canonical node text to the parsed
    object (dict order = first occurrence in the file).  ``edges`` is
    the set of (selector text, declaration text) pairs some rule
    realizes; ``order`` holds the extracted cascade constraints, empty
    until :func:`extract_edge_order` fills it in.
    """

    sels: Dict[str, Selector]
    decls: Dict[str, Declaration]
    edges: Set[Edge]
    order: Set[OrderPair] = field(default_factory=set)

    def weight(self, node_text):
        return node_weight(node_text)


def build_graph(ss):
    """Build the :class:`CssGraph` of a stylesheet (order left empty)."""
    sels: Dict[str, Selector] = {}
    decls: Dict[str, Declaration] = {}
    edges: Set[Edge] = set()
    for rule in ss.rules:
        for s in rule.selectors:
            sels.setdefault(s, ss.sel_map[s])
            for p in rule.declarations:
                decls.setdefault(p, ss.decl_map[p])
                edges.add((s, p))
    return CssGraph(sels, decls, edges)


def covering_edges(covering):
    """All edges realized by a rule sequence."""
    out: Set[Edge] = set()
    for rule in covering:
        for s in rule.selectors:
            for p in rule.declarations:
                out.add((s, p))
    return out


def edge_index(covering, edge):
    """1-based position of the *last* rule containing ``edge`` (0 if none).

    The cascade resolves a repeated (selector, declaration) pair to its
    last occurrence, so that is the position that matters.
    """
    s, p = edge
    for i in range(len(covering), 0, -1):
        rule = covering[i - 1]
        if s in rule.selectors and p in rule.declarations:
            return i
    return 0


# ---------------------------------------------------------------------------
# Edge order extraction
#
# Strategy: an ordered pair (e, e') of graph edges is recorded when the
# file may rely on e' winning the cascade against e.  That needs (a)
# tied extended specificity -- otherwise specificity, not order, picks
# the winner, (b) distinct declarations whose property names can
# interact, (c) selectors that can match a common element, and (d)
# e before e' in the file, *unless* the pair (s', p) itself re-asserts
# p at or after e''s own position, which makes any violation benign.
# "Before" is measured at declaration granularity -- the pair
# (last rule index, position within that rule) -- so that fallback
# sequences inside one rule ("color:red; color:rgba(...)") are
# protected too: swapping them changes which value wins, and the
# orderability analysis downstream relies on those same-rule pairs to
# detect it.  (c) is the expensive test; cheap syntactic filters run
# first and an emptiness check on the product automaton decides the
# rest.  A solver failure degrades to "may intersect", which only ever
# adds constraints -- the rewrite then merges less, never wrongly.


# Shorthand properties expand to longhands whose names do not share the
# shorthand's prefix; those pairs interact even though no dash-prefix
# relation holds.  Dash-prefixed longhands (margin -> margin-left) are
# matched structurally, so only prefix-breaking expansions are listed.
_SHORTHAND_BUNDLES = {
    "font": ("line-height", "font-family", "font-size", "font-style",
             "font-variant", "font-weight"),
    "border": ("border-width", "border-style", "border-color"),
    "background": ("background-color", "background-image",
                   "background-position", "background-repeat"),
    "flex-flow": ("flex-direction", "flex-wrap"),
    "columns": ("column-width", "column-count"),
    "gap": ("row-gap", "column-gap"),
    "place-items": ("align-items", "justify-items"),
    "place-content": ("align-content", "justify-content"),
    "place-self": ("align-self", "justify-self"),
    "inset": ("top", "right", "bottom", "left"),
}


def related_property_names(n1, n2):
    """Whether declarations named ``n1`` / ``n2`` can affect each other.

    Equal names always do.  A name relates to every dash-suffixed
    refinement of itself (``margin`` / ``margin-left``), and shorthands
    relate to the longhands they expand to even when the names share no
    prefix (``font`` sets ``line-height``).  Over-approximate by
    design: a false positive only adds an order constraint.
    """
    if n1 == n2:
        return True
    for a, b in ((n1, n2), (n2, n1)):
        if b.startswith(a + "-"):
            return True
        if b in _SHORTHAND_BUNDLES.get(a, ()):
            return True
    return False


def _required_ids(sel):
    """Per-namespace id values the subject compound insists on."""
    out: Dict[str, Set[str]] = {}
    for cond in sel.parts[-1].conditions:
        if (isinstance(cond, AttrTest) and cond.attr == "id"
                and cond.op == "=" and cond.sem_ns() is not None):
            out.setdefault(cond.sem_ns(), set()).add(cond.value)
    return out


def make_intersection_checker(cfg=None):
    """Build a memoizing "can these selectors share a match?" oracle.

    The returned callable takes two parsed selectors and answers
    whether some element of some document matches both.  Syntactic
    fast paths (pseudo-element mismatch, conflicting required ids)
    avoid the solver; everything else compiles the selectors, builds
    the product automaton and asks the emptiness engine.  Results are
    cached per canonical text pair.  :class:`SolverFailure` propagates
    to the caller.
    """
    if cfg is None:
        cfg = EmptinessConfig()
    autos: Dict[str, object] = {}
    memo: Dict[Tuple[str, str], bool] = {}

    def _compiled(sel, text):
        a = autos.get(text)
        if a is None:
            a = compile_selector(sel)
            autos[text] = a
        return a

    def checker(s1, s2):
        t1, t2 = serialize_selector(s1), serialize_selector(s2)
        if t2 < t1:
            s1, s2, t1, t2 = s2, s1, t2, t1
        key = (t1, t2)
        if key in memo:
            return memo[key]
        if s1.pseudo_element != s2.pseudo_element:
            res = False
        else:
            ids1, ids2 = _required_ids(s1), _required_ids(s2)
            conflict = any(len(v) > 1 for v in ids1.values()) \
                or any(len(v) > 1 for v in ids2.values()) \
                or any(ns in ids2 and ids1[ns] != ids2[ns] for ns in ids1)
            if conflict:
                res = False
            elif t1 == t2:
                res = check_nonempty(_compiled(s1, t1), cfg)
            else:
                product = intersect(_compiled(s1, t1), _compiled(s2, t2))
                res = check_nonempty(product, cfg)
        memo[key] = res
        return res

    return checker


def extract_edge_order(ss, checker=None, cfg=None, workers=None):
    """Extract the cascade order a rewrite of ``ss`` must respect.

    Returns the set of ordered edge pairs ``(e, e')`` meaning "e' must
    keep a strictly later index than e (or fall back to intra-rule
    declaration order)".  ``checker`` defaults to a fresh
    :func:`make_intersection_checker`; pass ``workers`` to precompute
    the needed intersection tests across threads (useful with a
    subprocess solver backend).
    """
    if checker is None:
        checker = make_intersection_checker(cfg)
    rules = ss.rules
    # pos(e) = (last rule index, declaration slot there), the point the
    # cascade actually reads e from.
    pos: Dict[Edge, Tuple[int, int]] = {}
    edges: List[Edge] = []
    for i, rule in enumerate(rules, 1):
        for s in rule.selectors:
            for k, p in enumerate(rule.declarations, 1):
                e = (s, p)
                if e not in pos:
                    edges.append(e)
                pos[e] = (i, k)

    def important(p):
        return ss.decl_map[p].important

    def spec4(e):
        s, p = e
        return specificity(ss.sel_map[s], important(p))

    # Only equal extended specificities can tie, so bucket by it.
    buckets: Dict[tuple, List[Edge]] = {}
    for e in edges:
        buckets.setdefault(tuple(spec4(e)), []).append(e)

    candidates: List[OrderPair] = []
    for bucket in buckets.values():
        for e1, e2 in itertools.permutations(bucket, 2):
            (s1, p1), (s2, p2) = e1, e2
            if p1 == p2:
                continue
            if pos[e1] >= pos[e2]:
                continue
            if not related_property_names(ss.decl_map[p1].name,
                                          ss.decl_map[p2].name):
                continue
            # If (s2, p1) re-asserts p1 at or after e2's position, e2
            # never beat e1 on s2-matching elements in the first place,
            # so violating this pair is benign and it is dropped.
            late = pos.get((s2, p1))
            if late is not None and late >= pos[e2]:
                continue
            candidates.append((e1, e2))

    def may_intersect(s1, s2):
        try:
            return checker(ss.sel_map[s1], ss.sel_map[s2])
        except SolverFailure as exc:
            log.warning("intersection check failed for %r / %r: %s; "
                        "assuming overlap", s1, s2, exc)
            return True

    if workers:
        pairs = sorted({tuple(sorted((e1[0], e2[0])))
                        for e1, e2 in candidates})
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda st: may_intersect(*st), pairs))

    order: Set[OrderPair] = set()
    for e1, e2 in candidates:
        if may_intersect(e1[0], e2[0]):
            order.add((e1, e2))
    return order


# ---------------------------------------------------------------------------
# Coverings


@dataclass(frozen=True)
class MergingOpportunity:
    """A rule to insert into a covering at slice position ``position``.

    ``position`` counts existing rules before the insertion point, so
    applying yields ``c[:position] + (rule,) + c[position:]`` before
    trimming.
    """

    rule: Rule
    position: int


def trim(covering):
    """Drop nodes and rules the cascade can never reach.

    A selector or declaration stays in rule ``i`` only if some edge of
    that rule has its last occurrence there; rules losing all nodes
    disappear.  Surviving edges keep their index, so trimming never
    changes what the covering means.
    """
    idx: Dict[Edge, int] = {}
    for i, rule in enumerate(covering, 1):
        for s in rule.selectors:
            for p in rule.declarations:
                idx[(s, p)] = i
    out: List[Rule] = []
    for i, rule in enumerate(covering, 1):
        sels = tuple(s for s in rule.selectors
                     if any(idx[(s, p)] == i for p in rule.declarations))
        decls = tuple(p for p in rule.declarations
                      if any(idx[(s, p)] == i for s in rule.selectors))
        if sels and decls:
            out.append(Rule(sels, decls))
    return tuple(out)


def is_valid_covering(covering, graph):
    """Whether ``covering`` realizes the graph and respects its order.

    The edges must match exactly, and every ordered pair ``(e, e')``
    needs ``index(e) < index(e')``, or a tie broken by intra-rule
    declaration positions (e's declaration listed no later than e's).
    """
    if covering_edges(covering) != graph.edges:
        return False
    idx = {}
    for i, rule in enumerate(covering, 1):
        for s in rule.selectors:
            for p in rule.declarations:
                idx[(s, p)] = i
    for e1, e2 in graph.order:
        m1, m2 = idx.get(e1, 0), idx.get(e2, 0)
        if m1 < m2:
            continue
        if m1 > m2 or m1 == 0:
            return False
        decls = covering[m1 - 1].declarations
        if decls.index(e1[1]) > decls.index(e2[1]):
            return False
    return True


def apply_opportunity(covering, opportunity):
    """Insert the opportunity's rule and trim the result."""
    j = opportunity.position
    if not 0 <= j <= len(covering):
        raise ValueError("insert position %d out of range" % j)
    merged = tuple(covering[:j]) + (opportunity.rule,) + tuple(covering[j:])
    return trim(merged)


# ---------------------------------------------------------------------------
# Serialization and weight


def serialize_rules(covering):
    """Canonical text of a rule sequence, one rule per line."""
    return "\n".join(rule.text for rule in covering)


def serialize(ss_or_covering):
    """Canonical text of a stylesheet or bare rule sequence.

    Rules render with minimal whitespace; passthrough blocks render
    verbatim in their original slots.
    """
    if isinstance(ss_or_covering, Stylesheet):
        parts = [str(item) for item in ss_or_covering.items]
    else:
        parts = [rule.text for rule in ss_or_covering]
    return "\n".join(parts)


def total_weight(covering):
    """Sum of node weights over all rules (the minimization objective)."""
    return sum(node_weight(s) for rule in covering for s in rule.selectors) \
        + sum(node_weight(p) for rule in covering for p in rule.declarations)

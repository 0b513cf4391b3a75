"""Selector data model, parser, specificity and canonical serialization.

Selectors are chains of compound selectors joined by the four combinators
(descendant, child ``>``, adjacent sibling ``+``, general sibling ``~``).
A compound selector is a type part (``*``, ``e``, ``ns|e``, ``ns|*``)
followed by attribute tests, pseudo-classes, positional pseudo-classes and
single-level negations.

Class, id and ``:lang`` shorthands are stored as attribute tests but
remember their written form, so serialization reproduces the author's
spelling (``.fruit`` stays ``.fruit``, never ``[class~=fruit]``).
Semantically ``#v`` and bare ``[id=v]`` are pinned to a reserved ``html``
namespace so that two different required ids can never coexist on one
node; all other unqualified attribute tests are existential over
namespaces.
"""

import re
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

# Reserved namespaces backing the id and :lang shorthands.
ID_NAMESPACE = "html"
LANG_NAMESPACE = "xml"

# The supported non-positional pseudo-classes.
PSEUDO_CLASSES = frozenset([
    "link", "visited", "hover", "active", "focus", "target",
    "enabled", "disabled", "checked", "root", "empty",
])

# Pseudo-classes that are mutually exclusive on a node.
PSEUDO_CONFLICTS = (frozenset(["link", "visited"]),
                    frozenset(["enabled", "disabled"]))

POSITIONAL_KINDS = frozenset([
    "nth-child", "nth-last-child", "nth-of-type", "nth-last-of-type",
    "only-child", "only-of-type",
])

PSEUDO_ELEMENTS = ("first-line", "first-letter", "before", "after")

ATTR_OPS = ("=", "~=", "|=", "^=", "$=", "*=")

DESCENDANT, CHILD, NEIGHBOUR, SIBLING = " ", ">", "+", "~"
COMBINATORS = (DESCENDANT, CHILD, NEIGHBOUR, SIBLING)


class SelectorParseError(ValueError):
    """Raised when selector text cannot be parsed."""


@dataclass(frozen=True)
class TypePart:
    """Type part of a compound selector.

    ``ns is None`` means any namespace, ``ele is None`` any element;
    ``TypePart(None, None)`` is the universal selector.
    """
    ns: Optional[str]
    ele: Optional[str]

    def __str__(self):
        ele = self.ele if self.ele is not None else "*"
        if self.ns is None:
            return ele
        return "%s|%s" % (self.ns, ele)


@dataclass(frozen=True)
class AttrTest:
    """An attribute test ``[ns|attr op value]``.

    :param ns: namespace as written; None means existential (any
        namespace), except that the ``id`` attribute resolves to the
        reserved ``html`` namespace (see :meth:`sem_ns`).
    :param op: one of ``= ~= |= ^= $= *=`` or None for a bare presence
        test ``[attr]``.
    :param form: "class", "id", "lang" or None; remembers shorthand
        spelling for serialization and specificity.
    """
    ns: Optional[str]
    attr: str
    op: Optional[str]
    value: Optional[str]
    form: Optional[str] = None

    def sem_ns(self):
        """Namespace used for matching; None = existential."""
        if self.ns is not None:
            return self.ns
        if self.attr == "id":
            return ID_NAMESPACE
        return None

    def __str__(self):
        if self.form == "class":
            return "." + self.value
        if self.form == "id":
            return "#" + self.value
        if self.form == "lang":
            return ":lang(%s)" % self.value
        name = self.attr if self.ns is None else "%s|%s" % (self.ns, self.attr)
        if self.op is None:
            return "[%s]" % name
        return "[%s%s%s]" % (name, self.op, _quote_attr_value(self.value))


@dataclass(frozen=True)
class PseudoTest:
    """One of the eleven supported pseudo-classes, e.g. ``:hover``."""
    name: str

    def __str__(self):
        return ":" + self.name


@dataclass(frozen=True)
class Positional:
    """A positional pseudo-class, canonically ``an+b`` based.

    ``only-child`` / ``only-of-type`` ignore ``a`` and ``b``.  ``form``
    keeps the author's spelling (``first-child``, ``nth-child(even)``,
    ...) for serialization.
    """
    kind: str
    a: int = 0
    b: int = 0
    form: Optional[str] = None

    def __str__(self):
        if self.form is not None:
            return ":" + self.form
        if self.kind in ("only-child", "only-of-type"):
            return ":" + self.kind
        return ":%s(%dn+%d)" % (self.kind, self.a, self.b) if self.b >= 0 \
            else ":%s(%dn%d)" % (self.kind, self.a, self.b)


@dataclass(frozen=True)
class Negation:
    """Single-level negation ``:not(x)`` of a type part or condition."""
    inner: Union[TypePart, AttrTest, PseudoTest, Positional]

    def __str__(self):
        return ":not(%s)" % self.inner


Condition = Union[AttrTest, PseudoTest, Positional, Negation]


@dataclass(frozen=True)
class CompoundSelector:
    """A type part plus an ordered tuple of conditions."""
    type_part: TypePart = field(default_factory=lambda: TypePart(None, None))
    conditions: Tuple[Condition, ...] = ()

    def __str__(self):
        conds = "".join(str(c) for c in self.conditions)
        tp = self.type_part
        if tp.ns is None and tp.ele is None and conds:
            return conds
        return str(tp) + conds


@dataclass(frozen=True)
class Selector:
    """A full selector: compounds joined by combinators.

    ``combinators[i]`` sits between ``parts[i]`` and ``parts[i+1]``.
    ``pseudo_element`` is the optional trailing ``::`` tag.
    """
    parts: Tuple[CompoundSelector, ...]
    combinators: Tuple[str, ...] = ()
    pseudo_element: Optional[str] = None

    def __post_init__(self):
        if len(self.combinators) != len(self.parts) - 1:
            raise ValueError("combinator/part count mismatch")

    def __str__(self):
        bits = [str(self.parts[0])]
        for comb, part in zip(self.combinators, self.parts[1:]):
            bits.append(comb if comb == DESCENDANT else comb)
            bits.append(str(part))
        text = "".join(bits)
        if self.pseudo_element:
            text += "::" + self.pseudo_element
        return text


class Specificity(tuple):
    """Extended specificity quadruple (important, ids, others, types)."""

    def __new__(cls, important, a, b, c):
        return super().__new__(cls, (bool(important), a, b, c))


# ---------------------------------------------------------------------------
# Tokenizer / parser


_IDENT_RE = re.compile(r"-?[A-Za-z_][A-Za-z0-9_-]*")
_WS_RE = re.compile(r"\s+")


def _quote_attr_value(value):
    if value is not None and _IDENT_RE.fullmatch(value):
        return value
    return '"%s"' % (value or "")


class _Scanner:
    """Tiny cursor over selector text."""

    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, msg):
        raise SelectorParseError("%s at offset %d in %r"
                                 % (msg, self.pos, self.text))

    def eof(self):
        return self.pos >= len(self.text)

    def peek(self):
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def skip_ws(self):
        m = _WS_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return True
        return False

    def take(self, ch):
        if self.text.startswith(ch, self.pos):
            self.pos += len(ch)
            return True
        return False

    def ident(self):
        m = _IDENT_RE.match(self.text, self.pos)
        if not m:
            self.error("expected identifier")
        self.pos = m.end()
        return m.group(0)

    def until(self, stop):
        """Consume up to (not including) the next ``stop`` char."""
        idx = self.text.find(stop, self.pos)
        if idx < 0:
            self.error("expected %r" % stop)
        out = self.text[self.pos:idx]
        self.pos = idx
        return out


def parse_nth(arg):
    """Parse an ``an+b`` argument into ``(a, b)``.

    Accepts ``even``, ``odd``, plain integers, and the usual ``an+b``
    spellings (``2n``, ``-n+3``, ``n``, ``3n-1``).

    :returns: pair of ints ``(a, b)``.
    """
    raw = arg.strip().lower()
    if raw == "even":
        return 2, 0
    if raw == "odd":
        return 2, 1
    m = re.fullmatch(r"([+-]?\d*)n\s*(?:([+-])\s*(\d+))?", raw)
    if m:
        astr = m.group(1)
        if astr in ("", "+"):
            a = 1
        elif astr == "-":
            a = -1
        else:
            a = int(astr)
        b = 0
        if m.group(2):
            b = int(m.group(3))
            if m.group(2) == "-":
                b = -b
        return a, b
    m = re.fullmatch(r"[+-]?\d+", raw)
    if m:
        return 0, int(raw)
    raise SelectorParseError("bad an+b argument %r" % arg)


_NTH_NAMES = {
    "nth-child": "nth-child",
    "nth-last-child": "nth-last-child",
    "nth-of-type": "nth-of-type",
    "nth-last-of-type": "nth-last-of-type",
}

_POSITIONAL_SHORTHANDS = {
    "first-child": ("nth-child", 0, 1),
    "last-child": ("nth-last-child", 0, 1),
    "first-of-type": ("nth-of-type", 0, 1),
    "last-of-type": ("nth-last-of-type", 0, 1),
}


def _parse_type_part(sc):
    """Parse an optional type part; returns TypePart."""
    # Strategy: a leading '*' or ident may be a namespace prefix if
    # followed by '|' (but not '|=', which is an attribute operator and
    # cannot appear here anyway).
    ns = None
    ele = None
    tok = None
    if sc.take("*"):
        tok = "*"
    elif _IDENT_RE.match(sc.text, sc.pos):
        tok = sc.ident()
    else:
        return TypePart(None, None)
    if sc.peek() == "|" and not sc.text.startswith("|=", sc.pos):
        sc.take("|")
        ns = None if tok == "*" else tok
        if sc.take("*"):
            ele = None
        else:
            ele = sc.ident()
    else:
        ele = None if tok == "*" else tok
    return TypePart(ns, ele)


def _parse_attr(sc):
    """Parse the inside of ``[...]`` (opening bracket consumed)."""
    sc.skip_ws()
    ns = None
    if sc.take("*"):
        if not sc.take("|"):
            sc.error("expected | after * in attribute selector")
        name = sc.ident()
    else:
        name = sc.ident()
        if sc.peek() == "|" and not sc.text.startswith("|=", sc.pos):
            sc.take("|")
            ns = name
            name = sc.ident()
    sc.skip_ws()
    op = None
    value = None
    for cand in ("~=", "|=", "^=", "$=", "*=", "="):
        if sc.take(cand):
            op = cand
            break
    if op is not None:
        sc.skip_ws()
        if sc.peek() in ("'", '"'):
            quote = sc.peek()
            sc.take(quote)
            value = sc.until(quote)
            sc.take(quote)
        else:
            value = sc.ident()
        sc.skip_ws()
    if not sc.take("]"):
        sc.error("expected ] in attribute selector")
    return AttrTest(ns, name, op, value)


def _parse_pseudo(sc, allow_not=True):
    """Parse after a single ``:``; may yield a condition or a
    pseudo-element name (legacy one-colon spelling)."""
    name = sc.ident().lower()
    if name in _NTH_NAMES:
        if not sc.take("("):
            sc.error("expected ( after :%s" % name)
        arg = sc.until(")")
        sc.take(")")
        a, b = parse_nth(arg)
        form = "%s(%s)" % (name, arg.strip())
        return Positional(_NTH_NAMES[name], a, b, form=form)
    if name in _POSITIONAL_SHORTHANDS:
        kind, a, b = _POSITIONAL_SHORTHANDS[name]
        return Positional(kind, a, b, form=name)
    if name in ("only-child", "only-of-type"):
        return Positional(name)
    if name == "lang":
        if not sc.take("("):
            sc.error("expected ( after :lang")
        arg = sc.until(")").strip()
        sc.take(")")
        if not arg:
            sc.error("empty :lang() argument")
        return AttrTest(LANG_NAMESPACE, "lang", "|=", arg, form="lang")
    if name == "not":
        if not allow_not:
            sc.error("nested :not is not supported")
        if not sc.take("("):
            sc.error("expected ( after :not")
        sc.skip_ws()
        inner = _parse_not_argument(sc)
        sc.skip_ws()
        if not sc.take(")"):
            sc.error("expected ) closing :not")
        return Negation(inner)
    if name in PSEUDO_CLASSES:
        return PseudoTest(name)
    if name in PSEUDO_ELEMENTS:
        return ("pseudo-element", name)
    sc.error("unknown pseudo-class :%s" % name)


def _parse_not_argument(sc):
    """Parse the single simple selector allowed inside :not()."""
    ch = sc.peek()
    if ch == ".":
        sc.take(".")
        return AttrTest(None, "class", "~=", sc.ident(), form="class")
    if ch == "#":
        sc.take("#")
        return AttrTest(ID_NAMESPACE, "id", "=", sc.ident(), form="id")
    if ch == "[":
        sc.take("[")
        return _parse_attr(sc)
    if ch == ":":
        sc.take(":")
        if sc.peek() == ":":
            sc.error("pseudo-element inside :not")
        got = _parse_pseudo(sc, allow_not=False)
        if isinstance(got, tuple):
            sc.error("pseudo-element inside :not")
        return got
    before = sc.pos
    tp = _parse_type_part(sc)
    if sc.pos == before:
        sc.error("empty :not argument")
    return tp


def _parse_compound(sc):
    """Parse one compound selector; returns (CompoundSelector, pe_tag)."""
    before = sc.pos
    tp = _parse_type_part(sc)
    explicit_type = sc.pos != before
    conditions = []
    pseudo_element = None
    while True:
        ch = sc.peek()
        if ch == "." :
            sc.take(".")
            conditions.append(AttrTest(None, "class", "~=", sc.ident(),
                                       form="class"))
        elif ch == "#":
            sc.take("#")
            conditions.append(AttrTest(ID_NAMESPACE, "id", "=", sc.ident(),
                                       form="id"))
        elif ch == "[":
            sc.take("[")
            conditions.append(_parse_attr(sc))
        elif ch == ":":
            sc.take(":")
            if sc.take(":"):
                pe = sc.ident().lower()
                if pe not in PSEUDO_ELEMENTS:
                    sc.error("unknown pseudo-element ::%s" % pe)
                pseudo_element = pe
                break
            got = _parse_pseudo(sc)
            if isinstance(got, tuple):
                pseudo_element = got[1]
                break
            conditions.append(got)
        else:
            break
    if not explicit_type and not conditions and pseudo_element is None:
        sc.error("expected selector")
    return CompoundSelector(tp, tuple(conditions)), pseudo_element


def parse_selector(text):
    """Parse a single selector (no commas).

    :param text: selector text, surrounding whitespace allowed.
    :returns: :class:`Selector`.
    :raises SelectorParseError: on malformed input.
    """
    sc = _Scanner(text)
    sc.skip_ws()
    parts = []
    combinators = []
    compound, pe = _parse_compound(sc)
    parts.append(compound)
    while True:
        if pe is not None:
            sc.skip_ws()
            if not sc.eof():
                sc.error("pseudo-element must end the selector")
            break
        had_ws = sc.skip_ws()
        if sc.eof():
            break
        comb = None
        for cand in (CHILD, NEIGHBOUR, SIBLING):
            if sc.take(cand):
                comb = cand
                break
        if comb is None:
            if not had_ws:
                sc.error("expected combinator")
            comb = DESCENDANT
        sc.skip_ws()
        compound, pe = _parse_compound(sc)
        parts.append(compound)
        combinators.append(comb)
    return Selector(tuple(parts), tuple(combinators), pseudo_element=pe)


def split_selector_group(text):
    """Split selector-group text on top-level commas.

    Commas inside brackets/parens/strings do not split.
    """
    out = []
    depth = 0
    quote = None
    start = 0
    for i, ch in enumerate(text):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(text[start:i])
            start = i + 1
    out.append(text[start:])
    return out


def parse_selector_group(text):
    """Parse a comma-separated selector group.

    :returns: list of :class:`Selector` in source order.
    """
    chunks = split_selector_group(text)
    if any(not c.strip() for c in chunks):
        raise SelectorParseError("empty selector in group %r" % text)
    return [parse_selector(c) for c in chunks]


# ---------------------------------------------------------------------------
# Specificity


def _condition_specificity(cond):
    """(a, b, c) contribution of one condition."""
    if isinstance(cond, Negation):
        return _condition_specificity(cond.inner)
    if isinstance(cond, TypePart):
        return (0, 0, 1) if cond.ele is not None else (0, 0, 0)
    if isinstance(cond, AttrTest):
        if cond.form == "id":
            return (1, 0, 0)
        return (0, 1, 0)
    # pseudo-classes and positional pseudo-classes
    return (0, 1, 0)


def specificity(selector, important=False):
    """Extended specificity of a selector.

    :param selector: a :class:`Selector`.
    :param important: whether the paired declaration is ``!important``;
        becomes the leading component so important declarations outrank
        all normal ones.
    :returns: :class:`Specificity` ``(important, ids, others, types)``.
    """
    a = b = c = 0
    for part in selector.parts:
        if part.type_part.ele is not None:
            c += 1
        for cond in part.conditions:
            da, db, dc = _condition_specificity(cond)
            a, b, c = a + da, b + db, c + dc
    if selector.pseudo_element:
        c += 1
    return Specificity(important, a, b, c)


# ---------------------------------------------------------------------------
# Normalization


def _strip_form(cond):
    if isinstance(cond, AttrTest) and cond.form is not None:
        # Pin the semantic namespace so later stages need no special
        # cases: #v and bare [id...] become html|id tests.
        return AttrTest(cond.sem_ns(), cond.attr, cond.op, cond.value)
    if isinstance(cond, Positional) and cond.form is not None:
        return Positional(cond.kind, cond.a, cond.b)
    if isinstance(cond, Negation):
        return Negation(_strip_form(cond.inner))
    return cond


def normalize(selector):
    """Expand shorthand spellings into their canonical forms.

    ``.c``/``#i``/``:lang(l)`` become attribute tests, ``:first-child``
    and friends become ``an+b`` positionals, and ``::first-line`` /
    ``::first-letter`` acquire the implied ``:not(:empty)`` on the
    subject compound.  The pseudo-element tag itself is kept: selectors
    with different tags address different pseudo-trees.

    :returns: a new :class:`Selector`.
    """
    parts = []
    for part in selector.parts:
        conds = tuple(_strip_form(c) for c in part.conditions)
        parts.append(CompoundSelector(part.type_part, conds))
    if selector.pseudo_element in ("first-line", "first-letter"):
        last = parts[-1]
        extra = Negation(PseudoTest("empty"))
        if extra not in last.conditions:
            parts[-1] = CompoundSelector(last.type_part,
                                         last.conditions + (extra,))
    return Selector(tuple(parts), selector.combinators,
                    pseudo_element=selector.pseudo_element)


# ---------------------------------------------------------------------------
# Canonical text / weights


def serialize_selector(selector):
    """Canonical minimal text of a selector (single-space descendant,
    no other whitespace)."""
    return str(selector)


def selector_text_length(obj):
    """Length of an object's canonical text, whitespace excluded.

    Accepts a :class:`Selector`, a declaration, or plain text.  The
    non-whitespace count is what the covering weight model counts: each
    node contributes its text plus one separator character.
    """
    text = obj if isinstance(obj, str) else str(obj)
    return sum(1 for ch in text if not ch.isspace())


def node_weight(obj):
    """Weight of a selector or declaration node: text length + 1
    (the +1 pays for its comma/semicolon/brace separator)."""
    return selector_text_length(obj) + 1

"""Shorthand property table.

Maps each CSS shorthand property to the longhand properties it sets.
Two property names are *related* (they can overwrite each other's
effect) when they are equal, one is a shorthand of the other per this
table, one is a dash-prefix of the other (``border`` / ``border-width``),
or the pair is ``font`` / ``line-height`` (already in the table).

The table lists the official pairs; the dash-prefix rule is a
conservative approximation that catches vendor prefixes and nested
shorthands the table may miss.
"""

SHORTHANDS = {
    "animation": (
        "animation-name", "animation-duration", "animation-timing-function",
        "animation-delay", "animation-iteration-count", "animation-direction",
        "animation-fill-mode", "animation-play-state",
    ),
    "background": (
        "background-attachment", "background-clip", "background-color",
        "background-image", "background-origin", "background-position",
        "background-repeat", "background-size",
    ),
    "background-position": ("background-position-x", "background-position-y"),
    "border": ("border-width", "border-style", "border-color"),
    "border-color": (
        "border-top-color", "border-right-color",
        "border-bottom-color", "border-left-color",
    ),
    "border-style": (
        "border-top-style", "border-right-style",
        "border-bottom-style", "border-left-style",
    ),
    "border-width": (
        "border-top-width", "border-right-width",
        "border-bottom-width", "border-left-width",
    ),
    "border-top": ("border-top-width", "border-top-style", "border-top-color"),
    "border-right": (
        "border-right-width", "border-right-style", "border-right-color",
    ),
    "border-bottom": (
        "border-bottom-width", "border-bottom-style", "border-bottom-color",
    ),
    "border-left": (
        "border-left-width", "border-left-style", "border-left-color",
    ),
    "border-image": (
        "border-image-source", "border-image-slice", "border-image-width",
        "border-image-outset", "border-image-repeat",
    ),
    "border-radius": (
        "border-top-left-radius", "border-top-right-radius",
        "border-bottom-right-radius", "border-bottom-left-radius",
    ),
    "column-rule": (
        "column-rule-width", "column-rule-style", "column-rule-color",
    ),
    "columns": ("column-width", "column-count"),
    "flex": ("flex-grow", "flex-shrink", "flex-basis"),
    "flex-flow": ("flex-direction", "flex-wrap"),
    "font": (
        "font-style", "font-variant", "font-weight", "font-stretch",
        "font-size", "line-height", "font-family",
    ),
    "gap": ("row-gap", "column-gap"),
    "grid": (
        "grid-template-rows", "grid-template-columns", "grid-template-areas",
        "grid-auto-rows", "grid-auto-columns", "grid-auto-flow",
    ),
    "grid-area": (
        "grid-row-start", "grid-column-start",
        "grid-row-end", "grid-column-end",
    ),
    "grid-column": ("grid-column-start", "grid-column-end"),
    "grid-row": ("grid-row-start", "grid-row-end"),
    "grid-template": (
        "grid-template-rows", "grid-template-columns", "grid-template-areas",
    ),
    "inset": ("top", "right", "bottom", "left"),
    "list-style": (
        "list-style-type", "list-style-position", "list-style-image",
    ),
    "margin": ("margin-top", "margin-right", "margin-bottom", "margin-left"),
    "mask": (
        "mask-image", "mask-mode", "mask-position", "mask-size",
        "mask-repeat", "mask-origin", "mask-clip", "mask-composite",
    ),
    "offset": (
        "offset-position", "offset-path", "offset-distance",
        "offset-rotate", "offset-anchor",
    ),
    "outline": ("outline-color", "outline-style", "outline-width"),
    "overflow": ("overflow-x", "overflow-y"),
    "padding": (
        "padding-top", "padding-right", "padding-bottom", "padding-left",
    ),
    "place-content": ("align-content", "justify-content"),
    "place-items": ("align-items", "justify-items"),
    "place-self": ("align-self", "justify-self"),
    "text-decoration": (
        "text-decoration-line", "text-decoration-color",
        "text-decoration-style", "text-decoration-thickness",
    ),
    "transition": (
        "transition-property", "transition-duration",
        "transition-timing-function", "transition-delay",
    ),
}

_PAIRS = frozenset(
    (short, long)
    for short, longs in SHORTHANDS.items()
    for long in longs
)


def is_shorthand_of(declared, prop):
    """True when a declaration named ``declared`` also sets ``prop``."""
    if declared == prop:
        return True
    return (declared, prop) in _PAIRS or prop.startswith(declared + "-")


def related_property_names(p1, p2):
    """True when declarations named ``p1`` and ``p2`` can interact.

    :param p1: property name (lowercase).
    :param p2: property name (lowercase).
    """
    return is_shorthand_of(p1, p2) or is_shorthand_of(p2, p1)

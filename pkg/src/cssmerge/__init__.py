"""Semantics-preserving CSS minification by merging similar rules.

The pipeline: parse a stylesheet into a bipartite selector/declaration
graph, work out which pairs of (selector, declaration) edges must keep
their relative order (calling out to an automata-based selector
intersection engine), enumerate mergeable bicliques, and repeatedly ask a
Max-SAT solver for the insertion that saves the most bytes.
"""

__version__ = "0.1.0"

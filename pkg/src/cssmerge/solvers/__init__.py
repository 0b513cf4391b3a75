"""Bundled external-process solvers.

These are standalone command-line tools (installed as
``cssmerge-lia-solve`` and ``cssmerge-wcnf-solve``, or runnable via
``python -m cssmerge.solvers.lia`` / ``...wcnf``).  The engine only
talks to them over text protocols (SMT-LIB2 and extended DIMACS), so
any compatible solver can be substituted through configuration.
"""

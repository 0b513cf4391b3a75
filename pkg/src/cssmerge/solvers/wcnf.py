"""Weighted partial Max-SAT instances and an exact bundled solver.

An instance holds hard clauses (must hold) and weighted soft clauses
(each violated clause costs its weight); solving minimizes the total
violated weight subject to the hard clauses.  Instances serialize to
the extended DIMACS ``wcnf`` format and results to the conventional
``s``/``o``/``v`` output lines, so any external Max-SAT solver that
speaks these can substitute for the bundled one.

The bundled solver reduces to a 0/1 integer program: one binary per
variable, one binary relaxation literal per soft clause, a covering
row per clause, and the weighted sum of relaxations as the objective.
HiGHS (via ``scipy.optimize.milp``) solves it exactly; with integral
weights the proven optimum is the Max-SAT optimum.
"""

import argparse
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_array


class MaxSatFailure(RuntimeError):
    """The Max-SAT backend failed to produce a usable answer."""


@dataclass
class Wcnf:
    """A weighted partial CNF: hard clauses plus weighted soft clauses.

    Clauses are tuples of nonzero DIMACS literals (sign = polarity).
    ``num_vars`` tracks the highest variable in use; :meth:`new_var`
    hands out fresh ones.
    """

    num_vars: int = 0
    hard: List[Tuple[int, ...]] = field(default_factory=list)
    soft: List[Tuple[int, Tuple[int, ...]]] = field(default_factory=list)

    def new_var(self):
        self.num_vars += 1
        return self.num_vars

    def add_hard(self, *lits):
        self._check(lits)
        self.hard.append(tuple(lits))

    def add_soft(self, weight, *lits):
        if weight <= 0:
            raise ValueError("soft clause weight must be positive")
        self._check(lits)
        self.soft.append((weight, tuple(lits)))

    def _check(self, lits):
        for l in lits:
            if l == 0:
                raise ValueError("0 is not a DIMACS literal")
            if abs(l) > self.num_vars:
                self.num_vars = abs(l)

    @property
    def top(self):
        """Hard-clause weight: one more than the sum of all soft weights."""
        return sum(w for w, _ in self.soft) + 1


def emit_dimacs(wcnf):
    """Render the instance in extended DIMACS (``p wcnf n m top``)."""
    top = wcnf.top
    lines = ["p wcnf %d %d %d" % (wcnf.num_vars,
                                  len(wcnf.hard) + len(wcnf.soft), top)]
    for clause in wcnf.hard:
        lines.append("%d %s 0" % (top, " ".join(map(str, clause))))
    for weight, clause in wcnf.soft:
        lines.append("%d %s 0" % (weight, " ".join(map(str, clause))))
    return "\n".join(lines) + "\n"


def parse_dimacs(text):
    """Parse extended DIMACS back into a :class:`Wcnf`.

    The header's ``top`` decides hardness: clauses at weight >= top are
    hard.  Comment (``c``) lines are skipped.
    """
    wcnf = Wcnf()
    top = None
    declared_vars = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 5 or parts[1] != "wcnf":
                raise ValueError("bad wcnf header: %r" % line)
            declared_vars = int(parts[2])
            top = int(parts[4])
            continue
        if top is None:
            raise ValueError("clause before wcnf header")
        nums = [int(t) for t in line.split()]
        if nums[-1] != 0:
            raise ValueError("clause not 0-terminated: %r" % line)
        weight, clause = nums[0], tuple(nums[1:-1])
        if weight >= top:
            wcnf.hard.append(clause)
        else:
            wcnf.soft.append((weight, clause))
        for l in clause:
            wcnf.num_vars = max(wcnf.num_vars, abs(l))
    wcnf.num_vars = max(wcnf.num_vars, declared_vars)
    return wcnf


@dataclass
class MaxSatResult:
    """Outcome of one solve.

    ``status`` is ``"optimal"`` (proven), ``"feasible"`` (a model but
    no proof, e.g. timeout), ``"unsat"`` (hard clauses conflict) or
    ``"unknown"``.  ``cost`` is the violated soft weight of ``model``;
    ``model`` maps every variable to its truth value.
    """

    status: str
    cost: Optional[int] = None
    model: Dict[int, bool] = field(default_factory=dict)


def format_output(result, num_vars=None):
    """Render a result as solver output (``s``/``o``/``v`` lines)."""
    status_line = {
        "optimal": "s OPTIMUM FOUND",
        "feasible": "s SATISFIABLE",
        "unsat": "s UNSATISFIABLE",
        "unknown": "s UNKNOWN",
    }[result.status]
    lines = []
    if result.cost is not None:
        lines.append("o %d" % result.cost)
    lines.append(status_line)
    if result.model:
        n = num_vars or max(result.model)
        lits = [(v if result.model.get(v) else -v) for v in range(1, n + 1)]
        lines.append("v " + " ".join(map(str, lits)))
    return "\n".join(lines) + "\n"


def parse_output(text):
    """Parse ``s``/``o``/``v`` solver output lines into a result.

    Handles both the classic signed-literal ``v`` lines (possibly split
    over several lines) and the newer bitstring form (``v 0101...``).
    The reported cost is the last ``o`` line.
    """
    status = "unknown"
    cost = None
    model: Dict[int, bool] = {}
    bit_cursor = 0
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("o "):
            try:
                cost = int(line[2:].strip())
            except ValueError:
                pass
        elif line.startswith("s "):
            tag = line[2:].strip().upper()
            if tag == "OPTIMUM FOUND":
                status = "optimal"
            elif tag == "SATISFIABLE":
                status = "feasible"
            elif tag == "UNSATISFIABLE":
                status = "unsat"
            else:
                status = "unknown"
        elif line.startswith("v") and len(line) > 1 and line[1].isspace():
            toks = line[1:].split()
            # A lone 0/1-only token is the concatenated-bits form; require
            # a leading zero or length > 2 so short classic literal lines
            # ("v 1", "v 10") keep their usual reading.
            if (len(toks) == 1 and set(toks[0]) <= {"0", "1"}
                    and (toks[0].startswith("0") or len(toks[0]) > 2)):
                for ch in toks[0]:
                    bit_cursor += 1
                    model[bit_cursor] = ch == "1"
            else:
                for tok in toks:
                    l = int(tok)
                    if l != 0:
                        model[abs(l)] = l > 0
    return MaxSatResult(status=status, cost=cost, model=model)


# ---------------------------------------------------------------------------
# Bundled exact solver (0/1 integer program via HiGHS)


def check_cost(wcnf, model):
    """Violated soft weight of ``model``; raises if a hard clause fails."""

    def sat(clause):
        return any(model.get(abs(l), False) == (l > 0) for l in clause)

    for clause in wcnf.hard:
        if not sat(clause):
            raise MaxSatFailure("model violates hard clause %r" % (clause,))
    return sum(w for w, clause in wcnf.soft if not sat(clause))


def solve_wcnf(wcnf, timeout=None):
    """Minimize violated soft weight; exact unless the timeout cuts in.

    Returns a :class:`MaxSatResult`; the model covers every variable
    (free ones default to false).  The reported cost is re-derived from
    the model by exact clause evaluation, never trusted from the LP.
    """
    n = wcnf.num_vars
    softs = wcnf.soft
    nrelax = len(softs)
    ncols = n + nrelax

    if any(len(c) == 0 for c in wcnf.hard):
        return MaxSatResult(status="unsat")

    # Strategy: column j-1 is variable j; columns n.. are per-soft
    # relaxation binaries.  A clause with P positive and N negative
    # literals becomes  sum(pos) - sum(neg) [+ relax] >= 1 - |N|.
    rows_data: List[int] = []
    rows_i: List[int] = []
    rows_j: List[int] = []
    lower: List[float] = []
    row = 0

    def add_clause(clause, relax_col):
        nonlocal row
        neg = 0
        seen: Dict[int, int] = {}
        for l in clause:
            col = abs(l) - 1
            coef = 1 if l > 0 else -1
            if col in seen and seen[col] != coef:
                return  # tautology (x or not x): always satisfied
            seen[col] = coef
        for col, coef in seen.items():
            rows_data.append(coef)
            rows_i.append(row)
            rows_j.append(col)
            if coef < 0:
                neg += 1
        if relax_col is not None:
            rows_data.append(1)
            rows_i.append(row)
            rows_j.append(relax_col)
        lower.append(1 - neg)
        row += 1

    for clause in wcnf.hard:
        add_clause(clause, None)
    weights = np.zeros(ncols)
    for k, (w, clause) in enumerate(softs):
        weights[n + k] = w
        if clause:
            add_clause(clause, n + k)
        else:
            # Empty soft clause: unconditionally violated.
            rows_data.append(1)
            rows_i.append(row)
            rows_j.append(n + k)
            lower.append(1)
            row += 1

    constraints = []
    if row:
        mat = csr_array((rows_data, (rows_i, rows_j)), shape=(row, ncols))
        constraints.append(LinearConstraint(mat, np.array(lower), np.inf))

    options = {"mip_rel_gap": 0.0}
    if timeout is not None:
        options["time_limit"] = float(timeout)
    res = milp(weights, constraints=constraints,
               integrality=np.ones(ncols), bounds=Bounds(0, 1),
               options=options)

    if res.status == 2:  # proven infeasible
        return MaxSatResult(status="unsat")
    if res.x is None:
        if res.status == 1:
            return MaxSatResult(status="unknown")
        raise MaxSatFailure("milp failed: %s" % res.message)
    model = {v: bool(round(res.x[v - 1])) for v in range(1, n + 1)}
    cost = check_cost(wcnf, model)
    status = "optimal" if res.status == 0 else "feasible"
    return MaxSatResult(status=status, cost=cost, model=model)


def solve_external(wcnf, cmd, timeout=None):
    """Run an external Max-SAT solver on the instance.

    ``cmd`` is the argv prefix; the instance is written to a temporary
    ``.wcnf`` file appended as the last argument, and the solver's
    stdout is parsed for ``s``/``o``/``v`` lines.  Reported models are
    re-checked against the hard clauses and re-costed locally.
    """
    if isinstance(cmd, str):
        cmd = (cmd,)
    fd, path = tempfile.mkstemp(suffix=".wcnf")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(emit_dimacs(wcnf))
        try:
            proc = subprocess.run(tuple(cmd) + (path,), capture_output=True,
                                  text=True, timeout=timeout)
        except subprocess.TimeoutExpired:
            return MaxSatResult(status="unknown")
        except OSError as exc:
            raise MaxSatFailure("cannot run %r: %s" % (cmd, exc))
        result = parse_output(proc.stdout)
        if result.model:
            result.cost = check_cost(wcnf, result.model)
        elif result.status not in ("unsat", "unknown"):
            raise MaxSatFailure("solver %r reported %s without a model"
                                % (cmd, result.status))
        return result
    finally:
        os.unlink(path)


def solve(wcnf, cmd=None, timeout=None):
    """Solve with the external command if given, else the bundled solver."""
    if cmd:
        return solve_external(wcnf, cmd, timeout=timeout)
    return solve_wcnf(wcnf, timeout=timeout)


def main(argv=None):
    """Standalone entry point: solve one extended-DIMACS file.

    Reads the instance from the file argument (or stdin), prints the
    usual ``o``/``s``/``v`` lines.  This makes the bundled solver
    usable as an "external" command, which the tests exploit to
    exercise the subprocess adapter.
    """
    ap = argparse.ArgumentParser(
        prog="cssmerge-wcnf-solve",
        description="Exact weighted partial Max-SAT solver for extended "
                    "DIMACS wcnf files.")
    ap.add_argument("file", nargs="?", help="instance (default: stdin)")
    ap.add_argument("--timeout", type=float, default=None, metavar="S")
    args = ap.parse_args(argv)
    if args.file:
        with open(args.file, "r") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    try:
        wcnf = parse_dimacs(text)
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    res = solve_wcnf(wcnf, timeout=args.timeout)
    sys.stdout.write(format_output(res, num_vars=wcnf.num_vars))
    return 0


if __name__ == "__main__":
    sys.exit(main())

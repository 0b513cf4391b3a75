"""Standalone linear-integer-arithmetic satisfiability solver.

Reads the quantifier-free linear integer arithmetic fragment of SMT-LIB2
(``declare-fun``/``declare-const`` over ``Int``, boolean structure over
linear comparisons) and answers ``sat``/``unsat``/``unknown``.

Pipeline: negation normal form (negations pushed into the comparisons,
so every literal becomes a ``sum <= const`` atom) -> Tseitin CNF ->
mixed 0/1 integer program (clause rows plus big-M indicator rows tying
each atom variable to its inequality) solved by HiGHS via
``scipy.optimize.milp``.  Every model is re-checked by exact integer
evaluation of the original assertions before ``sat`` is reported; a
failed check reports ``unknown`` so callers never trust a bad model.

Completeness caveat: variables with no derivable bounds get a default
box (``--int-bound``, default 10**6).  Instances whose only models lie
outside the box come back ``unsat``; callers should pick the bound to
cover their small-model guarantees.

Usage::

    lia-solve [file.smt2]      # no file: incremental REPL on stdin

Supports (push)/(pop)/(reset)/(exit) for long-lived sessions.
"""

import argparse
import re
import sys

_TOKEN_RE = re.compile(r'"[^"]*"|[()]|[^\s()";]+|;[^\n]*')


def tokenize(text):
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        if tok.startswith(";"):
            continue
        yield tok


def parse_sexprs(text):
    """Parse all top-level s-expressions in ``text``."""
    out = []
    stack = []
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack:
                raise ValueError("unbalanced )")
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                out.append(done)
        else:
            if stack:
                stack[-1].append(tok)
            else:
                out.append(tok)
    if stack:
        raise ValueError("unbalanced (")
    return out


_INT_RE = re.compile(r"-?\d+")


def _is_int(tok):
    return isinstance(tok, str) and _INT_RE.fullmatch(tok)


class SolverError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Linear terms: dict var -> coeff, plus constant.


def lin_term(sx, declared):
    """Build a linear term (coeffs dict, const) from an s-expression."""
    if isinstance(sx, str):
        if _is_int(sx):
            return {}, int(sx)
        if sx not in declared:
            raise SolverError("undeclared symbol %r" % sx)
        return {sx: 1}, 0
    op = sx[0]
    args = sx[1:]
    if op == "+":
        coeffs, const = {}, 0
        for a in args:
            c2, k2 = lin_term(a, declared)
            for v, c in c2.items():
                coeffs[v] = coeffs.get(v, 0) + c
            const += k2
        return coeffs, const
    if op == "-":
        if len(args) == 1:
            c2, k2 = lin_term(args[0], declared)
            return {v: -c for v, c in c2.items()}, -k2
        coeffs, const = lin_term(args[0], declared)
        coeffs = dict(coeffs)
        for a in args[1:]:
            c2, k2 = lin_term(a, declared)
            for v, c in c2.items():
                coeffs[v] = coeffs.get(v, 0) - c
            const -= k2
        return coeffs, const
    if op == "*":
        factor = 1
        linear = None
        for a in args:
            c2, k2 = lin_term(a, declared)
            if c2:
                if linear is not None:
                    raise SolverError("nonlinear product %r" % (sx,))
                linear = (c2, k2)
            else:
                factor *= k2
        if linear is None:
            return {}, factor
        c2, k2 = linear
        return {v: c * factor for v, c in c2.items()}, k2 * factor
    raise SolverError("unsupported term %r" % (sx,))


def _atom(c1, k1, c2, k2, strict=False):
    """Atom for t1 <= t2 (or t1 < t2): normalized (coeffs, const)."""
    coeffs = dict(c1)
    for v, c in c2.items():
        coeffs[v] = coeffs.get(v, 0) - c
    coeffs = {v: c for v, c in coeffs.items() if c}
    const = k2 - k1
    if strict:
        const -= 1
    return ("atom", tuple(sorted(coeffs.items())), const)


TRUE = ("true",)
FALSE = ("false",)


def nnf(sx, declared, neg=False):
    """Negation normal form with only positive ``<=`` atoms."""
    if isinstance(sx, str):
        if sx == "true":
            return FALSE if neg else TRUE
        if sx == "false":
            return TRUE if neg else FALSE
        raise SolverError("boolean symbol %r unsupported" % sx)
    op = sx[0]
    args = sx[1:]
    if op == "not":
        return nnf(args[0], declared, not neg)
    if op == "=>":
        expanded = ["or"] + [["not", a] for a in args[:-1]] + [args[-1]]
        return nnf(expanded, declared, neg)
    if op in ("and", "or"):
        flip = (op == "and") == neg
        kids = [nnf(a, declared, neg) for a in args]
        kind = "or" if flip else "and"
        flat = []
        for k in kids:
            if k == (TRUE if kind == "and" else FALSE):
                continue
            if k == (FALSE if kind == "and" else TRUE):
                return FALSE if kind == "and" else TRUE
            if k[0] == kind:
                flat.extend(k[1])
            else:
                flat.append(k)
        if not flat:
            return TRUE if kind == "and" else FALSE
        if len(flat) == 1:
            return flat[0]
        return (kind, tuple(flat))
    if op in ("<=", "<", ">=", ">", "=", "distinct"):
        terms = [lin_term(a, declared) for a in args]
        pieces = []
        if op == "distinct":
            # conjunction of pairwise disequalities
            for i in range(len(terms)):
                for j in range(i + 1, len(terms)):
                    pieces.append(("or", (
                        _atom(*terms[i], *terms[j], strict=True),
                        _atom(*terms[j], *terms[i], strict=True))))
            conj = ("and", tuple(pieces)) if len(pieces) > 1 else pieces[0]
            return nnf_formula_neg(conj) if neg else _const_fold(conj)
        for t1, t2 in zip(terms, terms[1:]):
            if op == "<=":
                pieces.append(_atom(*t1, *t2))
            elif op == "<":
                pieces.append(_atom(*t1, *t2, strict=True))
            elif op == ">=":
                pieces.append(_atom(*t2, *t1))
            elif op == ">":
                pieces.append(_atom(*t2, *t1, strict=True))
            else:  # "="
                pieces.append(("and", (_atom(*t1, *t2), _atom(*t2, *t1))))
        conj = ("and", tuple(pieces)) if len(pieces) > 1 else pieces[0]
        conj = _const_fold(conj)
        return nnf_formula_neg(conj) if neg else conj
    raise SolverError("unsupported formula %r" % (sx,))


def nnf_formula_neg(f):
    """Negate an NNF formula built from atoms/and/or."""
    if f == TRUE:
        return FALSE
    if f == FALSE:
        return TRUE
    if f[0] == "atom":
        _, coeffs, const = f
        flipped = tuple(sorted((v, -c) for v, c in coeffs))
        return _const_fold_atom(("atom", flipped, -const - 1))
    kind = "or" if f[0] == "and" else "and"
    return (kind, tuple(nnf_formula_neg(k) for k in f[1]))


def _const_fold_atom(f):
    if f[0] == "atom" and not f[1]:
        return TRUE if 0 <= f[2] else FALSE
    return f


def _const_fold(f):
    if f[0] == "atom":
        return _const_fold_atom(f)
    if f[0] in ("and", "or"):
        kids = tuple(_const_fold(k) for k in f[1])
        keep = []
        for k in kids:
            if k == (TRUE if f[0] == "and" else FALSE):
                continue
            if k == (FALSE if f[0] == "and" else TRUE):
                return FALSE if f[0] == "and" else TRUE
            keep.append(k)
        if not keep:
            return TRUE if f[0] == "and" else FALSE
        if len(keep) == 1:
            return keep[0]
        return (f[0], tuple(keep))
    return f


# ---------------------------------------------------------------------------
# Exact model checking (independent of the MILP path)


def eval_term(sx, env):
    if isinstance(sx, str):
        if _is_int(sx):
            return int(sx)
        return env[sx]
    op = sx[0]
    args = [eval_term(a, env) for a in sx[1:]]
    if op == "+":
        return sum(args)
    if op == "-":
        return -args[0] if len(args) == 1 else args[0] - sum(args[1:])
    if op == "*":
        out = 1
        for a in args:
            out *= a
        return out
    raise SolverError("unsupported term %r" % (sx,))


def eval_formula(sx, env):
    if isinstance(sx, str):
        if sx == "true":
            return True
        if sx == "false":
            return False
        raise SolverError("boolean symbol %r" % sx)
    op = sx[0]
    if op == "not":
        return not eval_formula(sx[1], env)
    if op == "and":
        return all(eval_formula(a, env) for a in sx[1:])
    if op == "or":
        return any(eval_formula(a, env) for a in sx[1:])
    if op == "=>":
        args = sx[1:]
        return (not all(eval_formula(a, env) for a in args[:-1])) \
            or eval_formula(args[-1], env)
    if op in ("<=", "<", ">=", ">", "="):
        vals = [eval_term(a, env) for a in sx[1:]]
        pairs = list(zip(vals, vals[1:]))
        if op == "<=":
            return all(a <= b for a, b in pairs)
        if op == "<":
            return all(a < b for a, b in pairs)
        if op == ">=":
            return all(a >= b for a, b in pairs)
        if op == ">":
            return all(a > b for a, b in pairs)
        return all(a == b for a, b in pairs)
    if op == "distinct":
        vals = [eval_term(a, env) for a in sx[1:]]
        return len(set(vals)) == len(vals)
    raise SolverError("unsupported formula %r" % (sx,))


# ---------------------------------------------------------------------------
# CNF + MILP


class _Cnf:
    def __init__(self):
        self.nvars = 0
        self.clauses = []
        self.atom_var = {}
        self.memo = {}

    def new_var(self):
        self.nvars += 1
        return self.nvars

    def lit_for(self, f):
        key = f
        if key in self.memo:
            return self.memo[key]
        if f[0] == "atom":
            v = self.atom_var.get((f[1], f[2]))
            if v is None:
                v = self.new_var()
                self.atom_var[(f[1], f[2])] = v
            self.memo[key] = v
            return v
        v = self.new_var()
        kids = [self.lit_for(k) for k in f[1]]
        if f[0] == "and":
            for k in kids:
                self.clauses.append((-v, k))
        else:
            self.clauses.append(tuple([-v] + kids))
        self.memo[key] = v
        return v


def solve(assertions, declared, int_bound=10 ** 6, time_limit=None):
    """Decide satisfiability of the conjunction of ``assertions``.

    :returns: ("sat", model_dict) / ("unsat", None) / ("unknown", None).
    """
    formulas = []
    for a in assertions:
        f = _const_fold(nnf(a, declared))
        if f == FALSE:
            return "unsat", None
        if f != TRUE:
            formulas.append(f)
    intvars = sorted(declared)
    if not formulas:
        return "sat", {v: 0 for v in intvars}

    # Bound inference from top-level mandatory single-variable atoms.
    lo = {v: -int_bound for v in intvars}
    hi = {v: int_bound for v in intvars}
    for f in formulas:
        units = [f] if f[0] == "atom" else \
            (list(f[1]) if f[0] == "and" else [])
        for u in units:
            if u[0] != "atom" or len(u[1]) != 1:
                continue
            (v, c), = u[1]
            const = u[2]
            if c > 0:
                hi[v] = min(hi[v], const // c)
            elif c < 0:
                # c*v <= const  =>  v >= ceil(const/c)
                lo[v] = max(lo[v], -((-const) // c))

    cnf = _Cnf()
    root_lits = [cnf.lit_for(f) for f in formulas]
    for lit in root_lits:
        cnf.clauses.append((lit,))

    import numpy as np
    from scipy import sparse
    from scipy.optimize import milp, LinearConstraint, Bounds

    nb = cnf.nvars
    ni = len(intvars)
    idx_int = {v: nb + i for i, v in enumerate(intvars)}
    ntot = nb + ni

    rows = []
    cols = []
    data = []
    lbs = []
    ubs = []
    r = 0
    for clause in cnf.clauses:
        negs = 0
        for lit in clause:
            v = abs(lit) - 1
            rows.append(r)
            cols.append(v)
            if lit > 0:
                data.append(1.0)
            else:
                data.append(-1.0)
                negs += 1
        lbs.append(1.0 - negs)
        ubs.append(np.inf)
        r += 1

    for (coeffs, const), bvar in sorted(cnf.atom_var.items(),
                                        key=lambda kv: kv[1]):
        # b=1  =>  sum coeffs <= const   via   sum + M*b <= const + M
        mx = 0
        for v, c in coeffs:
            mx += c * (hi[v] if c > 0 else lo[v])
        slack = mx - const  # worst-case violation
        if slack <= 0:
            continue  # atom always true within the box
        for v, c in coeffs:
            rows.append(r)
            cols.append(idx_int[v])
            data.append(float(c))
        rows.append(r)
        cols.append(bvar - 1)
        data.append(float(slack))
        lbs.append(-np.inf)
        ubs.append(float(const + slack))
        r += 1

    lower = np.concatenate([np.zeros(nb), np.array([lo[v] for v in intvars],
                                                   dtype=float)]) \
        if ni else np.zeros(nb)
    upper = np.concatenate([np.ones(nb), np.array([hi[v] for v in intvars],
                                                  dtype=float)]) \
        if ni else np.ones(nb)
    if ni and np.any(lower[nb:] > upper[nb:]):
        return "unsat", None

    mat = sparse.csc_array((data, (rows, cols)), shape=(r, ntot)) if r else None
    constraints = [LinearConstraint(mat, np.array(lbs), np.array(ubs))] \
        if r else []
    options = {}
    if time_limit:
        options["time_limit"] = time_limit
    res = milp(c=np.zeros(ntot), integrality=np.ones(ntot),
               bounds=Bounds(lower, upper), constraints=constraints,
               options=options)
    if res.status == 2:  # infeasible
        return "unsat", None
    if not res.success or res.x is None:
        return "unknown", None
    model = {v: int(round(res.x[idx_int[v]])) for v in intvars}
    env = dict(model)
    try:
        if all(eval_formula(a, env) for a in assertions):
            return "sat", model
    except SolverError:
        pass
    return "unknown", None


# ---------------------------------------------------------------------------
# Session / CLI


class Session:
    """An incremental solving session over SMT-LIB2 commands."""

    def __init__(self, int_bound=10 ** 6, time_limit=None, out=None):
        self.int_bound = int_bound
        self.time_limit = time_limit
        self.out = out or sys.stdout
        self.reset()

    def reset(self):
        self.decl_stack = [set()]
        self.assert_stack = [[]]
        self.model = None

    def _declared(self):
        out = set()
        for level in self.decl_stack:
            out |= level
        return out

    def _assertions(self):
        out = []
        for level in self.assert_stack:
            out.extend(level)
        return out

    def _say(self, text):
        self.out.write(text + "\n")
        self.out.flush()

    def handle(self, sx):
        """Execute one command; returns False when the session ends."""
        if not isinstance(sx, list) or not sx:
            raise SolverError("bad command %r" % (sx,))
        cmd = sx[0]
        if cmd in ("set-logic", "set-option", "set-info"):
            return True
        if cmd in ("declare-fun", "declare-const"):
            name = sx[1]
            sort = sx[-1]
            if sort != "Int":
                raise SolverError("only Int sort is supported, got %r"
                                  % (sort,))
            self.decl_stack[-1].add(name)
            return True
        if cmd == "assert":
            self.assert_stack[-1].append(sx[1])
            return True
        if cmd == "push":
            n = int(sx[1]) if len(sx) > 1 else 1
            for _ in range(n):
                self.decl_stack.append(set())
                self.assert_stack.append([])
            return True
        if cmd == "pop":
            n = int(sx[1]) if len(sx) > 1 else 1
            for _ in range(n):
                if len(self.assert_stack) > 1:
                    self.decl_stack.pop()
                    self.assert_stack.pop()
            return True
        if cmd == "reset":
            self.reset()
            return True
        if cmd == "check-sat":
            status, model = solve(self._assertions(), self._declared(),
                                  self.int_bound, self.time_limit)
            self.model = model
            self._say(status)
            return True
        if cmd == "get-model":
            if self.model is None:
                self._say("(error \"no model\")")
            else:
                lines = ["(model"]
                for v in sorted(self.model):
                    val = self.model[v]
                    sval = str(val) if val >= 0 else "(- %d)" % -val
                    lines.append("  (define-fun %s () Int %s)" % (v, sval))
                lines.append(")")
                self._say("\n".join(lines))
            return True
        if cmd == "echo":
            self._say(sx[1].strip('"'))
            return True
        if cmd == "exit":
            return False
        raise SolverError("unsupported command %r" % (cmd,))


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="QF_LIA satisfiability solver (SMT-LIB2 subset)")
    ap.add_argument("file", nargs="?", help="input file; stdin if omitted")
    ap.add_argument("--int-bound", type=int, default=10 ** 6,
                    help="default box for otherwise-unbounded variables")
    ap.add_argument("--time-limit", type=float, default=None,
                    help="per-check time limit in seconds")
    args = ap.parse_args(argv)
    sess = Session(int_bound=args.int_bound, time_limit=args.time_limit)

    if args.file:
        text = open(args.file).read()
        for sx in parse_sexprs(text):
            try:
                if not sess.handle(sx):
                    break
            except SolverError as e:
                sys.stdout.write("(error \"%s\")\n" % e)
                sys.stdout.flush()
        return 0

    # Incremental mode: execute commands as their parens close.
    buf = ""
    depth = 0
    for line in sys.stdin:
        buf += line
        depth = buf.count("(") - buf.count(")")
        if depth > 0 or not buf.strip():
            continue
        try:
            exprs = parse_sexprs(buf)
        except ValueError:
            continue  # keep buffering
        buf = ""
        stop = False
        for sx in exprs:
            try:
                if not sess.handle(sx):
                    stop = True
                    break
            except SolverError as e:
                sys.stdout.write("(error \"%s\")\n" % e)
                sys.stdout.flush()
        if stop:
            break
    return 0


if __name__ == "__main__":
    sys.exit(main())

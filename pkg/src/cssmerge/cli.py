"""Batch driver: parse a stylesheet, greedily apply optimal merges,
validate the result, and report.

The loop per input file: normalize (parse, strip whitespace/comments),
then per rule segment (runs of rules between at-rule barriers) trim and
repeatedly {find the best merging opportunity; apply it while it
strictly shrinks the weight}.  Equivalence validation re-checks the
output against the input both structurally (same graph, order
respected) and behaviorally (identical cascade results over an
enumerated family of small documents).

Exit codes: 0 success, 1 parse/input error, 2 solver error,
3 validation failure.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .biclique import build_enumeration
from .dom import compute_cascade, derive_bounds, enumerate_trees
from .emptiness import EmptinessConfig, SolverFailure
from .graph import (Passthrough, Rule, Stylesheet, StylesheetParseError,
                    apply_opportunity, build_graph, covering_edges,
                    edge_index, extract_edge_order, is_valid_covering,
                    parse_stylesheet, serialize, total_weight, trim)
from .maxsat import find_best_opportunity, find_best_opportunity_partitioned
from .selector import SelectorParseError
from .solvers.wcnf import MaxSatFailure

log = logging.getLogger(__name__)

REPORT_VERSION = 1


@dataclass
class RunConfig:
    """Everything one minification run needs to know.

    ``mode`` picks the search flavor: "full" enumerates every orderable
    biclique and gives all nodes exclusion variables (exact best merge
    per iteration); "fast" keeps only bicliques insertable anywhere and
    restricts exclusion variables to order-constrained nodes (smaller
    instances, possibly missing some merges).  ``backend`` selects the
    selector-intersection engine.  ``validate`` holds (depth, branch)
    tree-enumeration bounds, or None to skip validation.
    """

    inputs: Tuple[str, ...] = ()
    output: Optional[str] = None
    timeout: Optional[float] = 300.0
    workers: int = 1
    partitions: int = 1
    mode: str = "full"
    backend: str = "optimized"
    smt_solver_cmd: Optional[Tuple[str, ...]] = None
    maxsat_solver_cmd: Optional[Tuple[str, ...]] = None
    emit_smt: Optional[str] = None
    emit_wcnf: Optional[str] = None
    emit_graph: Optional[str] = None
    validate: Optional[Tuple[int, int]] = None
    max_iterations: int = 100
    deterministic: bool = False
    report_path: Optional[str] = None

    def __post_init__(self):
        if self.deterministic:
            self.workers = 1
            self.partitions = 1
        if self.mode not in ("fast", "full"):
            raise ValueError("mode must be 'fast' or 'full'")
        if self.backend not in ("optimized", "full", "both"):
            raise ValueError("backend must be 'optimized', 'full' or 'both'")


@dataclass
class IterationRecord:
    """One applied merge: what was inserted where, and the effect."""

    segment: int
    rule: str
    position: int
    weight_before: int
    weight_after: int
    bytes_after: int
    wall_time: float


@dataclass
class FileReport:
    input: str
    baseline_bytes: int
    output_bytes: int
    iterations: List[IterationRecord] = field(default_factory=list)
    stopped: str = "no-improvement"
    validation: Optional[dict] = None
    wall_time: float = 0.0


@dataclass
class RunReport:
    """Versioned run summary, JSON-serializable via :meth:`as_dict`."""

    files: List[FileReport] = field(default_factory=list)
    config: Optional[dict] = None
    wall_time: float = 0.0
    version: int = REPORT_VERSION

    def as_dict(self):
        return asdict(self)

    def to_json(self, indent=2):
        return json.dumps(self.as_dict(), indent=indent, sort_keys=True)


# ---------------------------------------------------------------------------
# Core loop


def _emptiness_config(cfg):
    return EmptinessConfig(backend=cfg.backend,
                           solver_cmd=cfg.smt_solver_cmd,
                           emit_smt_dir=cfg.emit_smt)


def _segment_stylesheet(ss, rules):
    return Stylesheet(tuple(rules), dict(ss.sel_map), dict(ss.decl_map))


def minify_stylesheet(ss, cfg, report=None):
    """Greedy merge loop over one parsed stylesheet.

    Returns the rewritten :class:`Stylesheet`.  ``report`` (a
    :class:`FileReport`) collects per-iteration records and the stop
    reason when given.
    """
    start = time.monotonic()
    deadline = start + cfg.timeout if cfg.timeout else None
    ecfg = _emptiness_config(cfg)
    segments = [trim(seg) for seg in ss.segments()]
    iterations_left = cfg.max_iterations
    stopped = "no-improvement"

    def bytes_now():
        return len(serialize(ss.with_segments(segments)))

    for si in range(len(segments)):
        cov = segments[si]
        if len(cov) < 2:
            continue
        sub = _segment_stylesheet(ss, cov)
        g = build_graph(sub)
        if not g.edges:
            continue
        workers = 1 if cfg.deterministic else cfg.workers
        g.order = extract_edge_order(sub, cfg=ecfg, workers=workers)
        exclusion = "order" if cfg.mode == "fast" else "all"
        itno = 0
        while iterations_left > 0:
            remaining = None
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    stopped = "timeout"
                    break
            enum = build_enumeration(cov, g, g.order, mode=cfg.mode)
            if not enum.bicliques:
                break
            emit = None
            if cfg.emit_wcnf:
                path = os.path.join(cfg.emit_wcnf,
                                    "seg%d_iter%d.wcnf" % (si, itno))

                def emit(text, path=path):
                    with open(path, "w") as fh:
                        fh.write(text)

            t0 = time.monotonic()
            try:
                if cfg.workers * cfg.partitions > 1:
                    res = find_best_opportunity_partitioned(
                        cov, g, enum, workers=cfg.workers,
                        partitions=cfg.partitions, exclusion=exclusion,
                        timeout=remaining, solver_cmd=cfg.maxsat_solver_cmd)
                else:
                    res = find_best_opportunity(
                        cov, g, enum, exclusion=exclusion, timeout=remaining,
                        solver_cmd=cfg.maxsat_solver_cmd,
                        emit_wcnf=emit)
            except (MaxSatFailure, SolverFailure):
                log.warning("segment %d iteration %d: solver failed, "
                            "keeping current covering", si, itno,
                            exc_info=True)
                stopped = "solver-failure"
                break
            if res.status == "unknown":
                stopped = "timeout"
                break
            if res.opportunity is None or res.saving <= 0:
                break
            before = total_weight(cov)
            cov = apply_opportunity(cov, res.opportunity)
            segments[si] = cov
            itno += 1
            iterations_left -= 1
            if iterations_left == 0:
                stopped = "max-iterations"
            if report is not None:
                report.iterations.append(IterationRecord(
                    segment=si, rule=res.opportunity.rule.text,
                    position=res.opportunity.position,
                    weight_before=before, weight_after=res.cost,
                    bytes_after=bytes_now(),
                    wall_time=time.monotonic() - t0))
        if stopped in ("timeout", "solver-failure"):
            break
    out = ss.with_segments(segments)
    if report is not None:
        report.stopped = stopped
        report.wall_time = time.monotonic() - start
    return out


# ---------------------------------------------------------------------------
# Equivalence validation


@dataclass
class ValidationVerdict:
    """PASS/FAIL with an explanation and, on FAIL, a witness when one
    was found (tree, node position, and the disagreeing style slot)."""

    passed: bool
    reason: str
    checks: int = 0
    witness: Optional[dict] = None

    def as_dict(self):
        return asdict(self)


@dataclass
class _CascadeDecl:
    prop: str
    value: str
    important: bool


@dataclass
class _CascadeRule:
    selectors: tuple
    decls: tuple


def _cascade_rules(ss):
    out = []
    for rule in ss.rules:
        out.append(_CascadeRule(
            tuple(ss.sel_map[s] for s in rule.selectors),
            tuple(_CascadeDecl(d.name, d.value, d.important)
                  for d in (ss.decl_map[p] for p in rule.declarations))))
    return out


def _order_winners(covering, order):
    winners = {}
    for e1, e2 in order:
        i1, i2 = edge_index(covering, e1), edge_index(covering, e2)
        if i1 != i2:
            winners[(e1, e2)] = e2 if i2 > i1 else e1
        else:
            decls = covering[i1 - 1].declarations if i1 else ()
            winners[(e1, e2)] = e2 if (not i1 or decls.index(e2[1])
                                       >= decls.index(e1[1])) else e1
    return winners


def validate_equivalence(original, minified, bounds=(2, 2), *, cfg=None,
                         max_values=12, max_checks=5000):
    """Check that two stylesheets mean the same thing.

    Structural part: passthrough blocks are untouched, each rule
    segment realizes the same selector/declaration graph, both sides
    satisfy the order extracted from the original, and every ordered
    pair resolves to the same winner.  Behavioral part: cascade
    results agree on every (document tree, node) drawn from an
    enumeration bounded by ``bounds`` = (depth, branch), capped at
    ``max_checks`` node checks.

    On structural failure the behavioral hunt still runs so the
    verdict can carry a concrete witness document.
    """
    failure = None
    if [p.text for p in original.items if isinstance(p, Passthrough)] != \
       [p.text for p in minified.items if isinstance(p, Passthrough)]:
        failure = "passthrough blocks differ"
    else:
        osegs, msegs = original.segments(), minified.segments()
        for si, (oseg, mseg) in enumerate(zip(osegs, msegs)):
            if covering_edges(oseg) != covering_edges(mseg):
                failure = "segment %d: edge sets differ" % si
                break
            if not oseg:
                continue
            g = build_graph(_segment_stylesheet(original, oseg))
            g.order = extract_edge_order(
                _segment_stylesheet(original, oseg),
                cfg=_emptiness_config(cfg) if cfg else None)
            if not is_valid_covering(tuple(oseg), g):
                failure = "segment %d: original violates its own order" % si
                break
            if not is_valid_covering(tuple(mseg), g):
                failure = "segment %d: minified violates the order" % si
                break
            if _order_winners(tuple(oseg), g.order) != \
               _order_winners(tuple(mseg), g.order):
                failure = "segment %d: cascade winners differ" % si
                break

    sels = {}
    for ss in (original, minified):
        for rule in ss.rules:
            for s in rule.selectors:
                sels.setdefault(s, ss.sel_map[s])
    depth, branch = bounds
    tb = derive_bounds(list(sels.values()), max_depth=depth,
                       max_branch=branch, max_values=max_values)
    rules_a = _cascade_rules(original)
    rules_b = _cascade_rules(minified)
    checks = 0
    witness = None
    for tree in enumerate_trees(tb):
        for pos in tree.nodes():
            got_a = compute_cascade(tree, pos, rules_a)
            got_b = compute_cascade(tree, pos, rules_b)
            checks += 1
            if got_a != got_b:
                da, db = got_a.as_dict(), got_b.as_dict()
                slots = sorted(k for k in set(da) | set(db)
                               if da.get(k) != db.get(k))
                witness = {
                    "tree": repr(tree),
                    "node": list(pos),
                    "slot": repr(slots[0]),
                    "original": repr(da.get(slots[0])),
                    "minified": repr(db.get(slots[0])),
                }
                if failure is None:
                    failure = "cascade disagreement on enumerated document"
                break
            if checks >= max_checks:
                break
        if witness is not None or checks >= max_checks:
            break
    if failure is not None:
        return ValidationVerdict(False, failure, checks, witness)
    return ValidationVerdict(True, "equivalent within bounds", checks)


# ---------------------------------------------------------------------------
# Driver


def _graph_dump(ss, cfg):
    ecfg = _emptiness_config(cfg)
    segs = []
    for seg in ss.segments():
        if not seg:
            segs.append({"selectors": [], "declarations": [], "edges": [],
                         "order": []})
            continue
        sub = _segment_stylesheet(ss, seg)
        g = build_graph(sub)
        g.order = extract_edge_order(sub, cfg=ecfg) if g.edges else set()
        segs.append({
            "selectors": sorted(g.sels),
            "declarations": sorted(g.decls),
            "edges": sorted(map(list, g.edges)),
            "order": sorted([list(e1), list(e2)] for e1, e2 in g.order),
        })
    return {"version": REPORT_VERSION, "segments": segs}


def run(cfg):
    """Minify every input per the config; returns the :class:`RunReport`.

    Raises the underlying error for unreadable/unparseable input; the
    CLI front end maps those to exit codes.
    """
    t0 = time.monotonic()
    report = RunReport(config=asdict(cfg))
    for path in cfg.inputs:
        with open(path, "r") as fh:
            text = fh.read()
        ss = parse_stylesheet(text)
        baseline = serialize(ss)
        freport = FileReport(input=path, baseline_bytes=len(baseline),
                             output_bytes=len(baseline))
        if cfg.emit_graph:
            with open(cfg.emit_graph, "w") as fh:
                json.dump(_graph_dump(ss, cfg), fh, indent=2, sort_keys=True)
        out = minify_stylesheet(ss, cfg, report=freport)
        out_text = serialize(out)
        freport.output_bytes = len(out_text)
        if cfg.validate is not None:
            verdict = validate_equivalence(ss, out, cfg.validate, cfg=cfg)
            freport.validation = verdict.as_dict()
        if cfg.output:
            with open(cfg.output, "w") as fh:
                fh.write(out_text + ("\n" if out_text else ""))
        else:
            sys.stdout.write(out_text + ("\n" if out_text else ""))
        report.files.append(freport)
    report.wall_time = time.monotonic() - t0
    if cfg.report_path:
        with open(cfg.report_path, "w") as fh:
            fh.write(report.to_json() + "\n")
    return report


def _parse_validate(text):
    try:
        depth, branch = (int(x) for x in text.split(","))
        return (depth, branch)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected depth,branch (e.g. 2,2), got %r" % text)


def build_parser():
    ap = argparse.ArgumentParser(
        prog="minify",
        description="Merge similar CSS rules without changing what "
                    "they mean.")
    ap.add_argument("inputs", metavar="in.css", nargs="+")
    ap.add_argument("-o", "--output", metavar="out.css",
                    help="write the result here (default: stdout)")
    ap.add_argument("--timeout", type=float, default=300.0, metavar="S",
                    help="overall budget in seconds (default 300)")
    ap.add_argument("--workers", type=int, default=1, metavar="N")
    ap.add_argument("--partitions", type=int, default=1, metavar="N",
                    help="search partitions per worker")
    ap.add_argument("--mode", choices=("fast", "full"), default="full",
                    help="merge search flavor (default full = exact)")
    ap.add_argument("--backend", choices=("opt", "full", "both"),
                    default="opt",
                    help="selector-intersection backend (default opt)")
    ap.add_argument("--emit-smt", metavar="DIR",
                    help="also write intersection queries as SMT-LIB files")
    ap.add_argument("--emit-wcnf", metavar="DIR",
                    help="also write Max-SAT instances as DIMACS files")
    ap.add_argument("--emit-graph", metavar="FILE",
                    help="dump the selector/declaration graph as JSON")
    ap.add_argument("--validate", type=_parse_validate, metavar="D,B",
                    help="check equivalence over trees of depth<=D, "
                         "branch<=B")
    ap.add_argument("--deterministic", action="store_true",
                    help="single-threaded, reproducible runs")
    ap.add_argument("--report", dest="report_path", metavar="FILE.json",
                    help="write the run report here")
    return ap


def config_from_args(args):
    backend = {"opt": "optimized", "full": "full", "both": "both"}
    return RunConfig(inputs=tuple(args.inputs), output=args.output,
                     timeout=args.timeout, workers=args.workers,
                     partitions=args.partitions, mode=args.mode,
                     backend=backend[args.backend],
                     emit_smt=args.emit_smt, emit_wcnf=args.emit_wcnf,
                     emit_graph=args.emit_graph, validate=args.validate,
                     deterministic=args.deterministic,
                     report_path=args.report_path)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.output and len(args.inputs) > 1:
        print("minify: -o only works with a single input", file=sys.stderr)
        return 1
    cfg = config_from_args(args)
    try:
        report = run(cfg)
    except (StylesheetParseError, SelectorParseError) as exc:
        print("minify: parse error: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print("minify: %s" % exc, file=sys.stderr)
        return 1
    except (SolverFailure, MaxSatFailure) as exc:
        print("minify: solver error: %s" % exc, file=sys.stderr)
        return 2
    for f in report.files:
        if f.stopped == "solver-failure":
            print("minify: solver failed on %s (partial result kept)"
                  % f.input, file=sys.stderr)
            return 2
    for f in report.files:
        if f.validation is not None and not f.validation["passed"]:
            print("minify: validation FAILED on %s: %s"
                  % (f.input, f.validation["reason"]), file=sys.stderr)
            if f.validation.get("witness"):
                print("  witness: %s" % f.validation["witness"],
                      file=sys.stderr)
            return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

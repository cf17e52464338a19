"""Command-line driver.

Two input modes share one optimization tail:

* program mode (default): parse a source file, build refinement templates,
  generate Horn clauses, optimize them under the file's preference
  directives, and print the inferred types;
* ``--solve-hccs``: the file already contains a Horn clause system in the
  textual clause format (plus ``@`` directive lines), so the front end is
  skipped and only predicate values are reported.

Besides the human-readable summary, every run prints (and with ``--json``
also writes) a versioned JSON report; consumers should key their parsing
on ``schema_version``.  Exit codes: 0 when a solution was found (optimal
or not), 1 when the system is unsolvable within the configured search
space, 2 when the answer is unknown or a validity check failed, 3 on
usage errors.

Subcommands: ``bench`` runs a directory of cases with expected-result
sidecars and classifies each one as Verified, TimeOut or Other; ``run``
evaluates a program on concrete inputs for debugging.
"""

from __future__ import annotations

import argparse
import itertools
import json
import re
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

from . import smtio
from .eval import DEFAULT_BUDGET, SeededOracle, apply_to_ints
from .eval import run as eval_run
from .gen import generate, instrument_counters
from .hccs import (
    ExistsHead, HccsError, HornClause, Pred, PredHead, Shape, Var,
    eval_formula, parse_formula, parse_hccs, show_formula, show_hccs,
    show_pred,
)
from .optimizer import (
    MAX, OptError, PreferenceSpec, certify, optimize, pred_compare,
    preference_from_directives, rtype_equiv,
)
from .rtypes import (
    RArrow, RBase, RType, Templates, apply_rtype_subst, infer_shapes,
    make_templates, parse_rtype, rtype_matches_shape, rtype_preds, show_rtype,
)
from .solver import SolverError
from .surface import (
    Directive, EInt, Program, SourceError, parse_directive_line,
    parse_program, show_expr,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_NOSOL = 1
EXIT_UNKNOWN = 2
EXIT_USAGE = 3

_STATUS_EXIT = {"optsol": EXIT_OK, "sol": EXIT_OK,
                "nosol": EXIT_NOSOL, "unknown": EXIT_UNKNOWN}


class CliError(Exception):
    """A problem with the invocation or the input file."""


class _ArgParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # noqa: D401 - argparse hook
        raise CliError(message)


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _parse_shape(text: str) -> Shape:
    m = re.fullmatch(r"([0-9]+)x([0-9]+)", text)
    if not m:
        raise CliError(f"--max-template wants WxD (e.g. 2x1), got {text!r}")
    conj, disj = int(m.group(1)), int(m.group(2))
    if conj < 1 or disj < 1:
        raise CliError("--max-template dimensions must be at least 1")
    return Shape(conj, disj)


def _occurrence_order(clauses: Sequence[HornClause]) -> tuple[str, ...]:
    """Predicate names in first-occurrence order, for priority tiebreaks."""
    seen: dict[str, None] = {}
    for c in clauses:
        if isinstance(c.head, (PredHead, ExistsHead)):
            seen.setdefault(c.head.app.name)
        for a in c.body_apps:
            seen.setdefault(a.name)
    return tuple(seen)


def _show_directive(d: Directive) -> str:
    if d.kind in ("maximize", "minimize", "exists"):
        return f"@{d.kind} {d.name}"
    if d.kind == "prioritize":
        return f"@prioritize {d.name} < {d.second}"
    if d.kind in ("template", "fix"):
        args = ", ".join(d.params)
        return f"@{d.kind} {d.name}({args}) = {show_formula(d.formula)}"
    raise CliError(f"cannot render a @{d.kind} directive in clause format")


def _render_hccs(clauses: Sequence[HornClause],
                 directives: Sequence[Directive]) -> str:
    keep = ("maximize", "minimize", "prioritize", "exists", "template", "fix")
    lines = [_show_directive(d) for d in directives if d.kind in keep]
    header = "".join(line + "\n" for line in lines)
    return header + show_hccs(clauses)


def _parse_pred_text(text: str) -> Pred:
    r"""Parse the rendered predicate form ``\x, y. body``."""
    head, dot, body = text.partition(".")
    head = head.strip()
    if not dot or not head.startswith("\\"):
        raise CliError(f"bad predicate text (want \\params. body): {text!r}")
    params = tuple(p.strip() for p in head[1:].split(",") if p.strip())
    return Pred(params, parse_formula(body.strip()))


# ---------------------------------------------------------------------------
# The main pipeline
# ---------------------------------------------------------------------------


def _arg_parser() -> _ArgParser:
    ap = _ArgParser(prog="hornopt", description=(
        "Infer Pareto-optimal refinement types, or optimize a standalone "
        "Horn clause system."))
    ap.add_argument("file", help="source program, or clause system "
                                 "with --solve-hccs")
    ap.add_argument("--solve-hccs", action="store_true",
                    help="treat FILE as a Horn clause system "
                         "(clauses plus @ directive lines)")
    ap.add_argument("--emit-hccs", nargs="?", const="-", default=None,
                    metavar="PATH",
                    help="write the generated clause system (default stdout) "
                         "and exit without solving")
    ap.add_argument("--instrument-counters", metavar="FUN",
                    help="thread a recursion counter through FUN before "
                         "generating clauses")
    ap.add_argument("--timeout", type=float, default=60.0, metavar="SECONDS",
                    help="per-query SMT timeout (default 60)")
    ap.add_argument("--max-template", default="1x1", metavar="WxD",
                    help="template restriction: conjuncts x disjuncts "
                         "(default 1x1)")
    ap.add_argument("--max-coeff", type=int, default=2, metavar="N",
                    help="largest template coefficient magnitude searched "
                         "(default 2)")
    ap.add_argument("--max-iterations", type=int, default=50, metavar="N",
                    help="improvement iterations per stage before settling "
                         "for a non-certified solution (default 50)")
    ap.add_argument("--dump-smt", metavar="DIR",
                    help="write every SMT script to DIR for audit")
    ap.add_argument("--oracle-check", type=int, default=0, metavar="N",
                    help="after solving, evaluate each first-order function "
                         "on N sampled inputs satisfying its inferred "
                         "argument refinements and check the results")
    ap.add_argument("--no-certify", action="store_true",
                    help="skip re-proving per-stage optimality of an "
                         "optimal result")
    ap.add_argument("--json", metavar="PATH",
                    help="also write the JSON report to PATH")
    return ap


def _typings(program: Program, templates: Templates,
             subst: dict[str, Pred]) -> list[tuple[str, RType]]:
    """The inferred type of every definition, validated before display."""
    shapes = infer_shapes(program)
    out: list[tuple[str, RType]] = []
    for d in program.defs:
        t = apply_rtype_subst(templates.types[d.name], subst)
        left = rtype_preds(t)
        if left:
            raise SolverError(f"type of {d.name} still mentions "
                              f"{', '.join(sorted(left))}")
        if not rtype_matches_shape(t, shapes[d.name]):
            raise SolverError(f"inferred type of {d.name} does not match "
                              "its shape")
        out.append((d.name, t))
    return out


def _spiral(limit: int) -> list[int]:
    out = [0]
    for k in range(1, limit + 1):
        out.extend((k, -k))
    return out


def _int_spine(t: RType) -> Optional[tuple[list[str], list, str, Any]]:
    """Split a first-order type into argument binders/refinements and the
    result refinement; None when the type is nullary or higher-order."""
    binders: list[str] = []
    phis: list = []
    while isinstance(t, RArrow):
        if not isinstance(t.dom, RBase):
            return None
        phi = t.dom.phi
        if t.dom.var != t.binder:
            phi = Pred((t.dom.var,), phi).apply((Var(t.binder),))
        binders.append(t.binder)
        phis.append(phi)
        t = t.cod
    if not isinstance(t, RBase) or not binders:
        return None
    return binders, phis, t.var, t.phi


def _oracle_check(program: Program, types: dict[str, RType], n: int,
                  budget: int = DEFAULT_BUDGET) -> dict[str, Any]:
    """Sample inputs satisfying each function's argument refinements and
    run them: a terminating run must satisfy the result refinement (a
    diverging one satisfies anything)."""
    functions: dict[str, Any] = {}
    ok = True
    for d in program.defs:
        spine = _int_spine(types[d.name])
        if spine is None:
            continue
        binders, phis, res_var, res_phi = spine
        samples: list[tuple[int, ...]] = []
        tried = 0
        for vals in itertools.product(_spiral(40), repeat=len(binders)):
            if len(samples) >= n or tried >= 30000:
                break
            tried += 1
            env = dict(zip(binders, vals))
            if all(eval_formula(p, env) for p in phis):
                samples.append(vals)
        terminated = diverged = 0
        violations: list[dict[str, Any]] = []
        for idx, vals in enumerate(samples):
            out = apply_to_ints(program, d.name, vals, budget=budget,
                                oracle=SeededOracle(1009 * idx + 7))
            if out.kind == "budget":
                diverged += 1
            elif out.kind == "value" and isinstance(out.value, EInt):
                terminated += 1
                env = dict(zip(binders, vals))
                env[res_var] = out.value.value
                if not eval_formula(res_phi, env):
                    violations.append({"args": list(vals),
                                       "value": out.value.value})
            else:
                violations.append({"args": list(vals), "outcome": out.kind})
        ok = ok and not violations
        functions[d.name] = {"samples": len(samples),
                             "terminated": terminated,
                             "diverged": diverged,
                             "violations": violations}
    return {"ok": ok, "budget": budget, "functions": functions}


def _drive(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    restriction = _parse_shape(args.max_template)
    text = Path(args.file).read_text()

    program: Optional[Program] = None
    templates: Optional[Templates] = None
    rand_preds: list[str] = []
    if args.solve_hccs:
        clauses, dlines = parse_hccs(text)
        directives = [parse_directive_line(line) for line in dlines]
        for d in directives:
            if d.kind in ("type", "clause"):
                raise CliError(f"@{d.kind} belongs in program files, not "
                               "clause systems")
        declared: Sequence[str] = _occurrence_order(clauses)
    else:
        program = parse_program(text)
        if args.instrument_counters:
            program = instrument_counters(program, args.instrument_counters)
        templates = make_templates(program)
        res = generate(program, templates)
        clauses = res.clauses
        directives = program.directives
        declared = templates.pred_order
        rand_preds = res.rand_preds

    if args.emit_hccs is not None:
        rendered = _render_hccs(clauses, directives)
        if args.emit_hccs == "-":
            sys.stdout.write(rendered)
        else:
            Path(args.emit_hccs).write_text(rendered)
        return EXIT_OK

    spec = preference_from_directives(directives, declared=declared,
                                      restriction=restriction)
    if args.dump_smt:
        Path(args.dump_smt).mkdir(parents=True, exist_ok=True)
    smt = smtio.default_solver(timeout=args.timeout, dump_dir=args.dump_smt)
    pred_params = None if templates is None else templates.pred_params

    result = optimize(clauses, spec, solver=smt, pred_params=pred_params,
                      bound_max=args.max_coeff,
                      max_iterations=args.max_iterations,
                      protect=rand_preds)
    exit_code = _STATUS_EXIT[result.kind]

    report: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "mode": "hccs" if args.solve_hccs else "program",
        "input": args.file,
        "status": result.kind,
        "reason": result.reason,
        "types": None,
        "predicates": None,
        "iterations": dict(result.iterations),
        "certificate": None,
        "oracle_check": None,
        "wall_clock_ms": 0.0,
        "smt": {},
    }
    lines = [f"status: {result.kind}"]
    if result.reason:
        lines.append(f"reason: {result.reason}")

    if result.subst is not None:
        subst = dict(result.subst)
        for name, p in spec.fixed.items():
            subst.setdefault(name, p)
        types: list[tuple[str, RType]] = []
        if program is not None and templates is not None:
            types = _typings(program, templates, subst)
            report["types"] = {n: show_rtype(t) for n, t in types}
            lines.append("types:")
            lines.extend(f"  {n} : {show_rtype(t)}" for n, t in types)
        report["predicates"] = {n: show_pred(p)
                                for n, p in sorted(subst.items())}
        lines.append("predicates:")
        lines.extend(f"  {n} = {show_pred(subst[n])}"
                     for n in sorted(subst))
        if result.iterations:
            lines.append("iterations: " + " ".join(
                f"{n}={k}" for n, k in result.iterations.items()))

        if result.kind == "optsol" and not args.no_certify:
            stages = certify(clauses, spec, subst, solver=smt,
                             pred_params=pred_params,
                             bound_max=args.max_coeff, protect=rand_preds)
            cert_ok = all(r.kind == "nosol" for _, r in stages)
            report["certificate"] = {
                "ok": cert_ok,
                "stages": {name: r.kind for name, r in stages},
            }
            lines.append("certificate: "
                         + ("confirmed optimal" if cert_ok else "FAILED"))
            if not cert_ok:
                exit_code = max(exit_code, EXIT_UNKNOWN)

        if args.oracle_check > 0 and program is not None:
            oc = _oracle_check(program, dict(types), args.oracle_check)
            report["oracle_check"] = oc
            bad = sum(len(f["violations"]) for f in oc["functions"].values())
            lines.append(f"oracle check: {'ok' if oc['ok'] else 'FAILED'} "
                         f"({bad} violations)")
            if not oc["ok"]:
                exit_code = max(exit_code, EXIT_UNKNOWN)

    report["wall_clock_ms"] = round((time.monotonic() - t0) * 1000, 1)
    report["smt"] = smt.stats.as_dict()
    blob = json.dumps(report, indent=2)
    if args.json:
        Path(args.json).write_text(blob + "\n")
    print("\n".join(lines))
    print(blob)
    return exit_code


# ---------------------------------------------------------------------------
# bench: run a suite of cases against expected-result sidecars
# ---------------------------------------------------------------------------


def _bench_parser() -> _ArgParser:
    ap = _ArgParser(prog="hornopt bench", description=(
        "Run every case in a suite directory and classify it as Verified, "
        "TimeOut or Other against its NAME.expected.json sidecar."))
    ap.add_argument("suite", help="directory of .ml programs and/or .hc "
                                  "clause systems")
    ap.add_argument("--timeout", type=float, default=100.0, metavar="SECONDS",
                    help="per-case wall clock budget (default 100)")
    ap.add_argument("--jobs", type=int, default=1, metavar="N",
                    help="cases to run in parallel (default 1)")
    ap.add_argument("--json", metavar="PATH",
                    help="also write the result table to PATH")
    return ap


def _match_expected(expected: dict[str, Any], report: dict[str, Any],
                    smt: smtio.SmtSolver) -> Optional[str]:
    """None when the report meets the sidecar, else what went wrong."""
    status = report.get("status")
    want = expected.get("status")
    if want is not None:
        if status != want:
            return f"status {status}, expected {want}"
    elif status not in ("optsol", "sol"):
        return f"status {status}"
    for name, text in expected.get("predicates", {}).items():
        got_text = (report.get("predicates") or {}).get(name)
        if got_text is None:
            return f"no predicate {name} in the report"
        c = pred_compare(_parse_pred_text(got_text), _parse_pred_text(text),
                         MAX, smt)
        if c.rel != "equiv":
            return f"{name} = {got_text}, expected {text}"
    for fun, text in expected.get("types", {}).items():
        got_text = (report.get("types") or {}).get(fun)
        if got_text is None:
            return f"no type for {fun} in the report"
        if rtype_equiv(parse_rtype(got_text), parse_rtype(text),
                       smt) is not True:
            return f"{fun} : {got_text}, expected {text}"
    return None


def _bench_case(path: Path, limit: float,
                smt: smtio.SmtSolver) -> dict[str, Any]:
    expected: dict[str, Any] = {}
    sidecar = path.parent / (path.stem + ".expected.json")
    if sidecar.exists():
        expected = json.loads(sidecar.read_text())
    row: dict[str, Any] = {"case": path.stem, "classification": "Other",
                           "status": None, "wall_clock_ms": None,
                           "iterations": {}, "detail": ""}
    with tempfile.TemporaryDirectory() as tmp:
        report_path = Path(tmp) / "report.json"
        cmd = [sys.executable, "-m", "hornopt.cli", str(path),
               "--json", str(report_path),
               "--timeout", str(min(60.0, limit))]
        if path.suffix == ".hc":
            cmd.append("--solve-hccs")
        for flag, key in (("--max-template", "max_template"),
                          ("--max-coeff", "max_coeff"),
                          ("--max-iterations", "max_iterations"),
                          ("--instrument-counters", "instrument")):
            if key in expected:
                cmd.extend([flag, str(expected[key])])
        t0 = time.monotonic()
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True,
                                  timeout=limit)
        except subprocess.TimeoutExpired:
            row["classification"] = "TimeOut"
            row["wall_clock_ms"] = round(limit * 1000, 1)
            return row
        row["wall_clock_ms"] = round((time.monotonic() - t0) * 1000, 1)
        if not report_path.exists():
            row["detail"] = (proc.stderr.strip().splitlines() or ["no report"])[-1]
            return row
        report = json.loads(report_path.read_text())
    row["status"] = report.get("status")
    row["iterations"] = report.get("iterations", {})
    problem = _match_expected(expected, report, smt)
    if problem is None:
        row["classification"] = "Verified"
    else:
        row["detail"] = problem
    return row


def _bench_main(argv: Sequence[str]) -> int:
    args = _bench_parser().parse_args(argv)
    suite = Path(args.suite)
    if not suite.is_dir():
        raise CliError(f"not a directory: {suite}")
    cases = sorted(itertools.chain(suite.glob("*.ml"), suite.glob("*.hc")))
    smt = smtio.default_solver()
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(
                lambda p: _bench_case(p, args.timeout, smt), cases))
    else:
        rows = [_bench_case(p, args.timeout, smt) for p in cases]

    width = max([len(r["case"]) for r in rows], default=4)
    print(f"{'case':<{width}}  {'result':<8}  {'time(s)':>8}  iterations")
    for r in rows:
        secs = "-" if r["wall_clock_ms"] is None \
            else f"{r['wall_clock_ms'] / 1000:.1f}"
        iters = " ".join(f"{n}={k}" for n, k in r["iterations"].items())
        detail = f"  [{r['detail']}]" if r["detail"] else ""
        print(f"{r['case']:<{width}}  {r['classification']:<8}  {secs:>8}"
              f"  {iters}{detail}")
    counts = {"Verified": 0, "TimeOut": 0, "Other": 0}
    for r in rows:
        counts[r["classification"]] += 1
    print(f"total: {len(rows)} cases, {counts['Verified']} Verified, "
          f"{counts['TimeOut']} TimeOut, {counts['Other']} Other")
    if args.json:
        Path(args.json).write_text(json.dumps(
            {"schema_version": SCHEMA_VERSION, "cases": rows}, indent=2)
            + "\n")
    return EXIT_OK if counts["Verified"] == len(rows) else EXIT_NOSOL


# ---------------------------------------------------------------------------
# run: evaluate a program for debugging
# ---------------------------------------------------------------------------


def _run_parser() -> _ArgParser:
    ap = _ArgParser(prog="hornopt run",
                    description="Evaluate a program on concrete inputs.")
    ap.add_argument("file")
    ap.add_argument("--apply", metavar="FUN",
                    help="apply FUN to --args instead of running the "
                         "program's trailing expression")
    ap.add_argument("--args", type=int, nargs="*", default=[],
                    metavar="INT", help="integer arguments for --apply")
    ap.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                    metavar="STEPS")
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for the random-input oracle")
    return ap


def _run_main(argv: Sequence[str]) -> int:
    args = _run_parser().parse_args(argv)
    program = parse_program(Path(args.file).read_text())
    oracle = SeededOracle(args.seed)
    if args.apply:
        out = apply_to_ints(program, args.apply, args.args,
                            budget=args.budget, oracle=oracle)
    elif program.main is not None:
        out = eval_run(program, program.main, budget=args.budget,
                       oracle=oracle)
    else:
        raise CliError("the program has no trailing expression; "
                       "use --apply FUN --args ...")
    if out.kind == "value":
        assert out.value is not None
        print(f"value: {show_expr(out.value)}  ({out.steps} steps)")
        return EXIT_OK
    if out.kind == "budget":
        print(f"no value after {out.steps} steps")
        return EXIT_OK
    assert out.stuck_at is not None
    print(f"stuck at: {show_expr(out.stuck_at)}  ({out.steps} steps)")
    return EXIT_NOSOL


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        if args and args[0] == "bench":
            return _bench_main(args[1:])
        if args and args[0] == "run":
            return _run_main(args[1:])
        return _drive(_arg_parser().parse_args(args))
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SourceError, OptError, HccsError, SolverError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except smtio.SmtError as e:
        print(f"smt failure: {e}", file=sys.stderr)
        return EXIT_UNKNOWN


if __name__ == "__main__":
    sys.exit(main())

"""Subprocess bridge to an SMT-LIB 2 solver.

Each query spawns a fresh solver process, writes one script, and reads the
verdict (plus a model on ``sat``).  The default solver is the bundled
backend (``python -m hornopt.smtbackend``); set ``HORNOPT_SMT_CMD`` to use
an external one, e.g. ``HORNOPT_SMT_CMD="z3 -in"``.

Declaration order is semantically relevant with the bundled backend: it
enumerates candidate models in ascending sum of absolute values, breaking
ties in declaration order, so callers list the unknowns whose values they
want minimized first.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .hccs import (
    Add, And, Atom, Const, FalseF, Formula, Implies, Mul, Not, Or, Term,
    TrueF, Var, formula_vars,
)


class SmtError(Exception):
    pass


class SmtUnknown(SmtError):
    """The solver could not decide a query the caller needed decided."""


@dataclass(frozen=True)
class Forall(Formula):
    vars: tuple[str, ...]
    body: Formula


@dataclass(frozen=True)
class Exists(Formula):
    vars: tuple[str, ...]
    body: Formula


def quantified_free_vars(f: Formula) -> set[str]:
    if isinstance(f, (Forall, Exists)):
        return quantified_free_vars(f.body) - set(f.vars)
    if isinstance(f, Not):
        return quantified_free_vars(f.arg)
    if isinstance(f, (And, Or)):
        out: set[str] = set()
        for a in f.args:
            out |= quantified_free_vars(a)
        return out
    if isinstance(f, Implies):
        return quantified_free_vars(f.left) | quantified_free_vars(f.right)
    return formula_vars(f)


# ---------------------------------------------------------------------------
# SMT-LIB emission
# ---------------------------------------------------------------------------


def emit_term(t: Term) -> str:
    if isinstance(t, Const):
        return str(t.value) if t.value >= 0 else f"(- {-t.value})"
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Add):
        return f"(+ {emit_term(t.left)} {emit_term(t.right)})"
    if isinstance(t, Mul):
        return f"(* {emit_term(t.left)} {emit_term(t.right)})"
    raise SmtError(f"cannot emit term {t!r}")


def emit_formula(f: Formula) -> str:
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, Atom):
        l, r = emit_term(f.left), emit_term(f.right)
        if f.op == "<>":
            return f"(not (= {l} {r}))"
        return f"({f.op} {l} {r})"
    if isinstance(f, Not):
        return f"(not {emit_formula(f.arg)})"
    if isinstance(f, And):
        if not f.args:
            return "true"
        return "(and " + " ".join(emit_formula(a) for a in f.args) + ")"
    if isinstance(f, Or):
        if not f.args:
            return "false"
        return "(or " + " ".join(emit_formula(a) for a in f.args) + ")"
    if isinstance(f, Implies):
        return f"(=> {emit_formula(f.left)} {emit_formula(f.right)})"
    if isinstance(f, (Forall, Exists)):
        if not f.vars:
            return emit_formula(f.body)
        kind = "forall" if isinstance(f, Forall) else "exists"
        binders = " ".join(f"({v} Int)" for v in f.vars)
        return f"({kind} ({binders}) {emit_formula(f.body)})"
    raise SmtError(f"cannot emit formula {f!r} (predicate application?)")


def build_script(declarations: Sequence[str], assertions: Sequence[Formula],
                 timeout_ms: Optional[int], want_model: bool) -> str:
    lines: list[str] = []
    if timeout_ms is not None:
        lines.append(f"(set-option :timeout {timeout_ms})")
    for name in declarations:
        lines.append(f"(declare-const {name} Int)")
    for f in assertions:
        lines.append(f"(assert {emit_formula(f)})")
    lines.append("(check-sat)")
    if want_model:
        lines.append("(get-model)")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Model parsing (z3-style `(model (define-fun v () Int k) ...)`)
# ---------------------------------------------------------------------------


def _parse_sexps(text: str) -> list:
    from .smtbackend import parse_sexps
    return parse_sexps(text)


def parse_model(text: str) -> dict[str, int]:
    model: dict[str, int] = {}
    for sexp in _parse_sexps(text):
        if not isinstance(sexp, list):
            continue
        entries = sexp[1:] if sexp and sexp[0] == "model" else [sexp]
        for e in entries:
            if not (isinstance(e, list) and len(e) >= 5 and e[0] == "define-fun"):
                continue
            name, args, sort, value = e[1], e[2], e[3], e[4]
            if args != [] or sort != "Int":
                continue
            model[name] = _parse_int(value)
    return model


def _parse_int(v) -> int:
    if isinstance(v, str):
        return int(v)
    if isinstance(v, list) and len(v) == 2 and v[0] == "-":
        return -_parse_int(v[1])
    raise SmtUnknown(f"non-integer model value {v!r}")


# ---------------------------------------------------------------------------
# The solver handle
# ---------------------------------------------------------------------------


@dataclass
class SmtStats:
    queries: int = 0
    sat: int = 0
    unsat: int = 0
    unknown: int = 0
    wall_ms: float = 0.0

    def as_dict(self) -> dict:
        return {"queries": self.queries, "sat": self.sat,
                "unsat": self.unsat, "unknown": self.unknown,
                "wall_clock_ms": round(self.wall_ms, 1)}


def solver_command() -> list[str]:
    override = os.environ.get("HORNOPT_SMT_CMD")
    if override:
        return shlex.split(override)
    return [sys.executable, "-m", "hornopt.smtbackend"]


@dataclass
class SmtResult:
    verdict: str                      # "sat" | "unsat" | "unknown"
    model: Optional[dict[str, int]] = None
    reason: str = ""


class SmtSolver:
    def __init__(self, cmd: Optional[Sequence[str]] = None,
                 timeout: float = 60.0,
                 dump_dir: Optional[str] = None) -> None:
        self.cmd = list(cmd) if cmd is not None else solver_command()
        self.timeout = timeout
        self.dump_dir = dump_dir
        self.stats = SmtStats()
        self._dump_seq = 0

    def check(self, declarations: Sequence[str],
              assertions: Sequence[Formula],
              want_model: bool = True) -> SmtResult:
        script = build_script(declarations, assertions,
                              timeout_ms=int(self.timeout * 1000),
                              want_model=want_model)
        self._dump(script)
        self.stats.queries += 1
        t0 = time.monotonic()
        try:
            proc = subprocess.run(
                self.cmd, input=script, capture_output=True, text=True,
                timeout=self.timeout + 10.0)
            out = proc.stdout
        except subprocess.TimeoutExpired:
            self.stats.unknown += 1
            self.stats.wall_ms += (time.monotonic() - t0) * 1000
            return SmtResult("unknown", reason="timeout")
        except OSError as e:
            raise SmtError(f"cannot run solver {self.cmd}: {e}") from e
        finally:
            pass
        self.stats.wall_ms += (time.monotonic() - t0) * 1000
        verdict = ""
        for line in out.splitlines():
            line = line.strip()
            if line in ("sat", "unsat", "unknown"):
                verdict = line
                break
            if line.startswith("(error"):
                raise SmtError(f"solver error: {line}\nscript:\n{script}")
        if verdict == "sat":
            self.stats.sat += 1
            model = None
            if want_model:
                try:
                    model = parse_model(out[out.index("(model"):]) if "(model" in out else {}
                except (ValueError, SmtUnknown):
                    return SmtResult("unknown", reason="unparsable model")
            return SmtResult("sat", model=model)
        if verdict == "unsat":
            self.stats.unsat += 1
            return SmtResult("unsat")
        self.stats.unknown += 1
        reason = "solver reported unknown" if verdict else \
            f"no verdict in solver output: {out!r} {proc.stderr!r}"
        return SmtResult("unknown", reason=reason)

    def check_valid(self, goal: Formula, univ: Sequence[str],
                    exvars: Sequence[str]) -> Optional[bool]:
        """Validity of ``forall univ. exists exvars. goal``; None = unknown."""
        closed: Formula = goal
        if exvars:
            closed = Exists(tuple(exvars), closed)
        if univ:
            closed = Forall(tuple(univ), closed)
        loose = quantified_free_vars(closed)
        if loose:
            raise SmtError(f"check_valid goal has free variables {sorted(loose)}")
        res = self.check([], [closed], want_model=False)
        if res.verdict == "sat":
            return True
        if res.verdict == "unsat":
            return False
        return None

    def _dump(self, script: str) -> None:
        if not self.dump_dir:
            return
        os.makedirs(self.dump_dir, exist_ok=True)
        self._dump_seq += 1
        path = os.path.join(self.dump_dir, f"query{self._dump_seq:03d}.smt2")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(script)


def default_solver(timeout: float = 60.0,
                   dump_dir: Optional[str] = None) -> SmtSolver:
    return SmtSolver(timeout=timeout, dump_dir=dump_dir)

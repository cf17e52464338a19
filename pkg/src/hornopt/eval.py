"""Small-step evaluator for the surface language.

Evaluation works on A-normal-form programs (callers normalize first; `run`
does it for you).  The machine state is a closed expression; integer
variables disappear by substitution, so the only variables left at runtime
name top-level functions.  Values are integer literals and partial
applications (a spine ``f v1 .. vk`` with fewer arguments than parameters).

Nondeterministic reads are resolved by an oracle: the ``angelic`` stream
feeds ``read_int ()`` / ``*exists*``, the ``demonic`` stream ``*forall*``.

Evaluation is fuel-bounded.  The outcome records whether the program
produced a value, ran out of fuel (the interesting case when hunting
nontermination), or got stuck.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .surface import (
    ANGELIC, DEMONIC, CMP_OPS, EApp, EIfz, EInt, ELet, EOp, ERand, EVar,
    Expr, FunDef, Program, SourceError, anf_program, show_expr,
)

DEFAULT_BUDGET = 100_000


class EvalError(Exception):
    pass


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class Oracle:
    """Base oracle: override the two draw methods."""

    def __init__(self) -> None:
        self.log: list[tuple[str, int]] = []

    def angelic(self) -> int:
        raise NotImplementedError

    def demonic(self) -> int:
        raise NotImplementedError

    def draw(self, kind: str) -> int:
        v = self.angelic() if kind == ANGELIC else self.demonic()
        self.log.append((kind, v))
        return v


class FixedOracle(Oracle):
    """Replays fixed sequences, cycling when exhausted (empty means 0)."""

    def __init__(self, angelic: Sequence[int] = (),
                 demonic: Sequence[int] = ()) -> None:
        super().__init__()
        self._ang = list(angelic)
        self._dem = list(demonic)
        self._ai = 0
        self._di = 0

    def angelic(self) -> int:
        if not self._ang:
            return 0
        v = self._ang[self._ai % len(self._ang)]
        self._ai += 1
        return v

    def demonic(self) -> int:
        if not self._dem:
            return 0
        v = self._dem[self._di % len(self._dem)]
        self._di += 1
        return v


class SeededOracle(Oracle):
    """Pseudo-random integers in [lo, hi], deterministic per seed."""

    def __init__(self, seed: int, lo: int = -100, hi: int = 100) -> None:
        super().__init__()
        self._ang = random.Random(seed)
        self._dem = random.Random(seed + 1)
        self.lo = lo
        self.hi = hi

    def angelic(self) -> int:
        return self._ang.randint(self.lo, self.hi)

    def demonic(self) -> int:
        return self._dem.randint(self.lo, self.hi)


# ---------------------------------------------------------------------------
# The machine
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    kind: str                     # "value" | "budget" | "stuck"
    value: Optional[Expr] = None
    steps: int = 0
    stuck_at: Optional[Expr] = None

    @property
    def int_value(self) -> int:
        if self.kind == "value" and isinstance(self.value, EInt):
            return self.value.value
        raise EvalError(f"outcome is not an integer: {self}")


def subst_expr(e: Expr, name: str, value: Expr) -> Expr:
    if isinstance(e, EVar):
        return value if e.name == name else e
    if isinstance(e, (EInt, ERand)):
        return e
    if isinstance(e, EApp):
        return EApp(subst_expr(e.fun, name, value),
                    subst_expr(e.arg, name, value))
    if isinstance(e, EOp):
        return EOp(e.op, tuple(subst_expr(a, name, value) for a in e.args))
    if isinstance(e, EIfz):
        return EIfz(subst_expr(e.cond, name, value),
                    subst_expr(e.zero, name, value),
                    subst_expr(e.nonzero, name, value))
    if isinstance(e, ELet):
        bound = subst_expr(e.bound, name, value)
        if e.name == name:
            return ELet(e.name, bound, e.body)
        return ELet(e.name, bound, subst_expr(e.body, name, value))
    raise EvalError(f"cannot substitute into {e!r}")


class Machine:
    def __init__(self, program: Program, oracle: Optional[Oracle] = None,
                 on_apply: Optional[Callable[[str], None]] = None) -> None:
        self.program = anf_program(program)
        self.defs = {d.name: d for d in self.program.defs}
        self.oracle = oracle if oracle is not None else FixedOracle()
        self.on_apply = on_apply

    # values -----------------------------------------------------------

    def spine(self, e: Expr) -> Optional[tuple[FunDef, list[Expr]]]:
        """Decompose ``f v1 .. vk`` with f a defined function, else None."""
        args: list[Expr] = []
        while isinstance(e, EApp):
            args.append(e.arg)
            e = e.fun
        if isinstance(e, EVar) and e.name in self.defs:
            return self.defs[e.name], args[::-1]
        return None

    def is_value(self, e: Expr) -> bool:
        if isinstance(e, EInt):
            return True
        sp = self.spine(e)
        if sp is None:
            return False
        fn, args = sp
        if len(args) >= len(fn.params) and fn.params:
            return False
        if not fn.params:
            return False  # a zero-parameter definition evaluates
        return all(self.is_value(a) for a in args)

    # one reduction ------------------------------------------------------

    def step(self, e: Expr) -> Expr:
        """One reduction; raises _Stuck when no rule applies."""
        if isinstance(e, ERand):
            return EInt(self.oracle.draw(e.kind))
        if isinstance(e, EVar):
            fn = self.defs.get(e.name)
            if fn is not None and not fn.params:
                return fn.body
            raise _Stuck(e)
        if isinstance(e, EOp):
            vals = []
            for a in e.args:
                if not isinstance(a, EInt):
                    raise _Stuck(e)
                vals.append(a.value)
            return EInt(apply_op(e.op, vals))
        if isinstance(e, EIfz):
            if not isinstance(e.cond, EInt):
                raise _Stuck(e)
            return e.zero if e.cond.value == 0 else e.nonzero
        if isinstance(e, ELet):
            if self.is_value(e.bound):
                return subst_expr(e.body, e.name, e.bound)
            return ELet(e.name, self.step(e.bound), e.body)
        if isinstance(e, EApp):
            if not self.is_value(e.arg):
                # ANF puts values in argument position; anything else (a
                # partial application spine under construction) steps inside
                return EApp(e.fun, self.step(e.arg))
            sp = self.spine(e)
            if sp is not None:
                fn, args = sp
                if len(args) == len(fn.params) and all(self.is_value(a) for a in args):
                    if self.on_apply is not None:
                        self.on_apply(fn.name)
                    body = fn.body
                    for p, a in zip(fn.params, args):
                        body = subst_expr(body, p, a)
                    return body
                if len(args) > len(fn.params):
                    raise _Stuck(e)  # over-application of a saturated call
            if not self.is_value(e.fun):
                return EApp(self.step(e.fun), e.arg)
            raise _Stuck(e)
        raise _Stuck(e)

    def run(self, e: Expr, budget: int = DEFAULT_BUDGET) -> Outcome:
        # The let spine is the program's call stack and grows without bound
        # on runaway recursions, so it is driven with an explicit frame
        # stack here; ``step`` handles the remaining, source-bounded forms.
        stack: list[tuple[str, Expr]] = []
        steps = 0
        while steps < budget:
            while isinstance(e, ELet) and not self.is_value(e.bound):
                stack.append((e.name, e.body))
                e = e.bound
            if isinstance(e, ELet):
                e = subst_expr(e.body, e.name, e.bound)
            elif self.is_value(e):
                if not stack:
                    return Outcome("value", value=e, steps=steps)
                name, body = stack.pop()
                e = subst_expr(body, name, e)
            else:
                try:
                    e = self.step(e)
                except _Stuck as s:
                    return Outcome("stuck", steps=steps, stuck_at=s.expr)
            steps += 1
        return Outcome("budget", steps=steps)


class _Stuck(Exception):
    def __init__(self, expr: Expr) -> None:
        self.expr = expr
        super().__init__(show_expr(expr))


def apply_op(op: str, vals: list[int]) -> int:
    a, b = vals
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op in CMP_OPS:
        table = {"<=": a <= b, "<": a < b, ">=": a >= b, ">": a > b,
                 "=": a == b, "<>": a != b}
        return 1 if table[op] else 0
    raise EvalError(f"unknown operator {op}")


def run(program: Program, expr: Expr, budget: int = DEFAULT_BUDGET,
        oracle: Optional[Oracle] = None,
        on_apply: Optional[Callable[[str], None]] = None) -> Outcome:
    """Evaluate ``expr`` against the program's definitions."""
    return Machine(program, oracle, on_apply).run(expr, budget)


def apply_to_ints(program: Program, fun: str, args: Sequence[int],
                  budget: int = DEFAULT_BUDGET,
                  oracle: Optional[Oracle] = None,
                  on_apply: Optional[Callable[[str], None]] = None) -> Outcome:
    e: Expr = EVar(fun)
    for a in args:
        e = EApp(e, EInt(a))
    return Machine(program, oracle, on_apply).run(e, budget)

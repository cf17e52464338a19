"""Refinement types: integer bases carrying a predicate over in-scope
variables, and dependent arrows.

A type like ``(x:{P(x)}) -> (i:int) -> (c:{Inv(x, i, c)}) -> int`` refines
selected integer positions with predicate applications.  Template
construction gives every integer position of a function's simple type a
fresh predicate over the integer binders that precede it *in the same arrow
spine* (a functional argument starts its own spine), which is exactly the
information the constraint generator can see at that position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .hccs import (
    Formula, Pred, PredApp, TrueF, Var, apply_subst, formula_preds,
    parse_formula, show_formula, subst_formula,
)
from .surface import (
    Directive, EApp, EIfz, EInt, ELet, EOp, ERand, EVar, Expr, Program,
    SourceError, CMP_OPS,
)


@dataclass(frozen=True)
class RBase:
    """{var: phi} - an integer refined by phi (which may mention var)."""

    var: str
    phi: Formula


@dataclass(frozen=True)
class RArrow:
    """(binder: dom) -> cod; cod may mention binder when dom is a base."""

    binder: str
    dom: "RType"
    cod: "RType"


RType = Union[RBase, RArrow]


def show_rtype(t: RType, top: bool = True) -> str:
    if isinstance(t, RBase):
        if isinstance(t.phi, TrueF):
            return "int"
        return f"{{{t.var}: {show_formula(t.phi)}}}"
    dom = show_rtype(t.dom, top=False)
    if isinstance(t.dom, RArrow):
        dom = f"({dom})"
    s = f"({t.binder}:{dom}) -> {show_rtype(t.cod, top=False)}"
    return s


def rtype_preds(t: RType) -> set[str]:
    if isinstance(t, RBase):
        return formula_preds(t.phi)
    return rtype_preds(t.dom) | rtype_preds(t.cod)


def apply_rtype_subst(t: RType, subst: Mapping[str, Pred],
                      partial: bool = False) -> RType:
    """Replace predicate applications in all refinements by their values."""
    if isinstance(t, RBase):
        return RBase(t.var, apply_subst(t.phi, subst, partial))
    return RArrow(t.binder,
                  apply_rtype_subst(t.dom, subst, partial),
                  apply_rtype_subst(t.cod, subst, partial))


def subst_rtype(t: RType, env: dict) -> RType:
    """Substitute terms for variables in all refinements (binders shadow)."""
    if isinstance(t, RBase):
        inner = {k: v for k, v in env.items() if k != t.var}
        return RBase(t.var, subst_formula(t.phi, inner)) if inner else t
    inner = {k: v for k, v in env.items() if k != t.binder}
    return RArrow(t.binder,
                  subst_rtype(t.dom, env),
                  subst_rtype(t.cod, inner))


# ---------------------------------------------------------------------------
# Parsing type expressions
# ---------------------------------------------------------------------------


def parse_rtype(text: str, fresh_prefix: str = "v") -> RType:
    """Parse ``(x:{P(x)}) -> {y: Q(x, y)}`` style type expressions."""
    pos = 0
    n = len(text)
    counter = [0]

    def skip_ws() -> None:
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def fresh() -> str:
        counter[0] += 1
        return f"{fresh_prefix}{counter[0]}"

    def ident() -> str:
        nonlocal pos
        skip_ws()
        start = pos
        while pos < n and (text[pos].isalnum() or text[pos] in "_'"):
            pos += 1
        if start == pos:
            raise SourceError(f"expected identifier in type at {text[pos:pos+10]!r}")
        return text[start:pos]

    def base(binder: Optional[str]) -> RBase:
        nonlocal pos
        skip_ws()
        if text.startswith("int", pos) and (pos + 3 == n or not text[pos + 3].isalnum()):
            pos += 3
            return RBase(binder or fresh(), TrueF())
        if not text.startswith("{", pos):
            raise SourceError(f"expected a base type at {text[pos:pos+10]!r}")
        depth = 0
        for j in range(pos, n):
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
                if depth == 0:
                    body = text[pos + 1:j]
                    pos = j + 1
                    return braced(body.strip(), binder)
        raise SourceError("unbalanced '{' in type")

    def braced(body: str, binder: Optional[str]) -> RBase:
        # "{v: phi}" names the value; "{phi}" leaves it to the binder
        head, sep, rest = body.partition(":")
        if sep and head.strip().isidentifier():
            var = head.strip()
            phi = parse_formula(rest.strip()) if rest.strip() else TrueF()
            if binder is not None and binder != var:
                phi = subst_formula(phi, {var: Var(binder)})
                var = binder
            return RBase(var, phi)
        var = binder or fresh()
        return RBase(var, parse_formula(body) if body else TrueF())

    def rtype(binder_hint: Optional[str]) -> RType:
        nonlocal pos
        skip_ws()
        if text.startswith("(", pos):
            save = pos
            pos += 1
            skip_ws()
            # binder form "(x: T)" when an identifier is followed by ':'
            mark = pos
            name = ""
            while pos < n and (text[pos].isalnum() or text[pos] in "_'"):
                pos += 1
            name = text[mark:pos]
            skip_ws()
            if name and pos < n and text[pos] == ":":
                pos += 1
                dom = rtype(name)
                skip_ws()
                if not text.startswith(")", pos):
                    raise SourceError("expected ')' in type")
                pos += 1
                skip_ws()
                if not text.startswith("->", pos):
                    raise SourceError("a named binder needs a following '->'")
                pos += 2
                cod = rtype(None)
                return RArrow(name, dom, cod)
            pos = save + 1
            inner = rtype(None)
            skip_ws()
            if not text.startswith(")", pos):
                raise SourceError("expected ')' in type")
            pos += 1
            return arrow_tail(inner)
        b = base(binder_hint)
        return arrow_tail(b)

    def arrow_tail(dom: RType) -> RType:
        nonlocal pos
        skip_ws()
        if text.startswith("->", pos):
            pos += 2
            binder = dom.var if isinstance(dom, RBase) else fresh()
            return RArrow(binder, dom, rtype(None))
        return dom

    t = rtype(None)
    skip_ws()
    if pos != n:
        raise SourceError(f"trailing input in type: {text[pos:]!r}")
    return t


# ---------------------------------------------------------------------------
# Simple shapes (int / function), Hindley-Milner style inference
# ---------------------------------------------------------------------------


class SType:
    __slots__ = ()


@dataclass(frozen=True)
class TInt(SType):
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class TFun(SType):
    dom: SType
    cod: SType

    def __str__(self) -> str:
        d = f"({self.dom})" if isinstance(self.dom, TFun) else str(self.dom)
        return f"{d} -> {self.cod}"


INT = TInt()


class _TV(SType):
    __slots__ = ("ref",)

    def __init__(self) -> None:
        self.ref: Optional[SType] = None


def _find(t: SType) -> SType:
    while isinstance(t, _TV) and t.ref is not None:
        t = t.ref
    return t


def _unify(a: SType, b: SType, where: str) -> None:
    a, b = _find(a), _find(b)
    if a is b:
        return
    if isinstance(a, _TV):
        if _occurs(a, b):
            raise SourceError(f"infinite type in {where}")
        a.ref = b
        return
    if isinstance(b, _TV):
        _unify(b, a, where)
        return
    if isinstance(a, TInt) and isinstance(b, TInt):
        return
    if isinstance(a, TFun) and isinstance(b, TFun):
        _unify(a.dom, b.dom, where)
        _unify(a.cod, b.cod, where)
        return
    raise SourceError(f"type mismatch in {where}: {_resolve(a)} vs {_resolve(b)}")


def _occurs(v: "_TV", t: SType) -> bool:
    t = _find(t)
    if t is v:
        return True
    if isinstance(t, TFun):
        return _occurs(v, t.dom) or _occurs(v, t.cod)
    return False


def _resolve(t: SType) -> SType:
    """Chase references; default unconstrained variables to int."""
    t = _find(t)
    if isinstance(t, _TV):
        return INT
    if isinstance(t, TFun):
        return TFun(_resolve(t.dom), _resolve(t.cod))
    return t


def infer_shapes(program: Program) -> dict[str, SType]:
    env: dict[str, SType] = {}
    for d in program.defs:
        t: SType = _TV()
        env[d.name] = t

    def infer(e: Expr, local: dict[str, SType], where: str) -> SType:
        if isinstance(e, EInt):
            return INT
        if isinstance(e, ERand):
            return INT
        if isinstance(e, EVar):
            if e.name in local:
                return local[e.name]
            if e.name in env:
                return env[e.name]
            raise SourceError(f"unbound variable {e.name} in {where}")
        if isinstance(e, EOp):
            for a in e.args:
                _unify(infer(a, local, where), INT, where)
            return INT
        if isinstance(e, EIfz):
            _unify(infer(e.cond, local, where), INT, where)
            tz = infer(e.zero, local, where)
            tn = infer(e.nonzero, local, where)
            _unify(tz, tn, where)
            return tz
        if isinstance(e, ELet):
            tb = infer(e.bound, local, where)
            return infer(e.body, {**local, e.name: tb}, where)
        if isinstance(e, EApp):
            tf = infer(e.fun, local, where)
            ta = infer(e.arg, local, where)
            res: SType = _TV()
            _unify(tf, TFun(ta, res), where)
            return res
        raise SourceError(f"cannot type {e!r}")

    for d in program.defs:
        local = {p: _TV() for p in d.params}
        ret = infer(d.body, dict(local), d.name)
        t = ret
        for p in reversed(d.params):
            t = TFun(local[p], t)
        _unify(env[d.name], t, d.name)
    if program.main is not None:
        infer(program.main, {}, "<main>")
    return {name: _resolve(t) for name, t in env.items()}


def shape_of_rtype(t: RType) -> SType:
    if isinstance(t, RBase):
        return INT
    return TFun(shape_of_rtype(t.dom), shape_of_rtype(t.cod))


def rtype_matches_shape(t: RType, s: SType) -> bool:
    return shape_of_rtype(t) == s


# ---------------------------------------------------------------------------
# Template construction
# ---------------------------------------------------------------------------


@dataclass
class Templates:
    """Refinement-typed environment for a program.

    ``types`` uses one predicate application per refined integer position;
    ``pred_order`` fixes the declaration order used to break ties in the
    optimization ordering; ``pred_params`` gives each predicate's canonical
    parameter names."""

    types: dict[str, RType]
    pred_order: list[str]
    pred_params: dict[str, tuple[str, ...]]


def make_templates(program: Program, shapes: Optional[dict[str, SType]] = None,
                   directives: Optional[Sequence[Directive]] = None) -> Templates:
    shapes = shapes if shapes is not None else infer_shapes(program)
    directives = directives if directives is not None else program.directives

    declared: dict[str, RType] = {}
    for d in directives:
        if d.kind != "type":
            continue
        rt = parse_rtype(d.text)
        if d.name not in shapes:
            raise SourceError(f"type directive for unknown function {d.name}")
        if not rtype_matches_shape(rt, shapes[d.name]):
            raise SourceError(
                f"type directive for {d.name} has shape "
                f"{shape_of_rtype(rt)}, the definition has {shapes[d.name]}")
        declared[d.name] = rt

    pred_order: list[str] = []
    pred_params: dict[str, tuple[str, ...]] = {}

    def note_pred(name: str, params: tuple[str, ...]) -> None:
        if name in pred_params:
            if len(pred_params[name]) != len(params):
                raise SourceError(
                    f"predicate {name} used with {len(params)} and "
                    f"{len(pred_params[name])} arguments")
            return
        pred_order.append(name)
        pred_params[name] = params

    def note_formula_preds(phi: Formula, scope: Sequence[str]) -> None:
        def walk(f: Formula) -> None:
            if isinstance(f, PredApp):
                params = []
                for i, a in enumerate(f.args):
                    params.append(a.name if isinstance(a, Var) else f"a{i + 1}")
                note_pred(f.name, tuple(params))
                return
            for sub in getattr(f, "args", ()):
                walk(sub)
            for attr in ("arg", "left", "right"):
                sub = getattr(f, attr, None)
                if isinstance(sub, Formula):
                    walk(sub)
        walk(phi)

    def note_rtype(t: RType) -> None:
        if isinstance(t, RBase):
            note_formula_preds(t.phi, ())
        else:
            note_rtype(t.dom)
            note_rtype(t.cod)

    taken = {d.name for d in directives if d.kind in
             ("maximize", "minimize", "exists")}
    for d in directives:
        if d.kind == "prioritize":
            taken |= {d.name, d.second}
        if d.kind in ("template", "fix"):
            taken.add(d.name)
    for rt in declared.values():
        taken |= rtype_preds(rt)
        note_rtype(rt)

    counter = [0]

    def fresh_pred() -> str:
        while True:
            counter[0] += 1
            name = f"P{counter[0]}"
            if name not in taken:
                taken.add(name)
                return name

    def auto(t: SType, scope: list[str], names: list[str],
             vcounter: list[int]) -> RType:
        def fresh_var() -> str:
            vcounter[0] += 1
            return f"v{vcounter[0]}"

        if isinstance(t, TInt):
            v = names.pop(0) if names else fresh_var()
            p = fresh_pred()
            params = tuple(scope) + (v,)
            note_pred(p, params)
            return RBase(v, PredApp(p, tuple(Var(x) for x in params)))
        assert isinstance(t, TFun)
        binder = names.pop(0) if names else fresh_var()
        if isinstance(t.dom, TInt):
            p = fresh_pred()
            params = tuple(scope) + (binder,)
            note_pred(p, params)
            dom: RType = RBase(binder, PredApp(p, tuple(Var(x) for x in params)))
            cod = auto(t.cod, scope + [binder], names, vcounter)
        else:
            dom = auto(t.dom, [], [], vcounter)  # a fresh spine
            cod = auto(t.cod, scope, names, vcounter)
        return RArrow(binder, dom, cod)

    types: dict[str, RType] = {}
    for d in program.defs:
        if d.name in declared:
            types[d.name] = declared[d.name]
        else:
            types[d.name] = auto(shapes[d.name], [], list(d.params), [0])
    return Templates(types, pred_order, pred_params)

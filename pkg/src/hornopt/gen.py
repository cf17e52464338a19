"""Constraint generation: from a refinement-typed program to Horn clauses.

Each definition body is checked against its type top-down.  Integer values
synthesize equality refinements (a variable is ``{v: v = x}``, a literal
``{v: v = n}``, an arithmetic result ``{v: v = a + b}``; comparisons yield
``{v: v=1 and phi  or  v=0 and not phi}``).  Applications substitute the
argument into the codomain; branch bodies are checked under the scrutinee
guard; function-typed arguments produce structural subtyping obligations,
contravariant on the left.  An angelic read binds a fresh predicate over
the in-scope integers and emits an existential obligation: some favorable
value must exist whenever control reaches the read.

The raw clauses mention one temporary per intermediate value.  The
simplification pass restores the textbook form: it prunes branch disjuncts
contradicting the path condition, substitutes away temporaries defined by
equalities, and drops trivially true clauses.  Only machine-introduced
names are eliminated; source binders stay.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .hccs import (
    And, Atom, Const, FalseF, Formula, HornClause, Not, Or, PredApp,
    PredHead, PureHead, ExistsHead, Term, TrueF, Var, eval_formula,
    formula_preds, formula_vars, mk_and, mk_not, parse_clause, show_clause,
    subst_formula, subst_term, term_vars,
)
from .rtypes import (
    RArrow, RBase, RType, Templates, make_templates, infer_shapes,
    show_rtype, subst_rtype,
)
from .surface import (
    ANGELIC, CMP_OPS, Directive, EApp, EIfz, EInt, ELet, EOp, ERand, EVar,
    Expr, FreshNames, FunDef, Program, SourceError, anf_program, expr_names,
)


class GenError(SourceError):
    pass


# ---------------------------------------------------------------------------
# Typing environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Binder:
    name: str
    rtype: RType


@dataclass(frozen=True)
class Guard:
    phi: Formula


EnvEntry = Union[Binder, Guard]


def scope_ints(env: Sequence[EnvEntry]) -> list[str]:
    return [e.name for e in env
            if isinstance(e, Binder) and isinstance(e.rtype, RBase)]


def env_body(env: Sequence[EnvEntry]) -> tuple[list[PredApp], list[Formula]]:
    """The environment's contribution to a clause body: predicate
    applications from integer binders plus pure guard formulas."""
    apps: list[PredApp] = []
    guards: list[Formula] = []

    def add(phi: Formula) -> None:
        if isinstance(phi, TrueF):
            return
        if isinstance(phi, PredApp):
            apps.append(phi)
            return
        if isinstance(phi, And):
            for a in phi.args:
                add(a)
            return
        if formula_preds(phi):
            raise GenError(
                "a refinement mixes predicates into a disjunction or "
                f"negation, which Horn clause bodies cannot express: {phi}")
        guards.append(phi)

    for e in env:
        if isinstance(e, Binder):
            if isinstance(e.rtype, RBase):
                add(subst_formula(e.rtype.phi, {e.rtype.var: Var(e.name)}))
        else:
            add(e.phi)
    return apps, guards


# ---------------------------------------------------------------------------
# Generation state
# ---------------------------------------------------------------------------


@dataclass
class GenResult:
    clauses: list[HornClause]
    templates: Templates
    rand_preds: list[str]          # angelic predicates, generation order
    raw_clauses: list[HornClause] = field(default_factory=list)


class _Gen:
    def __init__(self, program: Program, templates: Templates) -> None:
        self.program = program
        self.templates = templates
        self.clauses: list[HornClause] = []
        self.rand_preds: list[str] = []
        taken: set[str] = set(templates.pred_params)
        for d in program.defs:
            taken |= {d.name, *d.params} | expr_names(d.body)
        if program.main is not None:
            taken |= expr_names(program.main)
        self.fresh = FreshNames(taken, prefix="s")
        self.temp_names: set[str] = set()
        self.pred_fresh = FreshNames(set(templates.pred_params), prefix="R")

    def fresh_temp(self, hint: Optional[str] = None) -> str:
        name = self.fresh.fresh(hint)
        self.temp_names.add(name)
        return name

    def fresh_pred(self, params: tuple[str, ...], kind: str) -> str:
        name = self.pred_fresh.fresh(kind)
        self.templates.pred_order.append(name)
        self.templates.pred_params[name] = params
        return name

    # clause emission ---------------------------------------------------

    def emit(self, env: Sequence[EnvEntry], head: Formula) -> None:
        """One obligation ``env |- head``, split over conjunctive heads."""
        apps, guards = env_body(env)
        guard = mk_and(*guards)

        def heads(phi: Formula) -> list[Formula]:
            if isinstance(phi, And):
                out = []
                for a in phi.args:
                    out.extend(heads(a))
                return out
            return [phi]

        for h in heads(head):
            if isinstance(h, TrueF):
                continue
            if isinstance(h, PredApp):
                self.clauses.append(HornClause(PredHead(h), tuple(apps), guard))
            elif formula_preds(h):
                raise GenError(
                    f"obligation head mixes a predicate into {h}; "
                    "this is outside Horn clause form")
            else:
                self.clauses.append(HornClause(PureHead(h), tuple(apps), guard))

    def emit_exists(self, env: Sequence[EnvEntry], var: str,
                    app: PredApp) -> None:
        apps, guards = env_body(env)
        self.clauses.append(HornClause(ExistsHead((var,), app, TrueF()),
                                       tuple(apps), mk_and(*guards)))

    # subtyping ----------------------------------------------------------

    def subtype(self, env: list[EnvEntry], t1: RType, t2: RType) -> None:
        if isinstance(t1, RBase) and isinstance(t2, RBase):
            v = self.fresh_temp()
            lhs = subst_formula(t1.phi, {t1.var: Var(v)})
            rhs = subst_formula(t2.phi, {t2.var: Var(v)})
            self.emit(env + [Binder(v, RBase(v, lhs))], rhs)
            return
        if isinstance(t1, RArrow) and isinstance(t2, RArrow):
            self.subtype(env, t2.dom, t1.dom)  # contravariant
            x = self.fresh_temp(t2.binder)
            dom = t2.dom
            if isinstance(dom, RBase):
                dom = RBase(x, subst_formula(dom.phi, {dom.var: Var(x)}))
            cod1 = subst_rtype(t1.cod, {t1.binder: Var(x)})
            cod2 = subst_rtype(t2.cod, {t2.binder: Var(x)})
            self.subtype(env + [Binder(x, dom)], cod1, cod2)
            return
        raise GenError(f"incompatible types: {show_rtype(t1)} "
                       f"is not a subtype of {show_rtype(t2)}")

    # expression typing ---------------------------------------------------

    def lookup(self, env: Sequence[EnvEntry], name: str) -> RType:
        for e in reversed(env):
            if isinstance(e, Binder) and e.name == name:
                return e.rtype
        if name in self.templates.types:
            return self.templates.types[name]
        raise GenError(f"unbound variable {name}")

    def term_of(self, e: Expr) -> Term:
        if isinstance(e, EInt):
            return Const(e.value)
        if isinstance(e, EVar):
            return Var(e.name)
        raise GenError(f"expected a value, found {e!r} "
                       "(is the program in A-normal form?)")

    def synth(self, env: list[EnvEntry], e: Expr) -> RType:
        if isinstance(e, EInt):
            v = self.fresh_temp()
            return RBase(v, Atom("=", Var(v), Const(e.value)))
        if isinstance(e, EVar):
            t = self.lookup(env, e.name)
            if isinstance(t, RBase):
                v = self.fresh_temp()
                return RBase(v, Atom("=", Var(v), Var(e.name)))
            return t
        if isinstance(e, ERand):
            v = self.fresh_temp("r")
            if e.kind == ANGELIC:
                scope = scope_ints(env)
                params = tuple(scope) + (v,)
                p = self.fresh_pred(params, "R")
                self.rand_preds.append(p)
                app = PredApp(p, tuple(Var(x) for x in params))
                self.emit_exists(env, v, app)
                return RBase(v, app)
            return RBase(v, TrueF())
        if isinstance(e, EOp):
            args = [self.term_of(a) for a in e.args]
            v = self.fresh_temp()
            if e.op in ("+", "-", "*"):
                op_term = {"+": args[0] + args[1], "-": args[0] - args[1],
                           "*": args[0] * args[1]}[e.op]
                return RBase(v, Atom("=", Var(v), op_term))
            phi = Atom(e.op, args[0], args[1])
            truthy = mk_and(Atom("=", Var(v), Const(1)), phi)
            falsy = mk_and(Atom("=", Var(v), Const(0)), mk_not(phi))
            return RBase(v, Or((truthy, falsy)))
        if isinstance(e, EApp):
            tf = self.synth(env, e.fun)
            if not isinstance(tf, RArrow):
                raise GenError("application of a non-function")
            if isinstance(tf.dom, RBase):
                arg = self.term_of(e.arg)
                self.emit(env, subst_formula(tf.dom.phi, {tf.dom.var: arg}))
                return subst_rtype(tf.cod, {tf.binder: arg})
            targ = self.synth(env, e.arg)
            if not isinstance(targ, RArrow):
                raise GenError("function-typed argument expected")
            self.subtype(env, targ, tf.dom)
            return tf.cod
        if isinstance(e, ELet):
            raise GenError("internal: nested let after normalization")
        if isinstance(e, EIfz):
            # joining branches requires a type; invent one over the scope
            scope = scope_ints(env)
            v = self.fresh_temp("j")
            params = tuple(scope) + (v,)
            p = self.fresh_pred(params, "J")
            t = RBase(v, PredApp(p, tuple(Var(x) for x in params)))
            self.check(env, e, t)
            return t
        raise GenError(f"cannot synthesize a type for {e!r}")

    def check(self, env: list[EnvEntry], e: Expr, t: RType) -> None:
        if isinstance(e, ELet):
            bound = e.bound
            tb = self.synth(env, bound)
            if isinstance(tb, RBase):
                tb = RBase(e.name, subst_formula(tb.phi, {tb.var: Var(e.name)}))
            self.check(env + [Binder(e.name, tb)], e.body, t)
            return
        if isinstance(e, EIfz):
            cond = self.term_of(e.cond)
            self.check(env + [Guard(Atom("=", cond, Const(0)))], e.zero, t)
            self.check(env + [Guard(Atom("<>", cond, Const(0)))], e.nonzero, t)
            return
        ts = self.synth(env, e)
        self.subtype(env, ts, t)

    # definitions ---------------------------------------------------------

    def check_def(self, d: FunDef) -> None:
        t = self.templates.types[d.name]
        env: list[EnvEntry] = []
        for p in d.params:
            if not isinstance(t, RArrow):
                raise GenError(f"{d.name} has more parameters than its type")
            dom = t.dom
            if isinstance(dom, RBase):
                dom = RBase(p, subst_formula(dom.phi, {dom.var: Var(p)}))
            env.append(Binder(p, dom))
            t = subst_rtype(t.cod, {t.binder: Var(p)})
        self.check(env, d.body, t)

    def run(self) -> None:
        for d in self.program.defs:
            self.check_def(d)
        if self.program.main is not None:
            self.synth([], self.program.main)


# ---------------------------------------------------------------------------
# Clause simplification
# ---------------------------------------------------------------------------


def _conjuncts(f: Formula) -> list[Formula]:
    if isinstance(f, And):
        out = []
        for a in f.args:
            out.extend(_conjuncts(a))
        return out
    if isinstance(f, TrueF):
        return []
    return [f]


def _facts(conjs: Sequence[Formula]) -> tuple[dict[str, int], set[tuple[str, int]]]:
    """var = const and var <> const facts among conjuncts."""
    eqs: dict[str, int] = {}
    neqs: set[tuple[str, int]] = set()
    for c in conjs:
        if isinstance(c, Atom) and isinstance(c.left, Var) and isinstance(c.right, Const):
            if c.op == "=":
                eqs[c.left.name] = c.right.value
            elif c.op == "<>":
                neqs.add((c.left.name, c.right.value))
        elif isinstance(c, Atom) and isinstance(c.right, Var) and isinstance(c.left, Const):
            if c.op == "=":
                eqs[c.right.name] = c.left.value
            elif c.op == "<>":
                neqs.add((c.right.name, c.left.value))
    return eqs, neqs


def _contradicts(f: Formula, eqs: dict[str, int], neqs: set[tuple[str, int]]) -> bool:
    """Is conjunct f refuted by the collected facts?"""
    if isinstance(f, Atom):
        env = {}
        for v in formula_vars(f):
            if v in eqs:
                env[v] = eqs[v]
            else:
                return _neq_refutes(f, neqs)
        return not eval_formula(f, env)
    return False


def _neq_refutes(f: Formula, neqs: set[tuple[str, int]]) -> bool:
    if isinstance(f, Atom) and f.op == "=":
        if isinstance(f.left, Var) and isinstance(f.right, Const):
            return (f.left.name, f.right.value) in neqs
        if isinstance(f.right, Var) and isinstance(f.left, Const):
            return (f.right.name, f.left.value) in neqs
    return False


def _prune_disjunction(orf: Or, eqs: dict[str, int],
                       neqs: set[tuple[str, int]]) -> Formula:
    kept = []
    for d in orf.args:
        parts = _conjuncts(d)
        if any(_contradicts(p, eqs, neqs) for p in parts):
            continue
        kept.append(d)
    if not kept:
        return FalseF()
    if len(kept) == 1:
        return kept[0]
    return Or(tuple(kept))


def _simplify_guard(guard: Formula) -> Optional[list[Formula]]:
    """Iteratively prune disjuncts refuted by sibling facts.  Returns the
    conjunct list, or None when the guard is unsatisfiable."""
    conjs = _conjuncts(guard)
    for _ in range(10):
        eqs, neqs = _facts(conjs)
        changed = False
        out: list[Formula] = []
        for c in conjs:
            if isinstance(c, Or):
                pruned = _prune_disjunction(c, eqs, neqs)
                if pruned is not c:
                    changed = True
                if isinstance(pruned, FalseF):
                    return None
                out.extend(_conjuncts(pruned))
            elif isinstance(c, TrueF):
                changed = True
            elif not formula_vars(c) and not formula_preds(c):
                if eval_formula(c, {}):
                    changed = True  # ground true conjunct: drop
                else:
                    return None
            else:
                out.append(c)
        deduped: list[Formula] = []
        for c in out:
            if c not in deduped:
                deduped.append(c)
        if len(deduped) != len(out):
            changed = True
        conjs = deduped
        if not changed:
            break
    return conjs


def _equality_def(c: Formula, eliminable: set[str], used_once_ok: set[str]) -> Optional[tuple[str, Term]]:
    """A conjunct ``v = t`` (or ``t = v``) defining an eliminable v not in t."""
    if not (isinstance(c, Atom) and c.op == "="):
        return None
    for v_side, t_side in ((c.left, c.right), (c.right, c.left)):
        if isinstance(v_side, Var) and v_side.name in eliminable:
            if v_side.name not in term_vars(t_side):
                return v_side.name, t_side
    return None


def simplify_clauses(clauses: Sequence[HornClause],
                     eliminable: set[str]) -> list[HornClause]:
    out: list[HornClause] = []
    for c in clauses:
        s = _simplify_clause(c, eliminable)
        if s is not None and s not in out:
            out.append(s)
    return out


def _subst_clause(c: HornClause, env: dict[str, Term]) -> HornClause:
    apps = tuple(PredApp(a.name, tuple(subst_term(t, env) for t in a.args))
                 for a in c.body_apps)
    guard = subst_formula(c.body_guard, env)
    head = c.head
    if isinstance(head, PredHead):
        head = PredHead(PredApp(head.app.name,
                                tuple(subst_term(t, env) for t in head.app.args)))
    elif isinstance(head, PureHead):
        head = PureHead(subst_formula(head.formula, env))
    elif isinstance(head, ExistsHead):
        inner = {k: v for k, v in env.items() if k not in head.vars}
        head = ExistsHead(head.vars,
                          PredApp(head.app.name,
                                  tuple(subst_term(t, inner) for t in head.app.args)),
                          subst_formula(head.guard, inner))
    return HornClause(head, apps, guard)


def _simplify_clause(c: HornClause, eliminable: set[str]) -> Optional[HornClause]:
    for _ in range(30):
        conjs = _simplify_guard(c.body_guard)
        if conjs is None:
            return None  # unsatisfiable body: the clause holds vacuously
        c = HornClause(c.head, c.body_apps, mk_and(*conjs))
        # substitute one temporary defined by an equality, then re-simplify
        done = True
        for i, conj in enumerate(conjs):
            got = _equality_def(conj, eliminable, set())
            if got is None:
                continue
            v, t = got
            rest = conjs[:i] + conjs[i + 1:]
            c = _subst_clause(HornClause(c.head, c.body_apps, mk_and(*rest)),
                              {v: t})
            done = False
            break
        if done:
            break
    # drop trivial heads and tautologies
    if isinstance(c.head, PureHead):
        phi = c.head.formula
        if isinstance(phi, TrueF):
            return None
        if not formula_vars(phi) and not formula_preds(phi) and eval_formula(phi, {}):
            return None
        if any(phi == g for g in _conjuncts(c.body_guard)):
            return None
    if isinstance(c.head, PredHead) and c.head.app in c.body_apps:
        return None
    return c


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def _program_names(p: Program) -> set[str]:
    out: set[str] = set()
    for d in p.defs:
        out.add(d.name)
        out.update(d.params)
        out |= expr_names(d.body)
    if p.main is not None:
        out |= expr_names(p.main)
    return out


def generate(program: Program, templates: Optional[Templates] = None,
             simplify: bool = True) -> GenResult:
    """Clauses for every definition (and the trailing expression, if any)."""
    normal = anf_program(program)
    if templates is None:
        templates = make_templates(normal)
    g = _Gen(normal, templates)
    g.run()
    raw = list(g.clauses)
    extra: list[HornClause] = []
    for d in program.directives:
        if d.kind == "clause":
            extra.append(parse_clause(d.text))
    temps = set(g.temp_names) | (_program_names(normal) - _program_names(program))
    clauses = simplify_clauses(raw, temps) if simplify else raw
    return GenResult(clauses + extra, templates, g.rand_preds,
                     raw_clauses=raw + extra)


# ---------------------------------------------------------------------------
# Recursion-counter instrumentation
# ---------------------------------------------------------------------------


def instrument_counters(program: Program, target: str,
                        directives: Optional[Sequence[Directive]] = None,
                        inv_name: str = "Inv",
                        bound_name: str = "Bnd") -> Program:
    """Rewrite ``target`` to thread a recursion counter.

    ``f x1 .. xk`` becomes ``f_t x1 .. xk i c`` where ``i`` records the
    initial first argument and ``c`` counts recursive calls; the original
    name becomes a wrapper ``f x1 .. xk = f_t x1 .. xk x1 0``.  The
    instrumented function's type carries ``Inv`` on the counter position,
    and two clause directives tie it down: ``Inv`` holds at entry
    (``c = 0, i = x1``) and every reachable counter state is ``Bnd``.
    """
    d = program.fun(target)
    if not d.params:
        raise GenError(f"cannot instrument {target}: it has no parameters")
    dirs = list(directives if directives is not None else program.directives)

    taken: set[str] = set()
    for fd in program.defs:
        taken |= {fd.name, *fd.params} | expr_names(fd.body)
    fresh = FreshNames(taken)
    tname = f"{target}_t"
    while tname in taken:
        tname += "'"
    taken.add(tname)
    ivar = "i" if "i" not in taken else fresh.fresh("i")
    cvar = "c" if "c" not in taken else fresh.fresh("c")
    arity = len(d.params)

    def rewrite(e: Expr) -> Expr:
        """Redirect saturated self-calls through the counter."""
        if isinstance(e, EApp):
            spine: list[Expr] = []
            fun = e
            while isinstance(fun, EApp):
                spine.append(fun.arg)
                fun = fun.fun
            spine.reverse()
            if isinstance(fun, EVar) and fun.name == target and len(spine) == arity:
                out: Expr = EVar(tname)
                for a in spine:
                    out = EApp(out, rewrite(a))
                out = EApp(out, EVar(ivar))
                return EApp(out, EOp("+", (EVar(cvar), EInt(1))))
            return EApp(rewrite(e.fun), rewrite(e.arg))
        if isinstance(e, EOp):
            return EOp(e.op, tuple(rewrite(a) for a in e.args))
        if isinstance(e, EIfz):
            return EIfz(rewrite(e.cond), rewrite(e.zero), rewrite(e.nonzero))
        if isinstance(e, ELet):
            return ELet(e.name, rewrite(e.bound), rewrite(e.body))
        if isinstance(e, EVar) and e.name == target:
            raise GenError(f"cannot instrument {target}: it escapes as a value")
        return e

    t_def = FunDef(tname, d.params + (ivar, cvar), rewrite(d.body), d.rec_group)
    wrapper_body: Expr = EVar(tname)
    for p in d.params:
        wrapper_body = EApp(wrapper_body, EVar(p))
    wrapper_body = EApp(EApp(wrapper_body, EVar(d.params[0])), EInt(0))
    wrapper = FunDef(d.name, d.params, wrapper_body, d.rec_group)

    defs = []
    for fd in program.defs:
        if fd.name == target:
            defs.append(t_def)
            defs.append(wrapper)
        else:
            defs.append(fd)

    out_dirs: list[Directive] = []
    params_text = ", ".join(d.params)
    for dv in dirs:
        if dv.kind == "type" and dv.name == target:
            arrows = _split_arrows(dv.text, arity)
            new_ty = (" -> ".join(arrows[:-1])
                      + f" -> ({ivar}:int) -> ({cvar}:{{{inv_name}({params_text},"
                        f" {ivar}, {cvar})}}) -> " + arrows[-1])
            out_dirs.append(Directive("type", name=tname, text=new_ty))
        else:
            out_dirs.append(dv)
    guard_entry = f"{cvar} = 0 & {ivar} = {d.params[0]}"
    inv_args = f"{params_text}, {ivar}, {cvar}"
    out_dirs.append(Directive(
        "clause", text=f"{inv_name}({inv_args}) <= {guard_entry}"))
    # the bound predicate sees every counter state reachable from a valid
    # entry; which entry predicate guards it comes from the target's type
    first_param_pred = _first_param_pred(dirs, target, d.params[0])
    body = f"{first_param_pred}, {inv_name}({inv_args})" if first_param_pred \
        else f"{inv_name}({inv_args})"
    out_dirs.append(Directive(
        "clause", text=f"{bound_name}({ivar}, {cvar}) <= {body}"))
    return Program(defs, program.main, out_dirs)


def _split_arrows(text: str, count: int) -> list[str]:
    """Split a type expression at its first ``count`` top-level arrows."""
    parts: list[str] = []
    depth = 0
    start = 0
    i = 0
    while i < len(text) and len(parts) < count:
        ch = text[i]
        if ch in "({":
            depth += 1
        elif ch in ")}":
            depth -= 1
        elif depth == 0 and text.startswith("->", i):
            parts.append(text[start:i].strip())
            start = i + 2
            i += 2
            continue
        i += 1
    parts.append(text[start:].strip())
    if len(parts) != count + 1:
        raise GenError(f"type {text!r} does not have {count} arguments")
    return parts


def _first_param_pred(dirs: Sequence[Directive], target: str,
                      first_param: str) -> Optional[str]:
    for dv in dirs:
        if dv.kind == "type" and dv.name == target:
            head = _split_arrows(dv.text, 1)[0]
            # "(x:{P(x)})" - pull out the predicate application, if any
            inner = head.strip()
            if inner.startswith("(") and inner.endswith(")"):
                inner = inner[1:-1]
            name, sep, ty = inner.partition(":")
            if not sep:
                return None
            ty = ty.strip()
            if ty.startswith("{") and ty.endswith("}"):
                body = ty[1:-1].strip()
                if ":" in body.split("(")[0]:
                    body = body.partition(":")[2].strip()
                if body and "(" in body and body.endswith(")") and \
                        "&" not in body and "|" not in body:
                    pname = body.partition("(")[0].strip()
                    args = body[body.index("(") + 1:-1]
                    args = args.replace(name.strip(), first_param)
                    return f"{pname}({args})"
    return None

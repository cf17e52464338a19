"""Template-based solving of existentially quantified Horn clause sets.

Each unknown predicate is assigned a parametric template (by default a
single inequality ``c0 + c1*x1 + ... >= 0`` with unknown coefficients).
Applying the open templates turns every clause into a universally
quantified arithmetic implication; existential head variables are
eliminated by linear Skolem expressions over the clause's universals.
Farkas' lemma then reduces each implication to a coefficient system
over the unknowns, which an SMT solver searches under iteratively
widened coefficient bounds.  When the coefficient system is
unsatisfiable, a direct quantified query decides whether any bounded
template works at all before the verdict becomes NoSol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

from . import smtio
from .hccs import (
    ATOMIC, Atom, Const, DnfTooLarge, ExistsHead, FalseF, Formula,
    HornClause, Mul, NonlinearTerm, Poly, Pred, PredHead, PredSubst,
    Shape, Term, TrueF, Var, ZERO, check_solution, clause_query, dnf,
    eval_formula, formula_vars, geq0, hccs_pred_vars, mk_and, mk_implies,
    mk_or, nnf, poly_to_term, show_clause, subst_formula, term_to_poly,
)
from .smtio import Exists, Forall, SmtSolver, SmtUnknown


class SolverError(Exception):
    pass


# ---------------------------------------------------------------------------
# Fresh names
# ---------------------------------------------------------------------------


class NamePool:
    """Numbered fresh names (``w1``, ``w2``, ...) avoiding a taken set."""

    def __init__(self, taken: Iterable[str] = ()) -> None:
        self.taken = set(taken)
        self._counters: dict[str, int] = {}

    def add(self, names: Iterable[str]) -> None:
        self.taken.update(names)

    def fresh(self, prefix: str) -> str:
        n = self._counters.get(prefix, 0)
        while True:
            n += 1
            name = f"{prefix}{n}"
            if name not in self.taken:
                self._counters[prefix] = n
                self.taken.add(name)
                return name


def clause_names(clauses: Iterable[HornClause]) -> set[str]:
    """Every variable name a clause set can mention, bound or free."""
    out: set[str] = set()
    for c in clauses:
        out |= c.free_vars()
        if isinstance(c.head, ExistsHead):
            out |= set(c.head.vars)
    return out


# ---------------------------------------------------------------------------
# Template assignments
# ---------------------------------------------------------------------------


@dataclass
class TemplateAssignment:
    """Open templates for the unknown predicates of one solve pass."""

    templates: dict[str, Pred]     # pred -> parametric body (unknowns free)
    order: list[str]               # all unknowns, declaration order
    by_pred: dict[str, list[str]]  # pred -> its unknowns
    shape: Shape                   # working shape used for generated templates

    def instantiate(self, model: Mapping[str, int]) -> PredSubst:
        out: PredSubst = {}
        for name, tmpl in self.templates.items():
            env = {u: Const(model.get(u, 0)) for u in self.by_pred[name]}
            out[name] = Pred(tmpl.params, subst_formula(tmpl.body, env))
        return out


def shape_template(params: Sequence[str], shape: Shape,
                   pool: NamePool, prefix: str) -> tuple[Formula, list[str]]:
    """``Or`` of ``shape.disjuncts`` conjunctions of ``shape.conjuncts``
    inequalities ``c0 + sum ci*xi >= 0`` with fresh coefficient names."""
    unknowns: list[str] = []
    disjuncts: list[Formula] = []
    for _ in range(shape.disjuncts):
        conjuncts: list[Formula] = []
        for _ in range(shape.conjuncts):
            c0 = pool.fresh(prefix)
            unknowns.append(c0)
            t: Term = Var(c0)
            for x in params:
                ci = pool.fresh(prefix)
                unknowns.append(ci)
                t = t + Var(ci) * Var(x)
            conjuncts.append(geq0(t))
        disjuncts.append(mk_and(*conjuncts))
    return mk_or(*disjuncts), unknowns


def make_assignment(pred_params: Mapping[str, Sequence[str]], shape: Shape,
                    user_templates: Mapping[str, Pred],
                    pool: NamePool) -> TemplateAssignment:
    """Templates for every predicate in ``pred_params`` (ordered: the order
    fixes SMT declaration order, and with it which coefficients the model
    search keeps small first)."""
    templates: dict[str, Pred] = {}
    order: list[str] = []
    by_pred: dict[str, list[str]] = {}
    for name, params in pred_params.items():
        params = tuple(params)
        if name in user_templates:
            tmpl = user_templates[name]
            if len(tmpl.params) != len(params):
                raise SolverError(
                    f"template for {name} has {len(tmpl.params)} parameters, "
                    f"expected {len(params)}")
            unknowns = sorted(formula_vars(tmpl.body) - set(tmpl.params))
            pool.add(unknowns)
            templates[name] = tmpl
        else:
            body, unknowns = shape_template(params, shape, pool, f"c_{name}_")
            templates[name] = Pred(params, body)
        order.extend(unknowns)
        by_pred[name] = list(unknowns)
    return TemplateAssignment(templates, order, by_pred, shape)


# ---------------------------------------------------------------------------
# Symbolic linear forms and Farkas reduction
# ---------------------------------------------------------------------------


def linear_form(t: Term, univ: Sequence[str]) -> tuple[dict[str, Term], Term]:
    """Split ``t`` into ``const + sum coef_x * x`` over the universals,
    with coefficients that may mention the remaining (unknown) symbols."""
    uset = set(univ)
    coefs: dict[str, Poly] = {}
    const: Poly = {}
    for mono, c in term_to_poly(t).items():
        uvars = [v for v in mono if v in uset]
        if not uvars:
            const[mono] = const.get(mono, 0) + c
        elif len(uvars) == 1:
            rest = list(mono)
            rest.remove(uvars[0])
            key = tuple(rest)
            bucket = coefs.setdefault(uvars[0], {})
            bucket[key] = bucket.get(key, 0) + c
        else:
            raise NonlinearTerm(f"term is nonlinear in {uvars}")
    return ({x: poly_to_term(p) for x, p in coefs.items()},
            poly_to_term(const))


def _wsum(parts: list[Term]) -> Term:
    if not parts:
        return ZERO
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def _scaled(w: str, coef: Term) -> Optional[Term]:
    if coef == ZERO:
        return None
    if coef == Const(1):
        return Var(w)
    return Mul(Var(w), coef)


def farkas_disjunct(rows: Sequence[Atom], univ: Sequence[str],
                    pool: NamePool) -> tuple[list[Formula], list[str]]:
    """Constraints forcing the conjunction of ``rows`` (each ``t >= 0``,
    linear in ``univ``) to be infeasible over the rationals: nonnegative
    multipliers cancel every universal's coefficient and drive the
    constant row to ``<= -1``."""
    lins = [linear_form(r.left, univ) for r in rows]
    ws = [pool.fresh("w") for _ in rows]
    out: list[Formula] = [Atom(">=", Var(w), ZERO) for w in ws]
    for x in univ:
        parts = []
        for (coef, _), w in zip(lins, ws):
            scaled = _scaled(w, coef.get(x, ZERO))
            if scaled is not None:
                parts.append(scaled)
        if parts:
            out.append(Atom("=", _wsum(parts), ZERO))
    consts = []
    for (_, k), w in zip(lins, ws):
        scaled = _scaled(w, k)
        if scaled is not None:
            consts.append(scaled)
    out.append(Atom("<=", _wsum(consts), Const(-1)))
    return out, ws


# ---------------------------------------------------------------------------
# Per-clause constraint construction
# ---------------------------------------------------------------------------


@dataclass
class ClauseBuild:
    """One clause reduced to quantifier-free constraints on the unknowns."""

    assertions: list[Formula]
    skolems: list[str]           # fresh bounded Skolem coefficients
    multipliers: list[str]       # fresh nonnegative Farkas multipliers


def _skolemize(head: Formula, exvars: Sequence[str], univ: Sequence[str],
               pool: NamePool) -> tuple[Formula, list[str]]:
    env: dict[str, Term] = {}
    skolems: list[str] = []
    for v in exvars:
        z0 = pool.fresh("z")
        skolems.append(z0)
        expr: Term = Var(z0)
        for x in univ:
            zi = pool.fresh("z")
            skolems.append(zi)
            expr = expr + Var(zi) * Var(x)
        env[v] = expr
    return subst_formula(head, env), skolems


def build_clause(c: HornClause, theta: Mapping[str, Pred],
                 unknowns: Iterable[str], pool: NamePool,
                 dnf_cap: int = 64) -> ClauseBuild:
    """Farkas-reduce one clause under the open substitution ``theta``.

    Raises :class:`hccs.DnfTooLarge` when the negated clause explodes.
    """
    body, exvars, head = clause_query(c, theta)
    univ = sorted((formula_vars(body) | formula_vars(head))
                  - set(exvars) - set(unknowns))
    skolems: list[str] = []
    if exvars:
        head, skolems = _skolemize(head, exvars, univ, pool)
    if not univ:
        return ClauseBuild([mk_implies(body, head)], skolems, [])
    # refute body & not head; rows per disjunct follow this And order:
    # negated-head rows first, then body applications, then the guard
    negated = mk_and(nnf(head, positive=False), nnf(body))
    assertions: list[Formula] = []
    multipliers: list[str] = []
    for disjunct in dnf(negated, cap=dnf_cap):
        rows = [a for a in disjunct if isinstance(a, Atom)]
        if len(rows) != len(disjunct):
            raise SolverError(f"unsubstituted predicate in {show_clause(c)}")
        constraints, ws = farkas_disjunct(rows, univ, pool)
        assertions.extend(constraints)
        multipliers.extend(ws)
    return ClauseBuild(assertions, skolems, multipliers)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class SolveStats:
    queries: int = 0
    farkas_unsat: int = 0
    fallbacks: int = 0
    dnf_overflows: int = 0
    shapes_tried: int = 0


@dataclass
class SolveResult:
    kind: str                          # "sol" | "nosol" | "unknown"
    subst: Optional[PredSubst] = None
    shape: Shape = ATOMIC
    bound: int = 0
    reason: Optional[str] = None
    model: Optional[dict[str, int]] = None
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def is_sol(self) -> bool:
        return self.kind == "sol"


SideConstraints = Union[Sequence[Formula],
                        Callable[[TemplateAssignment, NamePool],
                                 Sequence[Formula]]]


def shape_schedule(start: Shape, cap: Shape) -> list[Shape]:
    """Shapes from ``start`` up to ``cap``, cheapest first: {1,1}, {2,1},
    {1,2}, {2,2}, ...  (more conjuncts before more disjuncts)."""
    all_shapes = [Shape(c, d)
                  for c in range(1, cap.conjuncts + 1)
                  for d in range(1, cap.disjuncts + 1)]
    all_shapes.sort(key=lambda s: (s.conjuncts * s.disjuncts,
                                   s.disjuncts, s.conjuncts))
    key = (start.conjuncts * start.disjuncts, start.disjuncts,
           start.conjuncts)
    out = [s for s in all_shapes
           if (s.conjuncts * s.disjuncts, s.disjuncts, s.conjuncts) >= key]
    return out or [start]


def bound_schedule(bound_max: int) -> list[int]:
    """1, 2, 4, ... capped at (and always ending with) ``bound_max``."""
    out = []
    b = 1
    while b < bound_max:
        out.append(b)
        b *= 2
    out.append(bound_max)
    return out


# ---------------------------------------------------------------------------
# The solve loop
# ---------------------------------------------------------------------------


def _bound_atoms(names: Iterable[str], bound: int) -> list[Formula]:
    out: list[Formula] = []
    for u in names:
        out.append(Atom(">=", Var(u), Const(-bound)))
        out.append(Atom("<=", Var(u), Const(bound)))
    return out


def solve(clauses: Sequence[HornClause],
          *,
          solver: Optional[SmtSolver] = None,
          restriction: Shape = ATOMIC,
          start_shape: Optional[Shape] = None,
          fixed: Optional[Mapping[str, Pred]] = None,
          user_templates: Optional[Mapping[str, Pred]] = None,
          side: SideConstraints = (),
          pred_params: Optional[Mapping[str, Sequence[str]]] = None,
          pred_order: Optional[Sequence[str]] = None,
          bound_max: int = 2,
          dnf_cap: int = 64,
          validate: bool = True) -> SolveResult:
    """Search for a predicate substitution satisfying all clauses.

    ``fixed`` predicates are substituted as-is; every other predicate
    gets a template (``user_templates`` override the generated shape).
    ``side`` adds constraints over the template unknowns (and witness
    constants of its own) to the coefficient search.  ``pred_order``
    puts the listed predicates' coefficients first in declaration
    order; the model search keeps earlier-declared coefficients small
    first, so the head of the list is optimized hardest.
    """
    smt = solver if solver is not None else smtio.default_solver()
    fixed = dict(fixed or {})
    user_templates = dict(user_templates or {})
    stats = SolveStats()

    open_preds = sorted(hccs_pred_vars(clauses) - set(fixed))
    if pred_order:
        front = [p for p in pred_order if p in open_preds]
        open_preds = front + [p for p in open_preds if p not in front]
    params = _pred_params(clauses, open_preds, pred_params)

    base_taken = clause_names(clauses)
    for tmpl in user_templates.values():
        base_taken |= formula_vars(tmpl.body)

    start = start_shape or ATOMIC
    unknown_reasons: list[str] = []
    schedule = shape_schedule(start, restriction)
    for shape in schedule:
        stats.shapes_tried += 1
        result = _solve_at_shape(
            clauses, shape, fixed, user_templates, side, params,
            base_taken, bound_max, dnf_cap, smt, stats, validate,
            final=shape == schedule[-1])
        if result.kind == "sol":
            result.stats = stats
            return result
        if result.kind == "unknown" and result.reason:
            unknown_reasons.append(result.reason)
    if unknown_reasons:
        return SolveResult("unknown", shape=restriction, bound=bound_max,
                           reason="; ".join(unknown_reasons), stats=stats)
    return SolveResult("nosol", shape=restriction, bound=bound_max,
                       stats=stats)


def _pred_params(clauses: Sequence[HornClause], names: Sequence[str],
                 given: Optional[Mapping[str, Sequence[str]]]
                 ) -> dict[str, list[str]]:
    arity: dict[str, int] = {}
    for c in clauses:
        apps = list(c.body_apps)
        if isinstance(c.head, (PredHead, ExistsHead)):
            apps.append(c.head.app)
        for a in apps:
            arity.setdefault(a.name, len(a.args))
    out: dict[str, list[str]] = {}
    for name in names:
        if given and name in given:
            out[name] = list(given[name])
        else:
            out[name] = [f"a{i+1}" for i in range(arity.get(name, 0))]
    return out


def _side_formulas(side: SideConstraints, assignment: TemplateAssignment,
                   pool: NamePool) -> list[Formula]:
    if callable(side):
        return list(side(assignment, pool))
    return list(side)


def _solve_at_shape(clauses, shape, fixed, user_templates, side, params,
                    base_taken, bound_max, dnf_cap, smt, stats,
                    validate, final=True) -> SolveResult:
    pool = NamePool(base_taken)
    assignment = make_assignment(params, shape, user_templates, pool)
    theta = dict(fixed)
    theta.update(assignment.templates)

    side_forms = _side_formulas(side, assignment, pool)
    side_vars: set[str] = set()
    for f in side_forms:
        side_vars |= formula_vars(f)
    witnesses = sorted(side_vars - set(assignment.order))

    # Farkas reduction is bound-independent; build it once per shape.
    builds: list[ClauseBuild] = []
    overflow: Optional[str] = None
    try:
        for c in clauses:
            builds.append(build_clause(c, theta, assignment.order, pool,
                                       dnf_cap))
    except DnfTooLarge as e:
        overflow = f"clause explosion at shape {shape}: {e}"
        stats.dnf_overflows += 1

    skolems = [z for b in builds for z in b.skolems]
    multipliers = [w for b in builds for w in b.multipliers]
    unknown_reason: Optional[str] = None
    if overflow is None:
        base_assertions: list[Formula] = []
        for b in builds:
            base_assertions.extend(b.assertions)
        base_assertions.extend(side_forms)
        declare = (list(assignment.order) + skolems + witnesses
                   + multipliers)
        for bound in bound_schedule(bound_max):
            assertions = list(base_assertions)
            assertions.extend(_bound_atoms(assignment.order, bound))
            assertions.extend(_bound_atoms(skolems, bound))
            stats.queries += 1
            res = smt.check(declare, assertions)
            if res.verdict == "sat":
                return _accept(clauses, assignment, fixed, res.model or {},
                               side_forms, shape, bound, smt, stats,
                               validate)
            if res.verdict == "unsat":
                stats.farkas_unsat += 1
                continue
            unknown_reason = res.reason or "solver unknown"
    else:
        unknown_reason = overflow

    # Smaller shapes embed into larger ones (pad with trivial atoms or
    # repeated disjuncts), so a nosol verdict is only needed at the last
    # shape of the schedule; before that, just move on to the next shape.
    if not final:
        if unknown_reason is None:
            return SolveResult("nosol", shape=shape, bound=bound_max)
        return SolveResult("unknown", shape=shape, bound=bound_max,
                           reason=unknown_reason)

    # No bounded coefficient system worked: ask the quantified question
    # directly (templates still open, coefficients bounded) before giving
    # up on this shape.
    fb = _fallback(clauses, theta, assignment, side_forms, witnesses,
                   bound_max, smt, stats)
    if fb.verdict == "sat":
        return _accept(clauses, assignment, fixed, fb.model or {},
                       side_forms, shape, bound_max, smt, stats, validate)
    if fb.verdict == "unsat" and unknown_reason is None:
        return SolveResult("nosol", shape=shape, bound=bound_max)
    reason = unknown_reason or fb.reason or "fallback unknown"
    return SolveResult("unknown", shape=shape, bound=bound_max,
                       reason=reason)


def _fallback(clauses, theta, assignment, side_forms, witnesses, bound,
              smt, stats) -> smtio.SmtResult:
    assertions: list[Formula] = []
    for c in clauses:
        body, exvars, head = clause_query(c, theta)
        univ = sorted((formula_vars(body) | formula_vars(head))
                      - set(exvars) - set(assignment.order))
        goal: Formula = mk_implies(body, head)
        if exvars:
            goal = mk_implies(body, Exists(tuple(exvars), head))
        if univ:
            goal = Forall(tuple(univ), goal)
        assertions.append(goal)
    assertions.extend(side_forms)
    assertions.extend(_bound_atoms(assignment.order, bound))
    declare = list(assignment.order) + witnesses
    stats.queries += 1
    stats.fallbacks += 1
    return smt.check(declare, assertions)


def _accept(clauses, assignment, fixed, model, side_forms, shape, bound,
            smt, stats, validate) -> SolveResult:
    subst = assignment.instantiate(model)
    full = dict(fixed)
    full.update(subst)
    if validate:
        env = {v: model.get(v, 0)
               for f in side_forms for v in formula_vars(f)}
        for f in side_forms:
            if not eval_formula(f, env):
                raise SolverError(
                    "model violates a side constraint (solver bug)")
        try:
            ok = check_solution(clauses, full, smt)
        except SmtUnknown as e:
            return SolveResult("unknown", shape=shape, bound=bound,
                               reason=f"validation inconclusive: {e}")
        if not ok:
            raise SolverError(
                "Farkas model does not satisfy the clause set (solver bug)")
    return SolveResult("sol", subst=full, shape=shape, bound=bound,
                       model=dict(model), stats=stats)


# ---------------------------------------------------------------------------
# Trivial-predicate slicing
# ---------------------------------------------------------------------------


def slice_trivial(clauses: Sequence[HornClause],
                  protect: Iterable[str] = ()
                  ) -> tuple[list[HornClause], PredSubst]:
    """Assign predicates that cannot matter and drop their clauses.

    A predicate that never occurs in any head can only be weakened by
    ``false``: its body occurrences vacuously satisfy those clauses.  A
    predicate that occurs only as a plain head (never in a body, never
    under an existential head) is satisfied by ``true`` and its clauses
    impose nothing.  ``protect`` exempts predicates whose value the
    caller cares about.
    """
    keep = set(protect)
    arity: dict[str, int] = {}
    cs = list(clauses)
    for c in cs:
        for a in c.body_apps:
            arity.setdefault(a.name, len(a.args))
        if isinstance(c.head, (PredHead, ExistsHead)):
            arity.setdefault(c.head.app.name, len(c.head.app.args))
    forced: PredSubst = {}

    def mk(name: str, value: Formula) -> Pred:
        n = arity.get(name, 0)
        return Pred(tuple(f"a{i+1}" for i in range(n)), value)

    changed = True
    while changed:
        changed = False
        heads: set[str] = set()
        exists_heads: set[str] = set()
        bodies: set[str] = set()
        for c in cs:
            for a in c.body_apps:
                bodies.add(a.name)
            if isinstance(c.head, ExistsHead):
                exists_heads.add(c.head.app.name)
            elif isinstance(c.head, PredHead):
                heads.add(c.head.app.name)
        bottom = bodies - heads - exists_heads - keep - set(forced)
        if bottom:
            for p in bottom:
                forced[p] = mk(p, FalseF())
            cs = [c for c in cs
                  if not any(a.name in bottom for a in c.body_apps)]
            changed = True
            continue
        top = heads - bodies - exists_heads - keep - set(forced)
        if top:
            for p in top:
                forced[p] = mk(p, TrueF())
            cs = [c for c in cs
                  if not (isinstance(c.head, PredHead)
                          and c.head.app.name in top)]
            changed = True
    return cs, forced

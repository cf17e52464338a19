"""Lexicographic Pareto optimization of Horn clause solutions.

A preference gives some predicates a direction -- ``max`` to weaken, ``min``
to strengthen -- and a priority among them.  Starting from any solution of
the clause set, the engine repeatedly re-solves the set extended with
constraints forcing a strictly better solution: predicates of higher
priority are pinned to logically equivalent values, the predicate under
optimization must strictly improve in its direction, and every other
predicate floats freely.  A stage ends when the solver proves that no
improvement exists within the configured template shapes and coefficient
bounds; once every stage has ended that way, the current substitution is
Pareto optimal for the induced lexicographic order, and the per-stage
no-improvement verdicts are its certificate (re-checkable with
:func:`certify`).

Strict improvement is expressed inside the solver's own language.  To
weaken ``P`` beyond its current value ``p``:

    P(x) <= p(x)            (no ground is lost)
    exists x . P(x) & !p(x) (new ground is gained)

To strengthen, the implication flips and the witness moves to a side
constraint ``p(w) & !template_P(w)`` over fresh constants, since the
negated occurrence of an open predicate cannot appear in a clause.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

from . import smtio
from .hccs import (
    ATOMIC, ExistsHead, FALSE, Formula, HornClause, Pred, PredApp, PredHead,
    PredSubst, PureHead, Shape, TRUE, Var, formula_vars, hccs_pred_vars,
    mk_and, mk_implies, mk_not, show_pred,
)
from .rtypes import RArrow, RBase, RType, rtype_preds
from .solver import (
    NamePool, SideConstraints, SolveResult, TemplateAssignment, slice_trivial,
    solve,
)
from .surface import Directive

MAX = "max"
MIN = "min"


class OptError(Exception):
    pass


# ---------------------------------------------------------------------------
# Preferences
# ---------------------------------------------------------------------------


@dataclass
class PreferenceSpec:
    """What to optimize: directions, a total priority, and the search space.

    ``order`` lists the directed predicates highest priority first; it is
    the stage order of :func:`optimize`.  ``fixed`` predicates are
    substituted verbatim, ``user_templates`` replace the generated template
    for their predicate (their free non-parameter names are the unknowns),
    and ``exists`` predicates must stay satisfiable somewhere.
    """

    directions: dict[str, str]
    order: tuple[str, ...]
    restriction: Shape = ATOMIC
    exists: tuple[str, ...] = ()
    fixed: dict[str, Pred] = field(default_factory=dict)
    user_templates: dict[str, Pred] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, d in self.directions.items():
            if d not in (MAX, MIN):
                raise OptError(f"direction of {name} must be max or min")
        if set(self.order) != set(self.directions):
            raise OptError("priority order must cover exactly the directed "
                           "predicates")
        both = set(self.order) & set(self.fixed)
        if both:
            raise OptError(
                f"cannot optimize fixed predicate(s) {', '.join(sorted(both))}")


def total_priority(names: Iterable[str],
                   pairs: Iterable[tuple[str, str]],
                   declared: Sequence[str] = ()) -> tuple[str, ...]:
    """Complete a partial priority into a total order.

    ``pairs`` are (earlier, later) requirements; ties break by position in
    ``declared`` and then by name, so the result is deterministic.
    """
    names = list(dict.fromkeys(names))
    pos = {n: i for i, n in enumerate(declared)}

    def rank(n: str) -> tuple[int, str]:
        return (pos.get(n, len(pos)), n)

    above: dict[str, set[str]] = {n: set() for n in names}
    blockers: dict[str, int] = {n: 0 for n in names}
    for lo, hi in pairs:
        for n in (lo, hi):
            if n not in above:
                raise OptError(f"priority mentions undirected predicate {n}")
        if hi not in above[lo]:
            above[lo].add(hi)
            blockers[hi] += 1
    out: list[str] = []
    ready = sorted((n for n in names if blockers[n] == 0), key=rank)
    while ready:
        n = ready.pop(0)
        out.append(n)
        changed = False
        for m in above[n]:
            blockers[m] -= 1
            if blockers[m] == 0:
                ready.append(m)
                changed = True
        if changed:
            ready.sort(key=rank)
    if len(out) != len(names):
        rest = sorted(set(names) - set(out))
        raise OptError(f"priority is cyclic around {', '.join(rest)}")
    return tuple(out)


def preference_from_directives(directives: Sequence[Directive],
                               declared: Sequence[str] = (),
                               restriction: Shape = ATOMIC) -> PreferenceSpec:
    """Collect @maximize/@minimize/@prioritize/@exists/@fix/@template."""
    directions: dict[str, str] = {}
    pairs: list[tuple[str, str]] = []
    exists: list[str] = []
    fixed: dict[str, Pred] = {}
    user_templates: dict[str, Pred] = {}
    for d in directives:
        if d.kind in ("maximize", "minimize"):
            want = MAX if d.kind == "maximize" else MIN
            if directions.get(d.name, want) != want:
                raise OptError(f"{d.name} is both maximized and minimized")
            directions[d.name] = want
        elif d.kind == "prioritize":
            pairs.append((d.name, d.second))
        elif d.kind == "exists":
            exists.append(d.name)
        elif d.kind == "fix":
            fixed[d.name] = Pred(d.params, d.formula)
        elif d.kind == "template":
            user_templates[d.name] = Pred(d.params, d.formula)
        # @type and @clause are consumed by the front end
    overlap = set(fixed) & set(user_templates)
    if overlap:
        raise OptError(
            f"{', '.join(sorted(overlap))} both fixed and templated")
    return PreferenceSpec(directions,
                          total_priority(directions, pairs, declared),
                          restriction=restriction,
                          exists=tuple(dict.fromkeys(exists)),
                          fixed=fixed,
                          user_templates=user_templates)


# ---------------------------------------------------------------------------
# Comparing predicates and substitutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Comparison:
    rel: str             # "less" | "equiv" | "greater" | "incomparable"
    decided: bool = True  # False: an implication check came back unknown


def _implies(p: Pred, q: Pred, smt: smtio.SmtSolver) -> Optional[bool]:
    args = tuple(Var(v) for v in p.params)
    goal = mk_implies(p.body, q.apply(args))
    return smt.check_valid(goal, sorted(formula_vars(goal)), ())


def pred_compare(p1: Pred, p2: Pred, direction: str,
                 solver: Optional[smtio.SmtSolver] = None) -> Comparison:
    """Order two closed predicates: less means strictly better.

    Better is weaker when maximizing and stronger when minimizing; predicates
    unrelated by implication are incomparable.
    """
    if len(p1.params) != len(p2.params):
        raise OptError("cannot compare predicates of different arity")
    smt = solver if solver is not None else smtio.default_solver()
    fwd = _implies(p1, p2, smt)
    bwd = _implies(p2, p1, smt)
    if fwd is None or bwd is None:
        return Comparison("incomparable", decided=False)
    le, ge = (bwd, fwd) if direction == MAX else (fwd, bwd)
    if le and ge:
        return Comparison("equiv")
    if le:
        return Comparison("less")
    if ge:
        return Comparison("greater")
    return Comparison("incomparable")


def subst_compare(t1: Mapping[str, Pred], t2: Mapping[str, Pred],
                  spec: PreferenceSpec,
                  solver: Optional[smtio.SmtSolver] = None) -> Comparison:
    """Lexicographic comparison along the priority order."""
    smt = solver if solver is not None else smtio.default_solver()
    for name in spec.order:
        c = pred_compare(t1[name], t2[name], spec.directions[name], smt)
        if c.rel != "equiv" or not c.decided:
            return c
    return Comparison("equiv")


def _rename_vars(f: Formula, ren: Mapping[str, str]) -> Formula:
    if not ren:
        return f
    names = tuple(ren)
    return Pred(names, f).apply(tuple(Var(ren[n]) for n in names))


def rtype_equiv(a: RType, b: RType,
                solver: Optional[smtio.SmtSolver] = None) -> Optional[bool]:
    """Are two predicate-free refinement types logically equivalent?

    The structures must match arrow-for-arrow; binder names may differ and
    are matched positionally.  Returns ``None`` when some refinement check
    comes back undecided.
    """
    for t in (a, b):
        left = rtype_preds(t)
        if left:
            raise OptError("cannot compare refinement types with unsolved "
                           f"predicates: {', '.join(sorted(left))}")
    smt = solver if solver is not None else smtio.default_solver()
    checks: list[tuple[Formula, Formula, tuple[str, ...]]] = []

    def go(x: RType, y: RType, scope: tuple[str, ...],
           renx: dict[str, str], reny: dict[str, str]) -> bool:
        v = f"v{len(scope) + 1}"
        if isinstance(x, RBase) and isinstance(y, RBase):
            checks.append((_rename_vars(x.phi, {**renx, x.var: v}),
                           _rename_vars(y.phi, {**reny, y.var: v}),
                           scope + (v,)))
            return True
        if isinstance(x, RArrow) and isinstance(y, RArrow):
            if not go(x.dom, y.dom, scope, renx, reny):
                return False
            if isinstance(x.dom, RBase):
                return go(x.cod, y.cod, scope + (v,),
                          {**renx, x.binder: v}, {**reny, y.binder: v})
            return go(x.cod, y.cod, scope, renx, reny)
        return False

    if not go(a, b, (), {}, {}):
        return False
    out: Optional[bool] = True
    for fx, fy, scope in checks:
        for goal in (mk_implies(fx, fy), mk_implies(fy, fx)):
            verdict = smt.check_valid(goal, scope, ())
            if verdict is False:
                return False
            if verdict is None:
                out = None
    return out


# ---------------------------------------------------------------------------
# Improvement and pinning constraints
# ---------------------------------------------------------------------------


def _pred_args(params: Sequence[str]) -> tuple[Var, ...]:
    return tuple(Var(p) for p in params)


def nonempty_clause(name: str, params: Sequence[str]) -> HornClause:
    """``exists params . name(params)``: the predicate must hold somewhere."""
    ps = tuple(params)
    return HornClause(ExistsHead(ps, PredApp(name, _pred_args(ps)), TRUE),
                      (), TRUE)


def pin_clauses(name: str, value: Pred) -> list[HornClause]:
    """Clauses forcing a predicate to stay equivalent to ``value``."""
    args = _pred_args(value.params)
    app = PredApp(name, args)
    body = value.apply(args)
    return [HornClause(PredHead(app), (), body),
            HornClause(PureHead(body), (app,), TRUE)]


def improvement_clauses(name: str, incumbent: Pred, direction: str
                        ) -> tuple[list[HornClause], SideConstraints]:
    """Constraints admitting only strictly better values for ``name``."""
    args = _pred_args(incumbent.params)
    app = PredApp(name, args)
    cur = incumbent.apply(args)
    if direction == MAX:
        keep = HornClause(PredHead(app), (), cur)
        gain = HornClause(
            ExistsHead(incumbent.params, app, mk_not(cur)), (), TRUE)
        return [keep, gain], ()

    keep = HornClause(PureHead(cur), (app,), TRUE)

    def lose_ground(assignment: TemplateAssignment,
                    pool: NamePool) -> Sequence[Formula]:
        tmpl = assignment.templates.get(name)
        if tmpl is None:
            raise OptError(f"no template for minimized predicate {name}")
        ws = tuple(Var(pool.fresh("w")) for _ in incumbent.params)
        return [mk_and(incumbent.apply(ws), mk_not(tmpl.apply(ws)))]

    return [keep], lose_ground


def improvement_constraints(theta: Mapping[str, Pred], spec: PreferenceSpec,
                            stage: int,
                            live: Optional[Iterable[str]] = None
                            ) -> tuple[list[HornClause], SideConstraints]:
    """The full constraint block for improving stage ``stage`` of ``spec``:
    earlier stages pinned, the stage predicate forced strictly better."""
    keep = None if live is None else set(live)
    out: list[HornClause] = []
    for name in spec.order[:stage]:
        if keep is None or name in keep:
            out.extend(pin_clauses(name, theta[name]))
    target = spec.order[stage]
    more, side = improvement_clauses(target, theta[target],
                                     spec.directions[target])
    return out + more, side


# ---------------------------------------------------------------------------
# The optimization loop
# ---------------------------------------------------------------------------


@dataclass
class TraceStep:
    stage: str                # "" for the initial solve
    iteration: int
    verdict: str              # "sol" | "nosol" | "unknown" | "cap"
    shape: Shape
    bound: int
    candidate: Optional[dict[str, str]] = None  # predicate -> rendered body


@dataclass
class OptimizeResult:
    kind: str                 # "optsol" | "sol" | "nosol" | "unknown"
    subst: Optional[PredSubst] = None
    reason: Optional[str] = None
    trace: list[TraceStep] = field(default_factory=list)
    iterations: dict[str, int] = field(default_factory=dict)

    @property
    def is_sol(self) -> bool:
        return self.kind in ("sol", "optsol")


def _canonical_params(clauses: Sequence[HornClause],
                      given: Optional[Mapping[str, Sequence[str]]]
                      ) -> dict[str, tuple[str, ...]]:
    out: dict[str, tuple[str, ...]] = {}
    for c in clauses:
        apps = list(c.body_apps)
        if isinstance(c.head, (PredHead, ExistsHead)):
            apps.append(c.head.app)
        for a in apps:
            out.setdefault(a.name,
                           tuple(f"a{i+1}" for i in range(len(a.args))))
    for name, params in (given or {}).items():
        out[name] = tuple(params)
    return out


def _prepare(clauses: Sequence[HornClause], spec: PreferenceSpec,
             pred_params: Optional[Mapping[str, Sequence[str]]],
             protect: Iterable[str]
             ) -> tuple[list[HornClause], PredSubst, set[str],
                        dict[str, tuple[str, ...]]]:
    base = list(clauses)
    params_for = _canonical_params(base, pred_params)
    for name in spec.exists:
        if name not in params_for:
            raise OptError(f"@exists names unknown predicate {name}")
        base.append(nonempty_clause(name, params_for[name]))
    keep = (set(spec.order) | set(spec.exists) | set(spec.fixed)
            | set(spec.user_templates) | set(protect))
    remaining, forced = slice_trivial(base, protect=keep)
    return remaining, forced, hccs_pred_vars(remaining), params_for


def _warn_min_under_exists(clauses: Sequence[HornClause],
                           spec: PreferenceSpec) -> None:
    for c in clauses:
        if not isinstance(c.head, ExistsHead):
            continue
        name = c.head.app.name
        if spec.directions.get(name) == MIN:
            warnings.warn(
                f"minimizing {name}, which occurs under an existential "
                "head: a least value may not exist, so the search is "
                "best-effort and may only terminate via the iteration cap",
                stacklevel=3)


def _render(subst: Optional[PredSubst]) -> Optional[dict[str, str]]:
    if subst is None:
        return None
    return {name: show_pred(p) for name, p in sorted(subst.items())}


def optimize(clauses: Sequence[HornClause], spec: PreferenceSpec,
             *,
             solver: Optional[smtio.SmtSolver] = None,
             pred_params: Optional[Mapping[str, Sequence[str]]] = None,
             bound_max: int = 2,
             max_iterations: int = 50,
             dnf_cap: int = 64,
             protect: Iterable[str] = (),
             on_step: Optional[Callable[[TraceStep], None]] = None
             ) -> OptimizeResult:
    """Find a solution no solution beats under ``spec``'s lexicographic order.

    Works one stage at a time, highest priority first: improve the stage's
    predicate until the solver returns nosol (that stage is then optimal
    relative to the earlier ones), pin it, and move on.  A solver unknown
    or an iteration cap downgrades the final answer from "optsol" to "sol"
    -- the substitution still satisfies the clauses, it just lacks the
    optimality certificate.  Optimality is always relative to the search
    space: template shapes within ``spec.restriction`` and coefficients
    bounded by ``bound_max``.

    ``protect`` lists predicates that must not be sliced away even if no
    preference mentions them (e.g. angelic-input predicates whose inferred
    value the caller wants to see).
    """
    smt = solver if solver is not None else smtio.default_solver()
    remaining, forced, live, params_for = _prepare(
        clauses, spec, pred_params, protect)
    for name in spec.order:
        if name not in params_for and name not in live:
            raise OptError(f"optimized predicate {name} never occurs "
                           "in the clauses")
    _warn_min_under_exists(remaining, spec)

    # a directed predicate sliced down to no occurrences is unconstrained:
    # its optimum is the extreme of its direction
    extremes: dict[str, Pred] = {}
    for name in spec.order:
        if name not in live:
            body = TRUE if spec.directions[name] == MAX else FALSE
            extremes[name] = Pred(params_for[name], body)
    stages = [n for n in spec.order if n not in extremes]

    trace: list[TraceStep] = []
    iterations: dict[str, int] = {n: 0 for n in extremes}

    def run(extra: Sequence[HornClause], side: SideConstraints,
            order_hint: Sequence[str]) -> SolveResult:
        return solve(list(remaining) + list(extra), solver=smt,
                     restriction=spec.restriction, fixed=spec.fixed,
                     user_templates=spec.user_templates, side=side,
                     pred_params=pred_params, pred_order=list(order_hint),
                     bound_max=bound_max, dnf_cap=dnf_cap)

    def note(stage: str, iteration: int, verdict: str, shape: Shape,
             bound: int, subst: Optional[PredSubst]) -> None:
        step = TraceStep(stage, iteration, verdict, shape, bound,
                         _render(subst))
        trace.append(step)
        if on_step is not None:
            on_step(step)

    r = run((), (), stages)
    note("", 0, r.kind, r.shape, r.bound, r.subst)
    if r.kind != "sol":
        return OptimizeResult(r.kind, reason=r.reason, trace=trace)
    theta: PredSubst = dict(r.subst or {})
    theta.update(extremes)

    # A stage that cannot be finished (solver unknown, iteration cap) costs
    # the optimality certificate but not the run: its incumbent is pinned
    # like any finished stage and the remaining stages still improve.
    downgrades: list[str] = []
    for i, name in enumerate(spec.order):
        if name in extremes:
            continue
        count = 0
        while True:
            if count >= max_iterations:
                downgrades.append(
                    f"{name}: iteration cap {max_iterations} reached")
                note(name, count, "cap", r.shape, r.bound, None)
                break
            extra, side = improvement_constraints(theta, spec, i, live=live)
            hint = [name] + [n for n in stages if n != name]
            r = run(extra, side, hint)
            count += 1
            note(name, count, r.kind, r.shape, r.bound, r.subst)
            if r.kind == "sol":
                theta = dict(r.subst or {})
                theta.update(extremes)
                continue
            if r.kind != "nosol":
                downgrades.append(f"{name}: {r.reason or 'solver unknown'}")
            break
        iterations[name] = count

    full: PredSubst = dict(forced)
    full.update(theta)
    if downgrades:
        return OptimizeResult("sol", full, reason="; ".join(downgrades),
                              trace=trace, iterations=iterations)
    return OptimizeResult("optsol", full, trace=trace, iterations=iterations)


def certify(clauses: Sequence[HornClause], spec: PreferenceSpec,
            theta: Mapping[str, Pred],
            *,
            solver: Optional[smtio.SmtSolver] = None,
            pred_params: Optional[Mapping[str, Sequence[str]]] = None,
            bound_max: int = 2,
            dnf_cap: int = 64,
            protect: Iterable[str] = ()
            ) -> list[tuple[str, SolveResult]]:
    """Re-prove optimality of ``theta``: every stage's improvement system
    must come back nosol.  Returns the per-stage verdicts; callers treat
    anything other than all-nosol as a failed certificate."""
    smt = solver if solver is not None else smtio.default_solver()
    remaining, _forced, live, _params = _prepare(
        clauses, spec, pred_params, protect)
    out: list[tuple[str, SolveResult]] = []
    for i, name in enumerate(spec.order):
        extra, side = improvement_constraints(theta, spec, i, live=live)
        r = solve(list(remaining) + list(extra), solver=smt,
                  restriction=spec.restriction, fixed=spec.fixed,
                  user_templates=spec.user_templates, side=side,
                  pred_params=pred_params, pred_order=[name],
                  bound_max=bound_max, dnf_cap=dnf_cap)
        out.append((name, r))
    return out

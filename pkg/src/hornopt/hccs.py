"""Horn clause constraint sets over linear integer arithmetic.

This module is the shared vocabulary of the whole package: integer terms,
quantifier-free formulas with predicate-variable applications, Horn clauses
whose heads may be existentially quantified, closed predicate assignments,
and the plumbing around them (substitution, normalization to ``t >= 0``
atoms, DNF, ground evaluation, a textual clause format, solution checking
and a cheap grid falsifier).

Conventions:

* the only primitive relations are ``<=``, ``<``, ``=``, ``>=``, ``>`` and
  ``<>``; internally everything is lowered to atoms ``t >= 0`` over the
  integers (``t1 < t2`` becomes ``t1 + 1 <= t2``, equalities split in two,
  disequalities become a disjunction of two strict sides);
* a Horn clause is ``head <= app_1, ..., app_n, guard`` where the guard is a
  predicate-free formula and the head is a predicate application, a
  predicate-free formula, or an existentially quantified application
  ``exists xs. P(ts) & guard``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union


class HccsError(Exception):
    """Malformed term, formula or clause."""


class ClauseShapeError(HccsError):
    """A formula does not have Horn clause shape (e.g. negated predicate)."""


class DnfTooLarge(HccsError):
    """DNF expansion exceeded the disjunct cap."""

    def __init__(self, size: int, cap: int) -> None:
        super().__init__(f"DNF expansion needs {size} disjuncts (cap {cap})")
        self.size = size
        self.cap = cap


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    def __add__(self, other: "Term | int") -> "Term":
        return Add(self, _coerce(other))

    def __radd__(self, other: "Term | int") -> "Term":
        return Add(_coerce(other), self)

    def __sub__(self, other: "Term | int") -> "Term":
        return Add(self, Mul(Const(-1), _coerce(other)))

    def __rsub__(self, other: "Term | int") -> "Term":
        return Add(_coerce(other), Mul(Const(-1), self))

    def __mul__(self, other: "Term | int") -> "Term":
        return Mul(self, _coerce(other))

    def __rmul__(self, other: "Term | int") -> "Term":
        return Mul(_coerce(other), self)

    def __neg__(self) -> "Term":
        return Mul(Const(-1), self)


@dataclass(frozen=True)
class Const(Term):
    value: int


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Add(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Mul(Term):
    left: Term
    right: Term


def _coerce(t: "Term | int") -> Term:
    return Const(t) if isinstance(t, int) else t


ZERO = Const(0)
ONE = Const(1)


def term_vars(t: Term) -> set[str]:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Const):
        return set()
    if isinstance(t, (Add, Mul)):
        return term_vars(t.left) | term_vars(t.right)
    raise HccsError(f"not a term: {t!r}")


def subst_term(t: Term, env: Mapping[str, Term]) -> Term:
    if isinstance(t, Var):
        return env.get(t.name, t)
    if isinstance(t, Const):
        return t
    if isinstance(t, Add):
        return Add(subst_term(t.left, env), subst_term(t.right, env))
    if isinstance(t, Mul):
        return Mul(subst_term(t.left, env), subst_term(t.right, env))
    raise HccsError(f"not a term: {t!r}")


def eval_term(t: Term, env: Mapping[str, int]) -> int:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        return env[t.name]
    if isinstance(t, Add):
        return eval_term(t.left, env) + eval_term(t.right, env)
    if isinstance(t, Mul):
        return eval_term(t.left, env) * eval_term(t.right, env)
    raise HccsError(f"not a term: {t!r}")


# --- polynomial normal form -------------------------------------------------
#
# A polynomial maps monomials (sorted tuples of variable names, with
# multiplicity) to integer coefficients.  The empty monomial is the constant.

Monomial = tuple[str, ...]
Poly = dict[Monomial, int]


def term_to_poly(t: Term) -> Poly:
    if isinstance(t, Const):
        return {(): t.value} if t.value else {}
    if isinstance(t, Var):
        return {(t.name,): 1}
    if isinstance(t, Add):
        p = term_to_poly(t.left)
        for mono, c in term_to_poly(t.right).items():
            c2 = p.get(mono, 0) + c
            if c2:
                p[mono] = c2
            elif mono in p:
                del p[mono]
        return p
    if isinstance(t, Mul):
        left, right = term_to_poly(t.left), term_to_poly(t.right)
        p: Poly = {}
        for m1, c1 in left.items():
            for m2, c2 in right.items():
                mono = tuple(sorted(m1 + m2))
                c = p.get(mono, 0) + c1 * c2
                if c:
                    p[mono] = c
                elif mono in p:
                    del p[mono]
        return p
    raise HccsError(f"not a term: {t!r}")


def poly_to_term(p: Poly) -> Term:
    items = sorted(p.items())
    if not items:
        return ZERO
    parts: list[Term] = []
    for mono, c in items:
        t: Term
        if not mono:
            t = Const(c)
        else:
            t = Var(mono[0])
            for name in mono[1:]:
                t = Mul(t, Var(name))
            if c != 1:
                t = Mul(Const(c), t)
        parts.append(t)
    out = parts[0]
    for part in parts[1:]:
        out = Add(out, part)
    return out


class NonlinearTerm(HccsError):
    pass


def linearize(t: Term) -> tuple[dict[str, int], int]:
    """Write ``t`` as ``const + sum coeff_v * v``; error if nonlinear."""
    coeffs: dict[str, int] = {}
    const = 0
    for mono, c in term_to_poly(t).items():
        if len(mono) == 0:
            const = c
        elif len(mono) == 1:
            coeffs[mono[0]] = c
        else:
            raise NonlinearTerm(f"nonlinear monomial {mono} in {t!r}")
    return coeffs, const


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------

REL_OPS = ("<=", "<", "=", ">=", ">", "<>")


@dataclass(frozen=True)
class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


TRUE = TrueF()
FALSE = FalseF()


@dataclass(frozen=True)
class Atom(Formula):
    op: str
    left: Term
    right: Term

    def __post_init__(self) -> None:
        if self.op not in REL_OPS:
            raise HccsError(f"unknown relation {self.op!r}")


@dataclass(frozen=True)
class PredApp(Formula):
    name: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


def atom(op: str, left: "Term | int", right: "Term | int") -> Atom:
    return Atom(op, _coerce(left), _coerce(right))


def geq0(t: "Term | int") -> Atom:
    return Atom(">=", _coerce(t), ZERO)


def mk_and(*parts: Formula) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, TrueF):
            continue
        if isinstance(p, FalseF):
            return FALSE
        if isinstance(p, And):
            flat.extend(p.args)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def mk_or(*parts: Formula) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, FalseF):
            continue
        if isinstance(p, TrueF):
            return TRUE
        if isinstance(p, Or):
            flat.extend(p.args)
        else:
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


_COMPLEMENT = {"<=": ">", "<": ">=", ">=": "<", ">": "<=", "=": "<>", "<>": "="}


def mk_not(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, Atom):
        return Atom(_COMPLEMENT[f.op], f.left, f.right)
    return Not(f)


def mk_implies(left: Formula, right: Formula) -> Formula:
    if isinstance(left, TrueF):
        return right
    if isinstance(left, FalseF) or isinstance(right, TrueF):
        return TRUE
    return Implies(left, right)


def formula_vars(f: Formula) -> set[str]:
    if isinstance(f, (TrueF, FalseF)):
        return set()
    if isinstance(f, Atom):
        return term_vars(f.left) | term_vars(f.right)
    if isinstance(f, PredApp):
        out: set[str] = set()
        for a in f.args:
            out |= term_vars(a)
        return out
    if isinstance(f, Not):
        return formula_vars(f.arg)
    if isinstance(f, (And, Or)):
        out = set()
        for a in f.args:
            out |= formula_vars(a)
        return out
    if isinstance(f, Implies):
        return formula_vars(f.left) | formula_vars(f.right)
    raise HccsError(f"not a formula: {f!r}")


def formula_preds(f: Formula) -> set[str]:
    if isinstance(f, PredApp):
        return {f.name}
    if isinstance(f, Not):
        return formula_preds(f.arg)
    if isinstance(f, (And, Or)):
        out: set[str] = set()
        for a in f.args:
            out |= formula_preds(a)
        return out
    if isinstance(f, Implies):
        return formula_preds(f.left) | formula_preds(f.right)
    return set()


def subst_formula(f: Formula, env: Mapping[str, Term]) -> Formula:
    if isinstance(f, (TrueF, FalseF)):
        return f
    if isinstance(f, Atom):
        return Atom(f.op, subst_term(f.left, env), subst_term(f.right, env))
    if isinstance(f, PredApp):
        return PredApp(f.name, tuple(subst_term(a, env) for a in f.args))
    if isinstance(f, Not):
        return Not(subst_formula(f.arg, env))
    if isinstance(f, And):
        return And(tuple(subst_formula(a, env) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(subst_formula(a, env) for a in f.args))
    if isinstance(f, Implies):
        return Implies(subst_formula(f.left, env), subst_formula(f.right, env))
    raise HccsError(f"not a formula: {f!r}")


def eval_formula(f: Formula, env: Mapping[str, int],
                 preds: Optional[Mapping[str, "Pred"]] = None) -> bool:
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        l, r = eval_term(f.left, env), eval_term(f.right, env)
        return {"<=": l <= r, "<": l < r, "=": l == r,
                ">=": l >= r, ">": l > r, "<>": l != r}[f.op]
    if isinstance(f, PredApp):
        if preds is None or f.name not in preds:
            raise HccsError(f"no interpretation for predicate {f.name}")
        return preds[f.name].holds(tuple(eval_term(a, env) for a in f.args), preds)
    if isinstance(f, Not):
        return not eval_formula(f.arg, env, preds)
    if isinstance(f, And):
        return all(eval_formula(a, env, preds) for a in f.args)
    if isinstance(f, Or):
        return any(eval_formula(a, env, preds) for a in f.args)
    if isinstance(f, Implies):
        return (not eval_formula(f.left, env, preds)) or eval_formula(f.right, env, preds)
    raise HccsError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Lowering to >= 0 atoms, NNF, DNF
# ---------------------------------------------------------------------------


def lower_atom(a: Atom, positive: bool = True) -> Formula:
    """Rewrite a relation atom into ``t >= 0`` atoms (``positive=False``
    lowers the negation, using integer tightening: not(t >= 0) is -t-1 >= 0).
    """
    l, r = a.left, a.right
    op = a.op
    if not positive:
        flip = {"<=": ">", "<": ">=", ">=": "<", ">": "<=", "=": "<>", "<>": "="}
        op = flip[op]
    if op == "<=":
        return geq0(r - l)
    if op == "<":
        return geq0(r - l - 1)
    if op == ">=":
        return geq0(l - r)
    if op == ">":
        return geq0(l - r - 1)
    if op == "=":
        return mk_and(geq0(r - l), geq0(l - r))
    if op == "<>":
        return mk_or(geq0(l - r - 1), geq0(r - l - 1))
    raise HccsError(op)


def is_geq0(f: Formula) -> bool:
    return isinstance(f, Atom) and f.op == ">=" and f.right == ZERO


def nnf(f: Formula, positive: bool = True) -> Formula:
    """Negation normal form with all relation atoms lowered to ``t >= 0``.

    The result contains only And/Or over ``t >= 0`` atoms, predicate
    applications and true/false.  Negated predicate applications are
    rejected: they have no place in Horn clauses.
    """
    if isinstance(f, TrueF):
        return TRUE if positive else FALSE
    if isinstance(f, FalseF):
        return FALSE if positive else TRUE
    if isinstance(f, Atom):
        return lower_atom(f, positive)
    if isinstance(f, PredApp):
        if not positive:
            raise ClauseShapeError(f"negated predicate application {f.name}")
        return f
    if isinstance(f, Not):
        return nnf(f.arg, not positive)
    if isinstance(f, And):
        parts = [nnf(a, positive) for a in f.args]
        return mk_and(*parts) if positive else mk_or(*parts)
    if isinstance(f, Or):
        parts = [nnf(a, positive) for a in f.args]
        return mk_or(*parts) if positive else mk_and(*parts)
    if isinstance(f, Implies):
        if positive:
            return mk_or(nnf(f.left, False), nnf(f.right, True))
        return mk_and(nnf(f.left, True), nnf(f.right, False))
    raise HccsError(f"not a formula: {f!r}")


def dnf(f: Formula, cap: int = 64) -> list[list[Formula]]:
    """Disjunctive normal form of an NNF formula.

    Returns a list of conjunctions, each a list of ``t >= 0`` atoms and
    predicate applications.  An empty outer list is false; an empty inner
    list is true.  Raises :class:`DnfTooLarge` past ``cap`` disjuncts.
    """
    if isinstance(f, TrueF):
        return [[]]
    if isinstance(f, FalseF):
        return []
    if is_geq0(f) or isinstance(f, PredApp):
        return [[f]]
    if isinstance(f, And):
        out: list[list[Formula]] = [[]]
        for a in f.args:
            sub = dnf(a, cap)
            nxt: list[list[Formula]] = []
            for left in out:
                for right in sub:
                    nxt.append(left + right)
                    if len(nxt) > cap:
                        raise DnfTooLarge(len(nxt), cap)
            out = nxt
        return out
    if isinstance(f, Or):
        out = []
        for a in f.args:
            out.extend(dnf(a, cap))
            if len(out) > cap:
                raise DnfTooLarge(len(out), cap)
        return out
    raise HccsError(f"dnf expects NNF input, got {f!r}")


# ---------------------------------------------------------------------------
# Closed predicates and predicate substitutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pred:
    """A closed predicate ``lambda params. body`` (body predicate-free)."""

    params: tuple[str, ...]
    body: Formula

    def __post_init__(self) -> None:
        if formula_preds(self.body):
            raise HccsError("predicate body must be predicate-free")

    def apply(self, args: Sequence[Term]) -> Formula:
        if len(args) != len(self.params):
            raise HccsError(
                f"arity mismatch: {len(self.params)} params, {len(args)} args")
        return subst_formula(self.body, dict(zip(self.params, args)))

    def holds(self, values: Sequence[int],
              preds: Optional[Mapping[str, "Pred"]] = None) -> bool:
        env = dict(zip(self.params, values))
        return eval_formula(self.body, env, preds)


PredSubst = dict[str, Pred]


def apply_subst(f: Formula, subst: Mapping[str, Pred],
                partial: bool = False) -> Formula:
    """Replace predicate applications by the bodies assigned in ``subst``.

    With ``partial`` unknown predicates are left in place, otherwise they
    are an error.
    """
    if isinstance(f, PredApp):
        if f.name in subst:
            return subst[f.name].apply(f.args)
        if partial:
            return f
        raise HccsError(f"unassigned predicate variable {f.name}")
    if isinstance(f, Not):
        return mk_not(apply_subst(f.arg, subst, partial))
    if isinstance(f, And):
        return mk_and(*(apply_subst(a, subst, partial) for a in f.args))
    if isinstance(f, Or):
        return mk_or(*(apply_subst(a, subst, partial) for a in f.args))
    if isinstance(f, Implies):
        return mk_implies(apply_subst(f.left, subst, partial),
                          apply_subst(f.right, subst, partial))
    return f


# ---------------------------------------------------------------------------
# Horn clauses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredHead:
    app: PredApp


@dataclass(frozen=True)
class PureHead:
    formula: Formula

    def __post_init__(self) -> None:
        if formula_preds(self.formula):
            raise ClauseShapeError("pure head contains a predicate variable")


@dataclass(frozen=True)
class ExistsHead:
    """Head ``exists vars. app & guard`` (guard predicate-free)."""

    vars: tuple[str, ...]
    app: PredApp
    guard: Formula

    def __post_init__(self) -> None:
        if formula_preds(self.guard):
            raise ClauseShapeError("existential head guard contains a predicate")


Head = Union[PredHead, PureHead, ExistsHead]


@dataclass(frozen=True)
class HornClause:
    """``head <= body_apps & body_guard`` with the guard predicate-free."""

    head: Head
    body_apps: tuple[PredApp, ...]
    body_guard: Formula

    def __post_init__(self) -> None:
        if formula_preds(self.body_guard):
            raise ClauseShapeError("body guard contains a predicate variable")

    def pred_vars(self) -> set[str]:
        out = {a.name for a in self.body_apps}
        if isinstance(self.head, PredHead):
            out.add(self.head.app.name)
        elif isinstance(self.head, ExistsHead):
            out.add(self.head.app.name)
        return out

    def free_vars(self) -> set[str]:
        out = formula_vars(self.body_guard)
        for a in self.body_apps:
            out |= formula_vars(a)
        if isinstance(self.head, PredHead):
            out |= formula_vars(self.head.app)
        elif isinstance(self.head, PureHead):
            out |= formula_vars(self.head.formula)
        else:
            out |= (formula_vars(self.head.app) | formula_vars(self.head.guard)) \
                - set(self.head.vars)
        return out


HCCS = list[HornClause]


def hccs_pred_vars(clauses: Iterable[HornClause]) -> set[str]:
    out: set[str] = set()
    for c in clauses:
        out |= c.pred_vars()
    return out


def clause(head: "Head | Formula", *body: Formula) -> HornClause:
    """Convenience constructor: splits a body into applications and guard."""
    apps: list[PredApp] = []
    guards: list[Formula] = []
    for b in body:
        for part in (b.args if isinstance(b, And) else (b,)):
            if isinstance(part, PredApp):
                apps.append(part)
            else:
                guards.append(part)
    if isinstance(head, PredApp):
        h: Head = PredHead(head)
    elif isinstance(head, Formula):
        h = PureHead(head)
    else:
        h = head
    return HornClause(h, tuple(apps), mk_and(*guards))


# ---------------------------------------------------------------------------
# Semantics of clauses / solution checking
# ---------------------------------------------------------------------------


def head_formula(head: Head) -> Formula:
    if isinstance(head, PredHead):
        return head.app
    if isinstance(head, PureHead):
        return head.formula
    return mk_and(head.app, head.guard)


def body_formula(c: HornClause) -> Formula:
    return mk_and(*c.body_apps, c.body_guard)


def clause_holds(c: HornClause, subst: Mapping[str, Pred],
                 env: Mapping[str, int],
                 exists_radius: int = 8) -> bool:
    """Ground truth of a clause instance under a total assignment.

    Existential head variables are searched over ``[-exists_radius,
    exists_radius]``; a miss makes the clause instance count as false, so
    this is only safe for *refuting* (see :func:`falsify_on_grid`).
    """
    if not eval_formula(body_formula(c), env, subst):
        return True
    if isinstance(c.head, (PredHead, PureHead)):
        return eval_formula(head_formula(c.head), env, subst)
    hf = mk_and(c.head.app, c.head.guard)
    rng = range(-exists_radius, exists_radius + 1)
    import itertools
    for choice in itertools.product(rng, repeat=len(c.head.vars)):
        env2 = dict(env)
        env2.update(zip(c.head.vars, choice))
        if eval_formula(hf, env2, subst):
            return True
    return False


def falsify_on_grid(clauses: Iterable[HornClause], subst: Mapping[str, Pred],
                    radius: int = 5) -> Optional[tuple[HornClause, dict[str, int]]]:
    """Search integer points in ``[-radius, radius]^n`` for a clause violation.

    Skips clauses with existential heads (a finite search cannot refute
    them).  Returns the first violated (clause, environment) or None.  This
    can only ever *refute* a claimed solution, never validate one.
    """
    import itertools
    for c in clauses:
        if isinstance(c.head, ExistsHead):
            continue
        fvs = sorted(c.free_vars())
        if len(fvs) > 4 and radius > 3:
            local = 3  # keep the grid small for wide clauses
        else:
            local = radius
        for point in itertools.product(range(-local, local + 1), repeat=len(fvs)):
            env = dict(zip(fvs, point))
            if not clause_holds(c, subst, env):
                return c, env
    return None


def clause_query(c: HornClause, subst: Mapping[str, Pred]) -> tuple[Formula, tuple[str, ...], Formula]:
    """Close a clause under an assignment for a validity query.

    Returns ``(body, exists_vars, head)``: the clause holds iff
    ``forall free. body -> exists exists_vars. head`` is valid.
    """
    body = apply_subst(body_formula(c), subst)
    if isinstance(c.head, ExistsHead):
        head = apply_subst(head_formula(c.head), subst)
        exvars = c.head.vars
        clash = set(exvars) & formula_vars(body)
        if clash:
            taken = formula_vars(body) | formula_vars(head)
            renaming: dict[str, Term] = {}
            fresh: list[str] = []
            for v in exvars:
                if v in clash:
                    n = 0
                    while f"{v}_{n}" in taken:
                        n += 1
                    taken.add(f"{v}_{n}")
                    renaming[v] = Var(f"{v}_{n}")
                    fresh.append(f"{v}_{n}")
                else:
                    fresh.append(v)
            head = subst_formula(head, renaming)
            exvars = tuple(fresh)
        return body, exvars, head
    return body, (), apply_subst(head_formula(c.head), subst)


def check_solution(clauses: Iterable[HornClause], subst: Mapping[str, Pred],
                   smt=None) -> bool:
    """Decide whether ``subst`` satisfies every clause (SMT validity checks)."""
    from . import smtio
    solver = smt if smt is not None else smtio.default_solver()
    for c in clauses:
        body, exvars, head = clause_query(c, subst)
        univ = sorted((formula_vars(body) | formula_vars(head)) - set(exvars))
        goal = mk_implies(body, head)
        res = solver.check_valid(goal, univ, exvars)
        if res is not True:
            if res is False:
                return False
            raise smtio.SmtUnknown(f"solution check inconclusive on clause {show_clause(c)}")
    return True


# ---------------------------------------------------------------------------
# Shape restrictions on predicate bodies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Shape:
    """DNF size restriction: at most ``disjuncts`` disjuncts of at most
    ``conjuncts`` inequality atoms each (after lowering to ``t >= 0``)."""

    conjuncts: int
    disjuncts: int

    def __str__(self) -> str:
        return f"{self.conjuncts}x{self.disjuncts}"


ATOMIC = Shape(1, 1)


def is_restricted(pred: Pred, shape: Shape) -> bool:
    """Does the predicate body fit in the shape once lowered to DNF?"""
    try:
        disjuncts = dnf(nnf(pred.body), cap=max(64, shape.disjuncts))
    except DnfTooLarge:
        return False
    if len(disjuncts) > shape.disjuncts:
        return False
    return all(len(d) <= shape.conjuncts for d in disjuncts)


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------


def show_term(t: Term) -> str:
    def prec(t: Term) -> int:
        if isinstance(t, (Const, Var)):
            return 3
        if isinstance(t, Mul):
            return 2
        return 1

    def go(t: Term, outer: int) -> str:
        if isinstance(t, Const):
            s = str(t.value)
            return f"({s})" if t.value < 0 and outer >= 2 else s
        if isinstance(t, Var):
            return t.name
        if isinstance(t, Add):
            # print  a + (-1)*b  as  a - b
            rp = term_to_poly(t.right)
            if isinstance(t.right, Mul) and isinstance(t.right.left, Const) \
                    and t.right.left.value == -1:
                s = f"{go(t.left, 1)} - {go(t.right.right, 2)}"
            elif isinstance(t.right, Const) and t.right.value < 0:
                s = f"{go(t.left, 1)} - {-t.right.value}"
            else:
                s = f"{go(t.left, 1)} + {go(t.right, 2)}"
            return f"({s})" if outer >= 2 else s
        if isinstance(t, Mul):
            s = f"{go(t.left, 2)} * {go(t.right, 3)}"
            return f"({s})" if outer >= 3 else s
        raise HccsError(f"not a term: {t!r}")

    return go(t, 0)


def show_formula(f: Formula) -> str:
    def prec(f: Formula) -> int:
        if isinstance(f, Implies):
            return 0
        if isinstance(f, Or):
            return 1
        if isinstance(f, And):
            return 2
        return 3

    def go(f: Formula, outer: int) -> str:
        if isinstance(f, TrueF):
            return "true"
        if isinstance(f, FalseF):
            return "false"
        if isinstance(f, Atom):
            return f"{show_term(f.left)} {f.op} {show_term(f.right)}"
        if isinstance(f, PredApp):
            return f"{f.name}({', '.join(show_term(a) for a in f.args)})"
        if isinstance(f, Not):
            return f"not {go(f.arg, 3)}"
        if isinstance(f, And):
            s = " && ".join(go(a, 2) for a in f.args)
            return f"({s})" if outer > 2 else s
        if isinstance(f, Or):
            s = " || ".join(go(a, 1) for a in f.args)
            return f"({s})" if outer > 1 else s
        if isinstance(f, Implies):
            s = f"{go(f.left, 1)} => {go(f.right, 0)}"
            return f"({s})" if outer > 0 else s
        raise HccsError(f"not a formula: {f!r}")

    return go(f, 0)


def show_clause(c: HornClause) -> str:
    if isinstance(c.head, PredHead):
        h = show_formula(c.head.app)
    elif isinstance(c.head, PureHead):
        f = c.head.formula
        if isinstance(f, (TrueF, FalseF)):
            h = show_formula(f)
        else:
            h = f"({show_formula(f)})"
    else:
        guard = show_formula(c.head.guard)
        h = (f"exists {', '.join(c.head.vars)} . "
             f"{show_formula(c.head.app)} & ({guard})")
    body_parts = [show_formula(a) for a in c.body_apps]
    if not isinstance(c.body_guard, TrueF) or not body_parts:
        body_parts.append(show_formula(c.body_guard))
    return f"{h} <= {', '.join(body_parts)}"


def show_hccs(clauses: Iterable[HornClause]) -> str:
    return "\n".join(show_clause(c) for c in clauses) + "\n"


def show_pred(p: Pred) -> str:
    return f"\\{', '.join(p.params)}. {show_formula(canon_formula(p.body))}"


def canon_formula(f: Formula) -> Formula:
    """Light canonicalization for display: merge ``t>=0 && -t>=0`` into
    equalities and rewrite ``c + sum a_i x_i >= 0`` as ``small <= big``."""
    low = nnf(f)

    def show_side(p: Poly) -> Term:
        return poly_to_term(p)

    def atom_of(t: Term) -> Formula:
        pos: Poly = {}
        neg: Poly = {}
        for mono, c in term_to_poly(t).items():
            (pos if c > 0 else neg)[mono] = abs(c)
        return Atom("<=", show_side(neg), show_side(pos))

    def go(f: Formula) -> Formula:
        if isinstance(f, And):
            parts = list(f.args)
            out: list[Formula] = []
            used = [False] * len(parts)
            for i, a in enumerate(parts):
                if used[i] or not is_geq0(a):
                    continue
                pa = term_to_poly(a.left)
                for j in range(i + 1, len(parts)):
                    b = parts[j]
                    if used[j] or not is_geq0(b):
                        continue
                    pb = term_to_poly(b.left)
                    if pb == {m: -c for m, c in pa.items()}:
                        used[i] = used[j] = True
                        pos: Poly = {m: c for m, c in pa.items() if c > 0}
                        neg: Poly = {m: -c for m, c in pa.items() if c < 0}
                        if all(m == () for m in pos) and any(m != () for m in neg):
                            pos, neg = neg, pos
                        out.append(Atom("=", show_side(pos), show_side(neg)))
                        break
            for i, a in enumerate(parts):
                if not used[i]:
                    out.append(go(a))
            return mk_and(*out)
        if isinstance(f, Or):
            return mk_or(*(go(a) for a in f.args))
        if is_geq0(f):
            return atom_of(f.left)
        return f

    return go(low)


# ---------------------------------------------------------------------------
# Textual clause format
# ---------------------------------------------------------------------------
#
#   P(x, y) <= Q(x - 1, y), x >= 0
#   false <= P(x), x = 0
#   (x <= 0) <= P(x), x <= 1
#   exists n . N(x, n) & (true) <= P(x)
#
# '#' starts a comment; '@' lines are directives passed back verbatim.


class _Tokens:
    def __init__(self, text: str) -> None:
        self.toks: list[str] = []
        i, n = 0, len(text)
        two = {"<=", ">=", "<>", "&&", "||", "=>", "!="}
        while i < n:
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            if text[i:i + 2] in two:
                self.toks.append(text[i:i + 2])
                i += 2
                continue
            if ch.isdigit():
                j = i
                while j < n and text[j].isdigit():
                    j += 1
                self.toks.append(text[i:j])
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] in "_'"):
                    j += 1
                self.toks.append(text[i:j])
                i = j
                continue
            if ch in "()+-*,.<>=&|":
                self.toks.append(ch)
                i += 1
                continue
            raise HccsError(f"unexpected character {ch!r}")
        self.pos = 0

    def peek(self) -> Optional[str]:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> str:
        t = self.peek()
        if t is None:
            raise HccsError("unexpected end of input")
        self.pos += 1
        return t

    def expect(self, tok: str) -> None:
        t = self.next()
        if t != tok:
            raise HccsError(f"expected {tok!r}, got {t!r}")

    def at_end(self) -> bool:
        return self.pos >= len(self.toks)


def _parse_term(tk: _Tokens) -> Term:
    def unary() -> Term:
        t = tk.peek()
        if t == "-":
            tk.next()
            return Mul(Const(-1), unary())
        if t == "(":
            tk.next()
            inner = _parse_term(tk)
            tk.expect(")")
            return inner
        if t is not None and t.isdigit():
            tk.next()
            return Const(int(t))
        if t is not None and (t[0].isalpha() or t[0] == "_"):
            tk.next()
            return Var(t)
        raise HccsError(f"expected a term, got {t!r}")

    def mul() -> Term:
        out = unary()
        while tk.peek() == "*":
            tk.next()
            out = Mul(out, unary())
        return out

    out = mul()
    while tk.peek() in ("+", "-"):
        op = tk.next()
        rhs = mul()
        out = Add(out, rhs if op == "+" else Mul(Const(-1), rhs))
    return out


def _parse_formula(tk: _Tokens) -> Formula:
    def atom_or_group() -> Formula:
        t = tk.peek()
        if t == "true":
            tk.next()
            return TRUE
        if t == "false":
            tk.next()
            return FALSE
        if t == "not":
            tk.next()
            return mk_not(atom_or_group())
        if t == "(":
            save = tk.pos
            tk.next()
            try:
                inner = _parse_formula(tk)
                tk.expect(")")
                if tk.peek() in REL_OPS or tk.peek() in ("+", "-", "*", "!="):
                    raise HccsError("parenthesized term, not formula")
                return inner
            except HccsError:
                tk.pos = save
                return comparison()
        if t is not None and (t[0].isalpha() or t[0] == "_"):
            # predicate application or a comparison starting with a variable
            if tk.pos + 1 < len(tk.toks) and tk.toks[tk.pos + 1] == "(":
                save = tk.pos
                name = tk.next()
                tk.next()  # '('
                try:
                    args = [_parse_term(tk)]
                    while tk.peek() == ",":
                        tk.next()
                        args.append(_parse_term(tk))
                    tk.expect(")")
                    if tk.peek() in REL_OPS or tk.peek() in ("+", "-", "*", "!="):
                        raise HccsError("term application")
                    return PredApp(name, tuple(args))
                except HccsError:
                    tk.pos = save
            return comparison()
        return comparison()

    def comparison() -> Formula:
        left = _parse_term(tk)
        op = tk.peek()
        if op == "!=":
            op = "<>"
            tk.next()
        elif op in REL_OPS:
            tk.next()
        else:
            raise HccsError(f"expected a relation, got {op!r}")
        right = _parse_term(tk)
        return Atom(op, left, right)

    def conj() -> Formula:
        out = [atom_or_group()]
        while tk.peek() in ("&&", "&"):
            tk.next()
            out.append(atom_or_group())
        return mk_and(*out)

    def disj() -> Formula:
        out = [conj()]
        while tk.peek() in ("||", "|"):
            tk.next()
            out.append(conj())
        return mk_or(*out)

    left = disj()
    if tk.peek() == "=>":
        tk.next()
        return mk_implies(left, _parse_formula(tk))
    return left


def parse_term(text: str) -> Term:
    tk = _Tokens(text)
    t = _parse_term(tk)
    if not tk.at_end():
        raise HccsError(f"trailing input after term: {tk.peek()!r}")
    return t


def parse_formula(text: str) -> Formula:
    tk = _Tokens(text)
    f = _parse_formula(tk)
    if not tk.at_end():
        raise HccsError(f"trailing input after formula: {tk.peek()!r}")
    return f


def _parse_head(text: str) -> Head:
    tk = _Tokens(text)
    if tk.peek() == "exists":
        tk.next()
        vars_: list[str] = [tk.next()]
        while tk.peek() == ",":
            tk.next()
            vars_.append(tk.next())
        tk.expect(".")
        app = _parse_formula(tk)
        guard: Formula = TRUE
        if tk.peek() in ("&", "&&"):
            tk.next()
            guard = _parse_formula(tk)
        if not tk.at_end():
            raise HccsError("trailing input after existential head")
        if isinstance(app, And) and len(app.args) == 2 \
                and isinstance(app.args[0], PredApp):
            app, guard = app.args[0], mk_and(app.args[1], guard)
        if not isinstance(app, PredApp):
            raise ClauseShapeError("existential head needs a predicate application")
        return ExistsHead(tuple(vars_), app, guard)
    f = _parse_formula(tk)
    if not tk.at_end():
        raise HccsError("trailing input after head")
    if isinstance(f, PredApp):
        return PredHead(f)
    if formula_preds(f):
        raise ClauseShapeError("head formula contains a predicate variable")
    return PureHead(f)


def parse_clause(line: str) -> HornClause:
    """Parse one clause line, backtracking over candidate ``<=`` split points.

    ``<=`` doubles as the clause arrow and the relation, so every depth-0
    occurrence is tried as the arrow until head and body both parse.
    """
    candidates: list[int] = []
    depth = 0
    i = 0
    while i < len(line) - 1:
        ch = line[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif depth == 0 and line[i:i + 2] == "<=":
            candidates.append(i)
            i += 2
            continue
        i += 1
    errors: list[str] = []
    for cut in candidates:
        head_text, body_text = line[:cut], line[cut + 2:]
        try:
            head = _parse_head(head_text)
            tk = _Tokens(body_text)
            apps: list[PredApp] = []
            guards: list[Formula] = []
            while True:
                f = _parse_formula(tk)
                if isinstance(f, PredApp):
                    apps.append(f)
                elif formula_preds(f):
                    raise ClauseShapeError("predicate under a connective in body")
                else:
                    guards.append(f)
                if tk.at_end():
                    break
                tk.expect(",")
            return HornClause(head, tuple(apps), mk_and(*guards))
        except HccsError as e:
            errors.append(str(e))
    raise HccsError(f"cannot parse clause {line!r}: {'; '.join(errors) or 'no <= found'}")


def parse_hccs(text: str) -> tuple[HCCS, list[str]]:
    """Parse the textual clause format.

    Returns (clauses, directive lines); ``@...`` lines are collected
    verbatim for the caller, ``#`` starts a comment.
    """
    clauses: list[HornClause] = []
    directives: list[str] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("@"):
            directives.append(line)
            continue
        clauses.append(parse_clause(line))
    return clauses, directives

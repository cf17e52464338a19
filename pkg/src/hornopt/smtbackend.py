"""A small exact SMT backend speaking a fragment of SMT-LIB 2.

Run as ``python -m hornopt.smtbackend [script.smt2]`` (default: stdin).

Scope: integer constants only, linear integer arithmetic (quantifier-free
and quantified) plus the bounded bilinear fragment the solver pipeline
emits: products are allowed as long as, in every monomial, at most one
factor is *not* a box-bounded constant (bounds must be asserted as
conjunctions like ``|c| <= 2``).

Method: bounded unknowns that occur in products are enumerated in ascending
L1 norm, values ordered 0, 1, -1, 2, -2, ...; consequently the first model
reported minimizes the sum of absolute values of those unknowns, which the
engine relies on for reproducible optimization runs.  For each candidate,
the remaining assertions split into independent clusters (no shared
variables); small or quantified clusters are decided exactly by Cooper's
quantifier elimination, larger inequality systems by exact rational simplex
with integer recovery (scaling / branch and bound).

Verdicts are sound: models are re-verified against every assertion before
``sat`` is reported, and ``unsat`` is only reported when the bounded search
space was exhausted without any sub-decision giving up.  Everything else is
``unknown``.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Optional, Sequence, Union

from .hccs import (
    Add, And, Atom, Const, FalseF, Formula, Implies, Mul, Not, Or, Term,
    TrueF, Var, eval_formula, term_to_poly,
)


class BackendError(Exception):
    pass


class GiveUp(Exception):
    """Raised when a sub-decision exceeds its budget; verdict is unknown."""


@dataclass(frozen=True)
class Exists(Formula):
    """Backend-local quantifier node (forall is encoded as not-exists-not)."""

    vars: tuple[str, ...]
    body: Formula


def quant_subst(f: Formula, env: dict[str, Term]) -> Formula:
    """Substitution that understands Exists nodes (capture avoided by
    dropping shadowed bindings)."""
    from .hccs import subst_formula, subst_term
    if isinstance(f, Exists):
        inner = {k: v for k, v in env.items() if k not in f.vars}
        return Exists(f.vars, quant_subst(f.body, inner)) if inner else f
    if isinstance(f, Not):
        return Not(quant_subst(f.arg, env))
    if isinstance(f, And):
        return And(tuple(quant_subst(a, env) for a in f.args))
    if isinstance(f, Or):
        return Or(tuple(quant_subst(a, env) for a in f.args))
    if isinstance(f, Implies):
        return Implies(quant_subst(f.left, env), quant_subst(f.right, env))
    if isinstance(f, Atom):
        return Atom(f.op, subst_term(f.left, env), subst_term(f.right, env))
    return f


def quant_free_vars(f: Formula) -> set[str]:
    from .hccs import formula_vars
    if isinstance(f, Exists):
        return quant_free_vars(f.body) - set(f.vars)
    if isinstance(f, Not):
        return quant_free_vars(f.arg)
    if isinstance(f, (And, Or)):
        out: set[str] = set()
        for a in f.args:
            out |= quant_free_vars(a)
        return out
    if isinstance(f, Implies):
        return quant_free_vars(f.left) | quant_free_vars(f.right)
    return formula_vars(f)


def has_quantifier(f: Formula) -> bool:
    if isinstance(f, Exists):
        return True
    if isinstance(f, Not):
        return has_quantifier(f.arg)
    if isinstance(f, (And, Or)):
        return any(has_quantifier(a) for a in f.args)
    if isinstance(f, Implies):
        return has_quantifier(f.left) or has_quantifier(f.right)
    return False


# ---------------------------------------------------------------------------
# S-expression reader
# ---------------------------------------------------------------------------

Sexp = Union[str, list]


def tokenize_sexp(text: str) -> list[str]:
    toks: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isspace():
            i += 1
            continue
        if ch in "()":
            toks.append(ch)
            i += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            toks.append(text[i:j + 1])
            i = j + 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "();":
            j += 1
        toks.append(text[i:j])
        i = j
    return toks


def parse_sexps(text: str) -> list[Sexp]:
    toks = tokenize_sexp(text)
    pos = 0

    def parse() -> Sexp:
        nonlocal pos
        tok = toks[pos]
        pos += 1
        if tok == "(":
            out: list[Sexp] = []
            while pos < len(toks) and toks[pos] != ")":
                out.append(parse())
            if pos >= len(toks):
                raise BackendError("unbalanced parenthesis")
            pos += 1
            return out
        if tok == ")":
            raise BackendError("unexpected )")
        return tok

    sexps = []
    while pos < len(toks):
        sexps.append(parse())
    return sexps


# ---------------------------------------------------------------------------
# Cooper-form: NNF trees over >=0 atoms and divisibility atoms
# ---------------------------------------------------------------------------
#
# CForm ::= True | False | Lin | Div | ("and", parts) | ("or", parts)
#         | ("exists", vars, part) | ("nexists", vars, part)

Coeffs = tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Lin:
    """const + sum coeff*var >= 0"""

    coeffs: Coeffs
    const: int


@dataclass(frozen=True)
class Div:
    """d divides const + sum coeff*var   (d >= 2)"""

    d: int
    coeffs: Coeffs
    const: int


CForm = object  # union of bool, Lin, Div, tuples


def mk_lin(coeffs: dict[str, int], const: int):
    coeffs = {v: c for v, c in coeffs.items() if c}
    if not coeffs:
        return const >= 0
    g = gcd(*[abs(c) for c in coeffs.values()])
    if g > 1:
        # floor-tighten: g*t' + c >= 0  <=>  t' >= ceil(-c/g)  <=>  t' + floor(c/g) >= 0
        coeffs = {v: c // g for v, c in coeffs.items()}
        const = const // g  # floor division is the tight direction
    return Lin(tuple(sorted(coeffs.items())), const)


def mk_div(d: int, coeffs: dict[str, int], const: int):
    d = abs(d)
    if d == 0:
        raise BackendError("divisibility by zero")
    coeffs = {v: c % d for v, c in coeffs.items() if c % d}
    const = const % d
    if d == 1 or not coeffs and const == 0:
        return True
    if not coeffs:
        return False
    return Div(d, tuple(sorted(coeffs.items())), const)


def c_and(parts: Iterable[CForm]) -> CForm:
    out = []
    for p in parts:
        if p is True:
            continue
        if p is False:
            return False
        if isinstance(p, tuple) and p[0] == "and":
            out.extend(p[1])
        else:
            out.append(p)
    if not out:
        return True
    if len(out) == 1:
        return out[0]
    return ("and", tuple(out))


def c_or(parts: Iterable[CForm]) -> CForm:
    out = []
    for p in parts:
        if p is False:
            continue
        if p is True:
            return True
        if isinstance(p, tuple) and p[0] == "or":
            out.extend(p[1])
        else:
            out.append(p)
    if not out:
        return False
    if len(out) == 1:
        return out[0]
    return ("or", tuple(out))


def c_neg(f: CForm) -> CForm:
    """Negation of a quantifier-free CForm."""
    if f is True:
        return False
    if f is False:
        return True
    if isinstance(f, Lin):
        return mk_lin({v: -c for v, c in f.coeffs}, -f.const - 1)
    if isinstance(f, Div):
        # not (d | t)  <=>  OR_{j=1..d-1} d | t + j
        return c_or(mk_div(f.d, dict(f.coeffs), f.const + j)
                    for j in range(1, f.d))
    if isinstance(f, tuple):
        if f[0] == "and":
            return c_or(c_neg(p) for p in f[1])
        if f[0] == "or":
            return c_and(c_neg(p) for p in f[1])
    raise BackendError(f"cannot negate {f!r}")


def _linearize_int(t: Term) -> tuple[dict[str, int], int]:
    coeffs: dict[str, int] = {}
    const = 0
    for mono, c in term_to_poly(t).items():
        if len(mono) == 0:
            const = c
        elif len(mono) == 1:
            coeffs[mono[0]] = coeffs.get(mono[0], 0) + c
        else:
            raise GiveUp(f"nonlinear monomial {'*'.join(mono)}")
    return coeffs, const


def to_cform(f: Formula, positive: bool = True) -> CForm:
    """Formula (with Exists nodes) -> Cooper form, pushing negations."""
    if isinstance(f, TrueF):
        return positive
    if isinstance(f, FalseF):
        return not positive
    if isinstance(f, Atom):
        lc, lk = _linearize_int(f.left)
        rc, rk = _linearize_int(f.right)
        diff = {v: lc.get(v, 0) - rc.get(v, 0) for v in set(lc) | set(rc)}
        k = lk - rk

        def ge0(cs, c):  # cs*x + c >= 0
            return mk_lin(cs, c)

        neg = {v: -c for v, c in diff.items()}
        op = f.op
        if not positive:
            op = {"<=": ">", "<": ">=", ">=": "<", ">": "<=",
                  "=": "<>", "<>": "="}[op]
        if op == "<=":
            return ge0(neg, -k)
        if op == "<":
            return ge0(neg, -k - 1)
        if op == ">=":
            return ge0(diff, k)
        if op == ">":
            return ge0(diff, k - 1)
        if op == "=":
            return c_and([ge0(diff, k), ge0(neg, -k)])
        if op == "<>":
            return c_or([ge0(dict(diff), k - 1), ge0(neg, -k - 1)])
        raise BackendError(op)
    if isinstance(f, Not):
        return to_cform(f.arg, not positive)
    if isinstance(f, And):
        parts = [to_cform(a, positive) for a in f.args]
        return c_and(parts) if positive else c_or(parts)
    if isinstance(f, Or):
        parts = [to_cform(a, positive) for a in f.args]
        return c_or(parts) if positive else c_and(parts)
    if isinstance(f, Implies):
        if positive:
            return c_or([to_cform(f.left, False), to_cform(f.right, True)])
        return c_and([to_cform(f.left, True), to_cform(f.right, False)])
    if isinstance(f, Exists):
        return ("exists" if positive else "nexists", f.vars,
                to_cform(f.body, True))
    raise BackendError(f"unsupported formula {f!r}")


# A pre-linearized mirror of CForm for repeated instantiation.  Atoms are
# kept as symbolic polynomials: each monomial records its coefficient, the
# factors that an assignment may resolve to numbers, and the factors bound
# by an enclosing quantifier (which must stay).  Instantiating one is pure
# integer arithmetic -- no term rewriting, no re-linearization.
SymForm = Union[bool, tuple]


def _sym_atom(diff: dict[tuple[str, ...], int], op: str,
              bound: frozenset) -> SymForm:
    def lin(sign: int, delta: int) -> SymForm:
        monos = []
        const = delta
        for mono, c in diff.items():
            cc = c * sign
            if cc == 0:
                continue
            if not mono:
                const += cc
                continue
            sub: list[str] = []
            keep: list[str] = []
            for v in mono:
                (keep if v in bound else sub).append(v)
            monos.append((cc, tuple(sub), tuple(keep)))
        monos.append((const, (), ()))
        return ("lin", tuple(monos))

    if op == ">=":
        return lin(1, 0)
    if op == ">":
        return lin(1, -1)
    if op == "<=":
        return lin(-1, 0)
    if op == "<":
        return lin(-1, -1)
    if op == "=":
        return ("and", (lin(1, 0), lin(-1, 0)))
    if op == "<>":
        return ("or", (lin(1, -1), lin(-1, -1)))
    raise BackendError(op)


def compile_sym(f: Formula, bound: frozenset = frozenset(),
                positive: bool = True) -> SymForm:
    """Formula -> instantiation-ready SymForm (negations pushed inward)."""
    if isinstance(f, TrueF):
        return positive
    if isinstance(f, FalseF):
        return not positive
    if isinstance(f, Atom):
        diff = dict(term_to_poly(f.left))
        for mono, c in term_to_poly(f.right).items():
            diff[mono] = diff.get(mono, 0) - c
        op = f.op
        if not positive:
            op = {"<=": ">", "<": ">=", ">=": "<", ">": "<=",
                  "=": "<>", "<>": "="}[op]
        return _sym_atom(diff, op, bound)
    if isinstance(f, Not):
        return compile_sym(f.arg, bound, not positive)
    if isinstance(f, And):
        parts = tuple(compile_sym(a, bound, positive) for a in f.args)
        return ("and" if positive else "or", parts)
    if isinstance(f, Or):
        parts = tuple(compile_sym(a, bound, positive) for a in f.args)
        return ("or" if positive else "and", parts)
    if isinstance(f, Implies):
        return ("or" if positive else "and",
                (compile_sym(f.left, bound, not positive),
                 compile_sym(f.right, bound, positive)))
    if isinstance(f, Exists):
        return ("exists" if positive else "nexists", f.vars,
                compile_sym(f.body, bound | set(f.vars), True))
    raise BackendError(f"unsupported formula {f!r}")


def specialize_sym(node: SymForm, sup: set) -> SymForm:
    """Pre-fold the parts of a SymForm that no ``sup``-assignment touches.

    Subtrees free of support variables become finished CForms wrapped as
    ``("cf", form)``; the rest keeps only support variables resolvable, so
    instantiation work is proportional to what actually varies."""
    if node is True or node is False:
        return ("cf", node)
    tag = node[0]
    if tag == "cf":
        return node
    if tag == "lin":
        monos = []
        dynamic = False
        for coef, subvars, keepvars in node[1]:
            stay = tuple(v for v in subvars if v in sup)
            keep = tuple(v for v in subvars if v not in sup) + keepvars
            monos.append((coef, stay, keep))
            if stay:
                dynamic = True
        new = ("lin", tuple(monos))
        if dynamic:
            return new
        try:
            return ("cf", inst_sym(new, {}))
        except GiveUp:
            return new  # nonlinear whatever the assignment; report per miss
    if tag in ("and", "or"):
        parts = tuple(specialize_sym(p, sup) for p in node[1])
        if all(p[0] == "cf" for p in parts):
            combine = c_and if tag == "and" else c_or
            return ("cf", combine([p[1] for p in parts]))
        return (tag, parts)
    body = specialize_sym(node[2], sup)
    if body[0] == "cf":
        return ("cf", (tag, node[1], body[1]))
    return (tag, node[1], body)


def inst_sym(node: SymForm, env: dict[str, int]) -> CForm:
    """Evaluate a SymForm under a partial integer assignment."""
    if node is True or node is False:
        return node
    tag = node[0]
    if tag == "cf":
        return node[1]
    if tag == "lin":
        coeffs: dict[str, int] = {}
        const = 0
        for coef, subvars, keepvars in node[1]:
            val = coef
            keep = list(keepvars)
            for v in subvars:
                x = env.get(v)
                if x is None:
                    keep.append(v)
                else:
                    val *= x
            if val == 0:
                continue
            if not keep:
                const += val
            elif len(keep) == 1:
                coeffs[keep[0]] = coeffs.get(keep[0], 0) + val
            else:
                raise GiveUp(f"nonlinear monomial {'*'.join(keep)}")
        return mk_lin(coeffs, const)
    if tag == "and":
        return c_and([inst_sym(p, env) for p in node[1]])
    if tag == "or":
        return c_or([inst_sym(p, env) for p in node[1]])
    return (tag, node[1], inst_sym(node[2], env))


def cform_size(f: CForm) -> int:
    if isinstance(f, tuple):
        if f[0] in ("exists", "nexists"):
            return 1 + cform_size(f[2])
        return 1 + sum(cform_size(p) for p in f[1])
    return 1


def c_subst(f: CForm, var: str, coeffs: dict[str, int], const: int) -> CForm:
    """Substitute var := const + sum coeffs*v in a quantifier-free CForm."""
    if isinstance(f, Lin) or isinstance(f, Div):
        cs = dict(f.coeffs)
        a = cs.pop(var, 0)
        if a == 0:
            return f
        k = f.const + a * const
        for v, c in coeffs.items():
            cs[v] = cs.get(v, 0) + a * c
        if isinstance(f, Lin):
            return mk_lin(cs, k)
        return mk_div(f.d, cs, k)
    if isinstance(f, tuple):
        if f[0] == "and":
            return c_and(c_subst(p, var, coeffs, const) for p in f[1])
        if f[0] == "or":
            return c_or(c_subst(p, var, coeffs, const) for p in f[1])
    return f


def c_eval(f: CForm, env: dict[str, int]) -> bool:
    if f is True or f is False:
        return f
    if isinstance(f, Lin):
        return f.const + sum(c * env[v] for v, c in f.coeffs) >= 0
    if isinstance(f, Div):
        return (f.const + sum(c * env[v] for v, c in f.coeffs)) % f.d == 0
    if isinstance(f, tuple):
        if f[0] == "and":
            return all(c_eval(p, env) for p in f[1])
        if f[0] == "or":
            return any(c_eval(p, env) for p in f[1])
    raise BackendError(f"cannot evaluate {f!r}")


_QE_SIZE_CAP = 400_000
_DELTA_CAP = 100_000


def qe1(x: str, f: CForm) -> CForm:
    """Eliminate exists-x from a quantifier-free CForm (Cooper)."""
    if f is True or f is False:
        return f

    # Gather coefficients of x.
    coefs: list[int] = []

    def scan(g: CForm) -> None:
        if isinstance(g, (Lin, Div)):
            for v, c in g.coeffs:
                if v == x:
                    coefs.append(c)
        elif isinstance(g, tuple):
            for p in g[1]:
                scan(p)

    scan(f)
    if not coefs:
        return f
    L = 1
    for c in coefs:
        L = lcm(L, abs(c))

    # Scale every atom so the coefficient of x becomes +-L, then read it as
    # +-1 for a fresh variable y = L*x.  (Scaling a divisibility atom a*x+r
    # = 0 mod d by m keeps it equivalent: m*(a*x+r) = 0 mod m*d.)
    def unify(g: CForm) -> CForm:
        if isinstance(g, (Lin, Div)):
            cs = dict(g.coeffs)
            a = cs.pop(x, 0)
            if a == 0:
                return g
            m = L // abs(a)
            cs = {v: c * m for v, c in cs.items()}
            cs[x] = 1 if a > 0 else -1
            if isinstance(g, Lin):
                return Lin(tuple(sorted(cs.items())), g.const * m)
            return mk_div(g.d * m, cs, g.const * m)
        if isinstance(g, tuple):
            if g[0] == "and":
                return c_and(unify(p) for p in g[1])
            return c_or(unify(p) for p in g[1])
        return g

    g = unify(f)
    if L > 1:
        g = c_and([g, Div(L, ((x, 1),), 0)])
    if g is True or g is False:
        return g

    # delta = lcm of divisors of Div atoms involving x
    delta = 1

    def scan_div(h: CForm) -> None:
        nonlocal delta
        if isinstance(h, Div) and any(v == x for v, _ in h.coeffs):
            delta = lcm(delta, h.d)
        elif isinstance(h, tuple):
            for p in h[1]:
                scan_div(p)

    scan_div(g)
    if delta > _DELTA_CAP:
        raise GiveUp(f"divisor blowup {delta}")

    # F_neg_inf: lower-bound atoms (x + r >= 0) -> false, uppers -> true.
    def minus_inf(h: CForm) -> CForm:
        if isinstance(h, Lin):
            a = dict(h.coeffs).get(x, 0)
            if a > 0:
                return False
            if a < 0:
                return True
            return h
        if isinstance(h, tuple):
            if h[0] == "and":
                return c_and(minus_inf(p) for p in h[1])
            return c_or(minus_inf(p) for p in h[1])
        return h

    # lower bound terms: from (x + r >= 0), x >= -r, take b = -r
    lowers: list[tuple[dict[str, int], int]] = []
    seen: set = set()

    def scan_low(h: CForm) -> None:
        if isinstance(h, Lin):
            cs = dict(h.coeffs)
            a = cs.pop(x, 0)
            if a > 0:
                b = ({v: -c for v, c in cs.items()}, -h.const)
                key = (tuple(sorted(b[0].items())), b[1])
                if key not in seen:
                    seen.add(key)
                    lowers.append(b)
        elif isinstance(h, tuple):
            for p in h[1]:
                scan_low(p)

    scan_low(g)

    parts: list[CForm] = []
    fmi = minus_inf(g)
    if fmi is not False:
        for j in range(1, delta + 1):
            parts.append(c_subst(fmi, x, {}, j))
    budget = _QE_SIZE_CAP
    for bc, bk in lowers:
        for j in range(delta):
            parts.append(c_subst(g, x, bc, bk + j))
            budget -= cform_size(parts[-1])
            if budget < 0:
                raise GiveUp("quantifier elimination blowup")
    return c_or(parts)


def qe(f: CForm) -> CForm:
    """Eliminate all quantifiers (innermost first)."""
    if isinstance(f, tuple):
        if f[0] == "and":
            return c_and(qe(p) for p in f[1])
        if f[0] == "or":
            return c_or(qe(p) for p in f[1])
        if f[0] in ("exists", "nexists"):
            body = qe(f[2])
            for v in reversed(f[1]):
                body = qe1(v, body)
                if cform_size(body) > _QE_SIZE_CAP:
                    raise GiveUp("quantifier elimination blowup")
            return c_neg(body) if f[0] == "nexists" else body
    return f


def _elim_inner(f: CForm) -> CForm:
    """Cooper-eliminate every quantified subtree, leaving the rest alone."""
    if isinstance(f, tuple):
        if f[0] == "and":
            return c_and(_elim_inner(p) for p in f[1])
        if f[0] == "or":
            return c_or(_elim_inner(p) for p in f[1])
        return qe(f)
    return f


def _exists_int(body: CForm, variables: Sequence[str]) -> bool:
    """Truth of ``exists variables . body`` with no other free variables.
    Inner quantifiers go through Cooper; the outer block is decided per DNF
    disjunct by integer feasibility (simplex + branch and bound), which
    stays cheap where block elimination would blow up."""
    g = _elim_inner(body)
    if g is True or g is False:
        return g
    for disjunct in _dnf_cform(g):
        if not disjunct:
            return True
        vs = sorted({v for atom in disjunct for v, _ in atom.coeffs})
        if any(isinstance(a, Div) for a in disjunct):
            if model_by_projection(c_and(list(disjunct)), vs) is not None:
                return True
        else:
            rows = [(dict(a.coeffs), a.const) for a in disjunct]
            if integer_point(rows, vs) is not None:
                return True
    return False


def decide_closed(f: CForm) -> bool:
    """Truth of a closed CForm (free vars absent)."""
    if f is True or f is False:
        return f
    if isinstance(f, (Lin, Div)):
        return c_eval(f, {})
    if isinstance(f, tuple):
        if f[0] == "and":
            return all(decide_closed(p) for p in f[1])
        if f[0] == "or":
            return any(decide_closed(p) for p in f[1])
        if f[0] == "exists":
            return _exists_int(f[2], f[1])
        if f[0] == "nexists":
            return not _exists_int(f[2], f[1])
    raise BackendError(f"cannot decide {f!r}")


# --- model search -----------------------------------------------------------


def find_value_1var(f: CForm, x: str) -> Optional[int]:
    """A satisfying integer for a quantifier-free CForm over x alone,
    smallest |value| first.  Complete: every maximal satisfying interval of
    the inequality part either touches an atom boundary (covered within one
    divisor period of it) or is the whole line (covered by 0..delta-1)."""
    delta = 1
    boundary: list[int] = []

    def scan(g: CForm) -> None:
        nonlocal delta
        if isinstance(g, Lin):
            a = dict(g.coeffs).get(x, 0)
            if a > 0:
                boundary.append(-(g.const // a))  # ceil(-const/a)
            elif a < 0:
                boundary.append(g.const // (-a))  # floor(const/-a)
        elif isinstance(g, Div):
            if any(v == x for v, _ in g.coeffs):
                delta = lcm(delta, g.d)
        elif isinstance(g, tuple):
            for p in g[1]:
                scan(p)

    scan(f)
    cands: set[int] = set()
    if not boundary:
        cands.update(range(delta))
    for b in boundary:
        cands.update(range(b - delta, b + delta + 1))
    for val in sorted(cands, key=lambda v: (abs(v), v < 0)):
        if c_eval(f, {x: val}):
            return val
    return None


def model_by_projection(f: CForm, variables: Sequence[str]) -> Optional[dict[str, int]]:
    """Model of a CForm (may contain quantifiers) over the given free
    variables, by repeated projection: eliminate all but one variable, pick
    a value for it (projection guarantees it extends), substitute, repeat."""
    g = qe(f)
    env: dict[str, int] = {}
    for i, v in enumerate(variables):
        proj = g
        for u in variables[i + 1:]:
            proj = qe1(u, proj)
        if proj is False:
            return None
        if proj is True:
            val = 0
        else:
            val = find_value_1var(proj, v)
            if val is None:
                return None
        env[v] = val
        g = c_subst(g, v, {}, val)
    if g is not True and not c_eval(g, {}):
        return None
    return env


# ---------------------------------------------------------------------------
# Exact rational simplex (phase 1) + integer recovery
# ---------------------------------------------------------------------------


def simplex_feasible(rows: list[tuple[dict[str, int], int]],
                     variables: list[str]) -> Optional[dict[str, Fraction]]:
    """A rational point satisfying all ``const + coeffs*x >= 0`` rows, or
    None.  Phase-1 simplex, Bland's rule, with fraction-free integer
    pivoting: the tableau stays integral, scaled by the current basis
    determinant, and every division is exact.  A variable mentioned by a
    plain ``v >= 0`` row gets a single column; the rest split x = p - q."""
    nonneg: set[str] = set()
    kept: list[tuple[dict[str, int], int]] = []
    for coeffs, const in rows:
        if const == 0 and len(coeffs) == 1:
            (v, a), = coeffs.items()
            if a > 0 and v in variables:
                nonneg.add(v)
                continue
        kept.append((coeffs, const))
    col_of: dict[str, int] = {}
    neg_col: dict[str, int] = {}
    k = 0
    for v in variables:
        col_of[v] = k
        k += 1
        if v not in nonneg:
            neg_col[v] = k
            k += 1
    nstruct = k
    m = len(kept)
    # sum c*x + const >= 0  ->  sum c*x - s = -const, s >= 0; rows flipped
    # to a nonnegative right-hand side, which makes the slack basic when
    # its sign works out and leaves an artificial otherwise
    raw: list[tuple[list[int], int]] = []
    for i, (coeffs, const) in enumerate(kept):
        row = [0] * (nstruct + m)
        for v, c in coeffs.items():
            j = col_of.get(v)
            if j is None:
                continue
            row[j] = c
            jq = neg_col.get(v)
            if jq is not None:
                row[jq] = -c
        row[nstruct + i] = -1
        rhs = -const
        if rhs < 0:
            row = [-x for x in row]
            rhs = -rhs
        raw.append((row, rhs))
    art_of: dict[int, int] = {}
    for i, (row, _) in enumerate(raw):
        if row[nstruct + i] < 0:
            art_of[i] = len(art_of)
    ncols = nstruct + m + len(art_of)
    tab: list[list[int]] = []
    basis: list[int] = []
    for i, (row, rhs) in enumerate(raw):
        full = row + [0] * len(art_of) + [rhs]
        if i in art_of:
            full[nstruct + m + art_of[i]] = 1
            basis.append(nstruct + m + art_of[i])
        else:
            basis.append(nstruct + i)
        tab.append(full)
    # phase-1: minimize the artificial sum; reduced costs start as the
    # negated column sums over artificial rows, with basic columns zeroed
    obj = [0] * (ncols + 1)
    for i in art_of:
        trow = tab[i]
        for j in range(ncols + 1):
            obj[j] -= trow[j]
    for i, a in art_of.items():
        obj[nstruct + m + a] = 0

    det = 1
    nscan = nstruct + m  # artificials never re-enter
    guard = 0
    while True:
        guard += 1
        if guard > 10_000:
            raise GiveUp("simplex cycling guard")
        col = next((j for j in range(nscan) if obj[j] < 0), None)
        if col is None:
            break
        best = None  # (numerator, denominator, basis var, row)
        for i in range(m):
            a = tab[i][col]
            if a > 0:
                num = tab[i][-1]
                if best is None or num * best[1] < best[0] * a or (
                        num * best[1] == best[0] * a and basis[i] < best[2]):
                    best = (num, a, basis[i], i)
        if best is None:
            raise GiveUp("simplex phase-1 unbounded")  # cannot happen
        r = best[3]
        p = tab[r][col]
        row_r = tab[r]
        for i in range(m):
            if i == r:
                continue
            t = tab[i]
            f = t[col]
            if f == 0 and p == det:
                continue
            tab[i] = [(p * t[j] - f * row_r[j]) // det
                      for j in range(ncols + 1)]
        f = obj[col]
        obj = [(p * obj[j] - f * row_r[j]) // det for j in range(ncols + 1)]
        det = p
        basis[r] = col

    if obj[-1] != 0:  # optimum of the artificial sum is -obj[-1]/det
        return None
    row_of = {b: i for i, b in enumerate(basis)}
    point: dict[str, Fraction] = {}
    for v in variables:
        num = 0
        i = row_of.get(col_of[v])
        if i is not None:
            num += tab[i][-1]
        j = neg_col.get(v)
        if j is not None:
            i = row_of.get(j)
            if i is not None:
                num -= tab[i][-1]
        point[v] = Fraction(num, det)
    return point


def _rows_hold(rows, env: dict[str, int]) -> bool:
    return all(const + sum(c * env[v] for v, c in coeffs.items()) >= 0
               for coeffs, const in rows)


def integer_point(rows: list[tuple[dict[str, int], int]],
                  variables: list[str], depth: int = 0) -> Optional[dict[str, int]]:
    """An integer point satisfying the rows, or None if rationally
    infeasible.  Raises GiveUp when branch-and-bound exceeds its budget."""
    point = simplex_feasible(rows, variables)
    if point is None:
        return None
    if all(x.denominator == 1 for x in point.values()):
        return {v: int(x) for v, x in point.items()}
    # scaling works for homogeneous / downward-closed systems (Farkas blocks)
    scale = lcm(*[x.denominator for x in point.values()])
    scaled = {v: int(x * scale) for v, x in point.items()}
    if _rows_hold(rows, scaled):
        return scaled
    if depth > 24:
        raise GiveUp("branch and bound depth")
    v = next(v for v in variables if point[v].denominator != 1)
    fl = point[v].numerator // point[v].denominator
    for extra in (({v: 1}, -(fl + 1)),  # v >= fl+1
                  ({v: -1}, fl)):       # v <= fl
        got = integer_point(rows + [extra], variables, depth + 1)
        if got is not None:
            return got
    return None


# ---------------------------------------------------------------------------
# Assertion clustering and the top-level decision procedure
# ---------------------------------------------------------------------------


def _dnf_cform(f: CForm, cap: int = 512) -> list[list]:
    if f is True:
        return [[]]
    if f is False:
        return []
    if isinstance(f, (Lin, Div)):
        return [[f]]
    if isinstance(f, tuple) and f[0] == "and":
        out = [[]]
        for p in f[1]:
            nxt = []
            for left in out:
                for right in _dnf_cform(p, cap):
                    nxt.append(left + right)
                    if len(nxt) > cap:
                        raise GiveUp("DNF blowup")
            out = nxt
        return out
    if isinstance(f, tuple) and f[0] == "or":
        out = []
        for p in f[1]:
            out.extend(_dnf_cform(p, cap))
            if len(out) > cap:
                raise GiveUp("DNF blowup")
        return out
    raise BackendError("unexpected quantifier in DNF")


class Cluster:
    def __init__(self, formulas: list[Formula]) -> None:
        self.formulas = formulas
        self.free = set()
        for f in formulas:
            self.free |= quant_free_vars(f)
        self.enum_support: tuple[str, ...] = ()
        self.other_vars: list[str] = []
        self.quantified = any(has_quantifier(f) for f in formulas)
        self.cache: dict[tuple[int, ...], Optional[dict[str, int]] | str] = {}
        try:
            self.compiled: Optional[list[SymForm]] = \
                [compile_sym(f) for f in formulas]
        except BackendError:
            self.compiled = None

    def specialize(self) -> None:
        if self.compiled is not None:
            sup = set(self.enum_support)
            self.compiled = [specialize_sym(s, sup) for s in self.compiled]

    def decide(self, env: dict[str, int], deadline: float) -> Optional[dict[str, int]] | str:
        """Model over other_vars, None (unsat), or 'unknown'."""
        key = tuple(env[v] for v in self.enum_support)
        if key in self.cache:
            return self.cache[key]
        result = self._decide(env, deadline)
        self.cache[key] = result
        return result

    def _decide(self, env, deadline):
        if time.monotonic() > deadline:
            raise TimeoutError
        try:
            if self.compiled is not None:
                cf = c_and([inst_sym(s, env) for s in self.compiled])
            else:
                sub = {v: Const(val) for v, val in env.items()
                       if v in self.free}
                forms = [quant_subst(f, sub) if sub else f
                         for f in self.formulas]
                cf = c_and([to_cform(f) for f in forms])
        except GiveUp:
            return "unknown"
        variables = sorted(self.other_vars)
        try:
            if self.quantified or len(variables) <= 4:
                if not variables:
                    return {} if decide_closed(cf) else None
                model = model_by_projection(cf, variables)
                return model
            # larger quantifier-free systems: DNF + simplex per disjunct
            unknown = False
            for disjunct in _dnf_cform(cf):
                if time.monotonic() > deadline:
                    raise TimeoutError
                if any(isinstance(a, Div) for a in disjunct):
                    unknown = True
                    continue
                rows = [(dict(a.coeffs), a.const) for a in disjunct]
                try:
                    got = integer_point(rows, variables)
                except GiveUp:
                    unknown = True
                    continue
                if got is not None:
                    return got
            return "unknown" if unknown else None
        except GiveUp:
            return "unknown"


class Backend:
    def __init__(self) -> None:
        self.declared: list[str] = []
        self.assertions: list[Formula] = []
        self.timeout_ms: Optional[int] = None
        self.last: Optional[str] = None
        self.model: dict[str, int] = {}
        self.out: list[str] = []

    # --- command dispatch --------------------------------------------------

    def run_script(self, text: str) -> str:
        for sexp in parse_sexps(text):
            self.command(sexp)
        return "\n".join(self.out) + ("\n" if self.out else "")

    def command(self, sexp: Sexp) -> None:
        if not isinstance(sexp, list) or not sexp:
            raise BackendError(f"bad command {sexp!r}")
        head = sexp[0]
        if head in ("set-logic", "set-info", "exit", "reset-assertions"):
            return
        if head == "set-option":
            if len(sexp) == 3 and sexp[1] == ":timeout":
                self.timeout_ms = int(sexp[2])
            return
        if head == "echo":
            self.out.append(str(sexp[1]).strip('"'))
            return
        if head == "declare-const":
            name, sort = sexp[1], sexp[2]
            if sort != "Int":
                raise BackendError(f"unsupported sort {sort}")
            self.declared.append(name)
            return
        if head == "declare-fun":
            name, args, sort = sexp[1], sexp[2], sexp[3]
            if args != [] or sort != "Int":
                raise BackendError("only 0-ary Int functions supported")
            self.declared.append(name)
            return
        if head == "assert":
            self.assertions.append(self.to_formula(sexp[1], set(self.declared)))
            return
        if head == "check-sat":
            self.last = self.check_sat()
            self.out.append(self.last)
            return
        if head == "get-model":
            if self.last != "sat":
                self.out.append("(error \"model is not available\")")
                return
            lines = ["(model"]
            for name in self.declared:
                v = self.model.get(name, 0)
                sv = str(v) if v >= 0 else f"(- {-v})"
                lines.append(f"  (define-fun {name} () Int {sv})")
            lines.append(")")
            self.out.append("\n".join(lines))
            return
        raise BackendError(f"unsupported command {head}")

    def to_formula(self, s: Sexp, scope: set[str]) -> Formula:
        def term(s: Sexp, scope: set[str]) -> Term:
            if isinstance(s, str):
                if s.lstrip("-").isdigit():
                    return Const(int(s))
                if s in scope:
                    return Var(s)
                raise BackendError(f"unknown symbol {s}")
            op = s[0]
            if op == "+":
                out = term(s[1], scope)
                for a in s[2:]:
                    out = Add(out, term(a, scope))
                return out
            if op == "-":
                if len(s) == 2:
                    return Mul(Const(-1), term(s[1], scope))
                out = term(s[1], scope)
                for a in s[2:]:
                    out = Add(out, Mul(Const(-1), term(a, scope)))
                return out
            if op == "*":
                out = term(s[1], scope)
                for a in s[2:]:
                    out = Mul(out, term(a, scope))
                return out
            raise BackendError(f"unsupported term {s!r}")

        def formula(s: Sexp, scope: set[str]) -> Formula:
            if s == "true":
                return TrueF()
            if s == "false":
                return FalseF()
            if isinstance(s, str):
                raise BackendError(f"boolean symbol {s!r} unsupported")
            op = s[0]
            if op == "not":
                return Not(formula(s[1], scope))
            if op == "and":
                return And(tuple(formula(a, scope) for a in s[1:]))
            if op == "or":
                return Or(tuple(formula(a, scope) for a in s[1:]))
            if op == "=>":
                out = formula(s[-1], scope)
                for a in reversed(s[1:-1]):
                    out = Implies(formula(a, scope), out)
                return out
            if op in ("<=", "<", ">=", ">", "="):
                if len(s) != 3:
                    raise BackendError(f"{op} expects two arguments")
                return Atom(op, term(s[1], scope), term(s[2], scope))
            if op == "distinct":
                return Atom("<>", term(s[1], scope), term(s[2], scope))
            if op in ("forall", "exists"):
                names = []
                for pair in s[1]:
                    if pair[1] != "Int":
                        raise BackendError("only Int binders supported")
                    names.append(pair[0])
                body = formula(s[2], scope | set(names))
                if op == "exists":
                    return Exists(tuple(names), body)
                return Not(Exists(tuple(names), Not(body)))
            raise BackendError(f"unsupported formula {s!r}")

        return formula(s, scope)

    # --- decision ------------------------------------------------------

    def check_sat(self) -> str:
        deadline = time.monotonic() + (self.timeout_ms / 1000.0
                                       if self.timeout_ms else 3600.0)
        try:
            return self._check_sat(deadline)
        except TimeoutError:
            return "unknown"
        except GiveUp:
            return "unknown"

    def _check_sat(self, deadline: float) -> str:
        # variable bounds from unit conjuncts
        lo: dict[str, int] = {}
        hi: dict[str, int] = {}

        def note_bounds(f: Formula) -> None:
            if isinstance(f, And):
                for a in f.args:
                    note_bounds(a)
                return
            if isinstance(f, Atom):
                try:
                    cf = to_cform(f)
                except GiveUp:
                    return
                parts = cf[1] if isinstance(cf, tuple) and cf[0] == "and" else (cf,)
                for p in parts:
                    if isinstance(p, Lin) and len(p.coeffs) == 1:
                        (v, a), = p.coeffs
                        if a > 0:  # v >= ceil(-const/a)
                            b = -(-(-p.const) // a)
                            lo[v] = max(lo.get(v, b), b)
                        else:  # v <= floor(const/|a|)
                            b = p.const // (-a)
                            hi[v] = min(hi.get(v, b), b)

        for f in self.assertions:
            note_bounds(f)

        # nonlinear monomials -> enumeration set
        monos: set[tuple[str, ...]] = set()

        def scan_terms(f: Formula) -> None:
            if isinstance(f, Atom):
                for side in (f.left, f.right):
                    for mono in term_to_poly(side):
                        if len(mono) >= 2:
                            monos.add(mono)
            elif isinstance(f, Not):
                scan_terms(f.arg)
            elif isinstance(f, (And, Or)):
                for a in f.args:
                    scan_terms(a)
            elif isinstance(f, Implies):
                scan_terms(f.left)
                scan_terms(f.right)
            elif isinstance(f, Exists):
                scan_terms(f.body)

        for f in self.assertions:
            scan_terms(f)

        declared_set = set(self.declared)
        enum_set: set[str] = set()
        for mono in monos:
            enum_set.update(v for v in mono
                            if v in declared_set and v in lo and v in hi)
        # free variables of quantified assertions also get enumerated when
        # bounded: substituting them closes the formula, which keeps such
        # assertions in separate, per-clause-cacheable clusters instead of
        # one blob glued together by shared linear unknowns
        for f in self.assertions:
            if has_quantifier(f):
                enum_set.update(v for v in quant_free_vars(f)
                                if v in declared_set and v in lo and v in hi)
        # every monomial must become linear once the enumerated variables
        # are substituted (multiplicities count: x*x needs x enumerated)
        for mono in monos:
            residual = [v for v in mono if v not in enum_set]
            if len(residual) >= 2:
                return "unknown"

        # clusters: union-find over assertions sharing non-enumerated vars
        parent = list(range(len(self.assertions)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        owner: dict[str, int] = {}
        for i, f in enumerate(self.assertions):
            for v in quant_free_vars(f):
                if v in enum_set:
                    continue
                if v in owner:
                    parent[find(i)] = find(owner[v])
                else:
                    owner[v] = i
        groups: dict[int, list[Formula]] = {}
        for i, f in enumerate(self.assertions):
            groups.setdefault(find(i), []).append(f)
        clusters = [Cluster(forms) for forms in groups.values()]

        # enumeration order: complete cluster supports as early as possible
        # (greedy fewest-missing-variables first) so that infeasible prefixes
        # are cut long before the full assignment is built; single-variable
        # clusters are plain range facts and get no say in the order
        decl_pos = {v: k for k, v in enumerate(self.declared)}
        pending = [sorted(cl.free & enum_set, key=decl_pos.get)
                   for cl in clusters if len(cl.free & enum_set) >= 2]
        enum_vars = []
        placed: set[str] = set()
        while pending:
            best = min(pending,
                       key=lambda s: (sum(1 for v in s if v not in placed),
                                      decl_pos[s[0]]))
            for v in best:
                if v not in placed:
                    placed.add(v)
                    enum_vars.append(v)
            pending.remove(best)
        enum_vars += [v for v in self.declared
                      if v in enum_set and v not in placed]

        for cl in clusters:
            cl.enum_support = tuple(v for v in enum_vars if v in cl.free)
            cl.other_vars = sorted(v for v in cl.free if v not in enum_set)
            cl.specialize()

        unknown_seen = False

        def try_env(env: dict[str, int]) -> Optional[dict[str, int]]:
            nonlocal unknown_seen
            found: dict[str, int] = dict(env)
            for cl in clusters:
                res = cl.decide(env, deadline)
                if res == "unknown":
                    unknown_seen = True
                    return None
                if res is None:
                    return None
                found.update(res)
            return found

        if not enum_vars:
            model = try_env({})
            if model is not None:
                return self._accept(model)
            return "unknown" if unknown_seen else "unsat"

        # iterative deepening over sum |v|
        for v in enum_vars:
            if v not in lo or v not in hi:
                return "unknown"
        maxabs = {v: max(abs(lo[v]), abs(hi[v])) for v in enum_vars}
        suffix = [0] * (len(enum_vars) + 1)
        for i in range(len(enum_vars) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + maxabs[enum_vars[i]]

        # cheap per-prefix pruning via cluster support order
        nvars = len(enum_vars)
        ready_at: list[list[Cluster]] = [[] for _ in range(nvars)]
        for cl in clusters:
            if cl.enum_support:
                last = max(enum_vars.index(v) for v in cl.enum_support)
                ready_at[last].append(cl)
        root_clusters = [cl for cl in clusters if not cl.enum_support]

        for cl in root_clusters:
            res = cl.decide({}, deadline)
            if res == "unknown":
                unknown_seen = True
            elif res is None:
                return "unsat"

        # values per variable, cheapest first; abs is non-decreasing so the
        # scan can stop at the first value beyond the remaining budget
        vals_of = {v: sorted(range(lo[v], hi[v] + 1), key=lambda x: (abs(x), x < 0))
                   for v in enum_vars}

        env: dict[str, int] = {}
        node_budget = [0]

        def leaf() -> Optional[dict[str, int]]:
            nonlocal unknown_seen
            frags = []
            for cl in clusters:
                if not cl.enum_support:
                    continue
                res = cl.decide(env, deadline)
                if res == "unknown":
                    unknown_seen = True
                    return None
                if res is None:
                    return None
                frags.append(res)
            for cl in root_clusters:
                res = cl.decide({}, deadline)
                if isinstance(res, dict):
                    frags.append(res)
            found = dict(env)
            for fr in frags:
                found.update(fr)
            return found

        def zero_tail(i: int) -> Optional[dict[str, int]]:
            # remaining budget is zero: every later variable is forced to 0
            nonlocal unknown_seen
            for j in range(i, nvars):
                env[enum_vars[j]] = 0
                for cl in ready_at[j]:
                    res = cl.decide(env, deadline)
                    if res == "unknown":
                        unknown_seen = True
                        res = None
                    if res is None:
                        for k in range(i, j + 1):
                            del env[enum_vars[k]]
                        return None
            got = leaf()
            if got is None:
                for j in range(i, nvars):
                    del env[enum_vars[j]]
            return got

        def dfs(i: int, budget: int) -> Optional[dict[str, int]]:
            nonlocal unknown_seen
            node_budget[0] += 1
            if node_budget[0] % 256 == 0 and time.monotonic() > deadline:
                raise TimeoutError
            if budget == 0:
                return zero_tail(i)
            if i == nvars or budget > suffix[i]:
                return None
            v = enum_vars[i]
            for val in vals_of[v]:
                cost = abs(val)
                if cost > budget:
                    break
                env[v] = val
                ok = True
                for cl in ready_at[i]:
                    res = cl.decide(env, deadline)
                    if res == "unknown":
                        unknown_seen = True
                        ok = False
                        break
                    if res is None:
                        ok = False
                        break
                if ok:
                    got = dfs(i + 1, budget - cost)
                    if got is not None:
                        return got
                del env[v]
            return None

        for target in range(suffix[0] + 1):
            got = dfs(0, target)
            if got is not None:
                return self._accept(got)
        return "unknown" if unknown_seen else "unsat"

    def _accept(self, model: dict[str, int]) -> str:
        full = {name: model.get(name, 0) for name in self.declared}
        for f in self.assertions:
            if not self._holds(f, full):
                # a model that fails re-verification indicates an internal
                # bug; stay sound and give up rather than lie
                print("; internal: model verification failed", file=sys.stderr)
                return "unknown"
        self.model = full
        return "sat"

    def _holds(self, f: Formula, env: dict[str, int]) -> bool:
        if has_quantifier(f):
            closed = quant_subst(f, {v: Const(x) for v, x in env.items()})
            return decide_closed(to_cform(closed))
        return eval_formula(f, env)


def main(argv: Optional[list[str]] = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if args:
        with open(args[0], "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    backend = Backend()
    try:
        sys.stdout.write(backend.run_script(text))
    except BackendError as e:
        sys.stdout.write(f"(error \"{e}\")\n")
        return 1
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""The source language: a small call-by-value functional language over
integers, in an OCaml-like concrete syntax.

Programs are sequences of top-level bindings (``let`` / ``let rec`` /
``and`` for mutual recursion) plus an optional trailing expression::

    let rec sum x = if x = 0 then 0 else x + sum (x - 1)
    sum 5

Conditions are integers: ``if c then a else b`` takes the ``else`` branch
when ``c`` is zero (comparison operators return 1 for true, 0 for false).
The primitive form ``ifz c then a else b`` takes ``a`` when c is zero.
Nondeterministic integers come from ``read_int ()`` or ``*exists*``
(angelic: resolved favorably) and ``*forall*`` (demonic: resolved
adversarially).

Analysis directives ride in ``(*@ ... *)`` comments, one per line, e.g.::

    (*@ type sum : (x:{P(x)}) -> {y: Q(x, y)} *)
    (*@ maximize P
        prioritize P < Q *)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

from .hccs import Formula, parse_formula


class SourceError(Exception):
    def __init__(self, msg: str, line: Optional[int] = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


# ---------------------------------------------------------------------------
# Abstract syntax
# ---------------------------------------------------------------------------


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class EVar(Expr):
    name: str


@dataclass(frozen=True)
class EInt(Expr):
    value: int


@dataclass(frozen=True)
class EApp(Expr):
    fun: Expr
    arg: Expr


@dataclass(frozen=True)
class EOp(Expr):
    """Primitive operator application; comparisons yield 1 (true) or 0."""

    op: str  # + - * <= < >= > = <>
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class EIfz(Expr):
    """Branch on an integer: ``zero`` when the scrutinee is 0."""

    cond: Expr
    zero: Expr
    nonzero: Expr


@dataclass(frozen=True)
class ELet(Expr):
    name: str
    bound: Expr
    body: Expr


@dataclass(frozen=True)
class ERand(Expr):
    """A nondeterministic integer: ``angelic`` (exists) or ``demonic``
    (forall)."""

    kind: str


ANGELIC = "angelic"
DEMONIC = "demonic"

ARITH_OPS = ("+", "-", "*")
CMP_OPS = ("<=", "<", ">=", ">", "=", "<>")


@dataclass(frozen=True)
class FunDef:
    name: str
    params: tuple[str, ...]
    body: Expr
    rec_group: int = 0  # definitions in the same group may call each other


@dataclass(frozen=True)
class Directive:
    kind: str                      # type maximize minimize prioritize
                                   # template fix exists
    name: str = ""
    second: str = ""               # prioritize: the larger predicate
    params: tuple[str, ...] = ()
    formula: Optional[Formula] = None
    text: str = ""                 # type: the unparsed type expression


@dataclass
class Program:
    defs: list[FunDef]
    main: Optional[Expr] = None
    directives: list[Directive] = field(default_factory=list)

    def fun(self, name: str) -> FunDef:
        for d in self.defs:
            if d.name == name:
                return d
        raise SourceError(f"no function named {name}")

    def group(self, name: str) -> list[FunDef]:
        g = self.fun(name).rec_group
        return [d for d in self.defs if d.rec_group == g]


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

KEYWORDS = {"let", "rec", "and", "in", "if", "ifz", "then", "else"}
SYMBOLS = ["<=", ">=", "<>", "->", "!=", "(", ")", "+", "-", "*", "<", ">",
           "=", ","]


@dataclass(frozen=True)
class Token:
    kind: str  # int ident kw sym rand eof
    text: str
    line: int


def lex(src: str) -> tuple[list[Token], list[tuple[int, str]]]:
    """Tokenize, returning tokens and raw ``(*@ ... *)`` directive bodies."""
    toks: list[Token] = []
    directives: list[tuple[int, str]] = []
    i, n, line = 0, len(src), 1
    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            continue
        if src.startswith("(*", i):
            depth, j = 1, i + 2
            start = j
            while j < n and depth:
                if src.startswith("(*", j):
                    depth += 1
                    j += 2
                elif src.startswith("*)", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth:
                raise SourceError("unterminated comment", line)
            body = src[start:j - 2]
            if body.startswith("@"):
                directives.append((line, body[1:]))
            line += body.count("\n")
            i = j
            continue
        if src.startswith("*forall*", i):
            toks.append(Token("rand", DEMONIC, line))
            i += 8
            continue
        if src.startswith("*exists*", i):
            toks.append(Token("rand", ANGELIC, line))
            i += 8
            continue
        if ch.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            toks.append(Token("int", src[i:j], line))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] in "_'"):
                j += 1
            word = src[i:j]
            toks.append(Token("kw" if word in KEYWORDS else "ident", word, line))
            i = j
            continue
        for sym in SYMBOLS:
            if src.startswith(sym, i):
                toks.append(Token("sym", "<>" if sym == "!=" else sym, line))
                i += len(sym)
                break
        else:
            raise SourceError(f"unexpected character {ch!r}", line)
    toks.append(Token("eof", "", line))
    return toks, directives


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, toks: list[Token]) -> None:
        self.toks = toks
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.toks[self.pos]

    def take(self) -> Token:
        t = self.cur
        self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        return self.cur.kind == kind and (text is None or self.cur.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            raise SourceError(f"expected {want!r}, found {self.cur.text!r}",
                              self.cur.line)
        return self.take()

    # expression grammar, loosest binding first

    def expr(self) -> Expr:
        if self.at("kw", "let"):
            return self.let_expr()
        if self.at("kw", "if") or self.at("kw", "ifz"):
            return self.if_expr()
        return self.comparison()

    def let_expr(self) -> Expr:
        self.expect("kw", "let")
        if self.at("kw", "rec"):
            raise SourceError("local rec definitions are not supported",
                              self.cur.line)
        name = self.expect("ident").text
        if not self.at("sym", "="):
            raise SourceError("local function definitions are not supported",
                              self.cur.line)
        self.expect("sym", "=")
        bound = self.expr()
        self.expect("kw", "in")
        body = self.expr()
        return ELet(name, bound, body)

    def if_expr(self) -> Expr:
        prim = self.take().text == "ifz"
        cond = self.expr()
        self.expect("kw", "then")
        then = self.expr()
        self.expect("kw", "else")
        els = self.expr()
        if prim:
            return EIfz(cond, then, els)
        return EIfz(cond, els, then)  # 0 is false: else-branch on zero

    def comparison(self) -> Expr:
        left = self.additive()
        if self.at("sym") and self.cur.text in CMP_OPS:
            op = self.take().text
            right = self.additive()
            return EOp(op, (left, right))
        return left

    def additive(self) -> Expr:
        e = self.multiplicative()
        while self.at("sym") and self.cur.text in ("+", "-"):
            op = self.take().text
            e = EOp(op, (e, self.multiplicative()))
        return e

    def multiplicative(self) -> Expr:
        e = self.application()
        while self.at("sym", "*"):
            self.take()
            e = EOp("*", (e, self.application()))
        return e

    def application(self) -> Expr:
        e = self.atom()
        while self.at_atom_start():
            arg = self.atom()
            if isinstance(e, EVar) and e.name == "read_int":
                e = ERand(ANGELIC)  # read_int () - the () argument is unit
            else:
                e = EApp(e, arg)
        return e

    def at_atom_start(self) -> bool:
        if self.cur.kind in ("int", "ident", "rand"):
            return True
        return self.at("sym", "(")

    def atom(self) -> Expr:
        t = self.cur
        if t.kind == "int":
            return EInt(int(self.take().text))
        if t.kind == "rand":
            return ERand(self.take().text)
        if t.kind == "ident":
            return EVar(self.take().text)
        if self.at("sym", "-"):
            self.take()
            inner = self.atom()
            if isinstance(inner, EInt):
                return EInt(-inner.value)
            return EOp("-", (EInt(0), inner))
        if self.at("sym", "("):
            self.take()
            if self.at("sym", ")"):  # unit, only meaningful after read_int
                self.take()
                return EVar("()")
            e = self.expr()
            self.expect("sym", ")")
            return e
        raise SourceError(f"expected an expression, found {t.text!r}", t.line)

    # top level

    def program(self) -> tuple[list[FunDef], Optional[Expr]]:
        defs: list[FunDef] = []
        group = 0
        while self.at("kw", "let"):
            save = self.pos
            self.take()
            rec = False
            if self.at("kw", "rec"):
                rec = True
                self.take()
            name = self.expect("ident").text
            params: list[str] = []
            while self.at("ident"):
                params.append(self.take().text)
            self.expect("sym", "=")
            body = self.expr()
            if self.at("kw", "in"):
                # actually a let-expression: re-parse as the trailing main
                self.pos = save
                break
            defs.append(FunDef(name, tuple(params), body, group))
            while rec and self.at("kw", "and"):
                self.take()
                name = self.expect("ident").text
                params = []
                while self.at("ident"):
                    params.append(self.take().text)
                self.expect("sym", "=")
                defs.append(FunDef(name, tuple(params), self.expr(), group))
            group += 1
        main = None
        if not self.at("eof"):
            main = self.expr()
        self.expect("eof")
        return defs, main


def parse_directive_line(line: str, lineno: Optional[int] = None) -> Directive:
    line = line.strip()
    if line.startswith("@"):
        line = line[1:].strip()
    head, _, rest = line.partition(" ")
    rest = rest.strip()
    if head == "type":
        name, sep, ty = rest.partition(":")
        if not sep:
            raise SourceError("type directive needs 'name : type'", lineno)
        return Directive("type", name=name.strip(), text=ty.strip())
    if head in ("maximize", "minimize", "exists"):
        if not rest or " " in rest:
            raise SourceError(f"{head} needs one predicate name", lineno)
        return Directive(head, name=rest)
    if head == "prioritize":
        lo, sep, hi = rest.partition("<")
        if not sep:
            raise SourceError("prioritize needs 'p < q'", lineno)
        return Directive("prioritize", name=lo.strip(), second=hi.strip())
    if head == "clause":
        if "<=" not in rest:
            raise SourceError("clause directive needs 'head <= body'", lineno)
        return Directive("clause", text=rest)
    if head in ("template", "fix"):
        appl, sep, body = rest.partition("=")
        if not sep:
            raise SourceError(f"{head} needs 'p(args) = formula'", lineno)
        appl = appl.strip()
        if "(" not in appl or not appl.endswith(")"):
            raise SourceError(f"{head} needs 'p(args) = formula'", lineno)
        pname, _, arglist = appl[:-1].partition("(")
        params = tuple(a.strip() for a in arglist.split(",") if a.strip())
        return Directive(head, name=pname.strip(), params=params,
                         formula=parse_formula(body.strip()))
    raise SourceError(f"unknown directive {head!r}", lineno)


def parse_directives(raw: Sequence[tuple[int, str]]) -> list[Directive]:
    out = []
    for lineno, body in raw:
        for off, line in enumerate(body.splitlines()):
            if line.strip():
                out.append(parse_directive_line(line, lineno + off))
    return out


def parse_program(src: str) -> Program:
    toks, raw = lex(src)
    defs, main = _Parser(toks).program()
    names = [d.name for d in defs]
    if len(set(names)) != len(names):
        dup = next(n for n in names if names.count(n) > 1)
        raise SourceError(f"duplicate definition of {dup}")
    return Program(defs, main, parse_directives(raw))


# ---------------------------------------------------------------------------
# A-normal form
# ---------------------------------------------------------------------------


class FreshNames:
    """Fresh name supply avoiding a fixed set of taken names."""

    def __init__(self, taken: set[str], prefix: str = "t") -> None:
        self.taken = set(taken)
        self.prefix = prefix
        self.counter = 0

    def fresh(self, hint: Optional[str] = None) -> str:
        base = hint or self.prefix
        while True:
            self.counter += 1
            name = f"{base}{self.counter}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def expr_names(e: Expr) -> set[str]:
    if isinstance(e, EVar):
        return {e.name}
    if isinstance(e, EApp):
        return expr_names(e.fun) | expr_names(e.arg)
    if isinstance(e, EOp):
        out: set[str] = set()
        for a in e.args:
            out |= expr_names(a)
        return out
    if isinstance(e, EIfz):
        return expr_names(e.cond) | expr_names(e.zero) | expr_names(e.nonzero)
    if isinstance(e, ELet):
        return {e.name} | expr_names(e.bound) | expr_names(e.body)
    return set()


def is_value(e: Expr) -> bool:
    return isinstance(e, (EVar, EInt))


def anf(e: Expr, fresh: FreshNames) -> Expr:
    """Normalize: operator/application arguments and scrutinees become
    variables or literals, evaluation order made explicit by lets."""

    def value(e: Expr, binds: list[tuple[str, Expr]]) -> Expr:
        if is_value(e):
            return e
        norm = anf(e, fresh)
        name = fresh.fresh()
        binds.append((name, norm))
        return EVar(name)

    def wrap(binds: list[tuple[str, Expr]], core: Expr) -> Expr:
        for name, bound in reversed(binds):
            core = ELet(name, bound, core)
        return core

    if is_value(e) or isinstance(e, ERand):
        return e
    if isinstance(e, EApp):
        binds: list[tuple[str, Expr]] = []
        fun = anf(e.fun, fresh)
        if isinstance(fun, ELet):  # keep the function position a spine
            name = fresh.fresh()
            binds.append((name, fun))
            fun = EVar(name)
        arg = value(e.arg, binds)
        return wrap(binds, EApp(fun, arg))
    if isinstance(e, EOp):
        binds = []
        args = tuple(value(a, binds) for a in e.args)
        return wrap(binds, EOp(e.op, args))
    if isinstance(e, EIfz):
        binds = []
        cond = value(e.cond, binds)
        return wrap(binds, EIfz(cond, anf(e.zero, fresh), anf(e.nonzero, fresh)))
    if isinstance(e, ELet):
        return ELet(e.name, anf(e.bound, fresh), anf(e.body, fresh))
    raise SourceError(f"cannot normalize {e!r}")


def flatten_lets(e: Expr) -> Expr:
    """Rotate ``let x = (let y = b in c) in body`` into straight-line form
    ``let y = b in let x = c in body`` (sound: normalization keeps all
    binders distinct)."""
    if isinstance(e, ELet):
        bound = flatten_lets(e.bound)
        body = flatten_lets(e.body)
        if isinstance(bound, ELet):
            return flatten_lets(
                ELet(bound.name, bound.bound, ELet(e.name, bound.body, body)))
        return ELet(e.name, bound, body)
    if isinstance(e, EIfz):
        return EIfz(e.cond, flatten_lets(e.zero), flatten_lets(e.nonzero))
    if isinstance(e, EApp):
        return EApp(flatten_lets(e.fun), flatten_lets(e.arg))
    if isinstance(e, EOp):
        return EOp(e.op, tuple(flatten_lets(a) for a in e.args))
    return e


def anf_program(p: Program) -> Program:
    taken: set[str] = set()
    for d in p.defs:
        taken |= {d.name, *d.params} | expr_names(d.body)
    if p.main is not None:
        taken |= expr_names(p.main)
    fresh = FreshNames(taken)
    defs = [FunDef(d.name, d.params, flatten_lets(anf(d.body, fresh)),
                   d.rec_group)
            for d in p.defs]
    main = flatten_lets(anf(p.main, fresh)) if p.main is not None else None
    return Program(defs, main, list(p.directives))


# ---------------------------------------------------------------------------
# Pretty printing
# ---------------------------------------------------------------------------


def show_expr(e: Expr, prec: int = 0) -> str:
    # precedence levels: 0 expr, 1 comparison, 2 additive, 3 multiplicative,
    # 4 application, 5 atom
    def paren(level: int, s: str) -> str:
        return f"({s})" if prec > level else s

    if isinstance(e, EVar):
        return e.name
    if isinstance(e, EInt):
        return str(e.value) if e.value >= 0 else f"({e.value})"
    if isinstance(e, ERand):
        return "read_int ()" if e.kind == ANGELIC else "*forall*"
    if isinstance(e, EApp):
        return paren(4, f"{show_expr(e.fun, 4)} {show_expr(e.arg, 5)}")
    if isinstance(e, EOp):
        if e.op in CMP_OPS:
            lhs, rhs = e.args
            return paren(1, f"{show_expr(lhs, 2)} {e.op} {show_expr(rhs, 2)}")
        if e.op in ("+", "-"):
            lhs, rhs = e.args
            return paren(2, f"{show_expr(lhs, 2)} {e.op} {show_expr(rhs, 3)}")
        lhs, rhs = e.args
        return paren(3, f"{show_expr(lhs, 3)} {e.op} {show_expr(rhs, 4)}")
    if isinstance(e, EIfz):
        s = (f"if {show_expr(e.cond)} then {show_expr(e.nonzero)} "
             f"else {show_expr(e.zero)}")
        return paren(0, s)
    if isinstance(e, ELet):
        s = f"let {e.name} = {show_expr(e.bound)} in {show_expr(e.body)}"
        return paren(0, s)
    raise SourceError(f"cannot print {e!r}")


def show_program(p: Program) -> str:
    lines = []
    by_group: dict[int, list[FunDef]] = {}
    for d in p.defs:
        by_group.setdefault(d.rec_group, []).append(d)
    for group in sorted(by_group):
        defs = by_group[group]
        for i, d in enumerate(defs):
            kw = "let rec" if i == 0 else "and"
            params = "".join(f" {q}" for q in d.params)
            lines.append(f"{kw} {d.name}{params} = {show_expr(d.body)}")
    if p.main is not None:
        lines.append(show_expr(p.main))
    return "\n".join(lines) + "\n"

"""Constraint generation: golden clause sets and instrumentation."""

import pytest

from hornopt.gen import GenError, generate, instrument_counters
from hornopt.hccs import (
    ExistsHead, PredHead, PureHead, parse_clause, show_clause,
)
from hornopt.rtypes import show_rtype
from hornopt.surface import parse_program


def clause_strings(result):
    return sorted(show_clause(c) for c in result.clauses)


def norm(result, renaming):
    out = []
    for c in result.clauses:
        s = show_clause(c)
        for old, new in renaming.items():
            s = s.replace(old, new)
        out.append(s)
    return sorted(out)


SUM_SRC = """
(*@ type sum : (x:{P(x)}) -> {y: Q(x, y)} *)
let rec sum x = if x = 0 then 0 else x + sum (x - 1)
"""


def test_sum_golden_clauses():
    g = generate(parse_program(SUM_SRC))
    # the temp holding the recursive result is the only generated name left
    names = {v for c in g.clauses for v in clause_vars(c)}
    temp = next(iter(names - {"x"}))
    assert norm(g, {temp: "y"}) == sorted([
        "Q(x, 0) <= P(x), x = 0",
        "P(x - 1) <= P(x), x <> 0",
        "Q(x, x + y) <= P(x), Q(x - 1, y), x <> 0",
    ])


def clause_vars(c):
    return c.free_vars()


def test_repeat_higher_order_clauses():
    src = """
(*@ type repeat : (f: (x:{P1(x)}) -> {y: P2(x, y)}) -> (n: int) -> (e: {P3(n, e)}) -> {r: r >= 0} *)
let rec repeat f n e = if n <= 0 then e else repeat f (n - 1) (f e)
"""
    g = generate(parse_program(src))
    names = {v for c in g.clauses for v in clause_vars(c)}
    temp = next(iter(names - {"n", "e"}))
    assert norm(g, {temp: "w"}) == sorted([
        "P1(e) <= P3(n, e), n > 0",
        "P3(n - 1, w) <= P3(n, e), P2(e, w), n > 0",
        "(e >= 0) <= P3(n, e), n <= 0",
    ])


def test_angelic_choice_emits_exists_head():
    src = """
(*@ type f : (x: int) -> {y: 0 = 1} *)
let rec f x = let n = read_int () in if n < 0 then x else f x
"""
    g = generate(parse_program(src))
    assert g.rand_preds == ["R1"]
    exist = [c for c in g.clauses if isinstance(c.head, ExistsHead)]
    assert len(exist) == 1
    plain = sorted(show_clause(c) for c in g.clauses
                   if not isinstance(c.head, ExistsHead))
    assert plain == ["(0 = 1) <= R1(x, n), n < 0"]


def test_auto_templates_spine_scope():
    # each argument position sees the preceding integer binders of its spine
    src = "let rec repeat f n e = if n <= 0 then e else repeat f (n - 1) (f e)"
    g = generate(parse_program(src))
    t = show_rtype(g.templates.types["repeat"])
    assert t == ("(f:((v1:{v1: P1(v1)}) -> {v2: P2(v1, v2)})) -> "
                 "(n:{n: P3(n)}) -> (e:{e: P4(n, e)}) -> {v3: P5(n, e, v3)}")


def test_clause_directives_are_appended():
    src = """
(*@ type g : (x:{P(x)}) -> {y: y = x} *)
(*@ clause P(a) <= a > 41 *)
let g x = x
"""
    g = generate(parse_program(src))
    assert "P(a) <= a > 41" in [show_clause(c) for c in g.clauses]


def test_instrument_counters_sum():
    prog = parse_program(SUM_SRC)
    inst = instrument_counters(prog, "sum")
    names = [d.name for d in inst.defs]
    assert names == ["sum_t", "sum"]
    assert list(inst.fun("sum_t").params) == ["x", "i", "c"]
    texts = [d.text for d in inst.directives if d.kind == "clause"]
    assert texts == ["Inv(x, i, c) <= c = 0 & i = x",
                     "Bnd(i, c) <= P(x), Inv(x, i, c)"]
    g = generate(inst)
    shown = [show_clause(c) for c in g.clauses]
    assert "Inv(x - 1, i, c + 1) <= P(x), Inv(x, i, c), x <> 0" in shown
    assert "Inv(x, x, 0) <= P1(x)" in shown  # wrapper entry
    assert "Inv(x, i, c) <= c = 0 && i = x" in shown
    assert "Bnd(i, c) <= P(x), Inv(x, i, c)" in shown


def test_instrument_requires_parameters():
    with pytest.raises(GenError):
        instrument_counters(parse_program("let rec k = 0 and h x = x"), "k")


def test_predicate_under_disjunction_rejected():
    # refinements may not place predicate symbols under a disjunction
    src = """
(*@ type f : (x:{P(x) || x = 0}) -> {y: y = x} *)
let f x = x
"""
    with pytest.raises(GenError):
        generate(parse_program(src))


def test_simplification_is_sound_for_sum():
    # unsimplified and simplified systems have the same predicate symbols
    g_raw = generate(parse_program(SUM_SRC), simplify=False)
    g = generate(parse_program(SUM_SRC))
    def preds(cs):
        out = set()
        for c in cs:
            out |= c.pred_vars()
        return out
    assert preds(g.clauses) <= preds(g_raw.clauses)
    assert {"P", "Q"} <= preds(g.clauses)

"""Surface syntax: lexing, parsing, normalization, printing."""

import pytest
from hypothesis import given, strategies as st

from hornopt.surface import (
    ANGELIC, DEMONIC, EApp, EIfz, EInt, ELet, EOp, ERand, EVar,
    SourceError, anf_program, expr_names, parse_program, show_program,
)


def parse(src):
    return parse_program(src)


def test_let_rec_and_main():
    p = parse("let rec sum x = if x = 0 then 0 else x + sum (x - 1)\n"
              "let main u = sum 5")
    assert [d.name for d in p.defs] == ["sum", "main"]
    assert list(p.fun("sum").params) == ["x"]
    assert p.main is None


def test_trailing_let_in_becomes_main():
    p = parse("let id x = x\nlet r = id 3 in r")
    assert p.main is not None
    assert isinstance(p.main, ELet)


def test_if_sugar_maps_then_to_nonzero():
    p = parse("let f x = if x then 1 else 2")
    body = p.fun("f").body
    assert isinstance(body, EIfz)
    # `then` runs when the condition is non-zero
    assert body.nonzero == EInt(1)
    assert body.zero == EInt(2)


def test_ifz_sugar_maps_then_to_zero():
    p = parse("let f x = ifz x then 1 else 2")
    body = p.fun("f").body
    assert body.zero == EInt(1)
    assert body.nonzero == EInt(2)


def test_read_int_and_stars():
    p = parse("let f u = read_int ()\nlet g u = *exists*\nlet h u = *forall*")
    assert p.fun("f").body == ERand(ANGELIC)
    assert p.fun("g").body == ERand(ANGELIC)
    assert p.fun("h").body == ERand(DEMONIC)


def test_mutual_recursion_groups():
    p = parse("let rec even n = if n = 0 then 1 else odd (n - 1)\n"
              "and odd n = if n = 0 then 0 else even (n - 1)")
    assert p.fun("even").rec_group == p.fun("odd").rec_group
    assert {d.name for d in p.group("even")} == {"even", "odd"}


def test_unary_minus():
    p = parse("let f x = -x + 1")
    body = p.fun("f").body
    assert isinstance(body, EOp) and body.op == "+"
    neg = body.args[0]
    assert neg == EOp("-", (EInt(0), EVar("x")))


def test_directives_parsed():
    p = parse("(*@ type sum : (x:{P(x)}) -> {y: Q(x, y)} *)\n"
              "(*@ maximize P *)\n"
              "(*@ prioritize P < Q *)\n"
              "let rec sum x = x")
    kinds = [d.kind for d in p.directives]
    assert kinds == ["type", "maximize", "prioritize"]
    assert p.directives[2].name == "P" and p.directives[2].second == "Q"


def test_nested_comments():
    p = parse("let f x = (* outer (* inner *) still out *) x")
    assert p.fun("f").body == EVar("x")


def test_duplicate_definition_rejected():
    with pytest.raises(SourceError):
        parse("let f x = x\nlet f y = y")


def test_comparison_is_ordinary_expression():
    p = parse("let f x y = x <= y")
    body = p.fun("f").body
    assert isinstance(body, EOp) and body.op == "<="


def test_neq_spelling():
    p = parse("let f x = x != 0")
    assert p.fun("f").body.op == "<>"


# --- normalization ---------------------------------------------------------


def anf_body(src, name):
    return anf_program(parse(src)).fun(name).body


def no_nested_work(e, in_binding=False):
    """Every application/operator argument is a variable or literal."""
    if isinstance(e, (EVar, EInt, ERand)):
        return True
    if isinstance(e, EApp):
        return no_nested_work(e.fun) and isinstance(e.arg, (EVar, EInt))
    if isinstance(e, EOp):
        return all(isinstance(a, (EVar, EInt)) for a in e.args)
    if isinstance(e, EIfz):
        return (isinstance(e.cond, (EVar, EInt))
                and no_nested_work(e.zero) and no_nested_work(e.nonzero))
    if isinstance(e, ELet):
        if isinstance(e.bound, ELet):
            return False
        return no_nested_work(e.bound, True) and no_nested_work(e.body)
    return False


def test_anf_flattens_compound_arguments():
    b = anf_body("let rec sum x = if x = 0 then 0 else x + sum (x - 1)", "sum")
    assert no_nested_work(b)


def test_anf_no_let_in_let_binding():
    b = anf_body("let f x = (let y = x + 1 in y + y) * 2", "f")
    assert no_nested_work(b)


EXPRS = st.deferred(lambda: st.one_of(
    st.integers(-9, 9).map(EInt),
    st.sampled_from("xyz").map(EVar),
    st.tuples(EXPRS, st.sampled_from("xyz"), EXPRS).map(
        lambda t: ELet(t[1], t[0], t[2])),
    st.tuples(st.sampled_from(["+", "-", "*"]), EXPRS, EXPRS).map(
        lambda t: EOp(t[0], (t[1], t[2]))),
    st.tuples(EXPRS, EXPRS, EXPRS).map(lambda t: EIfz(t[0], t[1], t[2])),
))


@given(EXPRS)
def test_show_parse_round_trip(e):
    from hornopt.surface import show_expr
    src = f"let f x y z = {show_expr(e)}"
    again = parse(src).fun("f").body
    assert again == e


@given(EXPRS)
def test_anf_preserves_free_variables(e):
    from hornopt.surface import FunDef, Program
    p = Program((FunDef("f", ["x", "y", "z"], e, 0),), None, ())
    q = anf_program(p)
    free = {"x", "y", "z", "f"}
    assert expr_names(e) - free == set()
    # normalization introduces only fresh binders, never frees
    introduced = expr_names(q.fun("f").body) - expr_names(e)
    for nm in introduced:
        assert nm not in free

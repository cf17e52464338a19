"""Interpreter: small-step machine, oracles, budgets."""

from hypothesis import given, strategies as st

from hornopt.eval import (
    DEFAULT_BUDGET, FixedOracle, Machine, SeededOracle, apply_to_ints, run,
)
from hornopt.surface import EApp, EInt, EVar, parse_program

SUM = parse_program(
    "let rec sum x = if x = 0 then 0 else x + sum (x - 1)")
REPEAT = parse_program(
    "let succ x = x + 1\n"
    "let rec repeat f n e = if n <= 0 then e else repeat f (n - 1) (f e)")
EVENODD = parse_program(
    "let rec even n = if n = 0 then 1 else odd (n - 1)\n"
    "and odd n = if n = 0 then 0 else even (n - 1)")
ANGEL = parse_program(
    "let rec f x = let n = read_int () in if n < 0 then x else f x")


def test_sum_of_five():
    out = apply_to_ints(SUM, "sum", [5])
    assert out.kind == "value" and out.int_value == 15


def test_sum_negative_diverges():
    out = apply_to_ints(SUM, "sum", [-1], budget=5000)
    assert out.kind == "budget"


def test_higher_order_repeat():
    e = EApp(EApp(EApp(EVar("repeat"), EVar("succ")), EInt(4)), EInt(10))
    out = run(REPEAT, e)
    assert out.kind == "value" and out.int_value == 14


def test_mutual_recursion():
    assert apply_to_ints(EVENODD, "even", [10]).int_value == 1
    assert apply_to_ints(EVENODD, "odd", [10]).int_value == 0


def test_angelic_oracle_controls_termination():
    # keep answering 1: f never returns
    out = apply_to_ints(ANGEL, "f", [7], budget=2000, oracle=FixedOracle([1]))
    assert out.kind == "budget"
    # answer -3 immediately: f returns its argument
    out = apply_to_ints(ANGEL, "f", [7], oracle=FixedOracle([-3]))
    assert out.kind == "value" and out.int_value == 7


def test_application_hook_counts_calls():
    calls = []
    out = apply_to_ints(SUM, "sum", [3], on_apply=calls.append)
    assert out.int_value == 6
    assert calls.count("sum") == 4  # sum 3, 2, 1, 0


def test_over_application_gets_stuck():
    p = parse_program("let id x = x")
    e = EApp(EApp(EVar("id"), EInt(1)), EInt(2))
    out = run(p, e)
    assert out.kind == "stuck"


def test_seeded_oracle_is_reproducible():
    a = SeededOracle(42)
    b = SeededOracle(42)
    assert [a.draw("exists") for _ in range(10)] == \
           [b.draw("exists") for _ in range(10)]


@given(st.integers(0, 25))
def test_sum_matches_closed_form(n):
    out = apply_to_ints(SUM, "sum", [n])
    assert out.int_value == n * (n + 1) // 2


@given(st.integers(0, 30))
def test_even_odd_parity(n):
    assert apply_to_ints(EVENODD, "even", [n]).int_value == (1 - n % 2)


def test_budget_default_is_large():
    assert DEFAULT_BUDGET == 100_000

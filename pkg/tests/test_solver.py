"""Solver tests: search schedules, the Farkas row discipline, Skolemized
existential heads, trivial-predicate slicing, and two frozen improvement
traces (nontermination precondition, counter bound) that the optimization
layer builds on."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hornopt.hccs import (
    ATOMIC,
    Const,
    ExistsHead,
    HornClause,
    NonlinearTerm,
    Pred,
    PredApp,
    PredHead,
    Shape,
    TRUE,
    Var,
    eval_formula,
    mk_not,
    parse_formula,
    parse_hccs,
    term_to_poly,
)
from hornopt.smtio import SmtSolver
from hornopt.solver import (
    NamePool,
    bound_schedule,
    build_clause,
    clause_names,
    linear_form,
    make_assignment,
    shape_schedule,
    slice_trivial,
    solve,
)


def smt(timeout=90.0):
    return SmtSolver(timeout=timeout)


def holds(p: Pred, *vals: int) -> bool:
    return eval_formula(p.body, dict(zip(p.params, vals)))


def improve_max(clauses, name, incumbent):
    """Clauses demanding a strictly weaker value for one predicate."""
    args = tuple(Var(q) for q in incumbent.params)
    weaker = HornClause(PredHead(PredApp(name, args)), (),
                        incumbent.apply(args))
    strict = HornClause(
        ExistsHead(incumbent.params, PredApp(name, args),
                   mk_not(incumbent.apply(args))), (), TRUE)
    return list(clauses) + [weaker, strict]


# --- schedules ---------------------------------------------------------------


def test_bound_schedule_doubles_up_to_cap():
    assert bound_schedule(1) == [1]
    assert bound_schedule(2) == [1, 2]
    assert bound_schedule(4) == [1, 2, 4]
    assert bound_schedule(6) == [1, 2, 4, 6]
    assert bound_schedule(8) == [1, 2, 4, 8]


def test_shape_schedule_cheapest_first():
    assert shape_schedule(ATOMIC, Shape(2, 2)) == [
        Shape(1, 1), Shape(2, 1), Shape(1, 2), Shape(2, 2)]
    # resuming from a larger start skips the cheaper shapes
    assert shape_schedule(Shape(2, 1), Shape(2, 2)) == [
        Shape(2, 1), Shape(1, 2), Shape(2, 2)]
    # a start beyond the restriction still gets tried once
    assert shape_schedule(Shape(3, 1), Shape(2, 1)) == [Shape(3, 1)]


# --- linear forms ------------------------------------------------------------


def test_linear_form_buckets_by_universal():
    t = (Var("c0") + Var("c1") * Var("x") + Const(3) * Var("x")
         + Var("i") + Const(7))
    coefs, const = linear_form(t, ["x", "i"])
    assert term_to_poly(coefs["x"]) == {("c1",): 1, (): 3}
    assert term_to_poly(coefs["i"]) == {(): 1}
    assert term_to_poly(const) == {("c0",): 1, (): 7}


def test_linear_form_rejects_products_of_universals():
    with pytest.raises(NonlinearTerm):
        linear_form(Var("x") * Var("i"), ["x", "i"])


@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4),
       st.integers(-4, 4))
def test_linear_form_reconstructs_the_term(a, b, c, d):
    t = (Const(a) + Const(b) * Var("x") + Var("c0") * Var("x")
         + Const(c) * Var("i") + Const(d) * Var("c1"))
    coefs, const = linear_form(t, ["x", "i"])
    rebuilt = const
    for u, coef in coefs.items():
        rebuilt = rebuilt + coef * Var(u)
    assert term_to_poly(rebuilt) == term_to_poly(t)


# --- Farkas reduction --------------------------------------------------------


def test_farkas_multiplier_count_per_disjunct():
    # false <= P(x) & x=0 refutes one conjunction of three rows (the
    # equality contributes two); the step clause negates its head and
    # splits on the x<>0 guard: two disjuncts of three rows each.
    clauses, _ = parse_hccs("""
    false <= P(x), x = 0
    P(x - 1) <= P(x), x <> 0
    """)
    pool = NamePool(clause_names(clauses))
    asg = make_assignment({"P": ["x"]}, ATOMIC, {}, pool)
    builds = [build_clause(c, asg.templates, asg.order, pool)
              for c in clauses]
    assert [len(b.multipliers) for b in builds] == [3, 6]
    assert all(not b.skolems for b in builds)


def test_skolem_coefficients_one_per_universal_plus_constant():
    clauses, _ = parse_hccs("exists v . R(x, y, v) <= Q(x), Q(y)")
    pool = NamePool(clause_names(clauses))
    asg = make_assignment({"R": ["x", "y", "v"], "Q": ["x"]}, ATOMIC, {},
                          pool)
    build = build_clause(clauses[0], asg.templates, asg.order, pool)
    # witness v = z0 + z1*x + z2*y over the two clause universals
    assert len(build.skolems) == 3


# --- solving -----------------------------------------------------------------


def test_false_from_true_has_no_solution():
    clauses, _ = parse_hccs("false <= true")
    assert solve(clauses, solver=smt()).kind == "nosol"


def test_forced_contradiction_is_nosol():
    clauses, _ = parse_hccs("""
    x <= 5 <= P(x)
    P(x) <= true
    """)
    assert solve(clauses, solver=smt(), bound_max=2).kind == "nosol"


def test_fixed_predicates_pass_through():
    clauses, _ = parse_hccs("P(x) <= Q(x)")
    q = Pred(("x",), parse_formula("x >= 3"))
    r = solve(clauses, fixed={"Q": q}, solver=smt())
    assert r.kind == "sol"
    assert r.subst["Q"] is q
    assert holds(r.subst["P"], 3) and holds(r.subst["P"], 100)


def test_side_constraints_steer_the_model():
    clauses, _ = parse_hccs("P(x) <= true")
    free = solve(clauses, solver=smt())
    assert free.kind == "sol" and free.model["c_P_1"] == 0

    def side(asg, pool):
        c0 = asg.by_pred["P"][0]
        return [parse_formula(f"{c0} >= 1")]

    steered = solve(clauses, side=side, solver=smt())
    assert steered.kind == "sol" and steered.model["c_P_1"] >= 1


def test_exists_head_solved_with_witness():
    clauses, _ = parse_hccs("""
    exists v . R(n, v) <= true
    Q(n, r) <= R(n, r), 0 <= r
    """)
    r = solve(clauses, pred_params={"R": ["n", "v"], "Q": ["n", "r"]},
              solver=smt())
    assert r.kind == "sol"


def test_exists_head_witness_may_depend_on_universals():
    clauses, _ = parse_hccs("exists v . R(x, v) & v = x + 1 <= true")
    r = solve(clauses, solver=smt())
    assert r.kind == "sol"
    assert holds(r.subst["R"], 7, 8)


def test_exists_head_conflicts_are_nosol():
    clauses, _ = parse_hccs("""
    exists v . R(x, v) <= true
    false <= R(x, y)
    """)
    assert solve(clauses, solver=smt()).kind == "nosol"


def test_nosol_confirmed_by_bruteforce():
    # P must contain 1, be closed under decrement away from 0, and avoid 0:
    # no atomic template with small coefficients can do all three.
    text = """
    P(1) <= true
    P(x - 1) <= P(x), x <> 0
    false <= P(x), x = 0
    """
    clauses, _ = parse_hccs(text)
    assert solve(clauses, solver=smt(), bound_max=2).kind == "nosol"

    def grid_valid(c0, c1):
        inside = lambda x: c0 + c1 * x >= 0
        if not inside(1):
            return False
        for x in range(-6, 7):
            if inside(x) and x != 0 and not inside(x - 1):
                return False
        return not inside(0)

    assert not any(grid_valid(c0, c1)
                   for c0 in range(-2, 3) for c1 in range(-2, 3))


# --- frozen improvement traces ----------------------------------------------


def test_nontermination_precondition_trace():
    # precondition for running forever in a decrement loop that exits at 0
    clauses, _ = parse_hccs("""
    false <= P(x), x = 0
    P(x - 1) <= P(x), x <> 0
    """)
    s = smt()
    r0 = solve(clauses, solver=s)
    assert r0.kind == "sol"
    p0 = r0.subst["P"]
    assert not any(holds(p0, x) for x in (-2, -1, 0, 1, 5))  # bottom

    r1 = solve(improve_max(clauses, "P", p0), solver=s)
    assert r1.kind == "sol"
    p1 = r1.subst["P"]
    assert holds(p1, -1) and holds(p1, -3) and holds(p1, -10)
    assert not holds(p1, 0) and not holds(p1, 1) and not holds(p1, 7)

    r2 = solve(improve_max(clauses, "P", p1), solver=s)
    assert r2.kind == "nosol"  # x < 0 is as weak as atomic templates get


def test_counter_bound_staged_trace():
    # instrumented decrement loop: P precondition, Inv counter invariant,
    # Bnd the bound template; weakening P forces Inv and the bound along
    clauses, _ = parse_hccs("""
    Inv(x, i, c) <= c = 0 & i = x
    P(x - 1) <= P(x), Inv(x, i, c), x <> 0
    Inv(x - 1, i, c + 1) <= P(x), Inv(x, i, c), x <> 0
    Bnd(i, c) <= P(x), Inv(x, i, c)
    """)
    bnd = Pred(("i", "c"), parse_formula("0 <= c & c <= k0 + k1 * i"))
    pp = {"P": ["x"], "Inv": ["x", "i", "c"], "Bnd": ["i", "c"]}
    s = smt()

    def step(cs, start):
        return solve(cs, pred_params=pp, user_templates={"Bnd": bnd},
                     start_shape=start, restriction=Shape(2, 1),
                     bound_max=1, pred_order=["P"], solver=s)

    r0 = step(clauses, None)
    assert r0.kind == "sol"
    assert not holds(r0.subst["P"], 0) and not holds(r0.subst["P"], 1)

    r1 = step(improve_max(clauses, "P", r0.subst["P"]), r0.shape)
    assert r1.kind == "sol"
    p1, inv1 = r1.subst["P"], r1.subst["Inv"]
    assert holds(p1, 0) and not holds(p1, 1) and not holds(p1, -1)
    assert holds(inv1, 4, 4, 0) and not holds(inv1, 4, 4, 1)

    r2 = step(improve_max(clauses, "P", p1), r1.shape)
    assert r2.kind == "sol"
    p2, inv2, bnd2 = r2.subst["P"], r2.subst["Inv"], r2.subst["Bnd"]
    assert holds(p2, 0) and holds(p2, 1) and holds(p2, 9)
    assert not holds(p2, -1)
    # counter tracks the distance travelled and stays below the input
    assert holds(inv2, 2, 5, 1) and not holds(inv2, 2, 1, 0)
    assert holds(bnd2, 5, 3) and holds(bnd2, 5, 0)
    assert not holds(bnd2, 5, 6) and not holds(bnd2, 5, -1)

    r3 = step(improve_max(clauses, "P", p2), r2.shape)
    assert r3.kind == "nosol"  # x >= 0 is the weakest workable precondition


# --- trivial-predicate slicing ----------------------------------------------


def test_slice_trivial_cascades():
    clauses, _ = parse_hccs("""
    P(x) <= S(x)
    P(x) <= true
    """)
    remaining, forced = slice_trivial(clauses)
    # S never appears in a head -> false; P then only as a head -> true
    assert remaining == []
    assert str(forced["S"].body) == str(parse_formula("false"))
    assert str(forced["P"].body) == str(parse_formula("true"))


def test_slice_trivial_respects_protection():
    clauses, _ = parse_hccs("""
    P(x) <= S(x)
    P(x) <= true
    """)
    remaining, forced = slice_trivial(clauses, protect={"P"})
    assert sorted(forced) == ["S"]
    assert len(remaining) == 1 and remaining[0].head.app.name == "P"


def test_slice_trivial_keeps_existential_heads():
    clauses, _ = parse_hccs("exists v . R(x, v) <= true")
    remaining, forced = slice_trivial(clauses)
    assert forced == {}
    assert len(remaining) == 1


# --- solution hygiene --------------------------------------------------------


@settings(deadline=None, max_examples=8)
@given(st.integers(-2, 2), st.integers(-2, 2))
def test_accepted_solutions_survive_the_grid(a, b):
    # whatever the solver returns for a reachability-style system must
    # hold pointwise on a small grid (acceptance property in miniature)
    clauses, _ = parse_hccs(f"""
    P({a}) <= true
    P(x + {b}) <= P(x), x <> 7
    """)
    r = solve(clauses, solver=smt(), bound_max=2)
    assert r.kind in ("sol", "nosol")
    if r.kind == "sol":
        p = r.subst["P"]
        assert holds(p, a)
        for x in range(-8, 9):
            if holds(p, x) and x != 7:
                assert holds(p, x + b)

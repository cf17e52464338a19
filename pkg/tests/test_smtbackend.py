"""Property tests for the bundled SMT backend.

The backend is the foundation everything else stands on, so its pieces are
checked against brute force: Cooper elimination against enumeration on
box-bounded formulas, the simplex/integer search against grid search, and
formula lowering against direct evaluation.
"""

import itertools

from hypothesis import given, settings, strategies as st

from hornopt.hccs import (
    Add, And, Atom, Const, FalseF, Formula, Implies, Mul, Not, Or, TrueF,
    Var, eval_formula,
)
from hornopt.smtbackend import (
    Backend, GiveUp, c_eval, c_neg, integer_point, model_by_projection,
    qe1, to_cform,
)

VARS = ("x", "y", "z")


def terms(depth=2):
    base = st.one_of(
        st.integers(-4, 4).map(Const),
        st.sampled_from(VARS).map(Var),
    )
    if depth == 0:
        return base
    sub = terms(depth - 1)
    return st.one_of(
        base,
        st.tuples(sub, sub).map(lambda p: Add(p[0], p[1])),
        st.tuples(st.integers(-3, 3).map(Const), sub).map(lambda p: Mul(p[0], p[1])),
    )


def formulas(depth=2):
    base = st.one_of(
        st.just(TrueF()),
        st.just(FalseF()),
        st.tuples(st.sampled_from(["<=", "<", "=", ">=", ">", "<>"]),
                  terms(), terms()).map(lambda t: Atom(t[0], t[1], t[2])),
    )
    if depth == 0:
        return base
    sub = formulas(depth - 1)
    return st.one_of(
        base,
        sub.map(Not),
        st.lists(sub, min_size=1, max_size=3).map(lambda xs: And(tuple(xs))),
        st.lists(sub, min_size=1, max_size=3).map(lambda xs: Or(tuple(xs))),
        st.tuples(sub, sub).map(lambda p: Implies(p[0], p[1])),
    )


ENVS = [dict(zip(VARS, vals))
        for vals in itertools.product((-3, -1, 0, 1, 2), repeat=3)]


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_lowering_agrees_with_evaluation(f: Formula):
    cf = to_cform(f)
    for env in ENVS[::7]:
        assert c_eval(cf, env) == eval_formula(f, env)


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_negation_is_complementary(f: Formula):
    cf = to_cform(f)
    ncf = c_neg(cf)
    for env in ENVS[::11]:
        assert c_eval(ncf, env) == (not c_eval(cf, env))


def _box(var, lo, hi):
    return And((Atom(">=", Var(var), Const(lo)),
                Atom("<=", Var(var), Const(hi))))


@settings(max_examples=150, deadline=None)
@given(formulas(depth=1))
def test_cooper_elimination_matches_enumeration(f: Formula):
    # Bound x so that exists-x is decidable by brute force, then compare
    # the eliminated formula pointwise over the remaining variables.
    bounded = And((f, _box("x", -6, 6)))
    cf = to_cform(bounded)
    try:
        elim = qe1("x", cf)
    except GiveUp:
        return
    for y in (-3, 0, 2):
        for z in (-2, 0, 3):
            env = {"y": y, "z": z}
            expect = any(c_eval(cf, {**env, "x": x}) for x in range(-6, 7))
            assert c_eval(elim, env) == expect


@settings(max_examples=100, deadline=None)
@given(formulas(depth=1))
def test_projection_models_are_models(f: Formula):
    bounded = And((f, _box("x", -5, 5), _box("y", -5, 5), _box("z", -5, 5)))
    cf = to_cform(bounded)
    try:
        model = model_by_projection(cf, list(VARS))
    except GiveUp:
        return
    grid = (c_eval(cf, dict(zip(VARS, v)))
            for v in itertools.product(range(-5, 6), repeat=3))
    if model is None:
        assert not any(grid)
    else:
        assert c_eval(cf, model)


rows_strategy = st.lists(
    st.tuples(
        st.fixed_dictionaries({v: st.integers(-3, 3) for v in ("a", "b", "c")}),
        st.integers(-6, 6),
    ),
    min_size=1, max_size=5,
)


@settings(max_examples=150, deadline=None)
@given(rows_strategy)
def test_integer_point_against_grid(rows):
    variables = ["a", "b", "c"]
    try:
        got = integer_point([(dict(c), k) for c, k in rows], variables)
    except GiveUp:
        return
    if got is not None:
        for coeffs, const in rows:
            assert const + sum(c * got[v] for v, c in coeffs.items()) >= 0
    else:
        # rationally infeasible: certainly no integer point anywhere
        for vals in itertools.product(range(-4, 5), repeat=3):
            env = dict(zip(variables, vals))
            assert not all(const + sum(c * env[v] for v, c in coeffs.items()) >= 0
                           for coeffs, const in rows)


def run(script: str) -> str:
    return Backend().run_script(script)


def test_script_basic_sat_model():
    out = run("(declare-const x Int) (assert (>= x 5)) (check-sat) (get-model)")
    assert out.splitlines()[0] == "sat"
    assert "(define-fun x () Int 5)" in out


def test_script_unsat():
    out = run("(declare-const x Int) (assert (>= x 5)) (assert (<= x 4)) (check-sat)")
    assert out.strip() == "unsat"


def test_script_quantified_validity():
    assert run("(assert (forall ((x Int)) (=> (>= x 0) (>= (+ x 1) 0)))) "
               "(check-sat)").strip() == "sat"
    assert run("(assert (forall ((x Int)) (>= x 0))) (check-sat)").strip() == "unsat"


def test_script_divisibility():
    assert run("(assert (exists ((x Int)) (= (* 2 x) 7))) (check-sat)").strip() == "unsat"
    assert run("(assert (exists ((x Int)) (= (* 2 x) 8))) (check-sat)").strip() == "sat"


def test_bilinear_template_minimal_model():
    # first model in ascending L1 order: all-zero coefficients
    out = run("""
    (declare-const c0 Int)
    (declare-const c1 Int)
    (assert (and (<= (- 2) c0) (<= c0 2)))
    (assert (and (<= (- 2) c1) (<= c1 2)))
    (assert (forall ((x Int)) (=> (and (>= x 0) (<= x 5))
                                  (>= (+ c0 (* c1 x)) 0))))
    (check-sat) (get-model)
    """)
    assert "(define-fun c0 () Int 0)" in out
    assert "(define-fun c1 () Int 0)" in out


def test_bilinear_template_forced_model():
    out = run("""
    (declare-const c0 Int)
    (declare-const c1 Int)
    (assert (and (<= (- 2) c0) (<= c0 2)))
    (assert (and (<= (- 2) c1) (<= c1 2)))
    (assert (<= c0 (- 1)))
    (assert (forall ((x Int)) (=> (>= x 1) (>= (+ c0 (* c1 x)) 0))))
    (check-sat) (get-model)
    """)
    assert "(define-fun c0 () Int (- 1))" in out
    assert "(define-fun c1 () Int 1)" in out


def test_integer_only_feasibility():
    # -w1 + 2 w2 = 0 with 3 w1 >= 1 has no solution with w1 odd; minimal is (2, 1)
    out = run("""
    (declare-const w1 Int)
    (declare-const w2 Int)
    (assert (>= w1 0)) (assert (>= w2 0))
    (assert (= (+ (* (- 1) w1) (* 2 w2)) 0))
    (assert (>= (* 3 w1) 1))
    (check-sat) (get-model)
    """)
    assert "(define-fun w1 () Int 2)" in out
    assert "(define-fun w2 () Int 1)" in out


def test_unbounded_product_reports_unknown():
    out = run("""
    (declare-const a Int)
    (declare-const b Int)
    (assert (>= (* a b) 7))
    (check-sat)
    """)
    assert out.strip() == "unknown"


def test_timeout_option_accepted():
    out = run("""
    (set-option :timeout 10000)
    (declare-const x Int)
    (assert (>= x 0))
    (check-sat)
    """)
    assert out.strip() == "sat"

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cycledeg.errors import ExprSyntaxError, NonFiniteValue, UnknownFunction, UnknownVariable
from cycledeg.exprcore import (
    SystemSpec,
    compile_vector,
    differentiate,
    evaluate,
    free_variables,
    parse_expression,
    to_text,
)


def ev(text, x, t=0.0, n=None, eps=0.0):
    return evaluate(parse_expression(text, n or len(x)), t, np.asarray(x, float), eps)


def test_parse_and_evaluate_examples():
    assert ev("x1*x2 + sin(t)", [2, 3]) == 6.0
    assert ev("-x1^2", [3]) == -9.0
    assert ev("sin(t)", [0.0]) == 0.0
    assert abs(ev("exp(x1)", [1.0]) - 2.718281828459045) <= 1e-15


def test_unknown_variable_and_function():
    with pytest.raises(UnknownVariable):
        parse_expression("x3", 2)
    with pytest.raises(UnknownFunction):
        parse_expression("sinh(x1)", 1)


@pytest.mark.parametrize("text", ["x1 +", "(x1", "x1 ^ 1.5", "2 3", "x1 $ 2", ""])
def test_syntax_errors_carry_position(text):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expression(text, 1)
    assert info.value.position >= 0


def test_nonfinite_value_names_subexpression():
    with pytest.raises(NonFiniteValue) as info:
        ev("2 + 1/x1", [0.0])
    assert "x1" in str(info.value)
    cv = compile_vector([parse_expression("1/x1", 1)])
    with pytest.raises(NonFiniteValue):
        cv.scalar(0.0, np.array([0.0]))


def test_derivative_examples():
    e = parse_expression("x1^2", 1)
    assert evaluate(differentiate(e, "x1"), 0, np.array([3.0])) == 6.0
    d = differentiate(parse_expression("sin(x1)", 2), "x2")
    assert evaluate(d, 0, np.array([0.4, 1.0])) == 0.0
    d = differentiate(parse_expression("x1*x2", 2), "x1")
    assert evaluate(d, 0, np.array([5.0, 7.0])) == 7.0


def test_abs_derivative_is_sign():
    d = differentiate(parse_expression("abs(x1)", 1), "x1")
    assert [evaluate(d, 0, np.array([v])) for v in (-2.0, 0.0, 3.0)] == [-1.0, 0.0, 1.0]


def test_free_variables():
    assert free_variables(parse_expression("x1*t + eps*x2", 2)) == {"x1", "x2", "t", "eps"}


def test_psi_must_be_autonomous():
    with pytest.raises(Exception):
        SystemSpec.from_text(["x1 + t"], ["0"], 1.0)


# random expression trees over x1, x2 with singularity-free building blocks
_leaf = st.sampled_from(["x1", "x2", "1.5", "0.25", "3"])


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda a: f"({a[0]} {a[1]} {a[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda a: f"{a[0]}({a[1]})"),
        children.map(lambda a: f"({a})^2"),
        children.map(lambda a: f"-{a}"),
        children.map(lambda a: f"{a}/(1 + ({a})^2)"),
        children.map(lambda a: f"sqrt(2 + sin({a}))"),
        children.map(lambda a: f"log(3 + cos({a}))"),
    )


exprs = st.recursive(_leaf, _combine, max_leaves=8)
points = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@settings(max_examples=100, deadline=None)
@given(exprs, points)
def test_derivative_matches_finite_differences(text, p):
    e = parse_expression(text, 2)
    x = np.array(p)
    f0 = evaluate(e, 0.0, x)
    if not math.isfinite(f0) or abs(f0) > 1e8:
        return
    h = 1e-5
    for j, v in enumerate(("x1", "x2")):
        dx = np.zeros(2)
        dx[j] = h
        fd = (evaluate(e, 0.0, x + dx) - evaluate(e, 0.0, x - dx)) / (2 * h)
        d = evaluate(differentiate(e, v), 0.0, x)
        assert abs(d - fd) <= 1e-6 * max(1.0, abs(d)) + 1e-9 * max(1.0, abs(f0))


@settings(max_examples=100, deadline=None)
@given(exprs, points)
def test_print_parse_round_trip(text, p):
    e = parse_expression(text, 2)
    back = parse_expression(to_text(e), 2)
    x = np.array(p)
    a, b = evaluate(e, 0.0, x), evaluate(back, 0.0, x)
    assert a == pytest.approx(b, rel=1e-14, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(exprs, points)
def test_compiled_agrees_with_tree_walk(text, p):
    e = parse_expression(text, 2)
    cv = compile_vector([e])
    x = np.array(p)
    ref = evaluate(e, 0.0, x)
    assert cv.scalar(0.0, x)[0] == pytest.approx(ref, rel=1e-13, abs=1e-13)
    batch = cv.batch(0.0, np.column_stack([x, x]))
    assert np.allclose(batch[0], ref, rtol=1e-13, atol=1e-13)


def test_jacobian_matches_finite_differences(rng):
    spec = SystemSpec.from_text(["x2", "(1 - x1^2)*x2 - x1"], ["cos(t)*x1", "eps*x2"], 6.0)
    h = 1e-6
    for _ in range(20):
        x = rng.uniform(-2, 2, 2)
        fd = np.column_stack([(spec.field(x + h * e) - spec.field(x - h * e)) / (2 * h) for e in np.eye(2)])
        J = spec.jacobian(x)
        assert np.max(np.abs(J - fd)) <= 1e-6 * max(1.0, np.max(np.abs(J)))

"""Formula layer: parsing, evaluation, formatting round-trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atlasdiffeo.expr import (
    ExprError,
    evaluate,
    evaluate_at_points,
    format_expr,
    parse_expr,
)


def test_numbers_and_vars():
    assert evaluate(parse_expr("3.5"), {}) == 3.5
    assert evaluate(parse_expr("x1"), {"x1": 2.0}) == 2.0
    assert evaluate(parse_expr("x2 - x1"), {"x1": 1.0, "x2": 5.0}) == 4.0


def test_precedence_and_power():
    e = parse_expr("2 + 3 * 4 ^ 2")
    assert evaluate(e, {}) == 50.0
    # right-associative power
    assert evaluate(parse_expr("2 ^ 3 ^ 2"), {}) == 512.0
    assert evaluate(parse_expr("-2 ^ 2"), {}) == -4.0


def test_functions():
    env = {"x1": 0.5}
    assert evaluate(parse_expr("sin(x1)"), env) == pytest.approx(math.sin(0.5))
    assert evaluate(parse_expr("exp(log(x1))"), env) == pytest.approx(0.5)
    assert evaluate(parse_expr("sqrt(x1 * x1)"), env) == pytest.approx(0.5)
    assert evaluate(parse_expr("tanh(0)"), {}) == 0.0
    assert evaluate(parse_expr("abs(0 - 3)"), {}) == 3.0
    assert evaluate(parse_expr("pi"), {}) == pytest.approx(math.pi)


def test_min_max_variadic():
    assert evaluate(parse_expr("min(3, 1, 2)"), {}) == 1.0
    assert evaluate(parse_expr("max(3, 1, 2)"), {}) == 3.0
    with pytest.raises(ExprError):
        parse_expr("min(3)")


def test_evaluate_at_points_binds_coordinates():
    pts = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, -1.0]])
    vals = evaluate_at_points(parse_expr("x1 + 10 * x2"), pts)
    assert vals.shape == (3,)
    assert np.allclose(vals, [21.0, 43.0, -10.0])


def test_evaluate_at_points_broadcasts_constants():
    pts = np.zeros((4, 2))
    vals = evaluate_at_points(parse_expr("7"), pts)
    assert vals.shape == (4,)
    assert np.all(vals == 7.0)


def test_parse_errors():
    for bad in ("", "1 +", "sin()", "x0", "unknownfn(1)", "(1", "1 2"):
        with pytest.raises(ExprError):
            parse_expr(bad)


@st.composite
def exprs(draw, depth=0):
    """Random well-formed formula trees in x1, x2."""
    if depth > 3 or draw(st.booleans()):
        leaf = draw(st.sampled_from(["x1", "x2", "pi", "0.5", "2", "1.25"]))
        return leaf
    kind = draw(st.sampled_from(["bin", "neg", "call", "minmax"]))
    if kind == "bin":
        op = draw(st.sampled_from(["+", "-", "*", "/", "^"]))
        a = draw(exprs(depth=depth + 1))
        b = draw(exprs(depth=depth + 1))
        return f"({a}) {op} ({b})"
    if kind == "neg":
        return f"-({draw(exprs(depth=depth + 1))})"
    if kind == "call":
        fn = draw(st.sampled_from(["sin", "cos", "exp", "tanh", "abs"]))
        return f"{fn}({draw(exprs(depth=depth + 1))})"
    a = draw(exprs(depth=depth + 1))
    b = draw(exprs(depth=depth + 1))
    return f"{draw(st.sampled_from(['min', 'max']))}(({a}), ({b}))"


@given(exprs())
@settings(max_examples=200, deadline=None)
def test_format_parse_round_trip(text):
    tree = parse_expr(text)
    again = parse_expr(format_expr(tree))
    env = {"x1": 0.7, "x2": -0.3}
    v1 = evaluate(tree, env)
    v2 = evaluate(again, env)
    if math.isnan(v1):
        assert math.isnan(v2)
    else:
        assert v1 == pytest.approx(v2, rel=1e-12, abs=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=100, deadline=None)
def test_scalar_and_batched_evaluation_agree(a, b):
    tree = parse_expr("sin(x1) * x2 + cos(x1 * x2)")
    scalar = evaluate(tree, {"x1": a, "x2": b})
    batched = evaluate_at_points(tree, np.array([[a, b]]))[0]
    assert scalar == pytest.approx(batched, abs=1e-12)

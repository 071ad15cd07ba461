import numpy as np
import pytest
from hypothesis import given, strategies as st

from planar_atlas.expr import (ExpressionSyntaxError, Pair, Pow, Var, free_variables, parse_expression,
                               to_source, tokenize)
from planar_atlas.mapdef import parse_map


def test_tokenize_positions():
    toks = tokenize("  x^2 + 2.5*y")
    assert [t[1] for t in toks] == ["x", "^", "2", "+", "2.5", "*", "y", ""]
    assert toks[0][2] == 2


def test_power_binds_tighter_than_unary_minus():
    # -x^2 is -(x^2)
    pm = parse_map("(-x^2, y)", "real-xy")
    assert pm((3.0, 0.0))[0] == -9.0


def test_real_mode_pair():
    node = parse_expression("(x, y^3/3 + (x^2 - 1)*y)", "real-xy")
    assert isinstance(node, Pair)
    assert free_variables(node) == {"x", "y"}


def test_complex_mode_single_expression():
    node = parse_expression("z^3 + 2.5*zbar^2 + z")
    assert free_variables(node) == {"z", "zbar"}


@pytest.mark.parametrize("source, mode, fragment", [
    ("x +* y", "complex-z", "unexpected"),
    ("z^2.5", "complex-z", "non-integer exponent"),
    ("z^-1", "complex-z", "non-negative integer"),
    ("tan(z)", "complex-z", "unsupported function"),
    ("(x, y", "real-xy", "expected"),
    ("z $ 2", "complex-z", "unexpected character"),
    ("x + w", "complex-z", "unknown name"),
    ("(x, y) z", "real-xy", "trailing"),
])
def test_syntax_errors(source, mode, fragment):
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression(source, mode)
    assert fragment in str(err.value)
    assert 0 <= err.value.position <= len(source)


def test_error_position_points_at_offender():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("z + 2*tan(z)")
    assert err.value.position == 6


def test_xy_variables_rejected_in_complex_sources_of_real_mode():
    with pytest.raises(ValueError):
        parse_map("(z, y)", "real-xy")


# random expression trees over x, y for the print/parse fixed point
leaves = st.one_of(st.sampled_from(["x", "y", "1", "2.5", "0.5"]))


def _combine(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}"),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: f"{t[0]}({t[1]})"),
        children.map(lambda c: f"-{c}"),
    )


exprs = st.recursive(leaves, _combine, max_leaves=8)


@given(exprs, exprs)
def test_pretty_print_parse_fixed_point(a, b):
    source = f"({a}, {b})"
    tree = parse_expression(source, "real-xy")
    again = parse_expression(to_source(tree), "real-xy")
    assert again == tree
    p1 = parse_map(source, "real-xy")
    p2 = parse_map(to_source(tree), "real-xy")
    rng = np.random.default_rng(0)
    for p in rng.uniform(-2, 2, size=(5, 2)):
        assert np.array_equal(p1(p), p2(p))


def test_to_source_keeps_left_associativity():
    tree = parse_expression("(x - (y - 1), x / (y / 2))", "real-xy")
    assert to_source(tree) == "(x - (y - 1), x / (y / 2))"
    assert isinstance(parse_expression("(x^2, y)", "real-xy").first, Pow)
    assert parse_expression("(x, y)", "real-xy").first == Var("x")

import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_options.errors import ConfigError, ExpressionError
from threshold_options.expressions import parse_expression, tokenize


@pytest.mark.parametrize(
    "text, x, expected",
    [
        ("1 + 2 * 3", 0.0, 7.0),
        ("(1 + 2) * 3", 0.0, 9.0),
        ("-x^2", 3.0, -9.0),
        ("2^3^2", 0.0, 512.0),
        ("2^-1", 0.0, 0.5),
        ("8 / 4 / 2", 0.0, 1.0),
        ("10 - 4 - 3", 0.0, 3.0),
        ("0.03*x", 2.0, 0.06),
        ("sqrt(x) * 0.3", 4.0, 0.6),
        ("exp(log(x))", 5.5, 5.5),
        ("abs(x - 1)", 0.25, 0.75),
        ("pi * e", 0.0, math.pi * math.e),
        ("1.5e-3 * x", 2.0, 3e-3),
        ("--x", 2.0, 2.0),
    ],
)
def test_evaluation(text, x, expected):
    assert parse_expression(text)(x) == pytest.approx(expected, rel=1e-15)


def test_vectorised():
    f = parse_expression("0.5*(1 - x)*x")
    xs = np.linspace(0, 2, 5)
    np.testing.assert_allclose(f(xs), 0.5 * (1 - xs) * xs)
    assert parse_expression("3")(xs).shape == xs.shape


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("", "empty"),
        ("2 * (x", "column 7"),
        ("2 $ x", "column 3"),
        ("y + 1", "unknown name 'y'"),
        ("sin(x)", "unknown name 'sin'"),
        ("exp x", "expected '('"),
        ("1 2", "unexpected '2'"),
        ("x *", "end of input"),
    ],
)
def test_errors(text, fragment):
    with pytest.raises(ExpressionError, match=re.escape(fragment)):
        parse_expression(text)


def test_expression_error_is_config_error():
    assert issubclass(ExpressionError, ConfigError)


def test_tokens_carry_positions():
    assert tokenize("x+ 12") == [("name", "x", 0), ("op", "+", 1), ("num", "12", 3), ("end", "", 5)]


_atoms = st.one_of(st.just("x"), st.integers(0, 9).map(str), st.floats(0.1, 9.9).map(lambda v: f"{v:.3f}"))


@st.composite
def _expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(_atoms)
    op = draw(st.sampled_from(["+", "-", "*"]))
    return f"({draw(_expressions(depth - 1))} {op} {draw(_expressions(depth - 1))})"


@given(_expressions(), st.floats(-5, 5))
@settings(max_examples=100, deadline=None)
def test_agrees_with_python(text, x):
    expected = eval(text, {"x": x})
    assert parse_expression(text)(x) == pytest.approx(expected, rel=1e-12, abs=1e-12)

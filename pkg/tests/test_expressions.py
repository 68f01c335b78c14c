import math

import pytest

from finsler.errors import ConfigParseError
from finsler.expressions import parse_expression


def test_arithmetic_and_precedence():
    e = parse_expression("1 + 2 * 3 ^ 2 - 4 / 8")
    assert e(0.0, 0.0) == pytest.approx(1 + 18 - 0.5)


def test_variables_and_functions():
    e = parse_expression("2 / (1 + x1^2 + x2^2)")
    assert e(1.0, 0.0) == pytest.approx(1.0)
    e2 = parse_expression("sqrt(x1) * sin(x2) + exp(-x1) * cos(x2)")
    assert e2(4.0, math.pi / 2) == pytest.approx(2.0)


def test_unary_minus_and_right_assoc_power():
    assert parse_expression("-x1 ^ 2")(3.0, 0.0) == pytest.approx(-9.0)
    assert parse_expression("2 ^ 3 ^ 2")(0.0, 0.0) == pytest.approx(512.0)


def test_double_star_alias():
    assert parse_expression("x1 ** 3")(2.0, 0.0) == pytest.approx(8.0)


def test_parse_error_reports_position():
    with pytest.raises(ConfigParseError) as err:
        parse_expression("1 + * 2", line=4)
    assert err.value.line == 4
    assert err.value.column == 5

    with pytest.raises(ConfigParseError) as err:
        parse_expression("x3 + 1")
    assert "unknown name" in str(err.value)

    with pytest.raises(ConfigParseError) as err:
        parse_expression("sin 1")
    assert "expected '('" in str(err.value)

    with pytest.raises(ConfigParseError):
        parse_expression("1 + ")

    with pytest.raises(ConfigParseError) as err:
        parse_expression("1 @ 2")
    assert "unexpected character" in str(err.value)


def test_expression_is_differentiable():
    from finsler.ad import Dual

    e = parse_expression("x1^2 * x2 + sqrt(1 + x2^2)")
    z = e(Dual(2.0, 1.0), 3.0)
    assert z.a == pytest.approx(12.0 + math.sqrt(10.0))
    assert z.b == pytest.approx(12.0)

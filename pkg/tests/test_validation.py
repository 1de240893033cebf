from fractions import Fraction

import pytest

from walkforge._validation import (check_positive_int, check_probabilities, check_ratio,
                                   check_theta, parse_int_expr, parse_rational)


@pytest.mark.parametrize("text, value", [
    ("3/4", Fraction(3, 4)),
    ("2^-20", Fraction(1, 2**20)),
    ("1", Fraction(1)),
    ("0.25", Fraction(1, 4)),
    (" 2 ^ 3 ", Fraction(8)),
])
def test_parse_rational(text, value):
    assert parse_rational(text) == value


def test_parse_rational_zero_denominator():
    with pytest.raises(ZeroDivisionError):
        parse_rational("1/0")


@pytest.mark.parametrize("bad", ["abc", "1/", "2^x", ""])
def test_parse_rational_malformed(bad):
    with pytest.raises(ValueError):
        parse_rational(bad)


def test_parse_int_expr():
    assert parse_int_expr("2^80") == 2**80
    assert parse_int_expr(7) == 7
    with pytest.raises(ValueError):
        parse_int_expr("1/2")


@pytest.mark.parametrize("w", ["0", "-1/2", "3/2"])
def test_ratio_bounds(w):
    with pytest.raises(ValueError):
        check_ratio(w)


def test_theta_bounds():
    assert check_theta("1") == 1
    with pytest.raises(ValueError):
        check_theta("0")
    with pytest.raises(ValueError):
        check_theta("2")
    with pytest.raises(TypeError):
        check_theta(0.5)


def test_positive_int():
    assert check_positive_int(3, "r") == 3
    with pytest.raises(ValueError):
        check_positive_int(0, "r")
    with pytest.raises(TypeError):
        check_positive_int(True, "r")
    with pytest.raises(TypeError):
        check_positive_int(2.0, "r")


def test_probabilities():
    assert check_probabilities(["1/2", "1/2"]) == (Fraction(1, 2), Fraction(1, 2))
    with pytest.raises(ValueError):
        check_probabilities([])
    with pytest.raises(ValueError):
        check_probabilities(["1/2", "1/4"])
    with pytest.raises(ValueError):
        check_probabilities(["3/2", "-1/2"])

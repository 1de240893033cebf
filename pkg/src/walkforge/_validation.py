"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

import re
from fractions import Fraction
from numbers import Integral, Rational

_POWER_RE = re.compile(r"^\s*(-?\d+)\s*\^\s*(-?\d+)\s*$")


def parse_rational(text) -> Fraction:
    """Parse ``"a/b"``, an integer, a decimal, or ``"b^e"`` into an exact Fraction.

    >>> parse_rational("3/4")
    Fraction(3, 4)
    >>> parse_rational("2^-20")
    Fraction(1, 1048576)
    """
    if isinstance(text, Fraction):
        return text
    if isinstance(text, Integral):
        return Fraction(int(text))
    if isinstance(text, Rational):
        return Fraction(text.numerator, text.denominator)
    if not isinstance(text, str):
        raise TypeError(f"cannot parse {type(text).__name__} as a rational")
    m = _POWER_RE.match(text)
    if m:
        base, exp = int(m.group(1)), int(m.group(2))
        if base == 0 and exp < 0:
            raise ZeroDivisionError(f"zero denominator in {text!r}")
        return Fraction(base) ** exp
    try:
        return Fraction(text.strip())
    except ZeroDivisionError:
        raise
    except ValueError:
        raise ValueError(f"malformed rational {text!r}") from None


def parse_int_expr(text) -> int:
    """Integer or ``"b^e"`` with nonnegative exponent."""
    if isinstance(text, Integral):
        return int(text)
    value = parse_rational(text)
    if value.denominator != 1:
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def check_ratio(w) -> Fraction:
    w = parse_rational(w)
    if not 0 < w <= 1:
        raise ValueError(f"partition ratio w must lie in (0, 1], got {w}")
    return w


def check_theta(theta) -> Fraction:
    theta = parse_rational(theta)
    if not 0 < theta <= 1:
        raise ValueError(f"distinguished probability must lie in (0, 1], got {theta}")
    return theta


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_probabilities(probs) -> tuple[Fraction, ...]:
    probs = tuple(parse_rational(p) if not isinstance(p, float) else p for p in probs)
    if not probs:
        raise ValueError("need at least one partition probability")
    if any(p <= 0 for p in probs):
        raise ValueError("partition probabilities must be positive")
    total = sum(probs)
    if abs(total - 1) > 1e-12:
        raise ValueError(f"partition probabilities sum to {total}, not 1")
    return probs

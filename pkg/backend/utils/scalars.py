"""
Scalar kinds used throughout the toolkit.

Two coefficient fields are supported: exact rationals (``fractions.Fraction``,
with plain ``int`` as a neutral element) and IEEE doubles. Every service takes
its inputs in one field and stays in it.
"""

from enum import Enum
from fractions import Fraction
from numbers import Rational
from typing import Any, Union

Scalar = Union[int, Fraction, float]


class ScalarMode(str, Enum):
    """Coefficient field of a computation."""

    EXACT = "exact"
    FLOAT = "float"


def to_scalar(value: Any, mode: ScalarMode) -> Scalar:
    """
    Convert a number or numeric string into the requested field.

    Args:
        value: int, Fraction, float, or a string such as "1/3" or "0.25"
        mode: target coefficient field

    Returns:
        Fraction in exact mode, float in float mode
    """
    if mode == ScalarMode.EXACT:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, (int, str)):
            return Fraction(value)
        # repr keeps the decimal the caller typed instead of the binary expansion
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


def as_field(value: Any) -> Scalar:
    """Promote ints to Fraction and numpy floats to float; leave the field unchanged otherwise."""
    if isinstance(value, bool):
        raise TypeError("booleans are not scalars")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    return float(value)


def parse_scalar(text: str, mode: ScalarMode) -> Scalar:
    """Parse a command-line number ("p/q", integer or decimal)."""
    try:
        return to_scalar(text.strip(), mode)
    except (ValueError, ZeroDivisionError) as e:
        raise ValueError(f"not a number: {text!r}") from e


def mode_of(*values: Any) -> ScalarMode:
    """Exact when every value is rational, float otherwise."""
    if all(isinstance(v, Rational) for v in values):
        return ScalarMode.EXACT
    return ScalarMode.FLOAT


def is_exact(value: Any) -> bool:
    return isinstance(value, Rational)


def is_zero(value: Scalar, tol: float = 0.0) -> bool:
    """Exact zero test for rationals, |value| <= tol for floats."""
    if isinstance(value, Rational):
        return value == 0
    return abs(value) <= tol


def reciprocal(value: Scalar) -> Scalar:
    """1/value staying in the field of value (int maps to Fraction)."""
    if isinstance(value, Rational):
        return Fraction(1) / value
    return 1.0 / value


def magnitude(value: Any) -> float:
    """|value| as a float, for residual reporting."""
    return float(abs(value))


def scalar_to_json(value: Scalar) -> Union[str, float, int]:
    """Exact rationals become "p/q" strings, floats stay numbers."""
    if isinstance(value, bool):
        raise TypeError("booleans are not scalars")
    if isinstance(value, Rational):
        return str(Fraction(value))
    return float(value)


def scalar_from_json(value: Union[str, float, int]) -> Scalar:
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, int):
        return Fraction(value)
    return float(value)

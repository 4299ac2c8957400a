"""Exact scalar helpers.

All map logic runs on :class:`fractions.Fraction`.  Rationals cross every
serialization boundary as ``"p/q"`` strings so nothing is ever rounded.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import reduce
from typing import Iterable, Union

Scalar = Union[int, Fraction, str]

TWO = Fraction(2)


class InvalidScalar(ValueError):
    """Raised for NaN, infinities, zero denominators and unparseable input."""


def as_fraction(value) -> Fraction:
    """Coerce ``value`` to an exact Fraction.

    Accepts ints, Fractions, ``"p/q"`` / ``"p"`` strings and finite floats
    (converted exactly, which is rarely what a caller wants).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise InvalidScalar(f"not a scalar: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidScalar(f"non-finite scalar: {value!r}")
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, _, den = text.partition("/")
            try:
                p, q = int(num), int(den)
            except ValueError:
                raise InvalidScalar(f"malformed rational {value!r}") from None
            if q == 0:
                raise InvalidScalar(f"zero denominator in {value!r}")
            return Fraction(p, q)
        try:
            return Fraction(int(text))
        except ValueError:
            raise InvalidScalar(f"malformed rational {value!r}") from None
    raise InvalidScalar(f"unsupported scalar type {type(value).__name__}")


def to_str(value: Fraction) -> str:
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def mod2(x: Fraction) -> Fraction:
    """Reduce into [0, 2)."""
    return x % TWO


def lcm_all(values: Iterable[int]) -> int:
    return reduce(math.lcm, values, 1)


def common_denominator(values: Iterable[Fraction]) -> int:
    return lcm_all(Fraction(v).denominator for v in values)


def circle_distance(a: Fraction, b: Fraction, circumference: Fraction = TWO) -> Fraction:
    d = (a - b) % circumference
    return min(d, circumference - d)

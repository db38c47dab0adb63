"""Parsing and canonical formatting of numeric literals.

All pipeline arithmetic on extracted numbers uses Fraction so that grid
sampling, round-trips, and dedup keys stay exact; floats appear only at the
formatting boundary.
"""

from __future__ import annotations

import re
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

_INT = r"\d{1,3}(?:,\d{3})+|\d+"
_NUMBER_RE = re.compile(
    rf"[+-]?(?:"
    rf"(?P<frac>(?:{_INT})\s*/\s*(?:{_INT}))"
    rf"|(?P<sci>(?:\d+(?:\.\d*)?|\.\d+)[eE][+-]?\d+)"
    rf"|(?P<dec>(?:{_INT})\.\d+|\.\d+)"
    rf"|(?P<int>{_INT})"
    rf")"
)


def parse_number_text(text: str) -> Fraction:
    """Parse a plain numeric literal ("1,200", "2.5", "3/4", "1e3") exactly.

    Raises ValueError on anything else; callers decide how to classify that.
    """
    s = text.strip()
    m = _NUMBER_RE.fullmatch(s)
    if not m:
        raise ValueError(f"not a numeric literal: {text!r}")
    sign = -1 if s.startswith("-") else 1
    body = s.lstrip("+-")
    if m.group("frac") is not None:
        num, den = body.split("/")
        den_val = int(den.strip().replace(",", ""))
        if den_val == 0:
            raise ValueError(f"zero denominator: {text!r}")
        return sign * Fraction(int(num.strip().replace(",", "")), den_val)
    return sign * Fraction(body.replace(",", ""))


def decimal_str(value: Fraction) -> str:
    """Exact canonical string: integer, terminating decimal, or "a/b"."""
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den == 1:
        exp = max(twos, fives)
        scaled = abs(value) * 10**exp
        digits = str(int(scaled)).rjust(exp + 1, "0")
        sign = "-" if value < 0 else ""
        return f"{sign}{digits[:-exp]}.{digits[-exp:]}"
    return f"{value.numerator}/{value.denominator}"


def percent_display(count: int, total: int, places: int) -> str:
    """count/total as a percentage string, half-up at the given places.

    Ties round away from zero ("x.x5" displays as "x.(x+1)" at one place).
    """
    if total <= 0:
        raise ValueError("total must be positive")
    quotient = Decimal(count) * 100 / Decimal(total)
    return str(quotient.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP))


def float_literal(value: Fraction) -> str:
    """Shortest literal that reads back to the same value.

    Exact terminating decimals are emitted exactly; everything else falls back
    to the shortest round-tripping float repr.
    """
    s = decimal_str(value)
    if "/" in s:
        return repr(float(value))
    return s

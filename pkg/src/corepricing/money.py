"""Exact money handling.

Amounts are :class:`decimal.Decimal` values that must be whole multiples of a
quantum (default one millionth).  Internally the combinatorial code works on
integer multiples of the quantum so that welfare ties are detected exactly.
"""
from __future__ import annotations

from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from fractions import Fraction
from numbers import Real

from .errors import InvalidInputError

DEFAULT_QUANTUM = Decimal("0.000001")


def parse_money(value, quantum: Decimal = DEFAULT_QUANTUM) -> Decimal:
    """Parse a decimal string (or int/Decimal) into an exact money value.

    Floats are rejected: they would smuggle binary rounding into the instance.
    """
    if isinstance(value, float):
        raise InvalidInputError(f"money must be given as a decimal string, got float {value!r}")
    try:
        amount = Decimal(str(value)) if not isinstance(value, Decimal) else value
    except InvalidOperation:
        raise InvalidInputError(f"not a decimal amount: {value!r}") from None
    if not amount.is_finite():
        raise InvalidInputError(f"amount must be finite: {value!r}")
    if amount % quantum != 0:
        raise InvalidInputError(f"amount {amount} is not a multiple of the quantum {quantum}")
    return amount


def to_units(amount: Decimal, quantum: Decimal = DEFAULT_QUANTUM) -> int:
    units = amount / quantum
    if units != units.to_integral_value():
        raise InvalidInputError(f"amount {amount} is not a multiple of the quantum {quantum}")
    return int(units)


def from_units(units: int, quantum: Decimal = DEFAULT_QUANTUM) -> Decimal:
    return Decimal(units) * quantum


def quantize(x: Real | Fraction | Decimal, quantum: Decimal = DEFAULT_QUANTUM) -> Decimal:
    """Round any real to the nearest multiple of ``quantum`` (half-even)."""
    if isinstance(x, Fraction):
        d = Decimal(x.numerator) / Decimal(x.denominator)
    else:
        d = Decimal(x) if not isinstance(x, Decimal) else x
    q = d.quantize(quantum, rounding=ROUND_HALF_EVEN)
    return q + 0 if q else Decimal(0).quantize(quantum)


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Decimal)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(Decimal(str(x)))


def money_str(x: Decimal) -> str:
    """Canonical string form used in JSON output (no exponent)."""
    s = format(x, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return "0" if s in ("", "-0") else s

from decimal import Decimal
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from corepricing.errors import InvalidInputError
from corepricing.money import from_units, money_str, parse_money, quantize, to_fraction, to_units


def test_parse_accepts_strings_ints_decimals():
    assert parse_money("8") == Decimal(8)
    assert parse_money(3) == Decimal(3)
    assert parse_money(Decimal("0.25")) == Decimal("0.25")


@pytest.mark.parametrize("bad", [1.5, "abc", "NaN", "Infinity", "0.0000001"])
def test_parse_rejects(bad):
    with pytest.raises(InvalidInputError):
        parse_money(bad)


def test_coarser_quantum():
    assert parse_money("0.5", Decimal("0.5")) == Decimal("0.5")
    with pytest.raises(InvalidInputError):
        parse_money("0.25", Decimal("0.5"))


@given(st.integers(min_value=0, max_value=10**15))
def test_units_round_trip(u):
    assert to_units(from_units(u)) == u


def test_money_str_has_no_exponent():
    assert money_str(from_units(10_000_000)) == "10"
    assert money_str(Decimal("1E+3")) == "1000"
    assert money_str(Decimal("0.500000")) == "0.5"
    assert money_str(Decimal("-0")) == "0"


def test_quantize_half_even_and_types():
    assert quantize(Fraction(1, 3)) == Decimal("0.333333")
    assert quantize(4.9999999999) == Decimal("5.000000")
    assert quantize(Decimal("0.0000005")) == Decimal("0.000000")
    assert quantize(-1e-12) == Decimal("0.000000")


@given(st.decimals(min_value=-1000, max_value=1000, places=6, allow_nan=False, allow_infinity=False))
def test_to_fraction_exact(d):
    assert to_fraction(d) == Fraction(d)
    assert parse_money(money_str(d)) == d

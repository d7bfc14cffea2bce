"""Tests for p-bit float semantics."""

import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talab import fpx
from talab.config import EXP_DOMAIN
from talab.errors import (
    DivisionByZero,
    DomainError,
    FloatFormatError,
    PrecisionMismatch,
    PrecisionOverflow,
    RangeError,
)
from talab.fpx import FloatP, Ordering, round_p

ONE = FloatP(4, -2, 3)
ZERO3 = FloatP.zero(3)
FLOATS3 = fpx.enumerate_floats(3)


def floats(p: int) -> st.SearchStrategy[FloatP]:
    return st.sampled_from(fpx.enumerate_floats(p))


def test_construction_invariants():
    """Out-of-range fields are rejected on construction."""
    with pytest.raises(FloatFormatError):
        FloatP(3, 0, 3)
    with pytest.raises(FloatFormatError):
        FloatP(8, 0, 3)
    with pytest.raises(FloatFormatError):
        FloatP(4, 8, 3)
    with pytest.raises(FloatFormatError):
        FloatP(0, 1, 3)
    assert FloatP(-7, -8, 3).value == Fraction(-7, 256)


def test_debug_text_form():
    """str() gives ⟨r,k⟩@p."""
    assert str(FloatP(5, -4, 3)) == "⟨5,-4⟩@3"


def test_round_p_examples():
    """Nearest value, ties to the even significand."""
    assert round_p(0, 3) == ZERO3
    assert round_p(Fraction(3, 10), 3) == FloatP(5, -4, 3)
    assert round_p(Fraction(9, 32), 3) == FloatP(4, -4, 3)
    assert round_p(-Fraction(9, 32), 3) == FloatP(-4, -4, 3)


def test_round_p_carry_into_next_binade():
    """A round-up to 2^p renormalizes the significand."""
    assert round_p(Fraction(15, 2), 3) == FloatP(4, 1, 3)


def test_round_p_near_zero():
    """Below the smallest magnitude the candidates are 0 and the smallest float."""
    smallest = fpx.min_magnitude(3)
    assert round_p(smallest / 2, 3) == ZERO3
    assert round_p(smallest * 3 / 4, 3) == FloatP(4, -8, 3)
    assert round_p(smallest / 4, 3) == ZERO3


def test_round_p_overflow():
    """Magnitudes beyond (2^p − 1)·2^{2^p − 1} raise."""
    limit = fpx.max_magnitude(3)
    assert round_p(limit, 3) == FloatP(7, 7, 3)
    with pytest.raises(PrecisionOverflow):
        round_p(limit + 1, 3)


def test_round_p_idempotent_on_representable():
    """Every representable value rounds to itself."""
    for value in FLOATS3:
        assert round_p(value.value, 3) == value


def test_enumerate_floats_count_and_order():
    """p=3 has 2·4·16 + 1 values in ascending order."""
    assert len(FLOATS3) == 129
    values = [f.value for f in FLOATS3]
    assert values == sorted(values)
    assert len(set(values)) == len(values)


def test_int_div_special():
    """Multiples of 1/4 pass through; others get the 1/8 offset."""
    assert fpx.int_div_special(0, 7) == 0
    assert fpx.int_div_special(2, 4) == Fraction(1, 2)
    assert fpx.int_div_special(1, 3) == Fraction(11, 24)
    with pytest.raises(DivisionByZero):
        fpx.int_div_special(1, 0)


def test_add_examples():
    """Aligned addition."""
    assert fpx.add(ONE, ZERO3) == ONE
    assert fpx.add(ZERO3, ONE) == ONE
    assert fpx.add(ONE, ONE) == FloatP(4, -1, 3)
    assert fpx.add(FloatP(5, -4, 3), ONE) == FloatP(5, -2, 3)
    assert fpx.add(ONE, FloatP.zero(3)) is ONE


def test_add_precision_mismatch():
    """Operands must share p."""
    with pytest.raises(PrecisionMismatch):
        fpx.add(ONE, FloatP(8, -3, 4))


def test_mul_examples():
    """Exact product then round."""
    assert fpx.mul(ONE, ZERO3) == ZERO3
    assert fpx.mul(ONE, ONE) == ONE
    # 30·2^−8 sits halfway between 7·2^−6 and 8·2^−6; the even significand wins.
    assert fpx.mul(FloatP(5, -4, 3), FloatP(6, -4, 3)) == FloatP(4, -5, 3)


def test_div_examples():
    """Division through int_div_special."""
    assert fpx.div(ONE, FloatP(4, -1, 3)) == FloatP(4, -3, 3)
    # 16/6 is off the quarter grid: (1/8 + 8/3)/4 = 67/96 rounds to 0.75.
    assert fpx.div(FloatP(4, 0, 3), FloatP(6, 0, 3)) == FloatP(6, -3, 3)
    for value in FLOATS3:
        if not value.is_zero:
            assert fpx.div(value, value).value == 1
    with pytest.raises(DivisionByZero):
        fpx.div(ONE, ZERO3)


def test_compare_examples():
    """Ordering follows exact values."""
    assert fpx.compare(ONE, ONE) is Ordering.EQUAL
    assert fpx.compare(ONE, FloatP(5, -2, 3)) is Ordering.LESS
    assert fpx.compare(FloatP(-5, 0, 3), ONE) is Ordering.LESS
    assert fpx.compare(FloatP(5, -2, 3), ONE) is Ordering.GREATER
    with pytest.raises(PrecisionMismatch):
        fpx.compare(ONE, FloatP(8, -3, 4))


def test_floor_examples():
    """Floor of integers, positive and negative fractions."""
    assert fpx.floor(ONE).value == 1
    assert fpx.floor(FloatP(5, -4, 3)).value == 0
    assert fpx.floor(FloatP(-5, -4, 3)).value == -1
    assert fpx.floor(FloatP(7, 2, 3)).value == 28


def test_floor_matches_math_floor_when_representable():
    """The definition agrees with ⌊x⌋ across p=3."""
    for value in FLOATS3:
        expected = math.floor(value.value)
        if abs(expected) <= fpx.max_magnitude(3):
            assert fpx.floor(value).value == round_p(expected, 3).value


def test_iter_add_and_iter_mul():
    """Exact aggregate, one rounding."""
    assert fpx.iter_add([FloatP(5, -4, 3)]) == FloatP(5, -4, 3)
    assert fpx.iter_add([ONE, ONE, ONE]) == FloatP(6, -1, 3)
    assert fpx.iter_add([ONE, -ONE]) == ZERO3
    assert fpx.iter_mul([ONE, ONE, ONE]) == ONE
    assert fpx.iter_mul([FloatP(4, -1, 3)] * 3) == FloatP(4, 1, 3)
    with pytest.raises(ValueError, match="at least one"):
        fpx.iter_add([])


def test_exp_examples():
    """exp within 2^{−p} relative error."""
    assert fpx.exp_approx(FloatP.zero(16)).value == 1
    for x in (1, -1):
        got = fpx.exp_approx(round_p(x, 16))
        with mpmath.workdps(40):
            want = mpmath.exp(x)
            assert abs(mpmath.mpf(got.value.numerator) / got.value.denominator - want) <= want * mpmath.mpf(2) ** -16


def test_exp_domain():
    """Arguments outside [−64, 64] raise RangeError."""
    with pytest.raises(RangeError):
        fpx.exp_approx(round_p(65, 16))
    assert fpx.exp_approx(round_p(65, 16), domain=80).value > 0


@pytest.mark.parametrize(("x", "p"), [(-5, 3), (-16, 4), (-30, 5), (-64, 6)])
def test_exp_underflow_raises(x, p):
    """Results below the smallest p-bit magnitude raise instead of rounding to 0."""
    assert math.exp(x) < fpx.min_magnitude(p)
    with pytest.raises(PrecisionOverflow, match="underflows"):
        fpx.exp_approx(round_p(x, p))


def test_exp_just_above_smallest_magnitude():
    """e^{−4} clears the smallest 3-bit magnitude and stays nonzero."""
    got = fpx.exp_approx(round_p(-4, 3))
    assert not got.is_zero
    assert got.value >= fpx.min_magnitude(3)


def test_sqrt_examples():
    """sqrt within 2^{−p}; negatives raise."""
    assert fpx.sqrt_approx(FloatP.zero(16)) == FloatP.zero(16)
    assert fpx.sqrt_approx(round_p(1, 16)).value == 1
    got = fpx.sqrt_approx(round_p(2, 16))
    assert abs(float(got) - 2**0.5) <= 2**0.5 * 2**-16
    with pytest.raises(DomainError):
        fpx.sqrt_approx(round_p(-1, 16))


@settings(max_examples=300, deadline=None)
@given(floats(3), floats(3))
def test_add_and_mul_commute(a, b):
    """add and mul are bit-exactly commutative."""
    for op in (fpx.add, fpx.mul):
        try:
            left = op(a, b)
        except PrecisionOverflow:
            with pytest.raises(PrecisionOverflow):
                op(b, a)
            continue
        assert left == op(b, a)


@settings(max_examples=300, deadline=None)
@given(floats(4), floats(4), floats(4))
def test_compare_is_a_total_order(a, b, c):
    """Antisymmetric, transitive and consistent with exact values."""
    ab, ba = fpx.compare(a, b), fpx.compare(b, a)
    assert ab.value == -ba.value
    assert (ab is Ordering.LESS) == (a.value < b.value)
    if ab is not Ordering.GREATER and fpx.compare(b, c) is not Ordering.GREATER:
        assert fpx.compare(a, c) is not Ordering.GREATER


KERNEL_PRECISIONS = [8, 16, 24]


def assert_exp_close(arg):
    got = fpx.exp_approx(arg)
    with mpmath.workprec(arg.p + 40):
        want = mpmath.exp(fpx.to_mpf(arg.value))
        assert abs(fpx.to_mpf(got.value) - want) <= want * mpmath.mpf(2) ** -arg.p


def assert_sqrt_close(arg):
    got = fpx.sqrt_approx(arg)
    with mpmath.workprec(arg.p + 40):
        want = mpmath.sqrt(fpx.to_mpf(arg.value))
        assert abs(fpx.to_mpf(got.value) - want) <= want * mpmath.mpf(2) ** -arg.p


@pytest.mark.parametrize("p", KERNEL_PRECISIONS)
@settings(max_examples=500, deadline=None)
@given(x=st.fractions(min_value=-64, max_value=64, max_denominator=1000))
def test_exp_relative_error(p, x):
    """|exp_approx(x) − e^x| <= 2^{−p}·e^x against a p+40-bit oracle."""
    assert_exp_close(round_p(x, p))


@pytest.mark.parametrize("p", KERNEL_PRECISIONS)
@settings(max_examples=500, deadline=None)
@given(x=st.fractions(min_value=0, max_value=10**6, max_denominator=1000))
def test_sqrt_relative_error(p, x):
    """|sqrt_approx(x) − √x| <= 2^{−p}·√x."""
    assert_sqrt_close(round_p(x, p))


@pytest.mark.slow
@pytest.mark.parametrize("p", KERNEL_PRECISIONS)
def test_exp_sqrt_seeded_sweep(p):
    """10⁴ seeded inputs per precision for each kernel."""
    rng = np.random.default_rng(p)
    for value in rng.uniform(-EXP_DOMAIN, EXP_DOMAIN, size=10_000):
        assert_exp_close(round_p(Fraction(float(value)), p))
    for value in rng.lognormal(0.0, 8.0, size=10_000):
        assert_sqrt_close(round_p(Fraction(float(value)), p))

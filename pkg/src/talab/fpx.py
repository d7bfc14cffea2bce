"""p-bit float point numbers.

A ``FloatP`` is a pair ⟨r, k⟩ of integer significand and exponent at a fixed
precision p, representing the exact value r·2^k. Every operation computes its
defining expression over exact rationals and rounds once with ``round_p``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import mpmath
from mpmath.libmp import to_rational

from talab.config import EXP_DOMAIN
from talab.errors import (
    DivisionByZero,
    DomainError,
    FloatFormatError,
    PrecisionMismatch,
    PrecisionOverflow,
    RangeError,
)
from talab.utils import type_check

logger = logging.getLogger(__name__)

Rational = Fraction | int

QUARTER = Fraction(1, 4)
EIGHTH = Fraction(1, 8)


class Ordering(Enum):
    """Result of ``compare``."""

    LESS = -1
    EQUAL = 0
    GREATER = 1


def _pow2(exponent: int) -> Fraction:
    if exponent >= 0:
        return Fraction(1 << exponent)
    return Fraction(1, 1 << -exponent)


@dataclass(frozen=True, order=False)
class FloatP:
    """A p-bit float ⟨r, k⟩ with value r·2^k.

    Attributes:
        r: Significand, in (−2^p, −2^{p−1}] ∪ {0} ∪ [2^{p−1}, 2^p).
        k: Exponent, in [−2^p, 2^p).
        p: Precision in bits.
    """

    r: int
    k: int
    p: int

    def __post_init__(self) -> None:
        """Validate the range invariants."""
        type_check(self.r, int, "r")
        type_check(self.k, int, "k")
        type_check(self.p, int, "p")
        if self.p < 1:
            raise FloatFormatError(f"precision must be >= 1, got {self.p}")
        if self.r == 0:
            if self.k != 0:
                raise FloatFormatError(f"zero must be canonical ⟨0,0⟩, got k={self.k}")
            return
        low, high = 1 << (self.p - 1), 1 << self.p
        if not low <= abs(self.r) < high:
            raise FloatFormatError(
                f"significand {self.r} outside ±[{low}, {high}) for p={self.p}"
            )
        if not -high <= self.k < high:
            raise FloatFormatError(f"exponent {self.k} outside [{-high}, {high})")

    def __str__(self) -> str:
        """Debug form ``⟨r,k⟩@p``."""
        return f"⟨{self.r},{self.k}⟩@{self.p}"

    @property
    def value(self) -> Fraction:
        """Exact rational value r·2^k."""
        return self.r * _pow2(self.k)

    @property
    def is_zero(self) -> bool:
        """True for the canonical zero."""
        return self.r == 0

    def __neg__(self) -> FloatP:
        """Exact sign flip; the significand range is symmetric."""
        return FloatP(-self.r, self.k, self.p)

    def __float__(self) -> float:
        """Nearest double to the represented value."""
        return float(self.value)

    @classmethod
    def zero(cls, p: int) -> FloatP:
        """Canonical zero at precision ``p``."""
        return cls(0, 0, p)


def max_magnitude(p: int) -> Fraction:
    """Largest representable magnitude (2^p − 1)·2^{2^p − 1}."""
    return Fraction(((1 << p) - 1) << ((1 << p) - 1))


def min_magnitude(p: int) -> Fraction:
    """Smallest nonzero magnitude 2^{p−1}·2^{−2^p}."""
    return (1 << (p - 1)) * _pow2(-(1 << p))


def _floor_log2(value: Fraction) -> int:
    """⌊log2 value⌋ for value > 0."""
    num, den = value.numerator, value.denominator
    exponent = num.bit_length() - den.bit_length()
    if exponent >= 0:
        if num < den << exponent:
            exponent -= 1
    elif num << -exponent < den:
        exponent -= 1
    return exponent


def round_p(x: Rational, p: int) -> FloatP:
    """Round an exact rational to the nearest p-bit float.

    Ties go to the even significand. Between zero and the smallest magnitude
    a tie goes to zero; at p = 1 every nonzero significand is odd and a tie
    goes to the smaller magnitude.

    Args:
        x: Exact value to round
        p: Precision in bits

    Returns:
        The nearest FloatP

    Raises:
        PrecisionOverflow: If |x| exceeds ``max_magnitude(p)``
    """
    type_check(x, Fraction | int, "x")
    type_check(p, int, "p")
    value = Fraction(x)
    if value == 0:
        return FloatP.zero(p)
    sign = -1 if value < 0 else 1
    magnitude = abs(value)
    if magnitude > max_magnitude(p):
        raise PrecisionOverflow(f"|{value}| exceeds the largest {p}-bit magnitude")

    k_min = -(1 << p)
    smallest = min_magnitude(p)
    if magnitude < smallest:
        # Only 0 and the smallest magnitude are candidates here.
        if magnitude * 2 > smallest:
            return FloatP(sign * (1 << (p - 1)), k_min, p)
        return FloatP.zero(p)

    k = _floor_log2(magnitude) - (p - 1)
    scaled = magnitude * _pow2(-k)
    significand = math.floor(scaled)
    remainder = scaled - significand
    if remainder > Fraction(1, 2) or (
        remainder == Fraction(1, 2) and significand % 2 == 1 and p > 1
    ):
        significand += 1
    if significand == 1 << p:
        significand >>= 1
        k += 1
    if k >= 1 << p:
        raise PrecisionOverflow(f"|{value}| exceeds the largest {p}-bit magnitude")
    return FloatP(sign * significand, k, p)


def from_int(value: int, p: int) -> FloatP:
    """Round an integer to precision ``p``."""
    return round_p(value, p)


def int_div_special(x: int, y: int) -> Fraction:
    """Integer division with the quarter-grid offset.

    Returns x/y when it is a multiple of 1/4, else 1/8 + x/y.

    Raises:
        DivisionByZero: If y is zero
    """
    type_check(x, int, "x")
    type_check(y, int, "y")
    if y == 0:
        raise DivisionByZero(f"int_div_special({x}, 0)")
    quotient = Fraction(x, y)
    if (quotient / QUARTER).denominator == 1:
        return quotient
    return EIGHTH + quotient


def _same_precision(*operands: FloatP) -> int:
    precisions = {operand.p for operand in operands}
    if len(precisions) != 1:
        raise PrecisionMismatch(f"operands mix precisions {sorted(precisions)}")
    return operands[0].p


def add(a: FloatP, b: FloatP) -> FloatP:
    """Exponent-aligned addition.

    With k1 >= k2 the result is round_p(⟨r1 + r2 ⊘ 2^{k1−k2}, k1⟩). Adding the
    canonical zero returns the other operand.
    """
    p = _same_precision(a, b)
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    if a.k < b.k:
        a, b = b, a
    aligned = a.r + int_div_special(b.r, 1 << (a.k - b.k))
    return round_p(aligned * _pow2(a.k), p)


def sub(a: FloatP, b: FloatP) -> FloatP:
    """``add(a, -b)``."""
    return add(a, -b)


def mul(a: FloatP, b: FloatP) -> FloatP:
    """round_p(⟨r1·r2, k1+k2⟩)."""
    p = _same_precision(a, b)
    return round_p(a.r * b.r * _pow2(a.k + b.k), p)


def div(a: FloatP, b: FloatP) -> FloatP:
    """round_p(⟨r1·2^{p−1} ⊘ r2, k1−k2−p+1⟩).

    Raises:
        DivisionByZero: If b is zero
        PrecisionMismatch: If precisions differ
        PrecisionOverflow: If the quotient is out of range
    """
    p = _same_precision(a, b)
    if b.is_zero:
        raise DivisionByZero(f"{a} ÷ {b}")
    quotient = int_div_special(a.r << (p - 1), b.r)
    return round_p(quotient * _pow2(a.k - b.k - p + 1), p)


def compare(a: FloatP, b: FloatP) -> Ordering:
    """Order two floats by exact value."""
    _same_precision(a, b)
    left, right = a.value, b.value
    if left < right:
        return Ordering.LESS
    if left > right:
        return Ordering.GREATER
    return Ordering.EQUAL


def floor(a: FloatP) -> FloatP:
    """Floor following the definition.

    For k >= 0 the value is already an integer. For k < 0 the result is
    round_p(r // 2^{−k}). A disagreement with the mathematical floor is
    logged, never corrected.
    """
    if a.k >= 0:
        result = round_p(a.r << a.k, a.p)
    else:
        result = round_p(a.r // (1 << -a.k), a.p)
    expected = math.floor(a.value)
    if result.value != expected:
        logger.warning("floor(%s) = %s differs from mathematical floor %d", a, result, expected)
    return result


def _aggregate(xs: Iterable[FloatP], name: str) -> list[FloatP]:
    items = list(xs)
    if not items:
        raise ValueError(f"{name} needs at least one operand")
    _same_precision(*items)
    return items


def iter_add(xs: Iterable[FloatP]) -> FloatP:
    """Exact sum of all operands, rounded once."""
    items = _aggregate(xs, "iter_add")
    return round_p(sum((item.value for item in items), Fraction(0)), items[0].p)


def iter_mul(xs: Iterable[FloatP]) -> FloatP:
    """Exact product of all operands, rounded once."""
    items = _aggregate(xs, "iter_mul")
    return round_p(math.prod((item.value for item in items), start=Fraction(1)), items[0].p)


# Transcendental kernels evaluate with mpmath at 2p + 32 bits, then round once.


def working_bits(p: int) -> int:
    """Binary precision used for transcendental kernels at precision ``p``."""
    return 2 * p + 32


def to_mpf(value: Rational) -> mpmath.mpf:
    """Convert a rational at the current mpmath working precision."""
    exact = Fraction(value)
    return mpmath.mpf(exact.numerator) / exact.denominator


def from_mpf(value: mpmath.mpf) -> Fraction:
    """Exact rational value of a finite mpf."""
    numerator, denominator = to_rational(value._mpf_)
    return Fraction(numerator, denominator)


def exp_approx(x: FloatP, domain: int = EXP_DOMAIN) -> FloatP:
    """e^x with relative error at most 2^{−p}.

    Raises:
        RangeError: If |x| > domain
        PrecisionOverflow: If e^x lies outside the representable magnitudes,
            including results below ``min_magnitude(p)``
    """
    type_check(x, FloatP, "x")
    if abs(x.value) > domain:
        raise RangeError(f"exp argument {float(x)} outside [-{domain}, {domain}]")
    with mpmath.workprec(working_bits(x.p)):
        approx = from_mpf(mpmath.exp(to_mpf(x.value)))
    if approx < min_magnitude(x.p):
        raise PrecisionOverflow(f"exp({x}) underflows the smallest {x.p}-bit magnitude")
    return round_p(approx, x.p)


def sqrt_approx(x: FloatP) -> FloatP:
    """√x with relative error at most 2^{−p}.

    Raises:
        DomainError: If x < 0
    """
    type_check(x, FloatP, "x")
    if x.r < 0:
        raise DomainError(f"sqrt of negative value {x}")
    if x.is_zero:
        return x
    with mpmath.workprec(working_bits(x.p)):
        approx = from_mpf(mpmath.sqrt(to_mpf(x.value)))
    return round_p(approx, x.p)


def enumerate_floats(p: int) -> list[FloatP]:
    """All representable p-bit floats, ascending by value."""
    type_check(p, int, "p")
    low, high = 1 << (p - 1), 1 << p
    positives = [FloatP(r, k, p) for k in range(-high, high) for r in range(low, high)]
    return [-f for f in reversed(positives)] + [FloatP.zero(p)] + positives

"""Scalar backends.

A backend owns one scalar type and every arithmetic primitive the matrix and
attention code needs. ``ExactRationalBackend`` backs identity tests,
``FloatPBackend`` routes through ``fpx`` and ``Real64Backend`` uses doubles.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections.abc import Sequence
from contextlib import AbstractContextManager, nullcontext
from fractions import Fraction
from typing import Any, Generic, TypeVar

import mpmath

from talab import fpx
from talab.config import EXACT_TRANSCENDENTAL_BITS, REAL64_LAYERNORM_EPS
from talab.errors import ConfigError, DivisionByZero, DomainError
from talab.fpx import FloatP
from talab.utils import type_check

S = TypeVar("S")

BACKEND_TAGS = ("exact", "floatp", "real64")


class ScalarBackend(ABC, Generic[S]):
    """Arithmetic over one scalar type."""

    name: str = "abstract"

    @abstractmethod
    def const(self, value: Fraction | int | float) -> S:
        """Embed a host number."""

    def zero(self) -> S:
        """Additive identity."""
        return self.const(0)

    def one(self) -> S:
        """Multiplicative identity."""
        return self.const(1)

    @abstractmethod
    def add(self, a: S, b: S) -> S:
        """a + b."""

    @abstractmethod
    def sub(self, a: S, b: S) -> S:
        """a − b."""

    @abstractmethod
    def mul(self, a: S, b: S) -> S:
        """a × b."""

    @abstractmethod
    def div(self, a: S, b: S) -> S:
        """a ÷ b, raising DivisionByZero."""

    @abstractmethod
    def neg(self, a: S) -> S:
        """−a."""

    @abstractmethod
    def compare(self, a: S, b: S) -> int:
        """-1, 0 or 1."""

    @abstractmethod
    def iter_add(self, xs: Sequence[S]) -> S:
        """Sum of a nonempty sequence."""

    @abstractmethod
    def iter_mul(self, xs: Sequence[S]) -> S:
        """Product of a nonempty sequence."""

    @abstractmethod
    def exp(self, a: S) -> S:
        """e^a."""

    @abstractmethod
    def sqrt(self, a: S) -> S:
        """√a, raising DomainError for negatives."""

    @abstractmethod
    def sin_cos(self, a: S) -> tuple[S, S]:
        """(sin a, cos a)."""

    @abstractmethod
    def to_float(self, a: S) -> float:
        """Nearest double."""

    @abstractmethod
    def to_fraction(self, a: S) -> Fraction:
        """Exact rational value."""

    @abstractmethod
    def layernorm_eps(self) -> S:
        """Variance regularizer used by layer norm."""

    def is_zero(self, a: S) -> bool:
        """True when ``a`` equals zero."""
        return self.compare(a, self.zero()) == 0

    def stage(self, name: str, *, opaque: bool = False) -> AbstractContextManager[None]:
        """Mark a block of work as one stage; only tracing backends care."""
        del name, opaque
        return nullcontext()

    def parallel(self) -> AbstractContextManager[None]:
        """Mark stages that start together; only tracing backends care."""
        return nullcontext()

    def __repr__(self) -> str:
        """Backend tag."""
        return f"{type(self).__name__}()"


def _mp_fraction(function: Any, value: Fraction, bits: int) -> Fraction:
    with mpmath.workprec(bits):
        return fpx.from_mpf(function(fpx.to_mpf(value)))


class ExactRationalBackend(ScalarBackend[Fraction]):
    """Exact rationals; transcendental values are dyadic approximations."""

    name = "exact"

    def __init__(self, bits: int = EXACT_TRANSCENDENTAL_BITS) -> None:
        """Use ``bits`` of working precision for exp, sqrt, sin and cos."""
        type_check(bits, int, "bits")
        self.bits = bits

    def const(self, value: Fraction | int | float) -> Fraction:
        return Fraction(value)

    def add(self, a: Fraction, b: Fraction) -> Fraction:
        return a + b

    def sub(self, a: Fraction, b: Fraction) -> Fraction:
        return a - b

    def mul(self, a: Fraction, b: Fraction) -> Fraction:
        return a * b

    def div(self, a: Fraction, b: Fraction) -> Fraction:
        if b == 0:
            raise DivisionByZero(f"{a} / 0")
        return a / b

    def neg(self, a: Fraction) -> Fraction:
        return -a

    def compare(self, a: Fraction, b: Fraction) -> int:
        return (a > b) - (a < b)

    def iter_add(self, xs: Sequence[Fraction]) -> Fraction:
        return sum(xs, Fraction(0))

    def iter_mul(self, xs: Sequence[Fraction]) -> Fraction:
        return math.prod(xs, start=Fraction(1))

    def exp(self, a: Fraction) -> Fraction:
        return _mp_fraction(mpmath.exp, a, self.bits)

    def sqrt(self, a: Fraction) -> Fraction:
        if a < 0:
            raise DomainError(f"sqrt of negative value {a}")
        return _mp_fraction(mpmath.sqrt, a, self.bits)

    def sin_cos(self, a: Fraction) -> tuple[Fraction, Fraction]:
        return _mp_fraction(mpmath.sin, a, self.bits), _mp_fraction(mpmath.cos, a, self.bits)

    def to_float(self, a: Fraction) -> float:
        return float(a)

    def to_fraction(self, a: Fraction) -> Fraction:
        return a

    def layernorm_eps(self) -> Fraction:
        return Fraction(1, 100000)


class FloatPBackend(ScalarBackend[FloatP]):
    """p-bit floats with the ``fpx`` semantics."""

    name = "floatp"

    def __init__(self, p: int) -> None:
        """Fix the precision for every scalar this backend produces."""
        type_check(p, int, "p")
        if p < 2:
            raise ConfigError(f"floatp backend needs p >= 2, got {p}")
        self.p = p

    def const(self, value: Fraction | int | float) -> FloatP:
        return fpx.round_p(Fraction(value), self.p)

    def add(self, a: FloatP, b: FloatP) -> FloatP:
        return fpx.add(a, b)

    def sub(self, a: FloatP, b: FloatP) -> FloatP:
        return fpx.sub(a, b)

    def mul(self, a: FloatP, b: FloatP) -> FloatP:
        return fpx.mul(a, b)

    def div(self, a: FloatP, b: FloatP) -> FloatP:
        return fpx.div(a, b)

    def neg(self, a: FloatP) -> FloatP:
        return -a

    def compare(self, a: FloatP, b: FloatP) -> int:
        return fpx.compare(a, b).value

    def iter_add(self, xs: Sequence[FloatP]) -> FloatP:
        return fpx.iter_add(xs)

    def iter_mul(self, xs: Sequence[FloatP]) -> FloatP:
        return fpx.iter_mul(xs)

    def exp(self, a: FloatP) -> FloatP:
        return fpx.exp_approx(a)

    def sqrt(self, a: FloatP) -> FloatP:
        return fpx.sqrt_approx(a)

    def sin_cos(self, a: FloatP) -> tuple[FloatP, FloatP]:
        from talab.ropeenc import sin_cos_floatp

        return sin_cos_floatp(a)

    def to_float(self, a: FloatP) -> float:
        return float(a)

    def to_fraction(self, a: FloatP) -> Fraction:
        return a.value

    def layernorm_eps(self) -> FloatP:
        return fpx.round_p(Fraction(1, 1 << -(-self.p // 2)), self.p)

    def __repr__(self) -> str:
        """Backend tag with precision."""
        return f"FloatPBackend(p={self.p})"


class Real64Backend(ScalarBackend[float]):
    """IEEE doubles."""

    name = "real64"

    def const(self, value: Fraction | int | float) -> float:
        return float(value)

    def add(self, a: float, b: float) -> float:
        return a + b

    def sub(self, a: float, b: float) -> float:
        return a - b

    def mul(self, a: float, b: float) -> float:
        return a * b

    def div(self, a: float, b: float) -> float:
        if b == 0.0:
            raise DivisionByZero(f"{a} / 0.0")
        return a / b

    def neg(self, a: float) -> float:
        return -a

    def compare(self, a: float, b: float) -> int:
        return (a > b) - (a < b)

    def iter_add(self, xs: Sequence[float]) -> float:
        # fsum is correctly rounded, so the result does not depend on order
        return math.fsum(xs)

    def iter_mul(self, xs: Sequence[float]) -> float:
        return math.prod(xs)

    def exp(self, a: float) -> float:
        return math.exp(a)

    def sqrt(self, a: float) -> float:
        if a < 0.0:
            raise DomainError(f"sqrt of negative value {a}")
        return math.sqrt(a)

    def sin_cos(self, a: float) -> tuple[float, float]:
        return math.sin(a), math.cos(a)

    def to_float(self, a: float) -> float:
        return a

    def to_fraction(self, a: float) -> Fraction:
        return Fraction(a)

    def layernorm_eps(self) -> float:
        return REAL64_LAYERNORM_EPS


def backend_from_tag(tag: str, precision: int | None = None) -> ScalarBackend[Any]:
    """Build a backend from its CLI/config tag.

    Args:
        tag: One of ``BACKEND_TAGS``
        precision: Bits for ``floatp``; ignored otherwise

    Raises:
        ConfigError: For unknown tags or a missing floatp precision
    """
    type_check(tag, str, "tag")
    if tag == "exact":
        return ExactRationalBackend()
    if tag == "real64":
        return Real64Backend()
    if tag == "floatp":
        if precision is None:
            raise ConfigError("floatp backend requires a precision")
        return FloatPBackend(precision)
    raise ConfigError(f"unknown backend {tag!r}; expected one of {BACKEND_TAGS}")

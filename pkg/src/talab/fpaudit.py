"""Exhaustive cross-check of fpx against an enumeration oracle.

The oracle evaluates each operation's defining expression over exact
rationals and rounds by scanning the sorted table of every representable
value, so it shares no rounding code with ``fpx.round_p``.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_left
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

from talab import fpx
from talab.errors import DivisionByZero, PrecisionOverflow, TalabError
from talab.fpx import FloatP

logger = logging.getLogger(__name__)

Outcome = FloatP | fpx.Ordering | str

OPERATIONS = ("add", "mul", "div", "compare", "floor")


class EnumerationRounder:
    """Round-to-nearest over an explicit table of representable values."""

    def __init__(self, p: int) -> None:
        """Tabulate every p-bit float."""
        self.p = p
        self.floats = fpx.enumerate_floats(p)
        self.values = [f.value for f in self.floats]
        self.limit = self.values[-1]

    def __call__(self, x: Fraction) -> FloatP:
        """Nearest table entry; ties prefer the even significand, then the smaller magnitude."""
        if abs(x) > self.limit:
            raise PrecisionOverflow(f"|{x}| exceeds the largest {self.p}-bit magnitude")
        index = bisect_left(self.values, x)
        if self.values[index] == x:
            return self.floats[index]
        below, above = self.floats[index - 1], self.floats[index]
        gap_below, gap_above = x - below.value, above.value - x
        if gap_below != gap_above:
            return below if gap_below < gap_above else above
        below_even, above_even = below.r % 2 == 0, above.r % 2 == 0
        if below_even != above_even:
            return below if below_even else above
        return below if abs(below.value) < abs(above.value) else above


def _oracle_add(rnd: EnumerationRounder, a: FloatP, b: FloatP) -> Outcome:
    if a.r == 0 or b.r == 0:
        return rnd(a.value + b.value)
    high, low = (a, b) if a.k >= b.k else (b, a)
    shift = Fraction(2) ** (high.k - low.k)
    quotient = Fraction(low.r) / shift
    if (quotient * 4).denominator != 1:
        quotient += Fraction(1, 8)
    return rnd((high.r + quotient) * Fraction(2) ** high.k)


def _oracle_mul(rnd: EnumerationRounder, a: FloatP, b: FloatP) -> Outcome:
    return rnd(a.value * b.value)


def _oracle_div(rnd: EnumerationRounder, a: FloatP, b: FloatP) -> Outcome:
    if b.r == 0:
        raise DivisionByZero("oracle division by zero")
    quotient = Fraction(a.r * 2 ** (rnd.p - 1), b.r)
    if (quotient * 4).denominator != 1:
        quotient += Fraction(1, 8)
    return rnd(quotient * Fraction(2) ** (a.k - b.k - rnd.p + 1))


def _oracle_compare(_: EnumerationRounder, a: FloatP, b: FloatP) -> Outcome:
    difference = a.value - b.value
    if difference == 0:
        return fpx.Ordering.EQUAL
    return fpx.Ordering.LESS if difference < 0 else fpx.Ordering.GREATER


def _oracle_floor(rnd: EnumerationRounder, a: FloatP, _: FloatP) -> Outcome:
    return rnd(Fraction(math.floor(a.value)))


ORACLES: dict[str, Callable[[EnumerationRounder, FloatP, FloatP], Outcome]] = {
    "add": _oracle_add,
    "mul": _oracle_mul,
    "div": _oracle_div,
    "compare": _oracle_compare,
    "floor": _oracle_floor,
}

IMPLEMENTATIONS: dict[str, Callable[[FloatP, FloatP], Outcome]] = {
    "add": fpx.add,
    "mul": fpx.mul,
    "div": fpx.div,
    "compare": fpx.compare,
    "floor": lambda a, _: fpx.floor(a),
}

EXACT_REAL: dict[str, Callable[[FloatP, FloatP], Fraction]] = {
    "add": lambda a, b: a.value + b.value,
    "div": lambda a, b: a.value / b.value,
}


def _outcome(func: Callable[[], Outcome]) -> Outcome:
    try:
        return func()
    except TalabError as error:
        return type(error).__name__


@dataclass
class FpAuditReport:
    """Per-operation comparison counts."""

    p: int
    checked: dict[str, int] = field(default_factory=dict)
    mismatches: dict[str, list[tuple[FloatP, FloatP, Outcome, Outcome]]] = field(
        default_factory=dict
    )
    drift: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """True when no operation disagreed with the oracle."""
        return not any(self.mismatches.values())

    def summary_rows(self) -> list[dict[str, object]]:
        """One row per operation, for tabular output."""
        return [
            {
                "operation": name,
                "pairs": self.checked.get(name, 0),
                "mismatches": len(self.mismatches.get(name, [])),
                "drift": self.drift.get(name, 0),
            }
            for name in self.checked
        ]


def fp_audit(p: int = 3, operations: tuple[str, ...] = OPERATIONS) -> FpAuditReport:
    """Compare every operand pair at precision ``p`` against the oracle.

    Drift counts pairs whose result differs from rounding the exact real
    result; it is informational, since the quarter-grid offset in addition
    and division legitimately departs from exact rounding.

    Args:
        p: Precision; the pair count grows as 4^{p+1}, keep p small
        operations: Subset of ``OPERATIONS``

    Returns:
        The audit report
    """
    rnd = EnumerationRounder(p)
    report = FpAuditReport(p=p)
    for name in operations:
        implementation, oracle = IMPLEMENTATIONS[name], ORACLES[name]
        exact = EXACT_REAL.get(name)
        checked, drift = 0, 0
        mismatches: list[tuple[FloatP, FloatP, Outcome, Outcome]] = []
        seconds = rnd.floats if name != "floor" else rnd.floats[:1]
        for a in rnd.floats:
            for b in seconds:
                got = _outcome(lambda a=a, b=b: implementation(a, b))
                want = _outcome(lambda a=a, b=b: oracle(rnd, a, b))
                checked += 1
                if got != want:
                    mismatches.append((a, b, got, want))
                    logger.warning("%s(%s, %s): got %s, oracle %s", name, a, b, got, want)
                elif exact is not None and isinstance(got, FloatP):
                    real = _outcome(lambda a=a, b=b, exact=exact: rnd(exact(a, b)))
                    if real != got:
                        drift += 1
        report.checked[name] = checked
        report.mismatches[name] = mismatches
        report.drift[name] = drift
        logger.info("%s: %d pairs, %d mismatches, %d drift", name, checked, len(mismatches), drift)
    return report

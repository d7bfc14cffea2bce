"""Tests for the exhaustive float audit."""

from fractions import Fraction

import pytest

from talab import fpaudit, fpx
from talab.errors import PrecisionOverflow
from talab.fpaudit import EnumerationRounder, fp_audit
from talab.fpx import FloatP


@pytest.mark.parametrize("p", [1, 2, 3])
def test_audit_passes_at_small_precision(p):
    """Every operation agrees with the enumeration oracle."""
    report = fp_audit(p)
    assert report.passed
    n = len(fpx.enumerate_floats(p))
    assert report.checked["add"] == n * n
    assert report.checked["floor"] == n


def test_division_drift_is_reported():
    """The quarter-grid offset departs from exact rounding; that is drift, not a mismatch."""
    report = fp_audit(3, ("div",))
    assert report.passed
    assert report.drift["div"] > 0


def test_summary_rows():
    """One row per audited operation."""
    report = fp_audit(2, ("add", "compare"))
    rows = report.summary_rows()
    assert [row["operation"] for row in rows] == ["add", "compare"]
    assert all(row["mismatches"] == 0 for row in rows)
    assert set(rows[0]) == {"operation", "pairs", "mismatches", "drift"}


def test_broken_implementation_is_caught(monkeypatch):
    """A wrong operation shows up as mismatches."""
    monkeypatch.setitem(fpaudit.IMPLEMENTATIONS, "mul", lambda a, b: fpx.add(a, b))
    report = fp_audit(2, ("mul",))
    assert not report.passed
    assert report.mismatches["mul"]


def test_enumeration_rounder_ties():
    """The oracle breaks ties toward the even significand, then toward zero."""
    rnd = EnumerationRounder(3)
    assert rnd(Fraction(3, 10)) == FloatP(5, -4, 3)
    assert rnd(Fraction(9, 32)) == FloatP(4, -4, 3)
    assert rnd(Fraction(15, 2)) == FloatP(4, 1, 3)
    assert rnd(fpx.min_magnitude(3) / 2) == FloatP.zero(3)
    with pytest.raises(PrecisionOverflow):
        rnd(fpx.max_magnitude(3) + 1)

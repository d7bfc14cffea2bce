"""Tests for rotary encodings."""

import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talab import fpx, ropeenc, tensora
from talab.backends import ExactRationalBackend, FloatPBackend, Real64Backend
from talab.errors import BadDimension
from talab.ropeenc import ThetaSchedule, rel_rotation, theta_schedule

REAL = Real64Backend()


def as_array(m):
    return np.array(m.to_rows(), dtype=float)


def test_theta_schedule():
    """θ_i = base^{−2(i−1)/d}."""
    sched = theta_schedule(4)
    assert sched.thetas == pytest.approx((1.0, 0.01))
    assert theta_schedule(2, base=4.0).thetas == (1.0,)
    assert ThetaSchedule.from_dict(sched.to_dict()) == sched


@pytest.mark.parametrize("d", [0, 1, 3])
def test_odd_dimension_rejected(d):
    """Rotary dimension must be even and positive."""
    with pytest.raises(BadDimension):
        theta_schedule(d)


def test_schedule_validation():
    """Frequencies must match d/2 and be positive."""
    with pytest.raises(BadDimension):
        ThetaSchedule(4, (1.0,))
    with pytest.raises(BadDimension):
        ThetaSchedule(2, (0.0,))


def test_zero_offset_is_identity():
    """R_0 = I exactly under exact arithmetic."""
    backend = ExactRationalBackend()
    assert rel_rotation(0, theta_schedule(4), backend) == tensora.identity(4, backend)


def test_rotation_structure():
    """Blocks are rot2(offset·θ_i) and the matrix is orthogonal."""
    sched = theta_schedule(4)
    r = as_array(rel_rotation(3, sched, REAL))
    assert r[0, 0] == pytest.approx(math.cos(3.0))
    assert r[0, 1] == pytest.approx(-math.sin(3.0))
    assert r[2, 3] == pytest.approx(-math.sin(0.03))
    assert r[0, 2] == 0.0
    assert np.allclose(r @ r.T, np.eye(4))


def test_rotations_compose_by_offset():
    """R_a·R_b = R_{a+b} and R_{−a} = R_aᵀ."""
    sched = theta_schedule(6)
    ra, rb = as_array(rel_rotation(2, sched, REAL)), as_array(rel_rotation(-5, sched, REAL))
    assert np.allclose(ra @ rb, as_array(rel_rotation(-3, sched, REAL)))
    assert np.allclose(ra.T, as_array(rel_rotation(-2, sched, REAL)))


def test_sin_cos_floatp_accuracy():
    """Each of sin and cos lands within 2^{−p} of the true value."""
    p = 16
    for value in (Fraction(1, 3), Fraction(5), Fraction(-22, 7), Fraction(1000)):
        x = fpx.round_p(value, p)
        sine, cosine = ropeenc.sin_cos_floatp(x)
        assert abs(float(sine) - math.sin(float(x))) <= 2.0**-p
        assert abs(float(cosine) - math.cos(float(x))) <= 2.0**-p


TRIG_PRECISIONS = [8, 16, 24]


def assert_sin_cos_close(x):
    """Both results within 2^{−p} relative of a p+40-bit mpmath value."""
    sine, cosine = ropeenc.sin_cos_floatp(x)
    with mpmath.workprec(x.p + 40):
        argument = fpx.to_mpf(x.value)
        bound = mpmath.mpf(2) ** -x.p
        for got, want in ((sine, mpmath.sin(argument)), (cosine, mpmath.cos(argument))):
            assert abs(fpx.to_mpf(got.value) - want) <= bound * abs(want)


def pythagorean_gap(x):
    sine, cosine = ropeenc.sin_cos_floatp(x)
    return abs(sine.value**2 + cosine.value**2 - 1)


@pytest.mark.parametrize("p", TRIG_PRECISIONS)
@settings(max_examples=300, deadline=None)
@given(x=st.fractions(min_value=-1000, max_value=1000, max_denominator=10**6))
def test_sin_cos_relative_error(p, x):
    """sin and cos each within 2^{−p} relative error."""
    assert_sin_cos_close(fpx.round_p(x, p))


@pytest.mark.parametrize("p", TRIG_PRECISIONS)
@settings(max_examples=300, deadline=None)
@given(x=st.fractions(min_value=-1000, max_value=1000, max_denominator=10**6))
def test_sin_squared_plus_cos_squared(p, x):
    """sin² + cos² = 1 within 3·2^{−p}, computed exactly over the rounded values."""
    assert pythagorean_gap(fpx.round_p(x, p)) <= Fraction(3, 2**p)


@pytest.mark.slow
@pytest.mark.parametrize("p", TRIG_PRECISIONS)
def test_sin_cos_seeded_sweep(p):
    """10⁴ seeded inputs per precision for accuracy and the Pythagorean identity."""
    rng = np.random.default_rng(100 + p)
    for value in rng.uniform(-1000, 1000, size=10_000):
        x = fpx.round_p(Fraction(float(value)), p)
        assert_sin_cos_close(x)
        assert pythagorean_gap(x) <= Fraction(3, 2**p)


@pytest.mark.parametrize("p", TRIG_PRECISIONS)
@pytest.mark.parametrize("offset", [-9, -1, 1, 4, 31])
def test_floatp_rotation_is_nearly_orthogonal(p, offset):
    """R·Rᵀ stays within 8·2^{−p} of I, exactly and through p-bit matmul."""
    backend = FloatPBackend(p)
    r = rel_rotation(offset, theta_schedule(6), backend)
    exact = r.map(lambda value: value.value)
    product = tensora.matmul(exact, exact.transpose(), ExactRationalBackend())
    rounded = tensora.matmul(r, r.transpose(), backend)
    limit = Fraction(8, 2**p)
    for i in range(6):
        for j in range(6):
            expected = 1 if i == j else 0
            assert abs(product[i, j] - expected) <= limit
            assert abs(rounded[i, j].value - expected) <= limit


def test_sin_cos_approx_dispatch():
    """Backend scalars, bare FloatP and plain doubles."""
    x = fpx.round_p(Fraction(1, 2), 16)
    assert ropeenc.sin_cos_approx(x) == ropeenc.sin_cos_floatp(x)
    assert ropeenc.sin_cos_approx(x, FloatPBackend(16)) == ropeenc.sin_cos_floatp(x)
    assert ropeenc.sin_cos_approx(0.5) == (math.sin(0.5), math.cos(0.5))
    sine, cosine = ropeenc.sin_cos_approx(0.5, REAL)
    assert sine == pytest.approx(math.sin(0.5))
    assert cosine == pytest.approx(math.cos(0.5))


def test_floatp_rotation_close_to_doubles():
    """Rotations in 24-bit floats track the double ones."""
    sched = theta_schedule(4)
    backend = FloatPBackend(24)
    low = rel_rotation(7, sched, backend).map(float)
    assert np.allclose(as_array(low), as_array(rel_rotation(7, sched, REAL)), atol=1e-6)


def test_rotation_cache_reuses_matrices():
    """One matrix per offset."""
    cache = ropeenc.RotationCache(theta_schedule(2), REAL)
    cache.prefetch([0, 1, 1, -1])
    assert cache[1] is cache[1]
    assert cache[0] == tensora.identity(2, REAL)


def test_rotation_table():
    """R[j1, j2] = R_{j1−j2}."""
    sched = theta_schedule(2)
    table = ropeenc.rotation_table(3, sched)
    assert table.shape == (3, 3, 2, 2)
    assert np.allclose(table[2, 0], as_array(rel_rotation(2, sched, REAL)))
    assert np.allclose(table[1, 1], np.eye(2))

"""Rotary position encoding: frequency schedule, rotation blocks and trig."""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, TypeVar

import mpmath
import numpy as np
from numpy.typing import NDArray

from talab import fpx
from talab.backends import Real64Backend, ScalarBackend
from talab.config import ROPE_BASE
from talab.errors import BadDimension
from talab.fpx import FloatP
from talab.tensora import Matrix, zeros
from talab.utils import type_check

S = TypeVar("S")


@dataclass(frozen=True)
class ThetaSchedule:
    """Angular frequencies θ_1 … θ_{d/2} for an even embedding dimension."""

    d: int
    thetas: tuple[float, ...]

    def __post_init__(self) -> None:
        """Check the schedule matches the dimension."""
        type_check(self.d, int, "d")
        if self.d < 2 or self.d % 2:
            raise BadDimension(f"rotary dimension must be even and >= 2, got {self.d}")
        if len(self.thetas) != self.d // 2:
            raise BadDimension(f"{len(self.thetas)} frequencies for d={self.d}")
        if any(not theta > 0 for theta in self.thetas):
            raise BadDimension("frequencies must be positive")

    def to_dict(self) -> dict[str, object]:
        """Serializable form."""
        return {"d": self.d, "thetas": list(self.thetas)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ThetaSchedule:
        """Inverse of ``to_dict``."""
        return cls(int(data["d"]), tuple(float(theta) for theta in data["thetas"]))


def theta_schedule(d: int, base: float = ROPE_BASE) -> ThetaSchedule:
    """θ_i = base^{−2(i−1)/d} for i = 1 … d/2.

    Raises:
        BadDimension: If d is odd or below 2
    """
    type_check(d, int, "d")
    if d < 2 or d % 2:
        raise BadDimension(f"rotary dimension must be even and >= 2, got {d}")
    if not base > 0:
        raise BadDimension(f"base must be positive, got {base}")
    return ThetaSchedule(d, tuple(float(base) ** (-2.0 * i / d) for i in range(d // 2)))


def sin_cos_floatp(x: FloatP) -> tuple[FloatP, FloatP]:
    """sin and cos of a p-bit float, each rounded once.

    mpmath reduces the argument exactly at 2p + 32 working bits, so the
    rounded results are within 2^{−p} relative, or 2^{−p} absolute where the
    true value is smaller than that.
    """
    with mpmath.workprec(fpx.working_bits(x.p)):
        argument = fpx.to_mpf(x.value)
        sine = fpx.from_mpf(mpmath.sin(argument))
        cosine = fpx.from_mpf(mpmath.cos(argument))
    return fpx.round_p(sine, x.p), fpx.round_p(cosine, x.p)


def sin_cos_approx(x: Any, backend: ScalarBackend[Any] | None = None) -> tuple[Any, Any]:
    """(sin x, cos x) for a backend scalar.

    Without a backend, FloatP inputs use ``sin_cos_floatp`` and anything
    else is treated as a double.
    """
    if backend is not None:
        return backend.sin_cos(x)
    if isinstance(x, FloatP):
        return sin_cos_floatp(x)
    return math.sin(x), math.cos(x)


def rot2(theta: S, backend: ScalarBackend[S]) -> Matrix[S]:
    """[[cos θ, −sin θ], [sin θ, cos θ]]."""
    sine, cosine = backend.sin_cos(theta)
    return Matrix(2, 2, (cosine, backend.neg(sine), sine, cosine))


def _angle(offset: int, theta: float) -> Fraction:
    return offset * Fraction(theta)


def rel_rotation(offset: int, sched: ThetaSchedule, backend: ScalarBackend[S]) -> Matrix[S]:
    """Block-diagonal d×d matrix with blocks rot2(offset·θ_i)."""
    type_check(offset, int, "offset")
    entries = zeros(sched.d, sched.d, backend).to_rows()
    with backend.stage("rotation"):
        for block, theta in enumerate(sched.thetas):
            rotation = rot2(backend.const(_angle(offset, theta)), backend)
            for i in range(2):
                for j in range(2):
                    entries[2 * block + i][2 * block + j] = rotation[i, j]
    return Matrix.from_rows(entries)


class RotationCache:
    """Relative rotations keyed by offset, built on first use."""

    def __init__(self, sched: ThetaSchedule, backend: ScalarBackend[Any]) -> None:
        """Cache rotations for ``sched`` under ``backend``."""
        self.sched = sched
        self.backend = backend
        self._matrices: dict[int, Matrix[Any]] = {}

    def prefetch(self, offsets: Iterable[int]) -> None:
        """Build the rotations for ``offsets``."""
        for offset in offsets:
            if offset not in self._matrices:
                self._matrices[offset] = rel_rotation(offset, self.sched, self.backend)

    def __getitem__(self, offset: int) -> Matrix[Any]:
        """rel_rotation(offset)."""
        self.prefetch((offset,))
        return self._matrices[offset]


def rotation_table(n: int, sched: ThetaSchedule) -> NDArray[np.float64]:
    """Array R with R[j1, j2] = rel_rotation(j1 − j2) in doubles, shape (n, n, d, d)."""
    table = np.zeros((n, n, sched.d, sched.d))
    backend = Real64Backend()
    by_offset = {
        offset: np.array(rel_rotation(offset, sched, backend).to_rows())
        for offset in range(-(n - 1), n)
    }
    for j1 in range(n):
        for j2 in range(n):
            table[j1, j2] = by_offset[j1 - j2]
    return table

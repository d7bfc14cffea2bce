"""Dense matrices over a scalar backend, with the three Kronecker products.

Index layouts (0-based) follow the interleaved convention, not the usual
block layout:

- ``kron``:     K[i1 + i2·n1, j1 + j2·d1] = A[i1, j1]·B[i2, j2]
- ``col_kron``: K[i1 + i2·n1, j]          = A[i1, j]·B[i2, j]
- ``row_kron``: K[i, j1 + j2·d1]          = A[i, j1]·B[i, j2]

The first factor's index varies fastest, which is what the swap rule
(A1 ⊗ A2)(W1 ⊘ W2) = (A1 W1) ⊘ (A2 W2) relies on.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass
from typing import Any, Generic, TypeVar

from talab.backends import ScalarBackend
from talab.config import N_CAP
from talab.errors import CapacityExceeded, ShapeMismatch
from talab.utils import type_check

S = TypeVar("S")
R = TypeVar("R")

ENTRY_CAP = N_CAP * N_CAP


@dataclass(frozen=True)
class Matrix(Generic[S]):
    """Immutable row-major matrix.

    Attributes:
        rows: Number of rows, at least 1.
        cols: Number of columns, at least 1.
        entries: ``rows * cols`` scalars in row-major order.
    """

    rows: int
    cols: int
    entries: tuple[S, ...]

    def __post_init__(self) -> None:
        """Validate the shape."""
        type_check(self.rows, int, "rows")
        type_check(self.cols, int, "cols")
        if self.rows < 1 or self.cols < 1:
            raise ShapeMismatch(f"matrix shape must be positive, got {self.shape}")
        if len(self.entries) != self.rows * self.cols:
            raise ShapeMismatch(
                f"{len(self.entries)} entries for a {self.rows}x{self.cols} matrix"
            )

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[S]]) -> Matrix[S]:
        """Build from a list of equal-length rows."""
        if not rows:
            raise ShapeMismatch("matrix needs at least one row")
        width = len(rows[0])
        if any(len(row) != width for row in rows):
            raise ShapeMismatch("ragged rows")
        return cls(len(rows), width, tuple(value for row in rows for value in row))

    @classmethod
    def build(cls, rows: int, cols: int, entry: Callable[[int, int], S]) -> Matrix[S]:
        """Build from an entry function of (row, col)."""
        if rows * cols > ENTRY_CAP * N_CAP:
            raise CapacityExceeded(f"{rows}x{cols} matrix exceeds the desk-scale cap")
        return cls(rows, cols, tuple(entry(i, j) for i in range(rows) for j in range(cols)))

    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols)."""
        return self.rows, self.cols

    def __getitem__(self, index: tuple[int, int]) -> S:
        """Entry at (row, col)."""
        i, j = index
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise IndexError(f"index {index} outside {self.shape}")
        return self.entries[i * self.cols + j]

    def row(self, i: int) -> tuple[S, ...]:
        """Row ``i`` as a tuple."""
        return self.entries[i * self.cols : (i + 1) * self.cols]

    def col(self, j: int) -> tuple[S, ...]:
        """Column ``j`` as a tuple."""
        return self.entries[j :: self.cols]

    def to_rows(self) -> list[list[S]]:
        """Nested lists, row-major."""
        return [list(self.row(i)) for i in range(self.rows)]

    def transpose(self) -> Matrix[S]:
        """Transposed matrix."""
        return Matrix.build(self.cols, self.rows, lambda i, j: self[j, i])

    def map(self, function: Callable[[S], R]) -> Matrix[R]:
        """Apply ``function`` entrywise."""
        return Matrix(self.rows, self.cols, tuple(function(value) for value in self.entries))

    def __iter__(self) -> Iterator[tuple[S, ...]]:
        """Iterate over rows."""
        return (self.row(i) for i in range(self.rows))


def _check_square_cap(rows: int, label: str) -> None:
    if rows > ENTRY_CAP:
        raise CapacityExceeded(f"{label} would have {rows} rows, cap is {ENTRY_CAP}")


def from_values(values: Sequence[Sequence[Any]], backend: ScalarBackend[S]) -> Matrix[S]:
    """Embed host numbers with ``backend.const``."""
    return Matrix.from_rows([[backend.const(v) for v in row] for row in values])


def identity(n: int, backend: ScalarBackend[S]) -> Matrix[S]:
    """n×n identity."""
    one, zero = backend.one(), backend.zero()
    return Matrix.build(n, n, lambda i, j: one if i == j else zero)


def zeros(rows: int, cols: int, backend: ScalarBackend[S]) -> Matrix[S]:
    """All-zero matrix."""
    zero = backend.zero()
    return Matrix(rows, cols, (zero,) * (rows * cols))


def ones(rows: int, cols: int, backend: ScalarBackend[S]) -> Matrix[S]:
    """All-one matrix."""
    one = backend.one()
    return Matrix(rows, cols, (one,) * (rows * cols))


def matmul(a: Matrix[S], b: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Matrix product; each entry is one iterated sum of products.

    Raises:
        ShapeMismatch: If ``a.cols != b.rows``
    """
    if a.cols != b.rows:
        raise ShapeMismatch(f"matmul {a.shape} by {b.shape}")
    columns = [b.col(j) for j in range(b.cols)]
    with backend.stage("matmul"):
        return Matrix.build(
            a.rows,
            b.cols,
            lambda i, j: backend.iter_add(
                [backend.mul(x, y) for x, y in zip(a.row(i), columns[j], strict=True)]
            ),
        )


def add_row_vector(a: Matrix[S], bias: Sequence[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Add ``bias`` to every row."""
    if len(bias) != a.cols:
        raise ShapeMismatch(f"bias of length {len(bias)} for {a.cols} columns")
    return Matrix.build(a.rows, a.cols, lambda i, j: backend.add(a[i, j], bias[j]))


def scale(a: Matrix[S], factor: S, backend: ScalarBackend[S]) -> Matrix[S]:
    """Divide every entry by ``factor``."""
    return a.map(lambda value: backend.div(value, factor))


def kron(a: Matrix[S], b: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Kronecker product, n1·n2 × d1·d2, interleaved layout."""
    _check_square_cap(a.rows * b.rows, "kron")
    with backend.stage("kron"):
        return Matrix.build(
            a.rows * b.rows,
            a.cols * b.cols,
            lambda i, j: backend.mul(a[i % a.rows, j % a.cols], b[i // a.rows, j // a.cols]),
        )


def col_kron(a: Matrix[S], b: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Column-wise Kronecker product, n1·n2 × d.

    Raises:
        ShapeMismatch: If column counts differ
    """
    if a.cols != b.cols:
        raise ShapeMismatch(f"col_kron needs equal columns, got {a.shape} and {b.shape}")
    _check_square_cap(a.rows * b.rows, "col_kron")
    with backend.stage("col_kron"):
        return Matrix.build(
            a.rows * b.rows,
            a.cols,
            lambda i, j: backend.mul(a[i % a.rows, j], b[i // a.rows, j]),
        )


def row_kron(a: Matrix[S], b: Matrix[S], backend: ScalarBackend[S]) -> Matrix[S]:
    """Row-wise Kronecker product, n × d1·d2.

    Raises:
        ShapeMismatch: If row counts differ
    """
    if a.rows != b.rows:
        raise ShapeMismatch(f"row_kron needs equal rows, got {a.shape} and {b.shape}")
    with backend.stage("row_kron"):
        return Matrix.build(
            a.rows,
            a.cols * b.cols,
            lambda i, j: backend.mul(a[i, j % a.cols], b[i, j // a.cols]),
        )


def fused_project(
    a1: Matrix[S],
    a2: Matrix[S],
    w1: Matrix[S],
    w2: Matrix[S],
    backend: ScalarBackend[S],
) -> Matrix[S]:
    """(A1·W1) ⊘ (A2·W2), the cheap side of the swap rule.

    Equals ``matmul(kron(a1, a2), col_kron(w1, w2))`` without building the
    n1·n2 × d² intermediate.
    """
    with backend.parallel():
        left = matmul(a1, w1, backend)
        right = matmul(a2, w2, backend)
    return col_kron(left, right, backend)


def swap_rule_unfused(
    a1: Matrix[S],
    a2: Matrix[S],
    w1: Matrix[S],
    w2: Matrix[S],
    backend: ScalarBackend[S],
) -> Matrix[S]:
    """(A1 ⊗ A2)·(W1 ⊘ W2), the expensive side of the swap rule."""
    return matmul(kron(a1, a2, backend), col_kron(w1, w2, backend), backend)


def diag_inverse_product(
    diagonal: Sequence[S], m: Matrix[S], backend: ScalarBackend[S]
) -> Matrix[S]:
    """D⁻¹·M for D = diag(``diagonal``).

    Evaluated as the matrix product with D⁻¹, where the only nonzero term in
    each sum is M[i, j] / D[i, i].
    """
    if len(diagonal) != m.rows:
        raise ShapeMismatch(f"diagonal of length {len(diagonal)} for {m.rows} rows")
    zero = backend.zero()
    with backend.stage("diag_inverse"):
        return Matrix.build(
            m.rows,
            m.cols,
            lambda i, j: backend.iter_add(
                [
                    backend.div(m[i, j], diagonal[i]) if k == i else zero
                    for k in range(m.rows)
                ]
            ),
        )


def max_abs_diff(a: Matrix[Any], b: Matrix[Any], backend: ScalarBackend[Any]) -> float:
    """Largest entrywise |a − b| as a double."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"cannot compare {a.shape} with {b.shape}")
    return max(
        abs(backend.to_float(x) - backend.to_float(y))
        for x, y in zip(a.entries, b.entries, strict=True)
    )

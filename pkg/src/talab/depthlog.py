"""Symbolic circuit-depth accounting.

``DepthExpr`` keeps a max-plus normal form: a set of coefficient vectors over
the primitive depth symbols, none dominated by another. Sequential
composition adds vectors pairwise and parallel composition takes the union,
so every expression is normalized by construction.

``TracingBackend`` wraps any scalar backend and attaches a depth to every
scalar it produces. Work is grouped into stages: all scalars of a stage start
from the depth reached when the stage opened, and the next stage opens after
the deepest of them, so each step costs one layer of gates regardless of
which particular entry fed which.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

from talab.backends import Real64Backend, ScalarBackend
from talab.errors import CapacityExceeded, TraceUnavailable
from talab.utils import type_check

logger = logging.getLogger(__name__)


class Symbol(Enum):
    """Primitive depth constants."""

    STD = "d_std"
    OPLUS = "d_⊕"
    OTIMES = "d_⊗"
    EXP = "d_exp"
    SQRT = "d_sqrt"
    TRIG = "d_△"
    G = "d_g"


SYMBOLS: tuple[Symbol, ...] = tuple(Symbol)
_INDEX = {symbol: position for position, symbol in enumerate(SYMBOLS)}

ALIASES: dict[str, Symbol] = {symbol.value: symbol for symbol in SYMBOLS} | {
    "d_oplus": Symbol.OPLUS,
    "d_otimes": Symbol.OTIMES,
    "d_trig": Symbol.TRIG,
    "d_triangle": Symbol.TRIG,
}

Term = tuple[int, ...]
_ZERO_TERM: Term = (0,) * len(SYMBOLS)


def _dominates(big: Term, small: Term) -> bool:
    return all(x >= y for x, y in zip(big, small, strict=True))


def _prune(terms: Iterable[Term]) -> frozenset[Term]:
    unique = set(terms)
    return frozenset(
        term
        for term in unique
        if not any(other != term and _dominates(other, term) for other in unique)
    )


@dataclass(frozen=True)
class DepthExpr:
    """Normalized depth expression.

    A single term is a linear combination of symbols. Several terms mean
    the maximum of pairwise incomparable combinations.
    """

    terms: frozenset[Term] = frozenset({_ZERO_TERM})

    def __post_init__(self) -> None:
        """Reject malformed terms and prune dominated ones."""
        if not self.terms:
            raise ValueError("DepthExpr needs at least one term")
        for term in self.terms:
            if len(term) != len(SYMBOLS) or any(c < 0 for c in term):
                raise ValueError(f"malformed depth term {term}")
        object.__setattr__(self, "terms", _prune(self.terms))

    @classmethod
    def zero(cls) -> DepthExpr:
        """The empty computation."""
        return cls()

    @classmethod
    def of(cls, coefficients: dict[Symbol, int] | None = None, **named: int) -> DepthExpr:
        """Linear expression from symbol coefficients.

        Keyword names are the lowercase enum member names, e.g. ``std=6``.
        """
        merged: dict[Symbol, int] = dict(coefficients or {})
        for name, count in named.items():
            symbol = Symbol[name.upper()]
            merged[symbol] = merged.get(symbol, 0) + count
        term = [0] * len(SYMBOLS)
        for symbol, count in merged.items():
            term[_INDEX[symbol]] += count
        return cls(frozenset({tuple(term)}))

    @classmethod
    def symbol(cls, symbol: Symbol) -> DepthExpr:
        """A single primitive depth."""
        return cls.of({symbol: 1})

    @classmethod
    def parse(cls, text: str) -> DepthExpr:
        """Parse ``"7d_std + 4d_⊕ + d_△ + d_exp"`` or ``"max(a, b)"``.

        Coefficients may be written ``7d_std``, ``7·d_std`` or ``7*d_std``.
        """
        type_check(text, str, "text")
        source = text.strip()
        if source.startswith("max(") and source.endswith(")"):
            return par(cls.parse(part) for part in _split_top_level(source[4:-1]))
        if source == "0":
            return cls.zero()
        coefficients: dict[Symbol, int] = {}
        for raw in source.split("+"):
            match = _TERM_PATTERN.fullmatch(raw.strip())
            if match is None:
                raise ValueError(f"cannot parse depth term {raw.strip()!r} in {text!r}")
            count = int(match.group(1)) if match.group(1) else 1
            name = match.group(2)
            if name not in ALIASES:
                raise ValueError(f"unknown depth symbol {name!r}")
            symbol = ALIASES[name]
            coefficients[symbol] = coefficients.get(symbol, 0) + count
        return cls.of(coefficients)

    @property
    def is_linear(self) -> bool:
        """True when no max node remains."""
        return len(self.terms) == 1

    def coefficients(self) -> dict[Symbol, int]:
        """Nonzero coefficients of a linear expression."""
        if not self.is_linear:
            raise ValueError(f"{self} is not linear")
        (term,) = self.terms
        return {symbol: term[_INDEX[symbol]] for symbol in SYMBOLS if term[_INDEX[symbol]]}

    def normalize(self) -> DepthExpr:
        """Expressions are kept normalized; returns ``self``."""
        return self

    def __add__(self, other: DepthExpr) -> DepthExpr:
        """Sequential composition."""
        return seq(self, other)

    def __or__(self, other: DepthExpr) -> DepthExpr:
        """Parallel composition."""
        return par([self, other])

    def __mul__(self, times: int) -> DepthExpr:
        """``times`` sequential copies."""
        type_check(times, int, "times")
        if times < 0:
            raise ValueError("repetition count must be nonnegative")
        result = DepthExpr.zero()
        for _ in range(times):
            result = seq(result, self)
        return result

    __rmul__ = __mul__

    def __str__(self) -> str:
        """Readable form, e.g. ``6·d_std + 5·d_⊕ + d_exp``."""
        rendered = sorted(_render_term(term) for term in self.terms)
        if len(rendered) == 1:
            return rendered[0]
        return f"max({', '.join(rendered)})"


_TERM_PATTERN = re.compile(r"(\d+)?\s*[·*]?\s*(d_[^\s+]+)")


def _split_top_level(body: str) -> list[str]:
    parts, depth, current = [], 0, []
    for char in body:
        if char == "," and depth == 0:
            parts.append("".join(current))
            current = []
            continue
        depth += (char == "(") - (char == ")")
        current.append(char)
    parts.append("".join(current))
    return parts


def _render_term(term: Term) -> str:
    pieces = []
    for symbol in SYMBOLS:
        count = term[_INDEX[symbol]]
        if count == 1:
            pieces.append(symbol.value)
        elif count > 1:
            pieces.append(f"{count}·{symbol.value}")
    return " + ".join(pieces) if pieces else "0"


def seq(a: DepthExpr, b: DepthExpr) -> DepthExpr:
    """Depth of ``b`` run after ``a``."""
    return DepthExpr(
        frozenset(
            tuple(x + y for x, y in zip(left, right, strict=True))
            for left in a.terms
            for right in b.terms
        )
    )


def par(es: Iterable[DepthExpr]) -> DepthExpr:
    """Depth of branches run side by side."""
    items = list(es)
    if not items:
        raise ValueError("par needs at least one expression")
    return DepthExpr(frozenset(term for expr in items for term in expr.terms))


ZERO = DepthExpr.zero()
STD = DepthExpr.symbol(Symbol.STD)
OPLUS = DepthExpr.symbol(Symbol.OPLUS)
OTIMES = DepthExpr.symbol(Symbol.OTIMES)
EXP = DepthExpr.symbol(Symbol.EXP)
SQRT = DepthExpr.symbol(Symbol.SQRT)
TRIG = DepthExpr.symbol(Symbol.TRIG)
G = DepthExpr.symbol(Symbol.G)


@dataclass(frozen=True)
class TracedScalar:
    """A backend scalar with the depth of the computation that produced it."""

    value: Any
    depth: DepthExpr = ZERO
    stage: int | None = None


@dataclass
class _Stage:
    ident: int
    name: str
    start: DepthExpr
    opaque: bool
    peak: DepthExpr = ZERO


@dataclass
class _Group:
    start: DepthExpr
    ends: list[DepthExpr] = field(default_factory=list)


@dataclass(frozen=True)
class StageRecord:
    """Depth window of one closed stage."""

    name: str
    start: DepthExpr
    end: DepthExpr


class TracingBackend(ScalarBackend[TracedScalar]):
    """Backend wrapper that tracks depth per scalar.

    One instance traces one evaluation; do not share it across threads.
    """

    name = "traced"

    def __init__(self, inner: ScalarBackend[Any]) -> None:
        """Trace arithmetic performed by ``inner``."""
        self.inner = inner
        self.frontier = ZERO
        self.records: list[StageRecord] = []
        self._stage: _Stage | None = None
        self._group: _Group | None = None
        self._next_ident = 0

    def leaf(self, value: Any) -> TracedScalar:
        """Wrap an input value at depth zero."""
        return TracedScalar(value)

    @contextmanager
    def stage(self, name: str, *, opaque: bool = False) -> Iterator[None]:
        if self._stage is not None:
            yield
            return
        start = self._group.start if self._group is not None else self.frontier
        current = _Stage(self._next_ident, name, start, opaque)
        self._next_ident += 1
        self._stage = current
        try:
            yield
        finally:
            self._stage = None
        end = par([current.start, current.peak])
        self.records.append(StageRecord(name, current.start, end))
        logger.debug("stage %s: %s -> %s", name, current.start, end)
        if self._group is not None:
            self._group.ends.append(end)
        else:
            self.frontier = end

    @contextmanager
    def parallel(self) -> Iterator[None]:
        if self._group is not None or self._stage is not None:
            yield
            return
        group = _Group(self.frontier)
        self._group = group
        try:
            yield
        finally:
            self._group = None
        self.frontier = par([group.start, *group.ends])

    def _emit(self, value: Any, inputs: Sequence[TracedScalar], cost: DepthExpr) -> TracedScalar:
        current = self._stage
        if current is not None and current.opaque:
            depth = seq(current.start, G)
        else:
            base = par([x.depth for x in inputs]) if inputs else ZERO
            if current is not None:
                # inputs from earlier stages are available once this stage opens
                base = par([base, current.start])
            depth = seq(base, cost)
        if current is not None:
            current.peak = par([current.peak, depth])
        return TracedScalar(value, depth, None if current is None else current.ident)

    def const(self, value: Fraction | int | float) -> TracedScalar:
        return TracedScalar(self.inner.const(value))

    def add(self, a: TracedScalar, b: TracedScalar) -> TracedScalar:
        return self._emit(self.inner.add(a.value, b.value), (a, b), STD)

    def sub(self, a: TracedScalar, b: TracedScalar) -> TracedScalar:
        return self._emit(self.inner.sub(a.value, b.value), (a, b), STD)

    def mul(self, a: TracedScalar, b: TracedScalar) -> TracedScalar:
        return self._emit(self.inner.mul(a.value, b.value), (a, b), STD)

    def div(self, a: TracedScalar, b: TracedScalar) -> TracedScalar:
        return self._emit(self.inner.div(a.value, b.value), (a, b), STD)

    def neg(self, a: TracedScalar) -> TracedScalar:
        # sign flip is wiring, not a gate layer
        return TracedScalar(self.inner.neg(a.value), a.depth, a.stage)

    def compare(self, a: TracedScalar, b: TracedScalar) -> int:
        return self.inner.compare(a.value, b.value)

    def iter_add(self, xs: Sequence[TracedScalar]) -> TracedScalar:
        return self._emit(self.inner.iter_add([x.value for x in xs]), xs, OPLUS)

    def iter_mul(self, xs: Sequence[TracedScalar]) -> TracedScalar:
        return self._emit(self.inner.iter_mul([x.value for x in xs]), xs, OTIMES)

    def exp(self, a: TracedScalar) -> TracedScalar:
        return self._emit(self.inner.exp(a.value), (a,), EXP)

    def sqrt(self, a: TracedScalar) -> TracedScalar:
        return self._emit(self.inner.sqrt(a.value), (a,), SQRT)

    def sin_cos(self, a: TracedScalar) -> tuple[TracedScalar, TracedScalar]:
        sine, cosine = self.inner.sin_cos(a.value)
        return self._emit(sine, (a,), TRIG), self._emit(cosine, (a,), TRIG)

    def to_float(self, a: TracedScalar) -> float:
        return self.inner.to_float(a.value)

    def to_fraction(self, a: TracedScalar) -> Fraction:
        return self.inner.to_fraction(a.value)

    def layernorm_eps(self) -> TracedScalar:
        return TracedScalar(self.inner.layernorm_eps())

    def __repr__(self) -> str:
        """Wrapped backend."""
        return f"TracingBackend({self.inner!r})"


def depth_of(value: object) -> DepthExpr:
    """Depth carried by a traced scalar.

    Raises:
        TraceUnavailable: If ``value`` was computed without tracing
    """
    if not isinstance(value, TracedScalar):
        raise TraceUnavailable(f"{type(value).__name__} carries no depth; evaluate under TracingBackend")
    return value.depth


def max_depth(values: Iterable[object]) -> DepthExpr:
    """Normalized maximum depth over traced scalars."""
    depths = [depth_of(value) for value in values]
    if not depths:
        raise TraceUnavailable("no traced outputs")
    return par(depths)


# Audited components and their reference depths.

COMPONENTS = (
    "matmul",
    "kron",
    "col-kron",
    "row-kron",
    "plain-layer",
    "rope-matrix",
    "rope-layer",
    "mlp",
    "layernorm",
    "tf",
    "tf-plain",
)

AUDIT_N_CAP = 16


def proved_formula(component: str, m: int = 1) -> DepthExpr:
    """Depth proved for ``component``; ``m`` is the layer count for TF stacks."""
    fixed = {
        "matmul": STD + OPLUS,
        "kron": STD,
        "col-kron": STD,
        "row-kron": STD,
        "plain-layer": DepthExpr.of(std=6, oplus=5, exp=1),
        "rope-matrix": DepthExpr.of(std=7, oplus=4, trig=1, exp=1),
        "rope-layer": DepthExpr.of(std=11, oplus=8, trig=1, exp=1),
        "mlp": DepthExpr.of(std=2, oplus=1),
        "layernorm": DepthExpr.of(std=6, oplus=2, sqrt=1),
    }
    if component in fixed:
        return fixed[component]
    if component == "tf":
        return G * (m + 1) + fixed["rope-layer"] * m
    if component == "tf-plain":
        return G * (m + 1) + fixed["plain-layer"] * m
    raise ValueError(f"unknown component {component!r}; expected one of {COMPONENTS}")


def stated_formula(component: str, m: int = 1) -> DepthExpr:
    """Headline depth quoted for ``component``, where it is shorter than the step count."""
    if component == "plain-layer":
        return DepthExpr.of(std=5, oplus=5, exp=1)
    if component == "layernorm":
        return DepthExpr.of(std=5, oplus=2, sqrt=1)
    return proved_formula(component, m)


def _random_matrix(rng: Any, rows: int, cols: int, scale: float, tracer: TracingBackend) -> Any:
    from talab.tensora import Matrix

    values = rng.uniform(-scale, scale, size=(rows, cols))
    return Matrix.from_rows([[tracer.leaf(float(v)) for v in row] for row in values])


def _run_component(component: str, n: int, d: int, m: int, tracer: TracingBackend) -> Any:
    import numpy as np

    from talab import attncore, tensora
    from talab.ropeenc import theta_schedule

    rng = np.random.default_rng(n * 1000 + d)
    scale = 1.0 / d**0.5

    def weights() -> Any:
        return _random_matrix(rng, d, d, scale, tracer)

    def attn_params() -> attncore.AttnParams:
        return attncore.AttnParams(*(weights() for _ in range(5)))

    def mlp_block() -> attncore.GSpec:
        return attncore.GSpec("mlp", weights(), _random_matrix(rng, 1, d, scale, tracer).row(0))

    x = _random_matrix(rng, n, d, 1.0, tracer)
    other = _random_matrix(rng, n, d, 1.0, tracer)
    if component == "matmul":
        return tensora.matmul(x, weights(), tracer)
    if component == "kron":
        return tensora.kron(x, other, tracer)
    if component == "col-kron":
        return tensora.col_kron(x, other, tracer)
    if component == "row-kron":
        return tensora.row_kron(x, other, tracer)
    if component == "mlp":
        block = mlp_block()
        return attncore.mlp(x, block.weight, block.bias, tracer)
    if component == "layernorm":
        return attncore.layer_norm(x, tracer)
    sched = theta_schedule(d)
    if component == "plain-layer":
        return attncore.attn_layer(x, attncore.LayerSpec("plain", attn_params()), tracer)
    if component == "rope-matrix":
        return attncore.attn_matrix_rope(x, attn_params(), sched, tracer)
    if component == "rope-layer":
        return attncore.attn_layer(x, attncore.LayerSpec("rope", attn_params()), tracer, sched)
    if component in ("tf", "tf-plain"):
        kind = "rope" if component == "tf" else "plain"
        layers = tuple(
            attncore.LayerSpec(kind, attn_params(), g=mlp_block()) for _ in range(m)
        )
        cfg = attncore.TFConfig(n=n, d=d, layers=layers, g0=mlp_block(), theta=sched if kind == "rope" else None)
        return attncore.tf_forward(x, cfg, tracer, opaque_g=True)
    raise ValueError(f"unknown component {component!r}; expected one of {COMPONENTS}")


def audit(component: str, shape: tuple[int, int, int] = (2, 2, 1)) -> DepthExpr:
    """Trace ``component`` on random inputs and return its output depth.

    Args:
        component: One of ``COMPONENTS``
        shape: ``(n, d, m)``; ``m`` only matters for TF stacks

    Returns:
        Normalized maximum depth over all output scalars

    Raises:
        CapacityExceeded: If n exceeds the audit cap
    """
    type_check(component, str, "component")
    n, d, m = shape
    if n > AUDIT_N_CAP:
        raise CapacityExceeded(f"audit shape n={n} exceeds {AUDIT_N_CAP}")
    tracer = TracingBackend(Real64Backend())
    result = _run_component(component, n, d, m, tracer)
    return max_depth(result.entries)


@dataclass(frozen=True)
class AuditRow:
    """One line of the depth-audit table."""

    component: str
    traced: DepthExpr
    proved: DepthExpr
    stated: DepthExpr
    shape_invariant: bool

    @property
    def match(self) -> bool:
        """Traced depth equals the proved formula at every audited shape."""
        return self.shape_invariant and self.traced == self.proved

    def as_dict(self) -> dict[str, str]:
        """String fields for tabular export."""
        return {
            "component": self.component,
            "traced": str(self.traced),
            "proved": str(self.proved),
            "stated": str(self.stated),
            "match": "match" if self.match else "MISMATCH",
        }


AUDIT_SHAPES: tuple[tuple[int, int], ...] = ((2, 2), (3, 4))


def audit_row(component: str, m: int = 1, shapes: Sequence[tuple[int, int]] = AUDIT_SHAPES) -> AuditRow:
    """Audit at several shapes and compare with the proved formula."""
    traced = [audit(component, (n, d, m)) for n, d in shapes]
    invariant = all(expr == traced[0] for expr in traced)
    label = f"{component} (m={m})" if component.startswith("tf") else component
    row = AuditRow(label, traced[0], proved_formula(component, m), stated_formula(component, m), invariant)
    if not row.match:
        logger.warning("depth audit mismatch for %s: traced %s, expected %s", label, row.traced, row.proved)
    return row


def audit_table(components: Sequence[str] = COMPONENTS, ms: Sequence[int] = (1, 2, 3)) -> list[AuditRow]:
    """Rows for every component; TF stacks once per layer count."""
    rows = []
    for component in components:
        if component.startswith("tf"):
            rows.extend(audit_row(component, m) for m in ms)
        else:
            rows.append(audit_row(component))
    return rows
